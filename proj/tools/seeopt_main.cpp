#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seeopt/adjoint.hpp"
#include "seeopt/config.hpp"
#include "seeopt/forward.hpp"
#include "seeopt/io.hpp"
#include "seeopt/noise.hpp"
#include "seeopt/optimizer.hpp"
#include "seeopt/parallel.hpp"
#include "seeopt/svg.hpp"
#include "seeopt/verify.hpp"

namespace fs = std::filesystem;
using namespace seeopt;
using nlohmann::json;

namespace {

struct CommandArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int paths = 0;
    int steps = 0;
    int max_outer = -1;
    int threads = 0;
    bool dump_noise = false;
    double lambda = 1.0;
    double mu = 0.0;
    double perturb = 1e-2;
    std::vector<std::string> only;
    std::string report_path;
    std::string mutation;
    bool study = false;
    std::string manifest_path;
};

// raw text is kept alongside the parsed config so the manifest can embed the
// exact snapshot that produced the run
struct LoadedConfig {
    RunConfig cfg;
    json snapshot;
};

LoadedConfig load(const CommandArgs& args) {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) throw ConfigError(args.config_path + ": cannot open config file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    LoadedConfig loaded{parse_config(text, args.config_path), json::parse(text)};

    RunConfig& cfg = loaded.cfg;
    if (args.seed_given) cfg.seed = args.seed;
    if (args.paths > 0) cfg.n_paths = args.paths;
    if (args.steps > 0 && args.steps != cfg.grid.n_steps) {
        cfg.grid.n_steps = args.steps;
        if (cfg.initial.values.isZero(0.0)) {
            cfg.initial = ControlProcess::zero(cfg.problem.control_dim, args.steps);
        } else {
            throw ConfigError("--steps conflicts with the explicit initial control");
        }
    }
    if (args.seed_given) cfg.optimizer.seed = args.seed;
    cfg.verify.n_paths = args.paths > 0 ? args.paths : cfg.verify.n_paths;
    if (args.seed_given) cfg.verify.seed = args.seed;
    return loaded;
}

RunManifest base_manifest(const char* command, const LoadedConfig& loaded) {
    RunManifest m;
    m.command = command;
    m.version = kVersion;
    m.created = iso_timestamp_utc();
    m.seed = loaded.cfg.seed;
    m.n_paths = loaded.cfg.n_paths;
    m.n_steps = loaded.cfg.grid.n_steps;
    m.horizon = loaded.cfg.grid.horizon;
    m.config = loaded.snapshot;
    return m;
}

fs::path prepare_out_dir(const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    return dir;
}

int cmd_simulate(const CommandArgs& args) {
    const auto loaded = load(args);
    const RunConfig& cfg = loaded.cfg;
    const fs::path dir = prepare_out_dir(args.out_dir);

    const auto noise = sample_noise(cfg.grid, cfg.marks, cfg.n_paths, cfg.seed);
    const auto path =
        simulate_forward(cfg.problem, cfg.pair, cfg.space, cfg.initial, noise);
    const auto cost = evaluate_cost(cfg.problem, path, cfg.initial);

    RunManifest manifest = base_manifest("simulate", loaded);
    write_state_csv((dir / "states.csv").string(), path);
    manifest.artifacts["states"] = "states.csv";
    write_cost_json((dir / "cost.json").string(), cost);
    manifest.artifacts["cost"] = "cost.json";
    if (args.dump_noise) {
        save_noise(noise, (dir / "noise.bin").string());
        manifest.artifacts["noise"] = "noise.bin";
    }
    write_manifest((dir / "manifest.json").string(), manifest);

    std::cout << "J = " << cost.j_mean << " +- " << cost.j_stderr;
    if (cost.has_constraint)
        std::cout << ", constraint = " << cost.constraint_mean << " +- "
                  << cost.constraint_stderr;
    std::cout << "\n";
    return 0;
}

int cmd_adjoint(const CommandArgs& args) {
    const auto loaded = load(args);
    const RunConfig& cfg = loaded.cfg;
    const fs::path dir = prepare_out_dir(args.out_dir);

    const auto noise = sample_noise(cfg.grid, cfg.marks, cfg.n_paths, cfg.seed);
    const auto path =
        simulate_forward(cfg.problem, cfg.pair, cfg.space, cfg.initial, noise);
    const Multipliers mult{args.lambda, args.mu};
    const auto triple = solve_adjoint(cfg.problem, cfg.pair, cfg.space, path, cfg.initial,
                                      mult, noise, cfg.optimizer.regression);

    ControlProcess shifted = cfg.initial;
    shifted.values.array() += args.perturb;
    const auto duality = duality_check(cfg.problem, cfg.pair, cfg.space, cfg.initial,
                                       shifted, mult, noise, cfg.optimizer.regression);

    RunManifest manifest = base_manifest("adjoint", loaded);
    write_adjoint_csv((dir / "adjoint.csv").string(), triple);
    manifest.artifacts["adjoint"] = "adjoint.csv";
    {
        json doc;
        doc["lhs"] = duality.lhs;
        doc["rhs"] = duality.rhs;
        doc["diff"] = duality.diff;
        doc["diff_stderr"] = duality.diff_stderr;
        doc["regression_warnings"] = duality.regression_warnings;
        doc["adjoint_energy"] = adjoint_energy(triple, cfg.space, cfg.marks);
        doc["lambda"] = mult.lambda;
        doc["mu"] = mult.mu;
        doc["perturb"] = args.perturb;
        std::ofstream out(dir / "duality.json", std::ios::binary);
        if (!out) throw ConfigError((dir / "duality.json").string() + ": cannot open");
        out << doc.dump(2) << "\n";
    }
    manifest.artifacts["duality"] = "duality.json";
    write_manifest((dir / "manifest.json").string(), manifest);

    std::cout << "duality gap = " << duality.diff << " +- " << duality.diff_stderr << " ("
              << triple.regression_warnings << " regression warnings)\n";
    return 0;
}

void write_optimize_artifacts(const fs::path& dir, const RunConfig& cfg,
                              const OptimizeResult& result, RunManifest& manifest) {
    write_control_csv((dir / "control.csv").string(), result.control, cfg.grid);
    manifest.artifacts["control"] = "control.csv";
    write_trace_csv((dir / "trace_inner.csv").string(), (dir / "trace_outer.csv").string(),
                    result.trace);
    manifest.artifacts["trace_inner"] = "trace_inner.csv";
    manifest.artifacts["trace_outer"] = "trace_outer.csv";

    // ensemble under the final control so the report can plot state bands
    const auto noise = sample_noise(cfg.grid, cfg.marks, cfg.n_paths, cfg.seed);
    const auto path =
        simulate_forward(cfg.problem, cfg.pair, cfg.space, result.control, noise);
    write_state_csv((dir / "states.csv").string(), path);
    manifest.artifacts["states"] = "states.csv";

    json doc;
    doc["j_mean"] = result.j_mean;
    doc["j_stderr"] = result.j_stderr;
    doc["constraint"] = result.constraint_value;
    doc["mp_residual"] = result.mp_res;
    doc["lambda"] = result.multipliers.lambda;
    doc["mu"] = result.multipliers.mu;
    doc["converged"] = result.converged;
    doc["message"] = result.trace.message;
    std::ofstream out(dir / "result.json", std::ios::binary);
    if (!out) throw ConfigError((dir / "result.json").string() + ": cannot open");
    out << doc.dump(2) << "\n";
    manifest.artifacts["result"] = "result.json";
}

int cmd_optimize(const CommandArgs& args) {
    auto loaded = load(args);
    RunConfig& cfg = loaded.cfg;
    if (args.max_outer >= 0) cfg.optimizer.max_outer = args.max_outer;
    const fs::path dir = prepare_out_dir(args.out_dir);

    RunManifest manifest = base_manifest("optimize", loaded);
    OptimizeResult result;
    try {
        result = ekeland_optimize(cfg.problem, cfg.pair, cfg.space, cfg.grid, cfg.marks,
                                  cfg.n_paths, cfg.box, cfg.initial, cfg.optimizer);
    } catch (const StallError& e) {
        // keep the partial trace for diagnosis, then report the failure
        write_trace_csv((dir / "trace_inner.csv").string(),
                        (dir / "trace_outer.csv").string(), e.trace);
        manifest.artifacts["trace_inner"] = "trace_inner.csv";
        manifest.artifacts["trace_outer"] = "trace_outer.csv";
        write_manifest((dir / "manifest.json").string(), manifest);
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    write_optimize_artifacts(dir, cfg, result, manifest);
    write_manifest((dir / "manifest.json").string(), manifest);

    std::cout << "J = " << result.j_mean << " +- " << result.j_stderr
              << ", constraint = " << result.constraint_value
              << ", mp residual = " << result.mp_res << ", "
              << (result.converged ? "converged" : "not converged") << "\n";
    return 0;
}

int cmd_verify(const CommandArgs& args) {
    const auto loaded = load(args);
    const RunConfig& cfg = loaded.cfg;
    if (cfg.family != "lq")
        throw ConfigError("the verification battery runs on the lq problem family");

    VerifySetup setup = cfg.verify;
    if (!args.mutation.empty()) {
        setup.mutation = Mutation::none;
        bool found = false;
        for (const Mutation m :
             {Mutation::none, Mutation::drift_state_partial,
              Mutation::running_cost_state_partial, Mutation::running_cost_control_partial,
              Mutation::terminal_cost_partial, Mutation::constraint_penalty_drop}) {
            if (args.mutation == mutation_name(m)) {
                setup.mutation = m;
                found = true;
            }
        }
        if (!found) throw ConfigError("unknown mutation '" + args.mutation + "'");
    }

    std::vector<std::string> only = args.only;
    if (only.empty()) only = cfg.verify_only;

    if (args.study) {
        const std::vector<int> steps = {25, 50, 100, 200};
        const std::vector<int> paths = {1000, 4000};
        const auto study = convergence_study(setup, steps, paths);
        std::cout << "deterministic order " << study.deterministic_order << "\n";
        for (const auto& row : study.deterministic)
            std::cout << "  steps " << row.n_steps << " dt " << row.dt << " error "
                      << row.error << "\n";
        std::cout << "strong order " << study.strong_order << "\n";
        for (const auto& row : study.strong)
            std::cout << "  steps " << row.n_steps << " dt " << row.dt << " error "
                      << row.error << " +- " << row.stderr_mean << "\n";
        std::cout << "duality gap vs dt (coefficient " << study.duality_dt_coeff << ")\n";
        for (const auto& row : study.duality_bias)
            std::cout << "  steps " << row.n_steps << " gap " << row.error << " +- "
                      << row.stderr_mean << "\n";
        std::cout << "duality gap vs paths\n";
        for (const auto& row : study.duality_variance)
            std::cout << "  paths " << row.n_paths << " gap " << row.error << " +- "
                      << row.stderr_mean << "\n";
    }

    const auto results = run_all(setup, only);
    std::cout << checks_text(results);
    if (!args.report_path.empty()) write_checks_json(args.report_path, results);
    return all_passed(results) ? 0 : 1;
}

int cmd_report(const CommandArgs& args) {
    const RunManifest manifest = read_manifest(args.manifest_path);
    const fs::path src_dir = fs::path(args.manifest_path).parent_path();
    const fs::path dir = prepare_out_dir(args.out_dir);

    const auto artifact_path = [&](const std::string& role) {
        const auto it = manifest.artifacts.find(role);
        if (it == manifest.artifacts.end()) return fs::path();
        const fs::path p = src_dir / it->second;
        if (!fs::exists(p)) throw ConfigError("missing artifact: " + p.string());
        return p;
    };

    RunManifest out_manifest;
    out_manifest.command = "report";
    out_manifest.version = kVersion;
    out_manifest.created = iso_timestamp_utc();
    out_manifest.seed = manifest.seed;
    out_manifest.n_paths = manifest.n_paths;
    out_manifest.n_steps = manifest.n_steps;
    out_manifest.horizon = manifest.horizon;
    out_manifest.config = manifest.config;

    if (const fs::path states = artifact_path("states"); !states.empty()) {
        const CsvTable table = read_csv(states.string());
        const int t_col = table.column("t");
        std::vector<PlotSeries> series;
        PlotBand band;
        const int n_modes = (static_cast<int>(table.header.size()) - 2) / 2;
        for (int mode = 0; mode < std::min(4, n_modes); ++mode) {
            const int mean_col = table.column("mean_" + std::to_string(mode));
            if (mean_col < 0) continue;
            PlotSeries s{"mode " + std::to_string(mode), {}, {}};
            for (int i = 0; i < table.rows.rows(); ++i) {
                s.x.push_back(table.rows(i, t_col));
                s.y.push_back(table.rows(i, mean_col));
            }
            series.push_back(std::move(s));
        }
        const int mean0 = table.column("mean_0");
        const int err0 = table.column("stderr_0");
        if (mean0 >= 0 && err0 >= 0) {
            for (int i = 0; i < table.rows.rows(); ++i) {
                band.x.push_back(table.rows(i, t_col));
                band.lo.push_back(table.rows(i, mean0) - table.rows(i, err0));
                band.hi.push_back(table.rows(i, mean0) + table.rows(i, err0));
            }
        }
        write_line_plot((dir / "states.svg").string(), "state modes, ensemble mean", "t",
                        "mean", series, band.x.empty() ? nullptr : &band);
        out_manifest.artifacts["states_plot"] = "states.svg";
    }

    if (const fs::path control = artifact_path("control"); !control.empty()) {
        const CsvTable table = read_csv(control.string());
        const int t_col = table.column("t");
        std::vector<PlotSeries> series;
        for (size_t col = 0; col < table.header.size(); ++col) {
            if (table.header[col].rfind("u_", 0) != 0) continue;
            PlotSeries s{table.header[col], {}, {}};
            for (int i = 0; i < table.rows.rows(); ++i) {
                s.x.push_back(table.rows(i, t_col));
                s.y.push_back(table.rows(i, static_cast<int>(col)));
            }
            series.push_back(std::move(s));
        }
        write_line_plot((dir / "control.svg").string(), "control trajectory", "t", "u",
                        series);
        out_manifest.artifacts["control_plot"] = "control.svg";
    }

    if (const fs::path trace = artifact_path("trace_inner"); !trace.empty()) {
        const CsvTable table = read_csv(trace.string());
        const char* columns[] = {"epsilon", "j_eps", "constraint", "stationarity"};
        const char* labels[] = {"epsilon", "J_eps", "|constraint|", "mp_residual"};
        std::vector<PlotSeries> series;
        for (size_t c = 0; c < std::size(columns); ++c) {
            const int col = table.column(columns[c]);
            if (col < 0) continue;
            PlotSeries s{labels[c], {}, {}};
            for (int i = 0; i < table.rows.rows(); ++i) {
                s.x.push_back(static_cast<double>(i));
                const double v = table.rows(i, col);
                s.y.push_back(std::string(columns[c]) == "constraint" ? std::abs(v) : v);
            }
            series.push_back(std::move(s));
        }
        write_line_plot((dir / "trace.svg").string(), "optimizer trace", "inner iteration",
                        "value", series);
        out_manifest.artifacts["trace_plot"] = "trace.svg";
    }

    if (const fs::path outer = artifact_path("trace_outer"); !outer.empty()) {
        const CsvTable table = read_csv(outer.string());
        const int l_col = table.column("lambda");
        const int m_col = table.column("mu");
        std::vector<std::pair<double, double>> points;
        if (l_col >= 0 && m_col >= 0)
            for (int i = 0; i < table.rows.rows(); ++i)
                points.emplace_back(table.rows(i, l_col), table.rows(i, m_col));
        write_circle_plot((dir / "multipliers.svg").string(), "multiplier path", points);
        out_manifest.artifacts["multipliers_plot"] = "multipliers.svg";
    }

    write_manifest((dir / "manifest.json").string(), out_manifest);
    std::cout << out_manifest.artifacts.size() << " plots written to " << dir.string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optimal control of stochastic evolution equations with jumps"};
    app.require_subcommand(1);
    CommandArgs args;

    const auto add_common = [&](CLI::App* sub, bool wants_out) {
        sub->add_option("-c,--config", args.config_path, "config JSON")->required();
        if (wants_out)
            sub->add_option("-o,--out", args.out_dir, "output directory")->required();
        sub->add_option("--seed", args.seed, "override the config seed")
            ->each([&](const std::string&) { args.seed_given = true; });
        sub->add_option("--paths", args.paths, "override the path count");
        sub->add_option("--threads", args.threads, "cap worker threads");
    };

    auto* simulate = app.add_subcommand("simulate", "run the forward solver");
    add_common(simulate, true);
    simulate->add_option("--steps", args.steps, "override the step count");
    simulate->add_flag("--dump-noise", args.dump_noise, "save the noise bundle");

    auto* adjoint = app.add_subcommand("adjoint", "run the backward sweep and duality check");
    add_common(adjoint, true);
    adjoint->add_option("--lambda", args.lambda, "cost multiplier");
    adjoint->add_option("--mu", args.mu, "constraint multiplier");
    adjoint->add_option("--perturb", args.perturb, "control perturbation for the duality gap");

    auto* optimize = app.add_subcommand("optimize", "run the penalized descent loop");
    add_common(optimize, true);
    optimize->add_option("--max-outer", args.max_outer, "override the outer round budget");

    auto* verify = app.add_subcommand("verify", "run the verification battery");
    add_common(verify, false);
    verify->add_option("--only", args.only, "run only the named checks");
    verify->add_option("--report", args.report_path, "write the results as JSON");
    verify->add_option("--mutation", args.mutation, "apply a documented coefficient mutation");
    verify->add_flag("--study", args.study, "print the convergence study first");

    auto* report = app.add_subcommand("report", "render plots from a run manifest");
    report->add_option("-m,--manifest", args.manifest_path, "manifest JSON")->required();
    report->add_option("-o,--out", args.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (args.threads > 0) set_max_threads(args.threads);

    try {
        if (simulate->parsed()) return cmd_simulate(args);
        if (adjoint->parsed()) return cmd_adjoint(args);
        if (optimize->parsed()) return cmd_optimize(args);
        if (verify->parsed()) return cmd_verify(args);
        if (report->parsed()) return cmd_report(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
