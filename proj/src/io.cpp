#include "seeopt/io.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "seeopt/reduce.hpp"

namespace seeopt {
namespace {

using nlohmann::json;

std::string full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary keeps line endings stable
    if (!out) throw ConfigError(path + ": cannot open for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open");
    return in;
}

}  // namespace

std::string iso_timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm parts{};
    gmtime_r(&now, &parts);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &parts);
    return buf;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    json doc;
    doc["schema"] = 1;
    doc["command"] = manifest.command;
    doc["version"] = manifest.version;
    doc["created"] = manifest.created;
    doc["seed"] = manifest.seed;
    doc["paths"] = manifest.n_paths;
    doc["steps"] = manifest.n_steps;
    doc["horizon"] = manifest.horizon;
    doc["config"] = manifest.config;
    doc["artifacts"] = manifest.artifacts;
    auto out = open_out(path);
    out << doc.dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
    auto in = open_in(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    RunManifest m;
    try {
        m.command = doc.at("command").get<std::string>();
        m.version = doc.at("version").get<std::string>();
        m.created = doc.at("created").get<std::string>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.n_paths = doc.at("paths").get<int>();
        m.n_steps = doc.at("steps").get<int>();
        m.horizon = doc.at("horizon").get<double>();
        m.config = doc.at("config");
        m.artifacts =
            doc.at("artifacts").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return m;
}

void write_state_csv(const std::string& path, const StatePath& states) {
    const int dim = static_cast<int>(states.at(0).rows());
    auto out = open_out(path);
    out << "step,t";
    for (int i = 0; i < dim; ++i) out << ",mean_" << i;
    for (int i = 0; i < dim; ++i) out << ",stderr_" << i;
    out << "\n";
    for (size_t k = 0; k < states.states.size(); ++k) {
        out << k << "," << full(states.grid.t(static_cast<int>(k)));
        const MatrixXd& slab = states.states[k];
        VectorXd means(dim), errs(dim);
        for (int i = 0; i < dim; ++i) {
            const Eigen::RowVectorXd row = slab.row(i);
            const auto stats = pairwise_mean_stderr(row);
            means[i] = stats.mean;
            errs[i] = stats.stderr_mean;
        }
        for (int i = 0; i < dim; ++i) out << "," << full(means[i]);
        for (int i = 0; i < dim; ++i) out << "," << full(errs[i]);
        out << "\n";
    }
}

void write_control_csv(const std::string& path, const ControlProcess& control,
                       const TimeGrid& grid) {
    auto out = open_out(path);
    out << "step,t";
    for (int j = 0; j < control.dim(); ++j) out << ",u_" << j;
    out << "\n";
    for (int k = 0; k < control.n_steps(); ++k) {
        out << k << "," << full(grid.t(k));
        for (int j = 0; j < control.dim(); ++j) out << "," << full(control.values(j, k));
        out << "\n";
    }
}

void write_trace_csv(const std::string& inner_path, const std::string& outer_path,
                     const OptimizationTrace& trace) {
    {
        auto out = open_out(inner_path);
        out << "outer,inner,epsilon,j,j_eps,lambda,mu,constraint,stationarity,step_size\n";
        for (const auto& row : trace.inner) {
            out << row.outer << "," << row.inner << "," << full(row.epsilon) << ","
                << full(row.j) << "," << full(row.j_eps) << "," << full(row.lambda) << ","
                << full(row.mu) << "," << full(row.constraint) << ","
                << full(row.stationarity) << "," << full(row.step_size) << "\n";
        }
    }
    {
        auto out = open_out(outer_path);
        out << "outer,epsilon,j,j_reference,j_eps,lambda,mu,degenerate,constraint,"
               "mp_residual,inner_iterations,bundle_seed\n";
        for (const auto& row : trace.outer) {
            out << row.outer_index << "," << full(row.epsilon) << "," << full(row.j_mean)
                << "," << full(row.j_reference) << "," << full(row.penalized_value) << ","
                << full(row.multipliers.lambda) << "," << full(row.multipliers.mu) << ","
                << (row.degenerate ? 1 : 0) << "," << full(row.constraint_value) << ","
                << full(row.mp_res) << "," << row.inner_iterations << "," << row.bundle_seed
                << "\n";
        }
    }
}

void write_adjoint_csv(const std::string& path, const AdjointTriple& triple) {
    const int dim = static_cast<int>(triple.p.at(0).rows());
    auto out = open_out(path);
    out << "step,t";
    for (int i = 0; i < dim; ++i) out << ",p_mean_" << i;
    for (int i = 0; i < dim; ++i) out << ",q_mean_" << i;
    out << "\n";
    const int n_steps = triple.grid.n_steps;
    for (int k = 0; k <= n_steps; ++k) {
        out << k << "," << full(triple.grid.t(k));
        const VectorXd p_mean = pairwise_colmean(triple.p[k].transpose());
        for (int i = 0; i < dim; ++i) out << "," << full(p_mean[i]);
        if (k < n_steps) {
            const VectorXd q_mean = pairwise_colmean(triple.q[k].transpose());
            for (int i = 0; i < dim; ++i) out << "," << full(q_mean[i]);
        } else {
            for (int i = 0; i < dim; ++i) out << "," << full(0.0);  // q lives on intervals
        }
        out << "\n";
    }
}

void write_cost_json(const std::string& path, const CostReport& cost) {
    json doc;
    doc["j_mean"] = cost.j_mean;
    doc["j_stderr"] = cost.j_stderr;
    doc["has_constraint"] = cost.has_constraint;
    if (cost.has_constraint) {
        doc["constraint_mean"] = cost.constraint_mean;
        doc["constraint_stderr"] = cost.constraint_stderr;
    }
    auto out = open_out(path);
    out << doc.dump(2) << "\n";
}

void write_checks_json(const std::string& path, const std::vector<CheckResult>& results) {
    json doc = json::array();
    for (const auto& r : results) {
        json row;
        row["name"] = r.name;
        row["passed"] = r.passed;
        row["measured"] = r.measured;
        row["tolerance"] = r.tolerance;
        row["details"] = r.details;
        doc.push_back(row);
    }
    auto out = open_out(path);
    out << doc.dump(2) << "\n";
}

std::string checks_text(const std::vector<CheckResult>& results) {
    size_t width = 4;
    for (const auto& r : results) width = std::max(width, r.name.size());
    std::ostringstream out;
    int failed = 0;
    for (const auto& r : results) {
        out << (r.passed ? "PASS  " : "FAIL  ") << r.name
            << std::string(width - r.name.size() + 2, ' ') << "measured " << full(r.measured)
            << "  tolerance " << full(r.tolerance) << "\n      " << r.details << "\n";
        failed += r.passed ? 0 : 1;
    }
    out << results.size() << " checks, " << failed << " failed\n";
    return out.str();
}

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    auto in = open_in(path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream head(line);
    for (std::string cell; std::getline(head, cell, ',');) table.header.push_back(cell);

    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<double> row;
        for (std::string cell; std::getline(ss, cell, ',');) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": non-numeric cell '" + cell + "'");
            }
        }
        if (row.size() != table.header.size())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(table.header.size()) + " cells");
        rows.push_back(std::move(row));
    }
    table.rows.resize(rows.size(), table.header.size());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j) table.rows(i, j) = rows[i][j];
    return table;
}

}  // namespace seeopt
