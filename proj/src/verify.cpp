#include "seeopt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include "seeopt/reduce.hpp"
#include "seeopt/rng.hpp"

namespace seeopt {
namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// z threshold for the max of k independent z-scores, widened so the overall
// false-alarm rate stays at the single-test rate: exp(-z'^2/2) = exp(-m^2/2)/k
double max_stat_tolerance(double stderr_multiple, int k) {
    return std::sqrt(stderr_multiple * stderr_multiple + 2.0 * std::log(std::max(1, k)));
}

CheckResult make_result(const char* name, double measured, double tolerance,
                        std::string details) {
    CheckResult r;
    r.name = name;
    r.measured = measured;
    r.tolerance = tolerance;
    r.passed = std::abs(measured) <= tolerance;
    r.details = std::move(details);
    return r;
}

// log10(max/min) over positive entries; +inf when any entry is missing, zero
// or non-finite, which fails any spread tolerance and surfaces in details.
double spread_decades(const std::vector<double>& ks) {
    if (ks.empty()) return std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (double k : ks) {
        if (!std::isfinite(k) || k <= 0.0) return std::numeric_limits<double>::infinity();
        lo = std::min(lo, k);
        hi = std::max(hi, k);
    }
    return std::log10(hi / lo);
}

std::string join_nums(const std::vector<double>& ks) {
    std::string s;
    for (size_t i = 0; i < ks.size(); ++i) {
        if (i) s += ", ";
        s += num(ks[i]);
    }
    return s;
}

// All-zero coefficients around the fixture's shapes; the one-entry operator
// convention gives a time-constant zero pair.
OperatorPair zero_pair(int dim) {
    return {{MatrixXd::Zero(dim, dim)}, {MatrixXd::Zero(dim, dim)}};
}

LqData zero_lq(int dim, int n_marks, const VectorXd& initial) {
    LqData d;
    d.initial_state = initial;
    d.b0 = VectorXd::Zero(dim);
    d.d = MatrixXd::Zero(dim, 1);
    d.g0 = VectorXd::Zero(dim);
    d.sigma.assign(n_marks, VectorXd::Zero(dim));
    d.q = MatrixXd::Zero(dim, dim);
    d.r = MatrixXd::Identity(1, 1);
    d.f = MatrixXd::Zero(dim, dim);
    return d;
}

// Mean squared V* norm of a slab, one column per path.
double mean_vstar2(const MatrixXd& slab, const GalerkinSpace& space) {
    const Eigen::RowVectorXd per_path =
        (slab.array().square().colwise() / space.v_weights.array()).colwise().sum().matrix();
    return pairwise_mean(per_path);
}

struct BatteryContext {
    const VerifySetup& setup;
    ProblemSpec problem;
    OptimizerConfig optimizer;
};

// ---- individual checks, in battery order -----------------------------------

CheckResult run_coercivity(const BatteryContext& c) {
    const auto cert = check_coercivity(c.setup.pair, c.setup.space, c.setup.alpha,
                                       c.setup.lambda_shift, 64, c.setup.seed);
    const double measured = std::min(cert.worst_margin, 0.0);
    return make_result("coercivity", measured, c.setup.tol.coercivity_floor,
                       "worst margin " + num(cert.worst_margin) + " at step " +
                           std::to_string(cert.worst_step));
}

CheckResult run_noise_brownian_mean(const BatteryContext& c) {
    const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                    mix_seed(c.setup.seed, 0xb001));
    const Eigen::RowVectorXd terminal = noise.dw.colwise().sum();
    const auto stats = pairwise_mean_stderr(terminal);
    return make_result("noise_brownian_mean", stats.mean,
                       c.setup.tol.stderr_multiple * stats.stderr_mean,
                       "terminal Brownian mean over " + std::to_string(noise.n_paths) +
                           " paths, stderr " + num(stats.stderr_mean));
}

CheckResult run_noise_brownian_variance(const BatteryContext& c) {
    const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                    mix_seed(c.setup.seed, 0xb002));
    const Eigen::RowVectorXd terminal = noise.dw.colwise().sum();
    const auto stats = pairwise_mean_stderr(terminal);
    const double variance = stats.stderr_mean * stats.stderr_mean * noise.n_paths;
    const double measured = variance / noise.grid.horizon - 1.0;
    // sample variance of a normal has relative standard error sqrt(2/(P-1))
    const double tol = c.setup.tol.stderr_multiple * std::sqrt(2.0 / (noise.n_paths - 1));
    return make_result("noise_brownian_variance", measured, tol,
                       "terminal variance " + num(variance) + " over horizon " +
                           num(noise.grid.horizon));
}

CheckResult run_noise_jump_compensated(const BatteryContext& c) {
    const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                    mix_seed(c.setup.seed, 0xb003));
    const double tol = max_stat_tolerance(c.setup.tol.stderr_multiple, noise.marks.n_marks());
    double worst = 0.0;
    std::string details;
    for (int i = 0; i < noise.marks.n_marks(); ++i) {
        Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(noise.n_paths);
        for (int k = 0; k < noise.grid.n_steps; ++k) total += noise.compensated(k, i);
        const auto stats = pairwise_mean_stderr(total);
        if (stats.stderr_mean <= 0.0)
            return make_result("noise_jump_compensated",
                               std::numeric_limits<double>::infinity(), tol,
                               "degenerate mark " + std::to_string(i) + ": zero spread");
        worst = std::max(worst, std::abs(stats.mean) / stats.stderr_mean);
        if (!details.empty()) details += "; ";
        details += "mark " + std::to_string(i) + " mean " + num(stats.mean) + " stderr " +
                   num(stats.stderr_mean);
    }
    return make_result("noise_jump_compensated", worst, tol,
                       details + " (measured in stderr units)");
}

CheckResult run_forward_conservation(const BatteryContext& c) {
    const int dim = c.setup.space.dim;
    const VectorXd x0 = VectorXd::Ones(dim);
    const auto spec = make_lq_problem(zero_lq(dim, c.setup.marks.n_marks(), x0));
    const auto noise =
        sample_noise(c.setup.grid, c.setup.marks, 256, mix_seed(c.setup.seed, 0xf001));
    const auto path = simulate_forward(spec, zero_pair(dim), c.setup.space,
                                       ControlProcess::zero(1, c.setup.grid.n_steps), noise);
    double measured = 0.0;
    for (const auto& slab : path.states)
        measured = std::max(measured, (slab.colwise() - x0).cwiseAbs().maxCoeff());
    return make_result("forward_conservation", measured, 0.0,
                       "zero coefficients preserve the state exactly");
}

// Canonical one-mode decay fixture shared by the two heat checks: viscosity
// 0.1, unit initial mass in the first mode, no noise influence.
StatePath heat_path(const BatteryContext& c, double nu) {
    const auto hs = make_heat_space(8, nu);
    const auto hp = make_heat_pair(hs, nu);
    VectorXd x0 = VectorXd::Zero(8);
    x0[0] = 1.0;
    const auto spec = make_lq_problem(zero_lq(8, c.setup.marks.n_marks(), x0));
    const auto noise =
        sample_noise(c.setup.grid, c.setup.marks, 4, mix_seed(c.setup.seed, 0xf002));
    return simulate_forward(spec, hp, hs, ControlProcess::zero(1, c.setup.grid.n_steps),
                            noise);
}

CheckResult run_forward_heat_decay(const BatteryContext& c) {
    const double nu = 0.1;
    const auto path = heat_path(c, nu);
    const double mu1 = nu * M_PI * M_PI;
    const double dt = c.setup.grid.dt();
    const double closed = std::pow(1.0 + dt * mu1, -c.setup.grid.n_steps);
    const double measured = path.terminal()(0, 0) - closed;
    return make_result("forward_heat_decay", measured, c.setup.tol.exact,
                       "first mode " + num(path.terminal()(0, 0)) + " vs scheme value " +
                           num(closed));
}

CheckResult run_forward_heat_bias(const BatteryContext& c) {
    const double nu = 0.1;
    const auto path = heat_path(c, nu);
    const double mu1 = nu * M_PI * M_PI;
    const double dt = c.setup.grid.dt();
    const double exact = std::exp(-mu1 * c.setup.grid.horizon);
    const double measured = path.terminal()(0, 0) - exact;
    return make_result("forward_heat_bias", measured, c.setup.tol.heat_dt_coeff * dt,
                       "first mode " + num(path.terminal()(0, 0)) + " vs exponential " +
                           num(exact));
}

CheckResult run_forward_jump_mean(const BatteryContext& c) {
    // jumps only: X_T = x0 + sum_i sigma_i (N_i - nu_i T), so E X_T = x0
    const int dim = c.setup.space.dim;
    LqData d = zero_lq(dim, c.setup.marks.n_marks(), c.setup.lq.initial_state);
    d.sigma = c.setup.lq.sigma;
    const auto spec = make_lq_problem(d);
    const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                    mix_seed(c.setup.seed, 0xf003));
    const auto path = simulate_forward(spec, zero_pair(dim), c.setup.space,
                                       ControlProcess::zero(1, c.setup.grid.n_steps), noise);
    double worst = 0.0;
    for (int row = 0; row < dim; ++row) {
        const Eigen::RowVectorXd drift =
            path.terminal().row(row).array() - c.setup.lq.initial_state[row];
        const auto stats = pairwise_mean_stderr(drift);
        if (stats.stderr_mean <= 0.0) {
            if (std::abs(stats.mean) > 0.0) worst = std::numeric_limits<double>::infinity();
            continue;  // mode untouched by every mark
        }
        worst = std::max(worst, std::abs(stats.mean) / stats.stderr_mean);
    }
    return make_result("forward_jump_mean", worst,
                       max_stat_tolerance(c.setup.tol.stderr_multiple, dim),
                       "worst per-mode compensated drift, in stderr units");
}

CheckResult run_forward_apriori(const BatteryContext& c) {
    std::vector<double> ks;
    const ControlProcess u = ControlProcess::constant(
        (VectorXd(2) << 0.5, -0.25).finished(), c.setup.grid.n_steps);
    for (int inst = 0; inst < 3; ++inst) {
        const LqData data = randomized_lq(c.setup.lq, mix_seed(c.setup.seed, 0xa340 + inst));
        const auto spec = make_lq_problem(data);
        const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                        mix_seed(c.setup.seed, 0xa360 + inst));
        const auto path = simulate_forward(spec, c.setup.pair, c.setup.space, u, noise);
        const auto rep = apriori_check(spec, c.setup.pair, c.setup.space, path, u,
                                       c.setup.marks);
        ks.push_back(rep.ratio);
    }
    return make_result("forward_apriori", spread_decades(ks), c.setup.tol.spread_decades,
                       "state energy over data energy: " + join_nums(ks) +
                           " (measured in decades of spread)");
}

CheckResult run_forward_continuous_dependence(const BatteryContext& c) {
    const int dim = c.setup.space.dim;
    std::vector<double> ks;
    const ControlProcess u = ControlProcess::constant(
        (VectorXd(2) << 0.3, 0.1).finished(), c.setup.grid.n_steps);
    for (int inst = 0; inst < 2; ++inst) {
        const LqData base = randomized_lq(c.setup.lq, mix_seed(c.setup.seed, 0xcd00 + inst));
        RngStream dirs(c.setup.seed, 0xcd40 + inst);
        const VectorXd dx0 = dirs.unit_vector(dim);
        const VectorXd db0 = dirs.unit_vector(dim);
        const VectorXd dg0 = dirs.unit_vector(dim);
        std::vector<VectorXd> dsig;
        for (int i = 0; i < c.setup.marks.n_marks(); ++i)
            dsig.push_back(0.5 * dirs.unit_vector(dim));
        const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                        mix_seed(c.setup.seed, 0xcd80 + inst));
        const auto base_path =
            simulate_forward(make_lq_problem(base), c.setup.pair, c.setup.space, u, noise);
        for (const double delta : {1e-1, 1e-2, 1e-3}) {
            LqData pert = base;
            pert.initial_state += delta * dx0;
            pert.b0 += delta * db0;
            pert.g0 += delta * dg0;
            for (int i = 0; i < c.setup.marks.n_marks(); ++i) pert.sigma[i] += delta * dsig[i];
            const auto pert_path = simulate_forward(make_lq_problem(pert), c.setup.pair,
                                                    c.setup.space, u, noise);
            const double lhs = path_difference_energy(base_path, pert_path, c.setup.space);
            double data = c.setup.space.h_norm2(delta * dx0) +
                          c.setup.grid.horizon * (c.setup.space.vstar_norm2(delta * db0) +
                                                  c.setup.space.h_norm2(delta * dg0));
            for (int i = 0; i < c.setup.marks.n_marks(); ++i)
                data += c.setup.grid.horizon * c.setup.marks.intensities[i] *
                        c.setup.space.h_norm2(delta * dsig[i]);
            ks.push_back(lhs / data);
        }
    }
    return make_result("forward_continuous_dependence", spread_decades(ks),
                       c.setup.tol.spread_decades,
                       "difference energy over data perturbation: " + join_nums(ks));
}

// Shared forward/adjoint solve for the adjoint-side checks, one bundle per salt.
struct AdjointRun {
    NoiseBundle noise;
    StatePath path;
    AdjointTriple triple;
};

AdjointRun adjoint_run(const BatteryContext& c, const ProblemSpec& spec,
                       const ControlProcess& u, const Multipliers& mult,
                       std::uint64_t salt) {
    AdjointRun run{sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                mix_seed(c.setup.seed, salt)),
                   {}, {}};
    run.path = simulate_forward(spec, c.setup.pair, c.setup.space, u, run.noise);
    run.triple = solve_adjoint(spec, c.setup.pair, c.setup.space, run.path, u, mult,
                               run.noise, c.setup.regression);
    return run;
}

CheckResult run_adjoint_terminal(const BatteryContext& c) {
    const ControlProcess u = ControlProcess::constant(
        (VectorXd(2) << 0.4, -0.2).finished(), c.setup.grid.n_steps);
    const Multipliers mult{0.8, 0.6};
    const auto run = adjoint_run(c, c.problem, u, mult, 0xad01);
    MatrixXd expected = mult.lambda * c.problem.terminal_cost_x(run.path.terminal());
    if (c.problem.has_constraint())
        expected += mult.mu * c.problem.constraint_x(run.path.terminal());
    const double measured = (run.triple.p.back() - expected).cwiseAbs().maxCoeff();
    return make_result("adjoint_terminal", measured, c.setup.tol.exact,
                       "per-path terminal condition replay");
}

CheckResult run_adjoint_zero(const BatteryContext& c) {
    const ControlProcess u = ControlProcess::constant(
        (VectorXd(2) << 0.4, -0.2).finished(), c.setup.grid.n_steps);
    const auto run = adjoint_run(c, c.problem, u, Multipliers{0.0, 0.0}, 0xad02);
    double total = 0.0;
    for (const auto& slab : run.triple.p) total += slab.cwiseAbs().sum();
    for (const auto& slab : run.triple.q) total += slab.cwiseAbs().sum();
    for (const auto& per_step : run.triple.r)
        for (const auto& slab : per_step) total += slab.cwiseAbs().sum();
    total += run.triple.hu_means.cwiseAbs().sum();
    return make_result("adjoint_zero", total, 0.0,
                       "zero multipliers force an identically zero sweep");
}

CheckResult run_adjoint_apriori(const BatteryContext& c) {
    std::vector<double> ks;
    const Multipliers mult{0.8, 0.6};
    const ControlProcess u = ControlProcess::constant(
        (VectorXd(2) << 0.4, -0.2).finished(), c.setup.grid.n_steps);
    for (int inst = 0; inst < 3; ++inst) {
        const LqData data = randomized_lq(c.setup.lq, mix_seed(c.setup.seed, 0xae00 + inst));
        const auto spec = make_lq_problem(data);
        const auto run = adjoint_run(c, spec, u, mult, 0xae40 + inst);
        const double lhs = adjoint_energy(run.triple, c.setup.space, c.setup.marks);
        // data side: terminal mass plus the free driver term lambda l_x
        const Eigen::RowVectorXd pn2 = run.triple.p.back().colwise().squaredNorm();
        double rhs = pairwise_mean(pn2);
        const double dt = c.setup.grid.dt();
        for (int k = 0; k < c.setup.grid.n_steps; ++k) {
            const MatrixXd lx =
                spec.running_cost_x(c.setup.grid.t(k), run.path.at(k), u.at(k));
            rhs += dt * mult.lambda * mult.lambda * mean_vstar2(lx, c.setup.space);
        }
        ks.push_back(lhs / rhs);
    }
    return make_result("adjoint_apriori", spread_decades(ks), c.setup.tol.spread_decades,
                       "adjoint energy over terminal and driver mass: " + join_nums(ks));
}

CheckResult run_adjoint_continuous_dependence(const BatteryContext& c) {
    std::vector<double> ks;
    const Multipliers mult{0.8, 0.6};
    const ControlProcess u = ControlProcess::constant(
        (VectorXd(2) << 0.4, -0.2).finished(), c.setup.grid.n_steps);
    for (int inst = 0; inst < 2; ++inst) {
        const LqData data = randomized_lq(c.setup.lq, mix_seed(c.setup.seed, 0xac00 + inst));
        const auto spec = make_lq_problem(data);
        const auto run = adjoint_run(c, spec, u, mult, 0xac40 + inst);
        RngStream dirs(c.setup.seed, 0xac80 + inst);
        const VectorXd dir = dirs.unit_vector(c.setup.space.dim);
        for (const double delta : {1e-1, 1e-2, 1e-3}) {
            const auto offset = [&](double t) { return VectorXd(delta * (1.0 + t) * dir); };
            const auto shifted =
                solve_adjoint(spec, c.setup.pair, c.setup.space, run.path, u, mult,
                              run.noise, c.setup.regression, offset);
            const double lhs =
                adjoint_difference_energy(run.triple, shifted, c.setup.space, c.setup.marks);
            double rhs = 0.0;
            const double dt = c.setup.grid.dt();
            for (int k = 0; k < c.setup.grid.n_steps; ++k)
                rhs += dt * c.setup.space.vstar_norm2(offset(c.setup.grid.t(k)));
            ks.push_back(lhs / rhs);
        }
    }
    return make_result("adjoint_continuous_dependence", spread_decades(ks),
                       c.setup.tol.spread_decades,
                       "sweep response over driver perturbation: " + join_nums(ks));
}

CheckResult run_duality(const BatteryContext& c) {
    const int n = c.setup.grid.n_steps;
    const ControlProcess a =
        ControlProcess::constant((VectorXd(2) << 0.4, -0.2).finished(), n);
    ControlProcess b = a;
    b.values.row(0).array() += 1e-2;
    b.values.row(1).array() -= 1e-2;
    const auto noise = sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                    mix_seed(c.setup.seed, 0xd001));
    const auto rep = duality_check(c.problem, c.setup.pair, c.setup.space, a, b,
                                   Multipliers{0.8, 0.6}, noise, c.setup.regression);
    const double tol = std::max(c.setup.tol.stderr_multiple * rep.diff_stderr,
                                c.setup.tol.duality_dt_coeff * c.setup.grid.dt());
    return make_result("duality", rep.diff, tol,
                       "lhs " + num(rep.lhs) + " rhs " + num(rep.rhs) + " stderr " +
                           num(rep.diff_stderr) + ", " +
                           std::to_string(rep.regression_warnings) + " regression warnings");
}

// One penalized evaluation under a fixed bundle; epsilon and the cost anchor
// are arbitrary smooth-point choices shared by the two Gateaux checks.
struct GateauxProbe {
    NoiseBundle noise;
    ControlProcess u;
    ControlProcess v;
    double j_eps;
    PenalizedCost pc;
    double analytic;
};

GateauxProbe gateaux_probe(const BatteryContext& c) {
    const int n = c.setup.grid.n_steps;
    GateauxProbe probe{sample_noise(c.setup.grid, c.setup.marks, c.setup.n_paths,
                                    mix_seed(c.setup.seed, 0x6a01)),
                       ControlProcess::constant((VectorXd(2) << 0.3, -0.1).finished(), n),
                       ControlProcess::constant((VectorXd(2) << -0.2, 0.4).finished(), n),
                       0.0,
                       {},
                       0.0};
    const auto path =
        simulate_forward(c.problem, c.setup.pair, c.setup.space, probe.u, probe.noise);
    const auto cost = evaluate_cost(c.problem, path, probe.u);
    probe.pc = penalized_cost(cost.j_mean, 0.0, 0.5,
                              cost.has_constraint ? cost.constraint_mean : 0.0);
    probe.j_eps = probe.pc.value;
    probe.analytic = gateaux_derivative(c.problem, c.setup.pair, c.setup.space, probe.u,
                                        probe.v, probe.pc.multipliers, probe.noise,
                                        c.setup.regression);
    return probe;
}

double penalized_at(const BatteryContext& c, const GateauxProbe& probe, double rho) {
    const auto u_rho = convex_perturbation(probe.u, probe.v, rho);
    const auto path =
        simulate_forward(c.problem, c.setup.pair, c.setup.space, u_rho, probe.noise);
    const auto cost = evaluate_cost(c.problem, path, u_rho);
    return penalized_cost(cost.j_mean, 0.0, 0.5,
                          cost.has_constraint ? cost.constraint_mean : 0.0)
        .value;
}

CheckResult run_gateaux_fd(const BatteryContext& c) {
    const auto probe = gateaux_probe(c);
    const double rho = 1e-3;
    const double fd = (penalized_at(c, probe, rho) - penalized_at(c, probe, -rho)) / (2 * rho);
    const double measured = (probe.analytic - fd) / std::max(std::abs(fd), 1e-12);
    return make_result("gateaux_fd", measured, c.setup.tol.gateaux_rel,
                       "analytic " + num(probe.analytic) + " vs central difference " +
                           num(fd) + " under common noise");
}

CheckResult run_gateaux_remainder(const BatteryContext& c) {
    const auto probe = gateaux_probe(c);
    std::vector<double> remainders;
    for (const double rho : {1e-1, 1e-2, 1e-3})
        remainders.push_back(
            std::abs(penalized_at(c, probe, rho) - probe.j_eps - rho * probe.analytic) / rho);
    const double floor = 1e-12 * std::max(1.0, std::abs(probe.analytic));
    double worst_ratio = 0.0;
    for (size_t i = 1; i < remainders.size(); ++i) {
        if (remainders[i] <= floor) continue;  // already at noise level
        worst_ratio = std::max(worst_ratio, remainders[i] / std::max(remainders[i - 1], floor));
    }
    return make_result("gateaux_remainder", worst_ratio, 1.0,
                       "normalized remainders " + join_nums(remainders) +
                           " over rho = 1e-1, 1e-2, 1e-3");
}

CheckResult run_multiplier_normalization(const BatteryContext& c) {
    RngStream rng(c.setup.seed, 0x3009);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double j = rng.uniform(-5.0, 5.0);
        const double j_ref = rng.uniform(-5.0, 5.0);
        const double eps = rng.uniform(1e-6, 2.0);
        const double constraint = rng.uniform(-3.0, 3.0);
        const auto pc = penalized_cost(j, j_ref, eps, constraint);
        if (pc.degenerate) continue;
        const double lambda = pc.multipliers.lambda;
        const double mu = pc.multipliers.mu;
        worst = std::max(worst, std::abs(lambda * lambda + mu * mu - 1.0));
    }
    return make_result("multiplier_normalization", worst, c.setup.tol.exact,
                       "1000 random penalized evaluations");
}

CheckResult run_penalty_identity(const BatteryContext& c) {
    double worst = 0.0;
    for (const double eps : {1.0, 0.25, 1e-3, 1e-6}) {
        const auto pc = penalized_cost(1.7, 1.7, eps, 0.0);
        worst = std::max(worst, std::abs(pc.value - eps));
    }
    return make_result("penalty_identity", worst, c.setup.tol.penalty_identity,
                       "penalized cost at the reference point equals epsilon");
}

CheckResult run_end_to_end(const BatteryContext& c) {
    OptimizerConfig cfg = c.optimizer;
    cfg.regression = c.setup.regression;
    const ControlProcess initial =
        ControlProcess::zero(c.setup.box.dim(), c.setup.grid.n_steps);
    OptimizeResult result;
    try {
        result = ekeland_optimize(c.problem, c.setup.pair, c.setup.space, c.setup.grid,
                                  c.setup.marks, c.setup.n_paths, c.setup.box, initial, cfg);
    } catch (const StallError& e) {
        return make_result("end_to_end", std::numeric_limits<double>::infinity(), 1.0,
                           std::string("line search stalled: ") + e.what());
    }
    const auto oracle = lq_deterministic_optimum(c.setup.lq, c.setup.pair, c.setup.space,
                                                 c.setup.grid, c.setup.box);
    const double dist = control_distance(result.control, oracle, c.setup.grid);
    double norm_worst = 0.0;
    for (const auto& row : result.trace.outer) {
        const double lambda = row.multipliers.lambda;
        const double mu = row.multipliers.mu;
        if (!row.degenerate)
            norm_worst =
                std::max(norm_worst, std::abs(lambda * lambda + mu * mu - 1.0));
    }
    const auto& tol = c.setup.tol;
    const double measured =
        std::max({std::abs(result.constraint_value) / tol.feasibility,
                  result.mp_res / tol.mp_tol, dist / tol.oracle_l2});
    return make_result(
        "end_to_end", measured, 1.0,
        "constraint " + num(result.constraint_value) + ", residual " + num(result.mp_res) +
            ", oracle distance " + num(dist) + ", trace normalization gap " +
            num(norm_worst) + ", " + std::to_string(result.trace.outer.size()) +
            " outer rounds, converged " + (result.converged ? "yes" : "no") +
            " (measured in tolerance units)");
}

using CheckFn = CheckResult (*)(const BatteryContext&);

constexpr std::pair<const char*, CheckFn> kChecks[] = {
    {"coercivity", run_coercivity},
    {"noise_brownian_mean", run_noise_brownian_mean},
    {"noise_brownian_variance", run_noise_brownian_variance},
    {"noise_jump_compensated", run_noise_jump_compensated},
    {"forward_conservation", run_forward_conservation},
    {"forward_heat_decay", run_forward_heat_decay},
    {"forward_heat_bias", run_forward_heat_bias},
    {"forward_jump_mean", run_forward_jump_mean},
    {"forward_apriori", run_forward_apriori},
    {"forward_continuous_dependence", run_forward_continuous_dependence},
    {"adjoint_terminal", run_adjoint_terminal},
    {"adjoint_zero", run_adjoint_zero},
    {"adjoint_apriori", run_adjoint_apriori},
    {"adjoint_continuous_dependence", run_adjoint_continuous_dependence},
    {"duality", run_duality},
    {"gateaux_fd", run_gateaux_fd},
    {"gateaux_remainder", run_gateaux_remainder},
    {"multiplier_normalization", run_multiplier_normalization},
    {"penalty_identity", run_penalty_identity},
    {"end_to_end", run_end_to_end},
};

}  // namespace

const char* mutation_name(Mutation m) {
    switch (m) {
        case Mutation::none: return "none";
        case Mutation::drift_state_partial: return "drift_state_partial";
        case Mutation::running_cost_state_partial: return "running_cost_state_partial";
        case Mutation::running_cost_control_partial: return "running_cost_control_partial";
        case Mutation::terminal_cost_partial: return "terminal_cost_partial";
        case Mutation::constraint_penalty_drop: return "constraint_penalty_drop";
    }
    return "unknown";
}

VerifySetup default_verify_setup() {
    VerifySetup s;
    const double nu = 0.1;
    const int dim = 8;
    const int controls = 2;
    s.space = make_heat_space(dim, nu);
    s.pair = make_heat_pair(s.space, nu);
    s.alpha = nu / 2;
    s.lambda_shift = 1.0;
    s.grid = TimeGrid{1.0, 100};
    s.marks.values = (VectorXd(2) << -1.0, 1.0).finished();
    s.marks.intensities = (VectorXd(2) << 1.0, 2.0).finished();
    s.n_paths = 10000;
    s.seed = 2026;

    LqData lq;
    lq.initial_state = VectorXd(dim);
    lq.b0 = VectorXd(dim);
    lq.g0 = VectorXd(dim);
    lq.d = MatrixXd(dim, controls);
    lq.sigma = {VectorXd(dim), VectorXd(dim)};
    for (int k = 0; k < dim; ++k) {
        const double mode = k + 1.0;
        lq.initial_state[k] = 0.5 / mode;
        lq.b0[k] = 0.1 / mode;
        lq.g0[k] = 0.1 / mode;
        lq.d(k, 0) = 1.0 / mode;
        lq.d(k, 1) = (k % 2 == 0 ? 1.0 : -1.0) / mode;
        lq.sigma[0][k] = 0.06 / mode;
        lq.sigma[1][k] = -0.04 / mode;
    }
    lq.g = MatrixXd::Zero(dim, dim);
    for (int k = 0; k + 1 < dim; ++k) {
        lq.g(k, k + 1) = 0.3;
        lq.g(k + 1, k) = -0.3;
    }
    lq.q = MatrixXd::Identity(dim, dim);
    lq.r = 0.5 * MatrixXd::Identity(controls, controls);
    lq.f = MatrixXd::Identity(dim, dim);
    lq.constrained = true;
    lq.c = VectorXd::Zero(dim);
    lq.c[0] = 1.0;
    lq.target = 0.3;
    s.lq = lq;

    s.box.lower = VectorXd::Constant(controls, -5.0);
    s.box.upper = VectorXd::Constant(controls, 5.0);
    s.box.radius = 1e3;

    s.regression = RegressionConfig{1, 1e-10};

    s.optimizer.eps0 = 1.0;
    s.optimizer.kappa = 0.3;
    s.optimizer.max_outer = 16;
    s.optimizer.max_inner = 120;
    s.optimizer.presolve_iterations = 30;
    s.optimizer.tol_constraint = s.tol.feasibility;
    s.optimizer.tol_mp = s.tol.mp_tol;
    s.optimizer.seed = s.seed;
    return s;
}

LqData randomized_lq(const LqData& base, std::uint64_t seed) {
    RngStream rng(seed, 0x10c5);
    const auto jitter = [&rng](VectorXd v) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v[i] *= std::exp(0.3 * rng.uniform(-1.0, 1.0));
        return v;
    };
    LqData out = base;
    out.initial_state = jitter(base.initial_state);
    out.b0 = jitter(base.b0);
    out.g0 = jitter(base.g0);
    for (auto& s : out.sigma) s = jitter(s);
    out.q = base.q * std::exp(0.3 * rng.uniform(-1.0, 1.0));
    out.r = base.r * std::exp(0.3 * rng.uniform(-1.0, 1.0));
    out.f = base.f * std::exp(0.3 * rng.uniform(-1.0, 1.0));
    if (base.constrained) out.target = base.target + 0.05 * rng.uniform(-1.0, 1.0);
    return out;
}

void apply_mutation(ProblemSpec& spec, OptimizerConfig& optimizer, Mutation m) {
    const auto scale_adj = [](ProblemSpec::CoeffAdj inner) {
        return [inner](double t, const MatrixXd& x, const VectorXd& u, const MatrixXd& v) {
            return MatrixXd(1.1 * inner(t, x, u, v));
        };
    };
    const auto scale_coeff = [](ProblemSpec::Coeff inner) {
        return [inner](double t, const MatrixXd& x, const VectorXd& u) {
            return MatrixXd(1.1 * inner(t, x, u));
        };
    };
    switch (m) {
        case Mutation::none:
            return;
        case Mutation::drift_state_partial:
            spec.drift_x_adj = scale_adj(spec.drift_x_adj);
            return;
        case Mutation::running_cost_state_partial:
            spec.running_cost_x = scale_coeff(spec.running_cost_x);
            return;
        case Mutation::running_cost_control_partial:
            spec.running_cost_u = scale_coeff(spec.running_cost_u);
            return;
        case Mutation::terminal_cost_partial: {
            const auto inner = spec.terminal_cost_x;
            spec.terminal_cost_x = [inner](const MatrixXd& x) {
                return MatrixXd(1.1 * inner(x));
            };
            return;
        }
        case Mutation::constraint_penalty_drop:
            optimizer.constraint_weight = 0.0;
            return;
    }
}

std::vector<VectorXd> lq_mean_path(const LqData& data, const OperatorPair& pair,
                                   const GalerkinSpace& space, const TimeGrid& grid,
                                   const ControlProcess& control) {
    const int n = grid.n_steps;
    const int dim = space.dim;
    const double dt = grid.dt();
    const MatrixXd coupling =
        data.g.size() ? MatrixXd(data.g) : MatrixXd(MatrixXd::Zero(dim, dim));
    std::vector<VectorXd> mean(n + 1);
    mean[0] = data.initial_state;
    for (int k = 0; k < n; ++k) {
        const Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(dim, dim) - dt * pair.a(k));
        mean[k + 1] = lu.solve(mean[k] + dt * (data.b0 + coupling * mean[k] +
                                               data.d * control.at(k)));
    }
    return mean;
}

ControlProcess lq_deterministic_optimum(const LqData& data, const OperatorPair& pair,
                                        const GalerkinSpace& space, const TimeGrid& grid,
                                        const ControlSet& box) {
    const int n = grid.n_steps;
    const int dim = space.dim;
    const int m = static_cast<int>(data.d.cols());
    const double dt = grid.dt();
    const MatrixXd coupling =
        data.g.size() ? MatrixXd(data.g) : MatrixXd(MatrixXd::Zero(dim, dim));

    // mean recursion as affine maps m_k = m0_k + L_k U of the stacked control
    std::vector<VectorXd> m0(n + 1);
    std::vector<MatrixXd> sens(n + 1);
    m0[0] = data.initial_state;
    sens[0] = MatrixXd::Zero(dim, n * m);
    for (int k = 0; k < n; ++k) {
        const Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(dim, dim) - dt * pair.a(k));
        const MatrixXd step = lu.solve(MatrixXd::Identity(dim, dim) + dt * coupling);
        m0[k + 1] = step * m0[k] + lu.solve(VectorXd(dt * data.b0));
        sens[k + 1] = step * sens[k];
        sens[k + 1].middleCols(k * m, m) += lu.solve(MatrixXd(dt * data.d));
    }

    MatrixXd hess = MatrixXd::Zero(n * m, n * m);
    VectorXd grad0 = VectorXd::Zero(n * m);
    for (int k = 0; k < n; ++k) {
        hess += dt * sens[k].transpose() * data.q * sens[k];
        grad0 += dt * sens[k].transpose() * (data.q * m0[k]);
        hess.block(k * m, k * m, m, m) += dt * data.r;
    }
    hess += sens[n].transpose() * data.f * sens[n];
    grad0 += sens[n].transpose() * (data.f * m0[n]);

    VectorXd stacked(n * m);
    if (data.constrained) {
        const VectorXd arow = sens[n].transpose() * data.c;
        if (arow.norm() < 1e-12)
            throw NumericalError("terminal constraint is insensitive to the control");
        MatrixXd kkt = MatrixXd::Zero(n * m + 1, n * m + 1);
        kkt.topLeftCorner(n * m, n * m) = hess;
        kkt.topRightCorner(n * m, 1) = arow;
        kkt.bottomLeftCorner(1, n * m) = arow.transpose();
        VectorXd rhs(n * m + 1);
        rhs.head(n * m) = -grad0;
        rhs(n * m) = data.target - data.c.dot(m0[n]);
        stacked = Eigen::PartialPivLU<MatrixXd>(kkt).solve(rhs).head(n * m);
    } else {
        stacked = Eigen::LDLT<MatrixXd>(hess).solve(-grad0);
    }

    ControlProcess u{MatrixXd::Zero(m, n)};
    for (int k = 0; k < n; ++k) u.values.col(k) = stacked.segment(k * m, m);
    for (int k = 0; k < n; ++k)
        if (!box.contains(u.at(k)))
            throw NumericalError("deterministic optimum leaves the control box");
    return u;
}

std::vector<CheckResult> run_all(const VerifySetup& setup, std::span<const std::string> only) {
    for (const auto& name : only) {
        const bool known = std::any_of(std::begin(kChecks), std::end(kChecks),
                                       [&](const auto& c) { return name == c.first; });
        if (!known) throw ConfigError("unknown check name: " + name);
    }
    BatteryContext ctx{setup, make_lq_problem(setup.lq), setup.optimizer};
    apply_mutation(ctx.problem, ctx.optimizer, setup.mutation);

    std::vector<CheckResult> results;
    for (const auto& [name, fn] : kChecks) {
        if (!only.empty() &&
            std::find(only.begin(), only.end(), std::string(name)) == only.end())
            continue;
        results.push_back(fn(ctx));
    }
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const CheckResult& r) { return r.passed; });
}

namespace {

// least-squares slope of log(error) against log(dt); +inf when an error
// vanishes (exact agreement at every resolution)
double observed_order(const std::vector<ConvergenceStudy::Row>& rows) {
    std::vector<double> xs, ys;
    for (const auto& row : rows) {
        if (row.error <= 0.0) return std::numeric_limits<double>::infinity();
        xs.push_back(std::log(row.dt));
        ys.push_back(std::log(row.error));
    }
    if (xs.size() < 2) return 0.0;
    const double xbar = pairwise_mean(std::span<const double>(xs));
    const double ybar = pairwise_mean(std::span<const double>(ys));
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
    }
    return sxy / sxx;
}

}  // namespace

ConvergenceStudy convergence_study(const VerifySetup& setup, std::span<const int> step_counts,
                                   std::span<const int> path_counts) {
    if (step_counts.empty() || path_counts.empty())
        throw ConfigError("convergence study needs step and path counts");
    const int finest = step_counts.back();
    for (const int n : step_counts) {
        if (n <= 0 || finest % n != 0)
            throw ConfigError("step counts must ascend and divide the finest grid");
    }

    ConvergenceStudy out;
    const int dim = setup.space.dim;

    // deterministic leg: canonical heat decay against the exact exponential
    {
        const double nu = 0.1;
        const auto hs = make_heat_space(dim, nu);
        const auto hp = make_heat_pair(hs, nu);
        VectorXd x0(dim);
        for (int k = 0; k < dim; ++k) x0[k] = 1.0 / (k + 1.0);
        VectorXd exact(dim);
        for (int k = 0; k < dim; ++k) {
            const double rate = nu * (k + 1.0) * (k + 1.0) * M_PI * M_PI;
            exact[k] = x0[k] * std::exp(-rate * setup.grid.horizon);
        }
        const auto spec = make_lq_problem(zero_lq(dim, setup.marks.n_marks(), x0));
        for (const int n : step_counts) {
            const TimeGrid grid{setup.grid.horizon, n};
            const auto noise =
                sample_noise(grid, setup.marks, 2, mix_seed(setup.seed, 0xde7 + n));
            const auto path =
                simulate_forward(spec, hp, hs, ControlProcess::zero(1, n), noise);
            const double err = std::sqrt(hs.h_norm2(path.terminal().col(0) - exact));
            out.deterministic.push_back({n, 2, grid.dt(), err, 0.0});
        }
        out.deterministic_order = observed_order(out.deterministic);
    }

    // strong leg: the fixture problem against itself on the finest grid, with
    // every coarser run driven by the aggregated fine noise
    const auto spec = make_lq_problem(setup.lq);
    const int strong_paths = std::min(setup.n_paths, 2000);
    {
        const TimeGrid fine_grid{setup.grid.horizon, finest};
        const auto fine =
            sample_noise(fine_grid, setup.marks, strong_paths, mix_seed(setup.seed, 0x57f0));
        const ControlProcess u_fine = ControlProcess::constant(
            (VectorXd(2) << 0.3, -0.1).finished(), finest);
        const auto ref =
            simulate_forward(spec, setup.pair, setup.space, u_fine, fine).terminal();
        for (const int n : step_counts) {
            if (n == finest) continue;
            const auto coarse = coarsen_noise(fine, finest / n);
            const auto path = simulate_forward(spec, setup.pair, setup.space,
                                               ControlProcess::constant(u_fine.at(0), n),
                                               coarse);
            const Eigen::RowVectorXd err2 =
                (path.terminal() - ref).colwise().squaredNorm();
            const auto stats = pairwise_mean_stderr(err2);
            const double err = std::sqrt(stats.mean);
            const double se = stats.mean > 0.0
                                  ? stats.stderr_mean / (2.0 * std::sqrt(stats.mean))
                                  : 0.0;
            out.strong.push_back({n, strong_paths, setup.grid.horizon / n, err, se});
        }
        out.strong_order = observed_order(out.strong);
    }

    // duality leg: bias against dt under nested noise, then variance against
    // the path count at the coarsest grid
    {
        const int dual_paths = std::min(setup.n_paths, 4000);
        const TimeGrid fine_grid{setup.grid.horizon, finest};
        const auto fine =
            sample_noise(fine_grid, setup.marks, dual_paths, mix_seed(setup.seed, 0xd0a1));
        for (const int n : step_counts) {
            const auto bundle = n == finest ? fine : coarsen_noise(fine, finest / n);
            const ControlProcess a =
                ControlProcess::constant((VectorXd(2) << 0.4, -0.2).finished(), n);
            ControlProcess b = a;
            b.values.row(0).array() += 1e-2;
            b.values.row(1).array() -= 1e-2;
            const auto rep = duality_check(spec, setup.pair, setup.space, a, b,
                                           Multipliers{0.8, 0.6}, bundle, setup.regression);
            const double dt = setup.grid.horizon / n;
            out.duality_bias.push_back({n, dual_paths, dt, std::abs(rep.diff),
                                        rep.diff_stderr});
            out.duality_dt_coeff = std::max(out.duality_dt_coeff, std::abs(rep.diff) / dt);
        }
        const int coarse_n = step_counts.front();
        for (const int paths : path_counts) {
            const TimeGrid grid{setup.grid.horizon, coarse_n};
            const auto bundle =
                sample_noise(grid, setup.marks, paths, mix_seed(setup.seed, 0xd0b2));
            const ControlProcess a =
                ControlProcess::constant((VectorXd(2) << 0.4, -0.2).finished(), coarse_n);
            ControlProcess b = a;
            b.values.row(0).array() += 1e-2;
            b.values.row(1).array() -= 1e-2;
            const auto rep = duality_check(spec, setup.pair, setup.space, a, b,
                                           Multipliers{0.8, 0.6}, bundle, setup.regression);
            out.duality_variance.push_back({coarse_n, paths, grid.dt(), std::abs(rep.diff),
                                            rep.diff_stderr});
        }
    }
    return out;
}

}  // namespace seeopt
