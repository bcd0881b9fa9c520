#include "seeopt/optimizer.hpp"

#include <cmath>
#include <limits>

#include "seeopt/reduce.hpp"
#include "seeopt/rng.hpp"

namespace seeopt {

double hamiltonian(const ProblemSpec& spec, const MarkSpace& marks, double t, const VectorXd& x,
                   const VectorXd& u, const VectorXd& p, const VectorXd& q,
                   const std::vector<VectorXd>& r, double lambda) {
    double h = spec.drift_at(t, x, u).dot(p) + spec.diffusion_at(t, x, u).dot(q);
    for (int i = 0; i < marks.n_marks(); ++i)
        h += marks.intensities[i] * spec.jump_at(t, i, x, u).dot(r.at(i));
    return h + lambda * spec.running_cost_at(t, x, u);
}

HamiltonianPartials hamiltonian_partials(const ProblemSpec& spec, const MarkSpace& marks,
                                         double t, const VectorXd& x, const VectorXd& u,
                                         const VectorXd& p, const VectorXd& q,
                                         const std::vector<VectorXd>& r, double lambda) {
    std::vector<MatrixXd> r_cols;
    r_cols.reserve(r.size());
    for (const auto& ri : r) r_cols.emplace_back(ri);
    HamiltonianPartials out;
    out.hx = hamiltonian_x_batched(spec, marks, t, x, u, p, q, r_cols, lambda).col(0);
    out.hu = hamiltonian_u_batched(spec, marks, t, x, u, p, q, r_cols, lambda).col(0);
    return out;
}

PenalizedCost penalized_cost(double j, double j_reference, double epsilon, double constraint) {
    PenalizedCost out;
    const double a = j - j_reference + epsilon;
    out.value = std::hypot(a, constraint);
    if (out.value == 0.0) {
        out.degenerate = true;
        out.multipliers = {0.0, 0.0};
        return out;
    }
    out.multipliers.lambda = a / out.value;
    out.multipliers.mu = constraint / out.value;
    return out;
}

double gateaux_derivative(const ProblemSpec& spec, const OperatorPair& pair,
                          const GalerkinSpace& space, const ControlProcess& u,
                          const ControlProcess& v, const Multipliers& multipliers,
                          const NoiseBundle& noise, const RegressionConfig& reg) {
    const StatePath path = simulate_forward(spec, pair, space, u, noise);
    const AdjointTriple adj = solve_adjoint(spec, pair, space, path, u, multipliers, noise, reg);
    const double dt = noise.grid.dt();
    double d = 0.0;
    for (int k = 0; k < noise.grid.n_steps; ++k)
        d += dt * adj.hu_means.col(k).dot(v.at(k) - u.at(k));
    return d;
}

namespace {

// min over the box of (h, w - u); <= 0 since w = u is feasible. Closed form:
// each coordinate independently picks the bound h points away from.
double box_descent_step(const VectorXd& h, const VectorXd& u, const ControlSet& set) {
    double acc = 0.0;
    for (int j = 0; j < h.size(); ++j) {
        if (h[j] > 0.0)
            acc += h[j] * (set.lower[j] - u[j]);
        else if (h[j] < 0.0)
            acc += h[j] * (set.upper[j] - u[j]);
    }
    return acc;
}

}  // namespace

double mp_residual(const MatrixXd& hu_means, const ControlProcess& u, const ControlSet& set,
                   const TimeGrid& grid) {
    if (hu_means.cols() != u.n_steps() || hu_means.rows() != u.dim())
        throw ConfigError("mp_residual: H_u summary does not match the control");
    const double dt = grid.dt();
    double res = 0.0;
    for (int k = 0; k < u.n_steps(); ++k) {
        const double m = box_descent_step(hu_means.col(k), u.at(k), set);
        res += dt * std::max(0.0, -m);
    }
    return res;
}

namespace {

struct InnerEval {
    StatePath path;
    CostReport cost;
    PenalizedCost pc;
    double weighted_constraint = 0.0;
};

struct InnerLoopResult {
    InnerEval eval;
    MatrixXd hu_means;
    double stationarity = 0.0;
    int iterations = 0;
};

// Objective of one inner solve. In penalty mode the multipliers come from the
// penalized functional; otherwise the multipliers are frozen and the objective
// is lambda J + mu c (pre-solve and unconstrained problems use (1, 0)).
struct Objective {
    bool penalty = false;
    double j_reference = 0.0;
    double epsilon = 0.0;
    Multipliers frozen{1.0, 0.0};
};

class InnerLoop {
public:
    InnerLoop(const ProblemSpec& spec, const OperatorPair& pair, const GalerkinSpace& space,
              const ControlSet& set, const OptimizerConfig& cfg, const NoiseBundle& noise,
              const Objective& objective)
        : spec_(spec), pair_(pair), space_(space), set_(set), cfg_(cfg), noise_(noise),
          objective_(objective) {}

    InnerEval evaluate(const ControlProcess& u) const {
        InnerEval e;
        e.path = simulate_forward(spec_, pair_, space_, u, noise_);
        e.cost = evaluate_cost(spec_, e.path, u);
        e.weighted_constraint =
            e.cost.has_constraint ? cfg_.constraint_weight * e.cost.constraint_mean : 0.0;
        if (objective_.penalty) {
            e.pc = penalized_cost(e.cost.j_mean, objective_.j_reference, objective_.epsilon,
                                  e.weighted_constraint);
        } else {
            e.pc.value = objective_.frozen.lambda * e.cost.j_mean +
                         objective_.frozen.mu * e.weighted_constraint;
            e.pc.multipliers = objective_.frozen;
        }
        return e;
    }

    // Runs projected-gradient iterations until the box stationarity measure
    // drops below `target` or budgets run out. Throws StallError through
    // `trace` when Armijo cannot make progress.
    InnerLoopResult run(ControlProcess& u, double target, int max_iters, int outer_index,
                        OptimizationTrace& trace, double& eta) const {
        InnerLoopResult out;
        const double dt = noise_.grid.dt();
        TimeGrid grid = noise_.grid;

        InnerEval cur = evaluate(u);
        for (int it = 0; it < max_iters; ++it) {
            const AdjointTriple adj = solve_adjoint(spec_, pair_, space_, cur.path, u,
                                                    cur.pc.multipliers, noise_, cfg_.regression);
            const double stat = mp_residual(adj.hu_means, u, set_, grid);

            trace.inner.push_back({outer_index, it, objective_.epsilon, cur.cost.j_mean,
                                   cur.pc.value,
                                   cur.pc.multipliers.lambda, cur.pc.multipliers.mu,
                                   cur.cost.constraint_mean, stat, eta});

            out.hu_means = adj.hu_means;
            out.stationarity = stat;
            out.iterations = it + 1;
            out.eval = cur;
            if (stat <= target || cur.pc.degenerate) return out;

            // Armijo backtracking on the (penalized) objective.
            eta = std::min(eta * 2.0, cfg_.armijo_eta0);
            bool accepted = false;
            for (int bt = 0; bt <= cfg_.armijo_max_backtracks; ++bt) {
                ControlProcess cand{u.values - eta * adj.hu_means};
                cand = project_control(cand, set_, grid);
                const double move2 = (cand.values - u.values).squaredNorm();
                if (move2 == 0.0) {
                    // Projection fixed point: stationary on the active box face.
                    out.stationarity = stat;
                    return out;
                }
                double decr = 0.0;
                for (int k = 0; k < grid.n_steps; ++k)
                    decr += dt * adj.hu_means.col(k).dot(cand.at(k) - u.at(k));
                InnerEval trial = evaluate(cand);
                if (trial.pc.value <= cur.pc.value + cfg_.armijo_c1 * decr) {
                    u = cand;
                    cur = trial;
                    accepted = true;
                    break;
                }
                eta *= cfg_.armijo_shrink;
            }
            if (!accepted)
                throw StallError("line search stalled after " +
                                     std::to_string(cfg_.armijo_max_backtracks) +
                                     " backtracks (outer " + std::to_string(outer_index) + ")",
                                 trace);
        }
        return out;
    }

private:
    const ProblemSpec& spec_;
    const OperatorPair& pair_;
    const GalerkinSpace& space_;
    const ControlSet& set_;
    const OptimizerConfig& cfg_;
    const NoiseBundle& noise_;
    Objective objective_;
};

}  // namespace

OptimizeResult ekeland_optimize(const ProblemSpec& spec, const OperatorPair& pair,
                                const GalerkinSpace& space, const TimeGrid& grid,
                                const MarkSpace& marks, int n_paths, const ControlSet& set,
                                const ControlProcess& initial, const OptimizerConfig& cfg) {
    validate(set);
    if (!(cfg.kappa > 0.0 && cfg.kappa < 1.0))
        throw ConfigError("ekeland_optimize: kappa must lie in (0, 1)");
    if (!(cfg.eps0 > 0.0)) throw ConfigError("ekeland_optimize: eps0 must be positive");

    OptimizeResult result;
    result.control = project_control(initial, set, grid);
    OptimizationTrace& trace = result.trace;

    const bool constrained = spec.has_constraint() && cfg.constraint_weight != 0.0;
    double eta = cfg.armijo_eta0;

    if (cfg.max_outer == 0) {
        // Explicitly requested no-op: report the initial control untouched.
        const NoiseBundle noise = sample_noise(grid, marks, n_paths, mix_seed(cfg.seed, 1));
        InnerLoop loop(spec, pair, space, set, cfg, noise, Objective{});
        const InnerEval e = loop.evaluate(result.control);
        result.j_mean = e.cost.j_mean;
        result.j_stderr = e.cost.j_stderr;
        result.constraint_value = e.cost.constraint_mean;
        result.multipliers = {1.0, 0.0};
        trace.message = "max_outer = 0: returning the initial control";
        return result;
    }

    // Unconstrained pre-solve initializes the J(u) reference level.
    double j_reference = 0.0;
    if (constrained && cfg.presolve_iterations > 0) {
        const NoiseBundle noise = sample_noise(grid, marks, n_paths, mix_seed(cfg.seed, 0));
        InnerLoop presolve(spec, pair, space, set, cfg, noise, Objective{});
        OptimizationTrace presolve_trace;
        ControlProcess u = result.control;
        const InnerLoopResult pr =
            presolve.run(u, cfg.stationarity_c * std::sqrt(cfg.eps0), cfg.presolve_iterations,
                         -1, presolve_trace, eta);
        result.control = u;
        j_reference = pr.eval.cost.j_mean;
        for (auto& row : presolve_trace.inner) trace.inner.push_back(row);
    }

    double best_feasible = std::numeric_limits<double>::quiet_NaN();
    for (int j = 0; j < cfg.max_outer; ++j) {
        const double eps_j = cfg.eps0 * std::pow(cfg.kappa, j);
        const std::uint64_t bundle_seed = mix_seed(cfg.seed, j + 1);
        const NoiseBundle noise = sample_noise(grid, marks, n_paths, bundle_seed);
        InnerLoop loop(spec, pair, space, set, cfg, noise,
                       Objective{constrained, j_reference, eps_j, {1.0, 0.0}});

        const double target = cfg.stationarity_c * std::sqrt(eps_j);
        const InnerLoopResult inner =
            loop.run(result.control, target, cfg.max_inner, j, trace, eta);

        PenaltyState state;
        state.outer_index = j;
        state.epsilon = eps_j;
        state.j_mean = inner.eval.cost.j_mean;
        state.j_reference = j_reference;
        state.penalized_value = inner.eval.pc.value;
        state.multipliers = inner.eval.pc.multipliers;
        state.degenerate = inner.eval.pc.degenerate;
        state.constraint_value = inner.eval.cost.constraint_mean;
        state.mp_res = inner.stationarity;
        state.inner_iterations = inner.iterations;
        state.bundle_seed = bundle_seed;
        trace.outer.push_back(state);

        result.j_mean = inner.eval.cost.j_mean;
        result.j_stderr = inner.eval.cost.j_stderr;
        result.constraint_value = inner.eval.cost.constraint_mean;
        result.multipliers = inner.eval.pc.multipliers;
        result.mp_res = inner.stationarity;
        result.final_hu_means = inner.hu_means;

        if (!constrained) {
            if (inner.stationarity <= cfg.tol_mp) {
                trace.converged = true;
                trace.message = "stationarity reached";
                break;
            }
            continue;
        }

        if (std::abs(state.constraint_value) <= cfg.tol_constraint &&
            inner.stationarity <= cfg.tol_mp) {
            trace.converged = true;
            trace.message = "feasible and maximum-principle stationary";
            break;
        }

        // Feasible but not yet stationary: freeze the multiplier pair and
        // descend the plain weighted functional lambda J + mu c. Its first
        // order condition is exactly the stationarity we certify, and without
        // the penalty term's curvature the gradient iteration reaches tol_mp
        // instead of crawling along the penalty level set.
        if (std::abs(state.constraint_value) <= cfg.tol_constraint &&
            state.multipliers.lambda >= 0.1 && !state.degenerate) {
            InnerLoop polish(spec, pair, space, set, cfg, noise,
                             Objective{false, 0.0, 0.0, state.multipliers});
            ControlProcess u = result.control;
            bool stalled = false;
            InnerLoopResult pol;
            try {
                pol = polish.run(u, 0.5 * cfg.tol_mp, cfg.max_inner, j, trace, eta);
            } catch (const StallError&) {
                stalled = true;  // keep the pre-polish iterate; rounds continue
            }
            if (!stalled) {
                result.control = u;
                result.j_mean = pol.eval.cost.j_mean;
                result.j_stderr = pol.eval.cost.j_stderr;
                result.constraint_value = pol.eval.cost.constraint_mean;
                result.multipliers = state.multipliers;
                result.mp_res = pol.stationarity;
                result.final_hu_means = pol.hu_means;

                PenaltyState polished = state;
                polished.epsilon = 0.0;  // marks the frozen-multiplier pass
                polished.j_mean = pol.eval.cost.j_mean;
                polished.penalized_value = pol.eval.pc.value;
                polished.constraint_value = pol.eval.cost.constraint_mean;
                polished.mp_res = pol.stationarity;
                polished.inner_iterations = pol.iterations;
                trace.outer.push_back(polished);

                if (std::abs(polished.constraint_value) <= cfg.tol_constraint &&
                    pol.stationarity <= cfg.tol_mp) {
                    trace.converged = true;
                    trace.message =
                        "feasible and maximum-principle stationary (multiplier polish)";
                    break;
                }
            }
        }

        // Re-estimate the optimal-value reference. Feasible iterates give an
        // upper bound directly; otherwise extrapolate along the multiplier
        // normal: the tangent line at (J, c) crosses c = 0 at J + (mu/lambda) c.
        if (std::abs(state.constraint_value) <= cfg.tol_constraint)
            best_feasible = std::isnan(best_feasible)
                                ? state.j_mean
                                : std::min(best_feasible, state.j_mean);
        double estimate = state.j_mean;
        if (state.multipliers.lambda >= 0.1)
            estimate = state.j_mean +
                       (state.multipliers.mu / state.multipliers.lambda) *
                           cfg.constraint_weight * state.constraint_value;
        j_reference = std::isnan(best_feasible) ? estimate : std::min(estimate, best_feasible);
    }

    result.converged = trace.converged;
    if (!trace.converged && trace.message.empty())
        trace.message = "outer iteration budget exhausted";
    return result;
}

}  // namespace seeopt
