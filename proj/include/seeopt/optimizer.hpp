#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seeopt/adjoint.hpp"
#include "seeopt/common.hpp"
#include "seeopt/forward.hpp"

namespace seeopt {

// Scalar Hamiltonian at one point:
//   H = (b, p) + (g, q) + sum_i nu_i (sigma_i, r_i) + lambda l
double hamiltonian(const ProblemSpec& spec, const MarkSpace& marks, double t, const VectorXd& x,
                   const VectorXd& u, const VectorXd& p, const VectorXd& q,
                   const std::vector<VectorXd>& r, double lambda);

struct HamiltonianPartials {
    VectorXd hx;
    VectorXd hu;
};

HamiltonianPartials hamiltonian_partials(const ProblemSpec& spec, const MarkSpace& marks,
                                         double t, const VectorXd& x, const VectorXd& u,
                                         const VectorXd& p, const VectorXd& q,
                                         const std::vector<VectorXd>& r, double lambda);

// Penalized functional J_eps = sqrt((J - J_ref + eps)^2 + c^2) and its exact
// multipliers lambda = (J - J_ref + eps) / J_eps, mu = c / J_eps. A vanishing
// J_eps cannot be normalized; the result is flagged degenerate with (0, 0).
struct PenalizedCost {
    double value = 0.0;
    Multipliers multipliers;
    bool degenerate = false;
};

PenalizedCost penalized_cost(double j, double j_reference, double epsilon, double constraint);

// Directional derivative of the penalized functional along v - u:
//   sum_k dt (mean H_u(t_k), v_k - u_k)
// computed from a fresh forward and adjoint solve at u under `noise`.
double gateaux_derivative(const ProblemSpec& spec, const OperatorPair& pair,
                          const GalerkinSpace& space, const ControlProcess& u,
                          const ControlProcess& v, const Multipliers& multipliers,
                          const NoiseBundle& noise, const RegressionConfig& reg = {});

// Maximum-principle residual: sum_k dt [min over box w of (mean H_u_k, w - u_k)]^-
// The per-step minimizer is the closed-form box corner; zero residual is the
// discrete maximum principle. Infinite box edges give an infinite residual
// whenever the mean H_u points along them.
double mp_residual(const MatrixXd& hu_means, const ControlProcess& u, const ControlSet& set,
                   const TimeGrid& grid);

struct PenaltyState {
    int outer_index = 0;
    double epsilon = 0.0;
    double j_mean = 0.0;
    double j_reference = 0.0;
    double penalized_value = 0.0;
    Multipliers multipliers;
    bool degenerate = false;
    double constraint_value = 0.0;
    double mp_res = 0.0;
    int inner_iterations = 0;
    std::uint64_t bundle_seed = 0;
};

struct OptimizationTrace {
    struct InnerRow {
        int outer = 0;
        int inner = 0;
        double epsilon = 0.0;
        double j = 0.0;
        double j_eps = 0.0;
        double lambda = 0.0;
        double mu = 0.0;
        double constraint = 0.0;
        double stationarity = 0.0;
        double step_size = 0.0;
    };
    std::vector<PenaltyState> outer;
    std::vector<InnerRow> inner;
    bool converged = false;
    std::string message;
};

// Armijo line search stalled: 30 halvings without sufficient decrease.
struct StallError : NumericalError {
    OptimizationTrace trace;
    StallError(const std::string& what, OptimizationTrace t)
        : NumericalError(what), trace(std::move(t)) {}
};

struct OptimizerConfig {
    double eps0 = 1.0;
    double kappa = 0.5;  // epsilon_j = eps0 * kappa^j, strictly decreasing
    int max_outer = 12;
    int max_inner = 200;
    double tol_constraint = 1e-2;
    double tol_mp = 1e-3;
    double stationarity_c = 1.0;  // inner stop at residual <= C sqrt(eps_j)
    double armijo_eta0 = 1.0;
    double armijo_shrink = 0.5;
    double armijo_c1 = 1e-4;
    int armijo_max_backtracks = 30;
    int presolve_iterations = 40;   // unconstrained warm start for J_reference
    double constraint_weight = 1.0;  // verification hook; 0 drops the penalty term
    RegressionConfig regression;
    std::uint64_t seed = 0;  // master seed; per-outer bundles derive from it
};

struct OptimizeResult {
    ControlProcess control;
    OptimizationTrace trace;
    double j_mean = 0.0;
    double j_stderr = 0.0;
    double constraint_value = 0.0;
    Multipliers multipliers;
    double mp_res = 0.0;
    MatrixXd final_hu_means;
    bool converged = false;
};

// Outer loop over the shrinking penalty radius eps_j with projected-gradient
// inner iterations on the penalized functional:
//   u <- project(u - eta mean H_u), Armijo backtracking on J_eps,
//   inner stop at mp residual <= C sqrt(eps_j),
//   outer stop at |constraint| <= tol_constraint and residual <= tol_mp.
// One noise bundle per outer iteration (common random numbers inside it),
// J_reference starts from an unconstrained pre-solve and is re-estimated each
// outer iteration from the multiplier geometry (feasible iterates, when seen,
// override with their best cost).
OptimizeResult ekeland_optimize(const ProblemSpec& spec, const OperatorPair& pair,
                                const GalerkinSpace& space, const TimeGrid& grid,
                                const MarkSpace& marks, int n_paths, const ControlSet& set,
                                const ControlProcess& initial, const OptimizerConfig& cfg);

}  // namespace seeopt
