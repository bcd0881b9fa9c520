#pragma once

#include <functional>
#include <vector>

#include "seeopt/common.hpp"
#include "seeopt/forward.hpp"
#include "seeopt/gelfand.hpp"
#include "seeopt/noise.hpp"
#include "seeopt/problem.hpp"

namespace seeopt {

// Penalty multipliers attached to the adjoint terminal condition. lambda
// weights the cost terms, mu the constraint term.
struct Multipliers {
    double lambda = 1.0;
    double mu = 0.0;
};

struct RegressionConfig {
    int degree = 1;        // polynomial basis degree: 0, 1 or 2
    double ridge = 1e-10;  // always added to the normal equations
};

// Backward ensemble produced by the least-squares backward sweep. p is stored
// at every grid node; p_pred, q and r live on step intervals. p_pred holds the
// fitted conditional expectation E[p_{k+1} | X_k], the value the Hamiltonian
// partials are evaluated at.
struct AdjointTriple {
    TimeGrid grid;
    int n_paths = 0;
    Multipliers multipliers;

    std::vector<MatrixXd> p;                // n_steps + 1 slabs, N x P
    std::vector<MatrixXd> p_pred;           // n_steps slabs
    std::vector<MatrixXd> q;                // n_steps slabs
    std::vector<std::vector<MatrixXd>> r;   // [step][mark]
    MatrixXd hu_means;                      // m x n_steps ensemble means of H_u
    int regression_warnings = 0;
};

// Batched Hamiltonian partials; the jump term carries the intensity weights.
//   H_x = b_x^T p + g_x^T q + sum_i nu_i sigma_x,i^T r_i + lambda l_x
//   H_u likewise with the u-partials.
MatrixXd hamiltonian_x_batched(const ProblemSpec& spec, const MarkSpace& marks, double t,
                               const MatrixXd& x, const VectorXd& u, const MatrixXd& p,
                               const MatrixXd& q, const std::vector<MatrixXd>& r, double lambda);
MatrixXd hamiltonian_u_batched(const ProblemSpec& spec, const MarkSpace& marks, double t,
                               const MatrixXd& x, const VectorXd& u, const MatrixXd& p,
                               const MatrixXd& q, const std::vector<MatrixXd>& r, double lambda);

// Least-squares Monte Carlo sweep for the adjoint backward equation:
//   terminal   p_n = lambda Phi_x(X_n) + mu phi_x(X_n), exact per path
//   q_k  = regress[p_{k+1} dW_k | X_k] / dt
//   r_ki = regress[p_{k+1} (dN_ki - nu_i dt) | X_k] / (nu_i dt)
//   (I - dt A*_k) p_k = E[p_{k+1} | X_k] + dt (B*_k q_k + H_x,k)
// driver_offset, when set, adds its value to H_x at each step (used by the
// continuous-dependence checks).
AdjointTriple solve_adjoint(const ProblemSpec& spec, const OperatorPair& pair,
                            const GalerkinSpace& space, const StatePath& path,
                            const ControlProcess& control, const Multipliers& multipliers,
                            const NoiseBundle& noise, const RegressionConfig& reg = {},
                            const std::function<VectorXd(double t)>& driver_offset = {});

// Discrete duality identity between two controlled runs under common noise.
// The adjoint is solved along the `a` ensemble; the right-endpoint p pairs
// with left-endpoint coefficient differences, matching both schemes:
//   lhs = E sum_k dt [ (p_{k+1}, db_k) + (q_k, dg_k) + sum_i nu_i (r_ki, dsig_ki) ]
//   rhs = E sum_k dt (H_x,k, dX_k) + lambda (Phi_x(Xa_n), dX_n) + mu (phi_x(Xa_n), dX_n)
// with d* = coefficient(b-run) - coefficient(a-run). The rhs re-linearizes
// the coefficients by central differences instead of calling the registered
// *_x partials: the backward sweep already consumed the partials, and reusing
// them here would cancel any partial-vs-coefficient mismatch out of the
// identity no matter how wrong they are. With the independent linearization
// the check certifies that consistency; the gap is O(dt) plus Monte Carlo and
// regression error.
struct DualityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double diff = 0.0;
    double diff_stderr = 0.0;  // stderr of the per-path lhs - rhs
    int regression_warnings = 0;
};

DualityReport duality_check(const ProblemSpec& spec, const OperatorPair& pair,
                            const GalerkinSpace& space, const ControlProcess& control_a,
                            const ControlProcess& control_b, const Multipliers& multipliers,
                            const NoiseBundle& noise, const RegressionConfig& reg = {});

// sup_k mean ||pa - pb||_H^2 + sum dt mean ||pa - pb||_V^2 + sum dt mean ||qa - qb||^2
//   + sum dt sum_i nu_i mean ||ra - rb||^2; left side of the backward estimates.
double adjoint_difference_energy(const AdjointTriple& a, const AdjointTriple& b,
                                 const GalerkinSpace& space, const MarkSpace& marks);
double adjoint_energy(const AdjointTriple& t, const GalerkinSpace& space, const MarkSpace& marks);

}  // namespace seeopt
