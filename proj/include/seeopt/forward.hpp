#pragma once

#include <vector>

#include "seeopt/common.hpp"
#include "seeopt/gelfand.hpp"
#include "seeopt/noise.hpp"
#include "seeopt/problem.hpp"

namespace seeopt {

// Simulated ensemble: one N x P state slab per grid node, including t = 0.
struct StatePath {
    TimeGrid grid;
    int n_paths = 0;
    std::vector<MatrixXd> states;  // n_steps + 1 slabs

    const MatrixXd& at(int step) const { return states.at(step); }
    const MatrixXd& terminal() const { return states.back(); }

    double sup_mean_h2 = 0.0;  // sup over time of ensemble mean ||X||_H^2
};

// Semi-implicit Euler step per grid interval: the unbounded operator A is
// implicit, every other coefficient is evaluated at the left endpoint.
//   (I - dt A_k) X_{k+1} = X_k + dt b_k + (B_k X_k + g_k) dW_k
//                          + sum_i sigma_{k,i} (dN_{k,i} - nu_i dt)
// Caller is responsible for having certified coercivity of (pair, space).
StatePath simulate_forward(const ProblemSpec& spec, const OperatorPair& pair,
                           const GalerkinSpace& space, const ControlProcess& control,
                           const NoiseBundle& noise);

struct CostReport {
    double j_mean = 0.0;
    double j_stderr = 0.0;
    bool has_constraint = false;
    double constraint_mean = 0.0;
    double constraint_stderr = 0.0;
    VectorXd j_per_path;           // kept for penalty evaluation and FD probes
    VectorXd constraint_per_path;  // empty when unconstrained
};

// Left-endpoint rectangle quadrature of the running cost plus terminal terms;
// means and standard errors via the deterministic pairwise reduction.
CostReport evaluate_cost(const ProblemSpec& spec, const StatePath& path,
                         const ControlProcess& control);

struct AprioriReport {
    double lhs = 0.0;    // sup_k mean ||X||_H^2 + sum_k dt mean ||X||_V^2
    double rhs = 0.0;    // ||x0||_H^2 + zero-state coefficient energies
    double ratio = 0.0;  // empirical stand-in for the a priori constant
};

AprioriReport apriori_check(const ProblemSpec& spec, const OperatorPair&,
                            const GalerkinSpace& space, const StatePath& path,
                            const ControlProcess& control, const MarkSpace& marks);

// sup_k mean ||Xa - Xb||_H^2 + sum_k dt mean ||Xa - Xb||_V^2; the left side of
// the continuous-dependence estimate for two runs under common noise.
double path_difference_energy(const StatePath& a, const StatePath& b, const GalerkinSpace& space);

}  // namespace seeopt
