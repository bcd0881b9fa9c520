#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "seeopt/common.hpp"
#include "seeopt/gelfand.hpp"
#include "seeopt/noise.hpp"

namespace seeopt {

// Problem data as batched callbacks: states arrive as an N x P matrix (one
// column per path), the control is a single m-vector shared by all paths.
// Partials are exposed in adjoint-applied form: *_x_adj(t, X, u, V) returns
// (d coeff / dx)^T v per path, which is the only way solvers consume them.
struct ProblemSpec {
    int state_dim = 0;
    int control_dim = 0;
    VectorXd initial_state;

    using Coeff = std::function<MatrixXd(double t, const MatrixXd& x, const VectorXd& u)>;
    using CoeffAdj = std::function<MatrixXd(double t, const MatrixXd& x, const VectorXd& u,
                                            const MatrixXd& v)>;
    using JumpCoeff =
        std::function<MatrixXd(double t, int mark, const MatrixXd& x, const VectorXd& u)>;
    using JumpCoeffAdj = std::function<MatrixXd(double t, int mark, const MatrixXd& x,
                                                const VectorXd& u, const MatrixXd& v)>;
    using Scalar = std::function<Eigen::RowVectorXd(double t, const MatrixXd& x,
                                                    const VectorXd& u)>;
    using Terminal = std::function<Eigen::RowVectorXd(const MatrixXd& x)>;
    using TerminalGrad = std::function<MatrixXd(const MatrixXd& x)>;

    Coeff drift;             // N x P
    CoeffAdj drift_x_adj;    // N x P
    CoeffAdj drift_u_adj;    // m x P
    Coeff diffusion;         // N x P
    CoeffAdj diffusion_x_adj;
    CoeffAdj diffusion_u_adj;
    JumpCoeff jump;          // N x P, one call per mark
    JumpCoeffAdj jump_x_adj;
    JumpCoeffAdj jump_u_adj;

    Scalar running_cost;     // 1 x P
    Coeff running_cost_x;    // N x P
    Coeff running_cost_u;    // m x P
    Terminal terminal_cost;  // 1 x P
    TerminalGrad terminal_cost_x;
    Terminal constraint;     // empty std::function when unconstrained
    TerminalGrad constraint_x;

    bool has_constraint() const { return static_cast<bool>(constraint); }

    // Single-point conveniences for probes and tests.
    VectorXd drift_at(double t, const VectorXd& x, const VectorXd& u) const {
        return drift(t, x, u).col(0);
    }
    VectorXd diffusion_at(double t, const VectorXd& x, const VectorXd& u) const {
        return diffusion(t, x, u).col(0);
    }
    VectorXd jump_at(double t, int mark, const VectorXd& x, const VectorXd& u) const {
        return jump(t, mark, x, u).col(0);
    }
    double running_cost_at(double t, const VectorXd& x, const VectorXd& u) const {
        return running_cost(t, x, u)(0);
    }
    double terminal_cost_at(const VectorXd& x) const { return terminal_cost(x)(0); }
    double constraint_at(const VectorXd& x) const { return constraint(x)(0); }
};

void validate(const ProblemSpec& spec, const GalerkinSpace& space, const MarkSpace& marks);

// Box of admissible control values plus the M^2-ball radius that keeps the
// admissible class bounded even when box entries are infinite.
struct ControlSet {
    VectorXd lower;
    VectorXd upper;
    double radius = 1e3;

    int dim() const { return static_cast<int>(lower.size()); }
    VectorXd clamp(const VectorXd& u) const { return u.cwiseMax(lower).cwiseMin(upper); }
    bool contains(const VectorXd& u) const {
        return (u.array() >= lower.array()).all() && (u.array() <= upper.array()).all();
    }
};

void validate(const ControlSet& set);

// Deterministic open-loop control: one value column per grid step.
struct ControlProcess {
    MatrixXd values;  // m x n_steps

    int dim() const { return static_cast<int>(values.rows()); }
    int n_steps() const { return static_cast<int>(values.cols()); }
    VectorXd at(int step) const { return values.col(step); }

    static ControlProcess zero(int dim, int n_steps) {
        return {MatrixXd::Zero(dim, n_steps)};
    }
    static ControlProcess constant(const VectorXd& u, int n_steps) {
        return {u.replicate(1, n_steps)};
    }
};

// M^2 metric on open-loop controls: sqrt(sum_k dt |a_k - b_k|^2).
double control_distance(const ControlProcess& a, const ControlProcess& b, const TimeGrid& grid);
double control_norm(const ControlProcess& u, const TimeGrid& grid);

// Box clamp per step, then rescale onto the radius ball if the M^2 norm
// exceeds it. The clamp alone is non-expansive and idempotent.
ControlProcess project_control(const ControlProcess& u, const ControlSet& set,
                               const TimeGrid& grid);

bool is_admissible(const ControlProcess& u, const ControlSet& set, const TimeGrid& grid);

// u + rho (v - u); the M^2 distance from u scales exactly linearly in rho.
ControlProcess convex_perturbation(const ControlProcess& u, const ControlProcess& v, double rho);

// Linear dynamics with quadratic costs and an affine terminal constraint:
//   drift      b0 + G x + D u      diffusion  g0       jump_i  s_i
//   running    (x'Qx + u'Ru) / 2   terminal   x'Fx / 2
//   constraint (c, x) - target     (omitted when constrained == false)
// R must be symmetric positive definite.
struct LqData {
    VectorXd initial_state;
    VectorXd b0;
    MatrixXd d;           // N x m
    MatrixXd g;           // N x N state coupling in the drift; zero if empty
    VectorXd g0;
    std::vector<VectorXd> sigma;  // one constant vector per mark
    MatrixXd q;
    MatrixXd r;
    MatrixXd f;
    bool constrained = false;
    VectorXd c;
    double target = 0.0;
};

ProblemSpec make_lq_problem(const LqData& data);

// State-coupled noise and control-state products:
//   drift      b0 + G x + sum_j u_j C_j x + D u
//   diffusion  g0 + E x
//   jump_i     s_i + S_i x
// Costs and constraint as in the LQ family.
struct BilinearData {
    VectorXd initial_state;
    VectorXd b0;
    MatrixXd d;
    MatrixXd g;
    std::vector<MatrixXd> c_mats;  // one N x N per control channel
    VectorXd g0;
    MatrixXd e;
    std::vector<VectorXd> sigma;
    std::vector<MatrixXd> sigma_mats;  // S_i per mark
    MatrixXd q;
    MatrixXd r;
    MatrixXd f;
    bool constrained = false;
    VectorXd c;
    double target = 0.0;
};

ProblemSpec make_bilinear_problem(const BilinearData& data);

// Finite-difference audit of the supplied partials plus empirical Lipschitz
// and growth constants over random probes.
struct ProblemAudit {
    double max_partial_rel_err = 0.0;  // worst supplied-vs-FD relative error
    double lipschitz_x = 0.0;          // worst FD ratio of b, g, sigma in x
    double cost_growth = 0.0;          // max (|l_x|+|l_u|) / (1+|x|+|u|)
    bool partials_consistent = false;
};

ProblemAudit audit_problem(const ProblemSpec& spec, const MarkSpace& marks, int n_probes = 100,
                           std::uint64_t seed = 7, double rel_tol = 1e-4);

}  // namespace seeopt
