#include "seeopt/forward.hpp"

#include <cmath>
#include <string>

#include "seeopt/reduce.hpp"

namespace seeopt {

namespace {

constexpr double kDivergenceThreshold = 1e12;  // on per-path ||X||_H^2

// One factorization per distinct step matrix; rcond guards the solve.
struct ImplicitSolver {
    std::vector<Eigen::PartialPivLU<MatrixXd>> lus;
    bool constant = false;

    ImplicitSolver(const OperatorPair& pair, const GalerkinSpace& space, double dt, int n_steps,
                   bool adjoint) {
        const MatrixXd eye = MatrixXd::Identity(space.dim, space.dim);
        constant = pair.a_steps.size() == 1;
        const int count = constant ? 1 : n_steps;
        lus.reserve(count);
        for (int k = 0; k < count; ++k) {
            const MatrixXd a = adjoint ? MatrixXd(pair.a_adjoint(k)) : pair.a(k);
            Eigen::PartialPivLU<MatrixXd> lu(eye - dt * a);
            if (lu.rcond() < 1e-14)
                throw NumericalError("implicit step matrix is singular at step " +
                                     std::to_string(k));
            lus.push_back(std::move(lu));
        }
    }

    const Eigen::PartialPivLU<MatrixXd>& at(int step) const {
        return constant ? lus.front() : lus.at(step);
    }
};

void check_finite(const MatrixXd& x, int step) {
    if (x.allFinite() && (x.colwise().squaredNorm().maxCoeff() <= kDivergenceThreshold)) return;
    for (int p = 0; p < x.cols(); ++p) {
        const double n2 = x.col(p).squaredNorm();
        if (!std::isfinite(n2) || n2 > kDivergenceThreshold)
            throw NumericalError("state diverged at step " + std::to_string(step) + ", path " +
                                 std::to_string(p));
    }
}

}  // namespace

StatePath simulate_forward(const ProblemSpec& spec, const OperatorPair& pair,
                           const GalerkinSpace& space, const ControlProcess& control,
                           const NoiseBundle& noise) {
    validate(space);
    validate(pair, space);
    validate(spec, space, noise.marks);
    if (control.dim() != spec.control_dim)
        throw ConfigError("simulate_forward: control dim mismatch");
    if (control.n_steps() != noise.grid.n_steps)
        throw ConfigError("simulate_forward: control does not match the grid");
    if (!pair.time_constant() && pair.stored_steps() != noise.grid.n_steps)
        throw ConfigError("simulate_forward: per-step operators do not match the grid");

    const int n_steps = noise.grid.n_steps;
    const int n_paths = noise.n_paths;
    const double dt = noise.grid.dt();
    const int n_marks = noise.marks.n_marks();

    StatePath out;
    out.grid = noise.grid;
    out.n_paths = n_paths;
    out.states.reserve(n_steps + 1);
    out.states.push_back(spec.initial_state.replicate(1, n_paths));

    ImplicitSolver solver(pair, space, dt, n_steps, /*adjoint=*/false);
    const bool b_is_zero = pair.b_steps.size() == 1 && !pair.b_steps.front().any();

    MatrixXd rhs(space.dim, n_paths);
    for (int k = 0; k < n_steps; ++k) {
        const double t = noise.grid.t(k);
        const MatrixXd& x = out.states.back();
        const VectorXd u = control.at(k);

        rhs = x + dt * spec.drift(t, x, u);
        MatrixXd diff = spec.diffusion(t, x, u);
        if (!b_is_zero) diff += pair.b(k) * x;
        rhs += diff * noise.dw.row(k).asDiagonal();
        for (int i = 0; i < n_marks; ++i)
            rhs += spec.jump(t, i, x, u) * noise.compensated(k, i).asDiagonal();

        MatrixXd next = solver.at(k).solve(rhs);
        check_finite(next, k + 1);
        out.states.push_back(std::move(next));
    }

    for (const auto& slab : out.states) {
        const Eigen::RowVectorXd h2 = slab.colwise().squaredNorm();
        const double mean_h2 = pairwise_mean(h2);
        out.sup_mean_h2 = std::max(out.sup_mean_h2, mean_h2);
    }
    return out;
}

CostReport evaluate_cost(const ProblemSpec& spec, const StatePath& path,
                         const ControlProcess& control) {
    const int n_steps = path.grid.n_steps;
    const int n_paths = path.n_paths;
    const double dt = path.grid.dt();

    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(n_paths);
    for (int k = 0; k < n_steps; ++k)
        acc += dt * spec.running_cost(path.grid.t(k), path.at(k), control.at(k));
    acc += spec.terminal_cost(path.terminal());

    CostReport report;
    report.j_per_path = acc.transpose();
    const auto j = pairwise_mean_stderr(report.j_per_path);
    report.j_mean = j.mean;
    report.j_stderr = j.stderr_mean;

    if (spec.has_constraint()) {
        report.has_constraint = true;
        report.constraint_per_path = spec.constraint(path.terminal()).transpose();
        const auto c = pairwise_mean_stderr(report.constraint_per_path);
        report.constraint_mean = c.mean;
        report.constraint_stderr = c.stderr_mean;
    }
    return report;
}

AprioriReport apriori_check(const ProblemSpec& spec, const OperatorPair&,
                            const GalerkinSpace& space, const StatePath& path,
                            const ControlProcess& control, const MarkSpace& marks) {
    const double dt = path.grid.dt();
    const int n_paths = path.n_paths;

    AprioriReport report;
    double v_energy = 0.0;
    for (int k = 0; k <= path.grid.n_steps; ++k) {
        const MatrixXd& x = path.at(k);
        const Eigen::RowVectorXd h2 = x.colwise().squaredNorm();
        const double mean_h2 = pairwise_mean(h2);
        report.lhs = std::max(report.lhs, mean_h2);
        if (k < path.grid.n_steps) {
            const Eigen::RowVectorXd v2 =
                (x.array().square().colwise() * space.v_weights.array()).colwise().sum();
            v_energy += dt * pairwise_mean(v2);
        }
    }
    report.lhs += v_energy;

    const MatrixXd zero = MatrixXd::Zero(space.dim, 1);
    report.rhs = spec.initial_state.squaredNorm();
    for (int k = 0; k < path.grid.n_steps; ++k) {
        const double t = path.grid.t(k);
        const VectorXd u = control.at(k);
        report.rhs += dt * spec.drift(t, zero, u).col(0).squaredNorm();
        report.rhs += dt * spec.diffusion(t, zero, u).col(0).squaredNorm();
        for (int i = 0; i < marks.n_marks(); ++i)
            report.rhs +=
                dt * marks.intensities[i] * spec.jump(t, i, zero, u).col(0).squaredNorm();
    }
    report.ratio = report.lhs / std::max(report.rhs, 1e-300);
    return report;
}

double path_difference_energy(const StatePath& a, const StatePath& b,
                              const GalerkinSpace& space) {
    if (a.grid.n_steps != b.grid.n_steps || a.n_paths != b.n_paths)
        throw ConfigError("path_difference_energy: ensembles do not match");
    const double dt = a.grid.dt();
    double sup_h2 = 0.0;
    double v_energy = 0.0;
    for (int k = 0; k <= a.grid.n_steps; ++k) {
        const MatrixXd d = a.at(k) - b.at(k);
        const Eigen::RowVectorXd h2 = d.colwise().squaredNorm();
        sup_h2 = std::max(sup_h2, pairwise_mean(h2));
        if (k < a.grid.n_steps) {
            const Eigen::RowVectorXd v2 =
                (d.array().square().colwise() * space.v_weights.array()).colwise().sum();
            v_energy += dt * pairwise_mean(v2);
        }
    }
    return sup_h2 + v_energy;
}

}  // namespace seeopt
