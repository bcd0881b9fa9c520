#include "seeopt/adjoint.hpp"

#include <cmath>
#include <string>

#include "seeopt/reduce.hpp"

namespace seeopt {

namespace {

// Polynomial features of the state with per-column standardization. Constant
// columns (deterministic states, collapsed modes) are dropped rather than
// scaled up; the intercept then carries the fit.
struct FeatureMap {
    int n_features = 0;
    int dropped = 0;

    static int count(int dim, int degree) {
        int f = 1;
        if (degree >= 1) f += dim;
        if (degree >= 2) f += dim * (dim + 1) / 2;
        return f;
    }

    // Raw feature block for one step: P x F, first column constant one.
    static MatrixXd raw(const MatrixXd& x, int degree) {
        const int p = static_cast<int>(x.cols());
        const int n = static_cast<int>(x.rows());
        MatrixXd phi(p, count(n, degree));
        phi.col(0).setOnes();
        if (degree >= 1) phi.middleCols(1, n) = x.transpose();
        if (degree >= 2) {
            int col = 1 + n;
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    phi.col(col++) = x.row(i).cwiseProduct(x.row(j)).transpose();
        }
        return phi;
    }

    // Standardizes in place; returns number of dropped (constant) columns.
    static int standardize(MatrixXd& phi) {
        int dropped = 0;
        for (int j = 1; j < phi.cols(); ++j) {
            const VectorXd col = phi.col(j);
            const double mean = pairwise_mean(col);
            phi.col(j).array() -= mean;
            const double sd = std::sqrt(phi.col(j).squaredNorm() /
                                        std::max<double>(1, phi.rows() - 1));
            if (sd < 1e-14 * (1.0 + std::abs(mean))) {
                phi.col(j).setZero();
                ++dropped;
            } else {
                phi.col(j) /= sd;
            }
        }
        return dropped;
    }
};

// Adjoint pairing of all coefficient families at one step: sum over modes of
// drift*p + diffusion*q + intensity-weighted jump*r, plus lambda times the
// running cost. One scalar per path; differentiating it in x gives H_x.
Eigen::RowVectorXd paired_hamiltonian(const ProblemSpec& spec, const MarkSpace& marks, double t,
                                      const MatrixXd& x, const VectorXd& u, const MatrixXd& p,
                                      const MatrixXd& q, const std::vector<MatrixXd>& r,
                                      double lambda) {
    Eigen::RowVectorXd h = (spec.drift(t, x, u).cwiseProduct(p)).colwise().sum();
    h += (spec.diffusion(t, x, u).cwiseProduct(q)).colwise().sum();
    for (int i = 0; i < marks.n_marks(); ++i)
        h += marks.intensities[i] * (spec.jump(t, i, x, u).cwiseProduct(r.at(i))).colwise().sum();
    h += lambda * spec.running_cost(t, x, u);
    return h;
}

// H_x re-derived from the coefficients by central differences instead of the
// registered adjoint partials. The duality check pairs this against the state
// difference so that a partial inconsistent with its coefficient breaks the
// identity; sharing the registered partials on both sides would cancel any
// such error exactly. The shift is scale-aware and the difference is exact
// through quadratic coefficient families.
MatrixXd fd_hamiltonian_x(const ProblemSpec& spec, const MarkSpace& marks, double t,
                          const MatrixXd& x, const VectorXd& u, const MatrixXd& p,
                          const MatrixXd& q, const std::vector<MatrixXd>& r, double lambda) {
    const int n = static_cast<int>(x.rows());
    MatrixXd hx(n, x.cols());
    MatrixXd xs = x;
    for (int i = 0; i < n; ++i) {
        const double h = 1e-5 * (1.0 + x.row(i).cwiseAbs().maxCoeff());
        xs.row(i).array() += h;
        Eigen::RowVectorXd row = paired_hamiltonian(spec, marks, t, xs, u, p, q, r, lambda);
        xs.row(i) = x.row(i);
        xs.row(i).array() -= h;
        row -= paired_hamiltonian(spec, marks, t, xs, u, p, q, r, lambda);
        xs.row(i) = x.row(i);
        hx.row(i) = row / (2.0 * h);
    }
    return hx;
}

// Central-difference gradient of a scalar terminal functional, one row per
// state mode.
MatrixXd fd_terminal_x(const ProblemSpec::Terminal& f, const MatrixXd& x) {
    const int n = static_cast<int>(x.rows());
    MatrixXd grad(n, x.cols());
    MatrixXd xs = x;
    for (int i = 0; i < n; ++i) {
        const double h = 1e-5 * (1.0 + x.row(i).cwiseAbs().maxCoeff());
        xs.row(i).array() += h;
        Eigen::RowVectorXd row = f(xs);
        xs.row(i) = x.row(i);
        xs.row(i).array() -= h;
        row -= f(xs);
        xs.row(i) = x.row(i);
        grad.row(i) = row / (2.0 * h);
    }
    return grad;
}

}  // namespace

MatrixXd hamiltonian_x_batched(const ProblemSpec& spec, const MarkSpace& marks, double t,
                               const MatrixXd& x, const VectorXd& u, const MatrixXd& p,
                               const MatrixXd& q, const std::vector<MatrixXd>& r,
                               double lambda) {
    MatrixXd hx = spec.drift_x_adj(t, x, u, p) + spec.diffusion_x_adj(t, x, u, q);
    for (int i = 0; i < marks.n_marks(); ++i)
        hx += marks.intensities[i] * spec.jump_x_adj(t, i, x, u, r.at(i));
    hx += lambda * spec.running_cost_x(t, x, u);
    return hx;
}

MatrixXd hamiltonian_u_batched(const ProblemSpec& spec, const MarkSpace& marks, double t,
                               const MatrixXd& x, const VectorXd& u, const MatrixXd& p,
                               const MatrixXd& q, const std::vector<MatrixXd>& r,
                               double lambda) {
    MatrixXd hu = spec.drift_u_adj(t, x, u, p) + spec.diffusion_u_adj(t, x, u, q);
    for (int i = 0; i < marks.n_marks(); ++i)
        hu += marks.intensities[i] * spec.jump_u_adj(t, i, x, u, r.at(i));
    hu += lambda * spec.running_cost_u(t, x, u);
    return hu;
}

AdjointTriple solve_adjoint(const ProblemSpec& spec, const OperatorPair& pair,
                            const GalerkinSpace& space, const StatePath& path,
                            const ControlProcess& control, const Multipliers& multipliers,
                            const NoiseBundle& noise, const RegressionConfig& reg,
                            const std::function<VectorXd(double)>& driver_offset) {
    validate(spec, space, noise.marks);
    if (path.n_paths != noise.n_paths || path.grid.n_steps != noise.grid.n_steps)
        throw ConfigError("solve_adjoint: path ensemble does not match the noise bundle");
    if (reg.degree < 0 || reg.degree > 2)
        throw ConfigError("solve_adjoint: regression degree must be 0, 1 or 2");

    const int n_steps = noise.grid.n_steps;
    const int n_paths = noise.n_paths;
    const int n = space.dim;
    const int m = spec.control_dim;
    const int n_marks = noise.marks.n_marks();
    const double dt = noise.grid.dt();

    AdjointTriple out;
    out.grid = noise.grid;
    out.n_paths = n_paths;
    out.multipliers = multipliers;
    out.p.assign(n_steps + 1, MatrixXd());
    out.p_pred.assign(n_steps, MatrixXd());
    out.q.assign(n_steps, MatrixXd());
    out.r.assign(n_steps, std::vector<MatrixXd>(n_marks));
    out.hu_means.resize(m, n_steps);

    // Terminal condition, exact per path.
    out.p[n_steps] = multipliers.lambda * spec.terminal_cost_x(path.terminal());
    if (spec.has_constraint())
        out.p[n_steps] += multipliers.mu * spec.constraint_x(path.terminal());

    // One factorization of (I - dt A*) per distinct step matrix.
    const MatrixXd eye = MatrixXd::Identity(n, n);
    std::vector<Eigen::PartialPivLU<MatrixXd>> lus;
    const bool a_const = pair.a_steps.size() == 1;
    for (int k = 0; k < (a_const ? 1 : n_steps); ++k) {
        Eigen::PartialPivLU<MatrixXd> lu(eye - dt * pair.a_adjoint(k));
        if (lu.rcond() < 1e-14)
            throw NumericalError("adjoint step matrix is singular at step " + std::to_string(k));
        lus.push_back(std::move(lu));
    }
    const bool b_is_zero = pair.b_steps.size() == 1 && !pair.b_steps.front().any();

    const int n_targets = n * (2 + n_marks);
    MatrixXd targets(n_paths, n_targets);

    for (int k = n_steps - 1; k >= 0; --k) {
        const double t = noise.grid.t(k);
        const MatrixXd& x = path.at(k);
        const VectorXd u = control.at(k);
        const MatrixXd& p_next = out.p[k + 1];

        MatrixXd phi = FeatureMap::raw(x, reg.degree);
        const int dropped = FeatureMap::standardize(phi);
        if (dropped > 0 && k > 0) ++out.regression_warnings;  // step 0 is constant by design

        targets.leftCols(n) = p_next.transpose();
        targets.middleCols(n, n) = p_next.transpose().array().colwise() *
                                   noise.dw.row(k).transpose().array();
        for (int i = 0; i < n_marks; ++i)
            targets.middleCols(n * (2 + i), n) =
                p_next.transpose().array().colwise() *
                noise.compensated(k, i).transpose().array();

        MatrixXd gram = phi.transpose() * phi;
        gram.diagonal().array() += reg.ridge;
        Eigen::LDLT<MatrixXd> ldlt(gram);
        {
            const VectorXd d = ldlt.vectorD().cwiseAbs();
            if (d.minCoeff() < 1e-12 * d.maxCoeff() && dropped == 0) ++out.regression_warnings;
        }
        const MatrixXd beta = ldlt.solve(phi.transpose() * targets);
        const MatrixXd fitted = phi * beta;  // P x n_targets

        out.p_pred[k] = fitted.leftCols(n).transpose();
        out.q[k] = fitted.middleCols(n, n).transpose() / dt;
        for (int i = 0; i < n_marks; ++i)
            out.r[k][i] = fitted.middleCols(n * (2 + i), n).transpose() /
                          (noise.marks.intensities[i] * dt);

        MatrixXd hx = hamiltonian_x_batched(spec, noise.marks, t, x, u, out.p_pred[k], out.q[k],
                                            out.r[k], multipliers.lambda);
        if (driver_offset) hx.colwise() += driver_offset(t);

        MatrixXd rhs = out.p_pred[k] + dt * hx;
        if (!b_is_zero) rhs += dt * (pair.b_adjoint(k) * out.q[k]);
        out.p[k] = (a_const ? lus.front() : lus[k]).solve(rhs);
        if (!out.p[k].allFinite())
            throw NumericalError("adjoint diverged at step " + std::to_string(k));

        out.hu_means.col(k) = pairwise_colmean(hamiltonian_u_batched(
            spec, noise.marks, t, x, u, out.p_pred[k], out.q[k], out.r[k], multipliers.lambda));
    }
    return out;
}

DualityReport duality_check(const ProblemSpec& spec, const OperatorPair& pair,
                            const GalerkinSpace& space, const ControlProcess& control_a,
                            const ControlProcess& control_b, const Multipliers& multipliers,
                            const NoiseBundle& noise, const RegressionConfig& reg) {
    const StatePath path_a = simulate_forward(spec, pair, space, control_a, noise);
    const StatePath path_b = simulate_forward(spec, pair, space, control_b, noise);
    const AdjointTriple adj =
        solve_adjoint(spec, pair, space, path_a, control_a, multipliers, noise, reg);

    const int n_steps = noise.grid.n_steps;
    const int n_paths = noise.n_paths;
    const double dt = noise.grid.dt();
    const int n_marks = noise.marks.n_marks();

    Eigen::RowVectorXd lhs = Eigen::RowVectorXd::Zero(n_paths);
    Eigen::RowVectorXd rhs = Eigen::RowVectorXd::Zero(n_paths);

    for (int k = 0; k < n_steps; ++k) {
        const double t = noise.grid.t(k);
        const MatrixXd& xa = path_a.at(k);
        const MatrixXd& xb = path_b.at(k);
        const VectorXd ua = control_a.at(k);
        const VectorXd ub = control_b.at(k);

        const MatrixXd db = spec.drift(t, xb, ub) - spec.drift(t, xa, ua);
        lhs += dt * (adj.p[k + 1].cwiseProduct(db)).colwise().sum();
        const MatrixXd dg = spec.diffusion(t, xb, ub) - spec.diffusion(t, xa, ua);
        lhs += dt * (adj.q[k].cwiseProduct(dg)).colwise().sum();
        for (int i = 0; i < n_marks; ++i) {
            const MatrixXd ds = spec.jump(t, i, xb, ub) - spec.jump(t, i, xa, ua);
            lhs += dt * noise.marks.intensities[i] *
                   (adj.r[k][i].cwiseProduct(ds)).colwise().sum();
        }

        const MatrixXd hx = fd_hamiltonian_x(spec, noise.marks, t, xa, ua, adj.p_pred[k],
                                             adj.q[k], adj.r[k], multipliers.lambda);
        rhs += dt * (hx.cwiseProduct(xb - xa)).colwise().sum();
    }
    const MatrixXd dxn = path_b.terminal() - path_a.terminal();
    rhs += multipliers.lambda *
           (fd_terminal_x(spec.terminal_cost, path_a.terminal()).cwiseProduct(dxn))
               .colwise()
               .sum();
    if (spec.has_constraint())
        rhs += multipliers.mu *
               (fd_terminal_x(spec.constraint, path_a.terminal()).cwiseProduct(dxn))
                   .colwise()
                   .sum();

    DualityReport report;
    report.lhs = pairwise_mean(lhs);
    report.rhs = pairwise_mean(rhs);
    const Eigen::RowVectorXd gap = lhs - rhs;
    const auto stats = pairwise_mean_stderr(gap);
    report.diff = stats.mean;
    report.diff_stderr = stats.stderr_mean;
    report.regression_warnings = adj.regression_warnings;
    return report;
}

double adjoint_energy(const AdjointTriple& t, const GalerkinSpace& space,
                      const MarkSpace& marks) {
    const double dt = t.grid.dt();
    const auto mean_h2 = [&](const MatrixXd& m) {
        const Eigen::RowVectorXd h2 = m.colwise().squaredNorm();
        return pairwise_mean(h2);
    };
    const auto mean_v2 = [&](const MatrixXd& m) {
        const Eigen::RowVectorXd v2 =
            (m.array().square().colwise() * space.v_weights.array()).colwise().sum();
        return pairwise_mean(v2);
    };
    double sup_p = 0.0, acc = 0.0;
    for (int k = 0; k <= t.grid.n_steps; ++k) sup_p = std::max(sup_p, mean_h2(t.p[k]));
    for (int k = 0; k < t.grid.n_steps; ++k) {
        acc += dt * mean_v2(t.p[k]);
        acc += dt * mean_h2(t.q[k]);
        for (int i = 0; i < marks.n_marks(); ++i)
            acc += dt * marks.intensities[i] * mean_h2(t.r[k][i]);
    }
    return sup_p + acc;
}

double adjoint_difference_energy(const AdjointTriple& a, const AdjointTriple& b,
                                 const GalerkinSpace& space, const MarkSpace& marks) {
    if (a.grid.n_steps != b.grid.n_steps || a.n_paths != b.n_paths)
        throw ConfigError("adjoint_difference_energy: ensembles do not match");
    AdjointTriple d;
    d.grid = a.grid;
    d.n_paths = a.n_paths;
    d.p.resize(a.p.size());
    d.q.resize(a.q.size());
    d.r.resize(a.r.size());
    for (size_t k = 0; k < a.p.size(); ++k) d.p[k] = a.p[k] - b.p[k];
    for (size_t k = 0; k < a.q.size(); ++k) {
        d.q[k] = a.q[k] - b.q[k];
        d.r[k].resize(a.r[k].size());
        for (size_t i = 0; i < a.r[k].size(); ++i) d.r[k][i] = a.r[k][i] - b.r[k][i];
    }
    return adjoint_energy(d, space, marks);
}

}  // namespace seeopt
