#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seeopt/adjoint.hpp"
#include "seeopt/forward.hpp"
#include "seeopt/verify.hpp"

#include "support/oracles.hpp"

using namespace seeopt;

namespace {

MatrixXd full_drift_matrix(const VerifySetup& setup) {
    const int dim = setup.space.dim;
    MatrixXd a = MatrixXd::Zero(dim, dim);
    for (int k = 0; k < dim; ++k)
        a(k, k) = -0.1 * (k + 1.0) * (k + 1.0) * M_PI * M_PI;
    return a + setup.lq.g;
}

// fixture stripped of every noise source; the adjoint collapses to an ODE
LqData deterministic_lq(const VerifySetup& setup) {
    LqData d = setup.lq;
    d.g0.setZero();
    for (auto& s : d.sigma) s.setZero();
    return d;
}

}  // namespace

TEST_CASE("zero multipliers give an identically zero adjoint") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const auto noise = sample_noise(setup.grid, setup.marks, 200, 11);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.2),
                                                      setup.grid.n_steps);
    const auto path = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const auto adj = solve_adjoint(spec, setup.pair, setup.space, path, u,
                                   Multipliers{0.0, 0.0}, noise, setup.regression);
    for (const auto& slab : adj.p) CHECK(slab.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& slab : adj.q) CHECK(slab.cwiseAbs().maxCoeff() == 0.0);
    CHECK(adj.hu_means.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("terminal condition holds exactly on every path") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const auto noise = sample_noise(setup.grid, setup.marks, 300, 17);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, -0.3),
                                                      setup.grid.n_steps);
    const auto path = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const Multipliers mult{0.8, -0.6};
    const auto adj = solve_adjoint(spec, setup.pair, setup.space, path, u, mult, noise,
                                   setup.regression);
    const MatrixXd expected = (mult.lambda * (setup.lq.f * path.terminal())).colwise() +
                              VectorXd(mult.mu * setup.lq.c);
    CHECK((adj.p.back() - expected).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("deterministic sub-case tracks the backward ode at first order") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(deterministic_lq(setup));
    const MatrixXd full = full_drift_matrix(setup);
    const Multipliers mult{0.9, -0.4};
    const VectorXd u_const = VectorXd::Constant(2, 0.25);

    // reference: x from the flow, then -p' = (A+G)' p + lambda Q x(t)
    const int fine = 2000;
    const auto x_fine = oracles::linear_forward_path(
        full, [&](double) -> VectorXd { return setup.lq.b0 + setup.lq.d * u_const; },
        setup.lq.initial_state, 1.0, fine, 2);
    const auto x_at = [&](double t) -> VectorXd {
        const double pos = t * fine;
        const int lo = std::min(static_cast<int>(pos), fine - 1);
        const double w = pos - lo;
        return (1.0 - w) * x_fine[lo] + w * x_fine[lo + 1];
    };

    const auto run = [&](int n) {
        const auto noise = sample_noise(TimeGrid{1.0, n}, setup.marks, 64, 23);
        const ControlProcess u = ControlProcess::constant(u_const, n);
        const auto path = simulate_forward(spec, setup.pair, setup.space, u, noise);
        const auto adj = solve_adjoint(spec, setup.pair, setup.space, path, u, mult, noise,
                                       setup.regression);
        const VectorXd terminal =
            mult.lambda * setup.lq.f * x_at(1.0) + mult.mu * setup.lq.c;
        const auto p_ref = oracles::linear_adjoint_path(
            full,
            [&](double t) -> VectorXd { return mult.lambda * (setup.lq.q * x_at(t)); },
            terminal, 1.0, n, 6);
        double worst = 0.0;
        for (int k = 0; k <= n; ++k)
            worst = std::max(worst, (adj.p[k].col(0) - p_ref[k]).norm());
        return worst;
    };
    const double e50 = run(50);
    const double e100 = run(100);
    CHECK(e50 < 0.02);
    CHECK(e50 / e100 > 1.6);
    CHECK(e50 / e100 < 2.5);
}

TEST_CASE("costate admits the riccati feedback form under additive noise") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const int n = setup.grid.n_steps;
    const auto noise = sample_noise(setup.grid, setup.marks, 4000, 29);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.15), n);
    const auto path = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const Multipliers mult{0.9, -0.43589};
    const auto adj = solve_adjoint(spec, setup.pair, setup.space, path, u, mult, noise,
                                   setup.regression);

    const MatrixXd full = full_drift_matrix(setup);
    const auto ric = oracles::riccati_path(
        full, setup.lq.q, setup.lq.f, setup.lq.c, mult.lambda, mult.mu,
        [&](double) -> VectorXd { return setup.lq.b0 + setup.lq.d * u.values.col(0); },
        1.0, n, 8);

    const double dt = setup.grid.dt();
    double num = 0.0, den = 0.0;
    for (int k = 0; k <= n; ++k) {
        const MatrixXd predicted = (ric.p[k] * path.states[k]).colwise() + ric.s[k];
        const double w = (k == 0 || k == n) ? 0.5 * dt : dt;
        num += w * (adj.p[k] - predicted).squaredNorm() / path.n_paths;
        den += w * predicted.squaredNorm() / path.n_paths;
    }
    CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("regression basis degree barely moves the costate sweep") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const int n = setup.grid.n_steps;
    const auto noise = sample_noise(setup.grid, setup.marks, 2000, 37);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.1), n);
    const auto path = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const Multipliers mult{1.0, 0.0};
    const auto deg1 = solve_adjoint(spec, setup.pair, setup.space, path, u, mult, noise,
                                    RegressionConfig{1, 1e-10});
    const auto deg2 = solve_adjoint(spec, setup.pair, setup.space, path, u, mult, noise,
                                    RegressionConfig{2, 1e-10});
    // the LQ conditional expectation is affine in the state, so the quadratic
    // basis changes p only through sampling noise; q and r stay noisy because
    // they divide small regressed covariations by dt, so only p is compared
    double worst = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double gap = (deg1.p[k] - deg2.p[k]).squaredNorm();
        const double base = deg1.p[k].squaredNorm();
        if (base > 0.0) worst = std::max(worst, std::sqrt(gap / base));
    }
    CHECK(worst <= 0.02);
    CHECK((deg1.hu_means - deg2.hu_means).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("duality gap vanishes identically at zero perturbation") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const auto noise = sample_noise(setup.grid, setup.marks, 500, 43);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.3),
                                                      setup.grid.n_steps);
    const auto report = duality_check(spec, setup.pair, setup.space, u, u,
                                      Multipliers{0.7, 0.2}, noise, setup.regression);
    CHECK(report.lhs == 0.0);
    CHECK(report.rhs == 0.0);
    CHECK(report.diff == 0.0);
}

TEST_CASE("duality identity holds on the lq fixture within the dt allowance") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const int n = setup.grid.n_steps;
    const auto noise = sample_noise(setup.grid, setup.marks, 6000, 47);
    const ControlProcess a = ControlProcess::constant(VectorXd::Constant(2, 0.1), n);
    ControlProcess b = a;
    for (int k = 0; k < n; ++k) {
        b.values(0, k) += 0.3 * std::sin(2.0 * M_PI * k / n);
        b.values(1, k) -= 0.2;
    }
    const auto report = duality_check(spec, setup.pair, setup.space, a, b,
                                      Multipliers{0.9, -0.43589}, noise, setup.regression);
    const double tol = std::max(3.0 * report.diff_stderr,
                                setup.tol.duality_dt_coeff * setup.grid.dt());
    CHECK(std::abs(report.diff) <= tol);
    // dropped-feature warnings are expected here: the high heat modes decay
    // to machine-constant columns, never more than one drop per step
    CHECK(report.regression_warnings <= setup.grid.n_steps);
}

TEST_CASE("duality identity survives state-coupled noise and control products") {
    // bilinear family: drift u-state products, multiplicative diffusion and
    // state-dependent jumps all feed the q and r regressions
    const auto setup = default_verify_setup();
    const int dim = setup.space.dim;
    BilinearData d;
    d.initial_state = setup.lq.initial_state;
    d.b0 = setup.lq.b0;
    d.d = setup.lq.d;
    d.g = setup.lq.g;
    d.c_mats = {0.1 * MatrixXd::Identity(dim, dim), MatrixXd::Zero(dim, dim)};
    d.c_mats[1](0, 1) = 0.2;
    d.g0 = setup.lq.g0;
    d.e = 0.05 * MatrixXd::Identity(dim, dim);
    d.sigma = setup.lq.sigma;
    d.sigma_mats = {0.02 * MatrixXd::Identity(dim, dim), MatrixXd::Zero(dim, dim)};
    d.q = setup.lq.q;
    d.r = setup.lq.r;
    d.f = setup.lq.f;
    const auto spec = make_bilinear_problem(d);

    const auto gap_at = [&](int n) {
        const auto noise = sample_noise(TimeGrid{1.0, n}, setup.marks, 6000, 53);
        ControlProcess a = ControlProcess::constant(VectorXd::Constant(2, 0.1), n);
        ControlProcess b = a;
        b.values.row(0).array() += 0.25;
        const auto report = duality_check(spec, setup.pair, setup.space, a, b,
                                          Multipliers{1.0, 0.0}, noise, setup.regression);
        return report;
    };
    // the state-coupled coefficients widen the O(dt) bias to 0.066 dt on this
    // instance (path-count independent); allowance pinned at 0.15 dt
    const auto r100 = gap_at(100);
    const auto r200 = gap_at(200);
    CHECK(std::abs(r100.diff) <= std::max(3.0 * r100.diff_stderr, 0.15 * 0.01));
    CHECK(std::abs(r100.diff / r200.diff) > 1.8);
    CHECK(std::abs(r100.diff / r200.diff) < 2.2);
}
