#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seeopt/forward.hpp"
#include "seeopt/parallel.hpp"
#include "seeopt/reduce.hpp"
#include "seeopt/rng.hpp"
#include "seeopt/verify.hpp"

#include "support/oracles.hpp"

using namespace seeopt;

namespace {

// zero-noise, zero-cost problem over `dim` modes with optional drift data
LqData bare_lq(int dim, const VectorXd& x0, int n_marks = 0) {
    LqData d;
    d.initial_state = x0;
    d.b0 = VectorXd::Zero(dim);
    d.d = MatrixXd::Zero(dim, 1);
    d.g0 = VectorXd::Zero(dim);
    d.sigma.assign(n_marks, VectorXd::Zero(dim));
    d.q = MatrixXd::Zero(dim, dim);
    d.r = MatrixXd::Identity(1, 1);
    d.f = MatrixXd::Zero(dim, dim);
    return d;
}

OperatorPair zero_pair(int dim) {
    return OperatorPair{{MatrixXd::Zero(dim, dim)}, {MatrixXd::Zero(dim, dim)}};
}

GalerkinSpace flat_space(int dim) {
    GalerkinSpace s;
    s.dim = dim;
    s.v_weights = VectorXd::Ones(dim);
    return s;
}

}  // namespace

TEST_CASE("zero coefficients preserve the state exactly") {
    const int dim = 5;
    const VectorXd x0 = VectorXd::LinSpaced(dim, -1.0, 1.0);
    const auto spec = make_lq_problem(bare_lq(dim, x0));
    const auto noise = sample_noise(TimeGrid{1.0, 30}, MarkSpace{}, 40, 5);
    const auto path = simulate_forward(spec, zero_pair(dim), flat_space(dim),
                                       ControlProcess::zero(1, 30), noise);
    REQUIRE(path.states.size() == 31);
    for (const auto& slab : path.states)
        CHECK((slab.colwise() - x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("heat modes follow the implicit-Euler closed form exactly") {
    const double nu = 1.0;
    const int dim = 4, n = 50;
    const auto space = make_heat_space(dim, nu);
    const auto pair = make_heat_pair(space, nu);
    const auto spec = make_lq_problem(bare_lq(dim, VectorXd::Ones(dim)));
    const auto noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 3, 2);
    const auto path = simulate_forward(spec, pair, space, ControlProcess::zero(1, n), noise);

    const double dt = 1.0 / n;
    for (int k = 0; k < dim; ++k) {
        const double mu = nu * (k + 1.0) * (k + 1.0) * M_PI * M_PI;
        const double expected = std::pow(1.0 + dt * mu, -n);
        CHECK(std::abs(path.terminal()(k, 0) - expected) <= 1e-12);
    }
}

TEST_CASE("heat mode converges to the exponential at first order") {
    const double nu = 0.1;
    const auto space = make_heat_space(1, nu);
    const auto pair = make_heat_pair(space, nu);
    const auto spec = make_lq_problem(bare_lq(1, VectorXd::Ones(1)));
    const double mu = nu * M_PI * M_PI;
    const double exact = std::exp(-mu);  // about 0.37271

    const auto run = [&](int n) {
        const auto noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 2);
        const auto path =
            simulate_forward(spec, pair, space, ControlProcess::zero(1, n), noise);
        return std::abs(path.terminal()(0, 0) - exact);
    };
    const double e100 = run(100);
    const double e200 = run(200);
    // bias constant mu^2 e^{-mu} / 2 is about 0.18; allow [0.5, 2] x halving
    CHECK(e100 < 0.25 * 0.01);
    CHECK(e100 / e200 > 1.7);
    CHECK(e100 / e200 < 2.3);
}

TEST_CASE("compensated jumps leave the mean in place") {
    const auto setup = default_verify_setup();
    const int dim = 8;
    LqData d = bare_lq(dim, setup.lq.initial_state, 2);
    d.sigma = setup.lq.sigma;
    const auto spec = make_lq_problem(d);
    const auto noise = sample_noise(setup.grid, setup.marks, 10000, 77);
    const auto path = simulate_forward(spec, zero_pair(dim), flat_space(dim),
                                       ControlProcess::zero(1, setup.grid.n_steps), noise);
    for (int row = 0; row < dim; ++row) {
        const Eigen::RowVectorXd drift =
            path.terminal().row(row).array() - setup.lq.initial_state[row];
        const auto stats = pairwise_mean_stderr(drift);
        // per-mode z-scores; widened threshold for the max over 8 modes
        CHECK(std::abs(stats.mean) <=
              std::sqrt(9.0 + 2.0 * std::log(8.0)) * stats.stderr_mean);
    }
}

TEST_CASE("deterministic drift matches the continuous flow at first order") {
    // x' = (A + G) x + b0 + D u with smooth u; RK4 at fine resolution is the
    // reference, the scheme error must shrink linearly in dt
    const auto setup = default_verify_setup();
    const int dim = 8;
    LqData d = setup.lq;
    d.g0.setZero();
    d.sigma.assign(2, VectorXd::Zero(dim));
    d.constrained = false;
    const auto spec = make_lq_problem(d);
    const auto space = setup.space;
    const auto pair = setup.pair;

    MatrixXd a_diag = MatrixXd::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) a_diag(k, k) = -0.1 * (k + 1.0) * (k + 1.0) * M_PI * M_PI;
    const MatrixXd full = a_diag + d.g;

    const auto control_at = [&](double t) {
        VectorXd u(2);
        u << std::sin(2.0 * M_PI * t), std::cos(2.0 * M_PI * t);
        return u;
    };
    const auto forcing = [&](double t) -> VectorXd { return d.b0 + d.d * control_at(t); };
    const auto reference =
        oracles::linear_forward_path(full, forcing, d.initial_state, 1.0, 1, 4000).back();

    const auto run = [&](int n) {
        ControlProcess u = ControlProcess::zero(2, n);
        for (int k = 0; k < n; ++k) u.values.col(k) = control_at(k * (1.0 / n));
        const auto noise = sample_noise(TimeGrid{1.0, n}, setup.marks, 1, 3);
        const auto path = simulate_forward(spec, pair, space, u, noise);
        return (path.terminal().col(0) - reference).norm();
    };
    const double e50 = run(50);
    const double e100 = run(100);
    const double e200 = run(200);
    CHECK(e50 < 0.05);
    CHECK(e50 / e100 > 1.6);
    CHECK(e100 / e200 > 1.6);
}

TEST_CASE("strong order at least one half on the lq fixture") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.1), 400);
    const auto fine_noise = sample_noise(TimeGrid{1.0, 400}, setup.marks, 2000, 31);
    const auto fine =
        simulate_forward(spec, setup.pair, setup.space, u, fine_noise);

    std::vector<double> dts, errs;
    for (int factor : {8, 4, 2}) {
        const auto coarse_noise = coarsen_noise(fine_noise, factor);
        const int n = coarse_noise.grid.n_steps;
        ControlProcess uc = ControlProcess::constant(VectorXd::Constant(2, 0.1), n);
        const auto coarse = simulate_forward(spec, setup.pair, setup.space, uc, coarse_noise);
        double mse = 0.0;
        for (int p = 0; p < fine.n_paths; ++p)
            mse += (coarse.terminal().col(p) - fine.terminal().col(p)).squaredNorm();
        dts.push_back(coarse_noise.grid.dt());
        errs.push_back(std::sqrt(mse / fine.n_paths));
    }
    // least-squares slope of log err against log dt
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int m = static_cast<int>(dts.size());
    for (int i = 0; i < m; ++i) {
        const double x = std::log(dts[i]), y = std::log(errs[i]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(slope >= 0.4);
}

TEST_CASE("cost quadrature is exact on a deterministic path") {
    // constant state x, constant control u: J = T l(x, u) + Phi(x)
    const int dim = 3;
    const VectorXd x0 = VectorXd::Constant(dim, 2.0);
    LqData d = bare_lq(dim, x0);
    d.q = MatrixXd::Identity(dim, dim);
    d.f = 2.0 * MatrixXd::Identity(dim, dim);
    d.r = 3.0 * MatrixXd::Identity(1, 1);
    d.constrained = true;
    d.c = VectorXd::Unit(dim, 0);
    d.target = 0.5;
    const auto spec = make_lq_problem(d);
    const auto noise = sample_noise(TimeGrid{2.0, 40}, MarkSpace{}, 10, 9);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(1, 0.7), 40);
    const auto path = simulate_forward(spec, zero_pair(dim), flat_space(dim), u, noise);
    const auto cost = evaluate_cost(spec, path, u);

    const double running = 0.5 * (x0.squaredNorm() + 3.0 * 0.7 * 0.7);
    const double expected = 2.0 * running + 0.5 * 2.0 * x0.squaredNorm();
    CHECK(cost.j_mean == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cost.j_stderr == 0.0);
    CHECK(cost.has_constraint);
    CHECK(cost.constraint_mean == doctest::Approx(2.0 - 0.5).epsilon(1e-12));
    CHECK(cost.j_per_path.size() == 10);
}

TEST_CASE("a priori energy ratio is finite and modest") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const auto noise = sample_noise(setup.grid, setup.marks, 2000, 13);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.2),
                                                      setup.grid.n_steps);
    const auto path = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const auto report = apriori_check(spec, setup.pair, setup.space, path, u, setup.marks);
    CHECK(std::isfinite(report.ratio));
    CHECK(report.ratio > 0.0);
    CHECK(report.lhs > 0.0);
    CHECK(report.rhs > 0.0);
    CHECK(report.ratio < 100.0);
}

TEST_CASE("divergence raises a numerical error") {
    // strongly anti-dissipative operator blows the state past the guard
    const int dim = 2;
    OperatorPair bad;
    bad.a_steps = {MatrixXd::Identity(dim, dim) * 80.0};
    bad.b_steps = {MatrixXd::Zero(dim, dim)};
    const auto spec = make_lq_problem(bare_lq(dim, VectorXd::Ones(dim)));
    const auto noise = sample_noise(TimeGrid{1.0, 400}, MarkSpace{}, 4, 21);
    CHECK_THROWS_AS(simulate_forward(spec, bad, flat_space(dim),
                                     ControlProcess::zero(1, 400), noise),
                    NumericalError);
}

TEST_CASE("ensembles are identical at one and many worker threads") {
    const auto setup = default_verify_setup();
    const auto spec = make_lq_problem(setup.lq);
    const auto noise = sample_noise(setup.grid, setup.marks, 500, 41);
    const ControlProcess u = ControlProcess::constant(VectorXd::Constant(2, 0.1),
                                                      setup.grid.n_steps);
    set_max_threads(1);
    const auto serial = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const auto serial_cost = evaluate_cost(spec, serial, u);
    set_max_threads(8);
    const auto threaded = simulate_forward(spec, setup.pair, setup.space, u, noise);
    const auto threaded_cost = evaluate_cost(spec, threaded, u);
    set_max_threads(0);

    for (size_t k = 0; k < serial.states.size(); ++k)
        CHECK(serial.states[k] == threaded.states[k]);
    // bit-identical costs, not merely close: reductions are order-fixed
    CHECK(serial_cost.j_mean == threaded_cost.j_mean);
    CHECK(serial_cost.j_stderr == threaded_cost.j_stderr);
    CHECK(serial_cost.constraint_mean == threaded_cost.constraint_mean);
}
