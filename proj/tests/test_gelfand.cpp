#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seeopt/gelfand.hpp"
#include "seeopt/rng.hpp"

using namespace seeopt;

namespace {

GalerkinSpace space_with_weights(const VectorXd& w) {
    GalerkinSpace s;
    s.dim = static_cast<int>(w.size());
    s.v_weights = w;
    return s;
}

}  // namespace

TEST_CASE("norm scale and duality inequalities") {
    RngStream rng(31, 0);
    VectorXd w(6);
    for (int i = 0; i < 6; ++i) w[i] = 1.0 + 3.0 * rng.uniform();
    const GalerkinSpace s = space_with_weights(w);
    validate(s);

    for (int trial = 0; trial < 50; ++trial) {
        const VectorXd x = rng.normal_vector(6);
        const VectorXd f = rng.normal_vector(6);
        // weights >= 1 order the three norms
        CHECK(s.v_norm(x) >= s.h_norm(x) - 1e-12);
        CHECK(s.h_norm(x) >= s.vstar_norm(x) - 1e-12);
        // duality: |<f, x>| <= ||f||_V* ||x||_V with equality at f = w .* x
        CHECK(std::abs(s.pairing(f, x)) <= s.vstar_norm(f) * s.v_norm(x) + 1e-12);
        const VectorXd aligned = (w.array() * x.array()).matrix();
        CHECK(s.pairing(aligned, x) ==
              doctest::Approx(s.vstar_norm(aligned) * s.v_norm(x)).epsilon(1e-12));
        // Cauchy-Schwarz in H
        CHECK(std::abs(f.dot(x)) <= s.h_norm(f) * s.h_norm(x) + 1e-12);
    }
}

TEST_CASE("space validation rejects bad weights") {
    CHECK_THROWS_AS(validate(space_with_weights(VectorXd::Constant(3, 0.5))), ConfigError);
    CHECK_THROWS_AS(validate(space_with_weights(VectorXd())), ConfigError);
    VectorXd nan_w = VectorXd::Ones(3);
    nan_w[1] = std::nan("");
    CHECK_THROWS_AS(validate(space_with_weights(nan_w)), ConfigError);
}

TEST_CASE("heat pair passes coercivity up to the viscosity bound") {
    for (double nu : {0.01, 0.1, 1.0, 2.0}) {
        const GalerkinSpace s = make_heat_space(8, nu);
        const OperatorPair pair = make_heat_pair(s, nu);
        validate(pair, s);
        const auto cert = check_coercivity(pair, s, nu / 2.0, 1.0, 64, 7);
        CHECK(cert.verified);
        CHECK(cert.worst_margin >= kCoercivityFloor);
    }
}

TEST_CASE("certificate is sound: failing operators are refused") {
    const GalerkinSpace s = make_heat_space(4, 0.1);

    // +identity drift breaks the inequality for alpha matching the heat pair
    OperatorPair bad;
    bad.a_steps = {MatrixXd::Identity(4, 4) * 5.0};
    bad.b_steps = {MatrixXd::Zero(4, 4)};
    const auto cert = check_coercivity(bad, s, 0.05, 1.0, 64, 7);
    CHECK_FALSE(cert.verified);
    CHECK(cert.worst_margin < 0.0);
    // the recorded witness actually exhibits the violation
    CHECK(coercivity_margin(bad, s, cert.worst_step, cert.worst_vector, 0.05, 1.0) ==
          doctest::Approx(cert.worst_margin));

    // an overly large diffusion operator also breaks it
    OperatorPair big_b = make_heat_pair(s, 0.1);
    big_b.b_steps = {MatrixXd::Identity(4, 4) * 10.0};
    CHECK_FALSE(check_coercivity(big_b, s, 0.05, 1.0, 64, 7).verified);

    // asking for a stronger alpha than the pair provides must fail too
    const OperatorPair heat = make_heat_pair(s, 0.1);
    CHECK_FALSE(check_coercivity(heat, s, 50.0, 1.0, 64, 7).verified);
}

TEST_CASE("coercivity margin matches the closed form per mode") {
    const double nu = 0.1;
    const GalerkinSpace s = make_heat_space(8, nu);
    const OperatorPair pair = make_heat_pair(s, nu);
    for (int k = 0; k < 8; ++k) {
        const VectorXd e = VectorXd::Unit(8, k);
        const double mu = nu * (k + 1.0) * (k + 1.0) * M_PI * M_PI;
        // -<Ax,x> + ||x||_H^2 - alpha ||x||_V^2 with weight 1 + mu
        const double expected = mu + 1.0 - (nu / 2.0) * (1.0 + mu);
        CHECK(coercivity_margin(pair, s, 0, e, nu / 2.0, 1.0) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("time-varying pairs are probed at every step") {
    const GalerkinSpace s = make_heat_space(3, 0.1);
    const OperatorPair heat = make_heat_pair(s, 0.1);
    OperatorPair varying;
    varying.a_steps = {heat.a(0), heat.a(0), MatrixXd::Identity(3, 3) * 5.0};
    varying.b_steps = {MatrixXd::Zero(3, 3)};
    const auto cert = check_coercivity(varying, s, 0.05, 1.0, 64, 7);
    CHECK_FALSE(cert.verified);
    CHECK(cert.worst_step == 2);
}

TEST_CASE("operator adjoints are transposes in coordinates") {
    const GalerkinSpace s = make_heat_space(5, 0.3);
    const OperatorPair pair = make_heat_pair(s, 0.3);
    RngStream rng(5, 1);
    const VectorXd x = rng.normal_vector(5);
    const VectorXd y = rng.normal_vector(5);
    CHECK((pair.a(0) * x).dot(y) == doctest::Approx(x.dot(pair.a_adjoint(0) * y)));
    CHECK((pair.b(0) * x).dot(y) == doctest::Approx(x.dot(pair.b_adjoint(0) * y)));
}
