#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "seeopt/verify.hpp"

#include "support/oracles.hpp"

using namespace seeopt;

namespace {

const std::string kFixtureDir = std::string(SEEOPT_TEST_DIR) + "/fixtures/";

VerifySetup small_setup() {
    VerifySetup s = default_verify_setup();
    s.n_paths = 2000;
    return s;
}

ControlProcess read_control_csv(const std::string& path, int controls) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "cannot open " << path);
    std::string line;
    std::getline(in, line);
    std::vector<VectorXd> cols;
    while (std::getline(in, line)) {
        std::stringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        VectorXd u(controls);
        for (int j = 0; j < controls; ++j) {
            std::getline(row, cell, ',');
            u[j] = std::stod(cell);
        }
        cols.push_back(u);
    }
    ControlProcess out = ControlProcess::zero(controls, static_cast<int>(cols.size()));
    for (size_t k = 0; k < cols.size(); ++k) out.values.col(k) = cols[k];
    return out;
}

const std::vector<std::string> kCheapChecks = {
    "coercivity",       "noise_brownian_mean",       "noise_brownian_variance",
    "noise_jump_compensated", "forward_conservation", "forward_heat_decay",
    "forward_heat_bias", "forward_jump_mean",         "adjoint_terminal",
    "adjoint_zero",     "multiplier_normalization",  "penalty_identity",
};

}  // namespace

TEST_CASE("exact and statistical checks pass on the reduced fixture") {
    const auto setup = small_setup();
    const auto results = run_all(setup, kCheapChecks);
    REQUIRE(results.size() == kCheapChecks.size());
    for (const auto& r : results) {
        INFO(r.name << ": " << r.details);
        CHECK(r.passed);
        CHECK(std::isfinite(r.measured));
        // conservation and the zero-data adjoint are exact: tolerance 0.
        CHECK(r.tolerance >= 0.0);
    }
}

TEST_CASE("battery results are byte-identical across repeated runs") {
    const auto setup = small_setup();
    const auto first = run_all(setup, kCheapChecks);
    const auto second = run_all(setup, kCheapChecks);
    REQUIRE(first.size() == second.size());
    for (size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].name == second[i].name);
        CHECK(first[i].passed == second[i].passed);
        CHECK(first[i].measured == second[i].measured);  // bitwise, not approx
        CHECK(first[i].tolerance == second[i].tolerance);
        CHECK(first[i].details == second[i].details);
    }
}

TEST_CASE("a singleton run reproduces the same row as a wider run") {
    const auto setup = small_setup();
    const std::vector<std::string> one = {"duality"};
    const std::vector<std::string> several = {"forward_conservation", "duality",
                                              "penalty_identity"};
    const auto solo = run_all(setup, one);
    const auto wide = run_all(setup, several);
    REQUIRE(solo.size() == 1);
    const auto it = std::find_if(wide.begin(), wide.end(),
                                 [](const CheckResult& r) { return r.name == "duality"; });
    REQUIRE(it != wide.end());
    CHECK(solo[0].measured == it->measured);
    CHECK(solo[0].details == it->details);
}

TEST_CASE("unknown check names are rejected") {
    const auto setup = small_setup();
    const std::vector<std::string> bogus = {"duality", "no_such_check"};
    CHECK_THROWS_AS(run_all(setup, bogus), ConfigError);
}

TEST_CASE("each partial mutation is caught by the duality or gateaux checks") {
    const std::vector<std::string> sensitive = {"duality", "gateaux_fd", "gateaux_remainder"};
    auto setup = small_setup();

    // healthy baseline first: the sensitive checks pass unmutated
    for (const auto& r : run_all(setup, sensitive)) {
        INFO("baseline " << r.name << ": " << r.details);
        CHECK(r.passed);
    }

    const Mutation partials[] = {
        Mutation::drift_state_partial,
        Mutation::running_cost_state_partial,
        Mutation::running_cost_control_partial,
        Mutation::terminal_cost_partial,
    };
    for (const Mutation m : partials) {
        setup.mutation = m;
        const auto results = run_all(setup, sensitive);
        int failed = 0;
        for (const auto& r : results)
            if (!r.passed) ++failed;
        INFO("mutation " << mutation_name(m));
        CHECK(failed >= 1);
    }

    // the drift partial corrupts both sides the criterion names explicitly
    setup.mutation = Mutation::drift_state_partial;
    const auto results = run_all(setup, sensitive);
    for (const auto& r : results) {
        if (r.name == "duality" || r.name == "gateaux_fd") {
            INFO(r.name << ": " << r.details);
            CHECK_FALSE(r.passed);
        }
    }
}

TEST_CASE("dropping the penalty constraint term breaks end-to-end feasibility") {
    auto setup = small_setup();
    setup.mutation = Mutation::constraint_penalty_drop;
    const std::vector<std::string> only = {"end_to_end"};
    const auto results = run_all(setup, only);
    REQUIRE(results.size() == 1);
    CHECK_FALSE(results[0].passed);
}

TEST_CASE("convergence study recovers the scheme orders") {
    const auto setup = small_setup();
    const int steps[] = {25, 50, 100};
    const int paths[] = {500};
    const auto study = convergence_study(setup, steps, paths);
    CHECK(study.deterministic_order >= 0.9);
    CHECK(study.strong_order >= 0.4);
    CHECK(study.duality_dt_coeff > 0.0);
    CHECK(study.duality_dt_coeff <= setup.tol.duality_dt_coeff);
    REQUIRE(study.deterministic.size() == 3);
    // errors must actually decrease along the dt refinement
    CHECK(study.deterministic[0].error > study.deterministic[2].error);
    CHECK(study.strong[0].error > study.strong[1].error);
    REQUIRE(!study.duality_variance.empty());
}

TEST_CASE("deterministic optimum agrees with the frozen external solution") {
    const auto setup = default_verify_setup();

    const auto constrained = lq_deterministic_optimum(setup.lq, setup.pair, setup.space,
                                                      setup.grid, setup.box);
    const auto frozen_c = read_control_csv(kFixtureDir + "lq_oracle_constrained.csv", 2);
    CHECK(control_distance(constrained, frozen_c, setup.grid) <= 1e-7);

    LqData un = setup.lq;
    un.constrained = false;
    const auto unconstrained =
        lq_deterministic_optimum(un, setup.pair, setup.space, setup.grid, setup.box);
    const auto frozen_u = read_control_csv(kFixtureDir + "lq_oracle_unconstrained.csv", 2);
    CHECK(control_distance(unconstrained, frozen_u, setup.grid) <= 1e-7);

    // the constrained optimum satisfies the constraint on the mean recursion
    const auto mean = lq_mean_path(setup.lq, setup.pair, setup.space, setup.grid, constrained);
    CHECK(std::abs(setup.lq.c.dot(mean.back()) - setup.lq.target) <= 1e-9);
}

TEST_CASE("oracle refuses an optimum outside the control box") {
    const auto setup = default_verify_setup();
    ControlSet tight;
    tight.lower = VectorXd::Constant(2, -1e-3);
    tight.upper = VectorXd::Constant(2, 1e-3);
    tight.radius = setup.box.radius;
    CHECK_THROWS_AS(lq_deterministic_optimum(setup.lq, setup.pair, setup.space, setup.grid,
                                             tight),
                    NumericalError);
}

TEST_CASE("randomized instances stay inside the documented band") {
    const auto setup = default_verify_setup();
    const LqData a = randomized_lq(setup.lq, 7);
    const LqData b = randomized_lq(setup.lq, 7);
    const LqData c = randomized_lq(setup.lq, 8);
    CHECK(a.b0 == b.b0);           // same seed, same instance
    CHECK((a.b0 - c.b0).cwiseAbs().maxCoeff() > 0.0);
    CHECK(a.g == setup.lq.g);      // coupling kept so the certificate holds
    REQUIRE(a.sigma.size() == setup.lq.sigma.size());
    for (int k = 0; k < a.b0.size(); ++k) {
        if (setup.lq.b0[k] == 0.0) continue;
        const double ratio = a.b0[k] / setup.lq.b0[k];
        CHECK(ratio >= 0.5);
        CHECK(ratio <= 2.0);
    }
    CHECK(a.constrained == setup.lq.constrained);
}
