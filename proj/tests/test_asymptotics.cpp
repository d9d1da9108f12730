#include <doctest.h>

#include <cmath>

#include "blockg/asymptotics.hpp"
#include "blockg/gprior.hpp"

using namespace blockg;

namespace {

std::string failures(const ExperimentResult& r) {
    std::string s;
    for (const auto& v : r.verdicts)
        if (!v.pass) s += v.claim + " (" + v.detail + "); ";
    return s;
}

SequenceSpec small_spec(std::vector<double> scales) {
    SequenceSpec s = default_sequence(30, {2, 2}, 3, 42, 0.5);
    s.scales = std::move(scales);
    return s;
}

}  // namespace

TEST_CASE("random block design is centered, orthogonal across blocks, columns of norm sqrt(n)") {
    const CenteredDesign d = random_block_design(40, {2, 3, 1}, 9);
    CHECK(check_block_orthogonality(d, 1e-12));
    for (int j = 0; j < d.p(); ++j) {
        CHECK(std::abs(d.X.col(j).mean()) < 1e-12);
        CHECK(d.X.col(j).norm() == doctest::Approx(std::sqrt(40.0)).epsilon(1e-12));
    }
}

TEST_CASE("sequence fits agree with refitting each response from scratch") {
    const SequenceSpec spec = small_spec({1, 10, 1e3, 1e4});
    const auto seq = make_sequence(spec);
    for (const auto& el : seq) {
        const FitSummary direct = fit_least_squares(center_design<double>(spec.base.X, el.y, spec.base.partition));
        CHECK((el.fit.beta_hat_ls - direct.beta_hat_ls).norm() <= 1e-9 * direct.beta_hat_ls.norm());
        CHECK(el.fit.rss == doctest::Approx(direct.rss).epsilon(1e-8));
        CHECK(el.fit.alpha_hat == doctest::Approx(direct.alpha_hat).epsilon(1e-12));
        for (int i = 0; i < 2; ++i) CHECK(el.fit.r2_blocks(i) == doctest::Approx(direct.r2_blocks(i)).epsilon(1e-9));
    }
}

TEST_CASE("unit scales give identical fits; growing scales drive R_1^2 to 1 and R_2^2 to 0") {
    SequenceSpec still = small_spec({1, 10, 100});
    still.beta[0].setZero();
    const auto flat = make_sequence(still);
    CHECK(flat[0].fit.one_minus_r2 == flat[2].fit.one_minus_r2);
    CHECK(flat[0].y == flat[2].y);

    const auto seq = make_sequence(small_spec(log_schedule(0, 8, 1)));
    for (std::size_t i = 1; i < seq.size(); ++i) {
        CHECK(seq[i].fit.one_minus_r2 < seq[i - 1].fit.one_minus_r2);
        if (seq[i].scale >= 100) {
            CHECK(seq[i].fit.r2_blocks(0) > seq[i - 1].fit.r2_blocks(0));
            CHECK(seq[i].fit.r2_blocks(1) < seq[i - 1].fit.r2_blocks(1));
        }
    }
    CHECK(seq.back().fit.r2_blocks(1) < 1e-14);
    // Residuals do not move, so 1 - R^2 falls like scale^-2 with full precision.
    CHECK(seq.back().fit.one_minus_r2 > 0);
}

TEST_CASE("sequence inputs are validated") {
    SequenceSpec s = small_spec({1, 10, 10});
    CHECK_THROWS_AS(make_sequence(s), ConfigError);
    s.scales = {1, 10};
    s.beta.pop_back();
    CHECK_THROWS_AS(make_sequence(s), DimensionMismatch);
    CHECK_THROWS_AS(log_schedule(2, 1, 1), ConfigError);
    CHECK(log_schedule(0, 2, 1) == std::vector<double>{1, 10, 100});
}

TEST_CASE("experiments are reproducible bit for bit") {
    const SequenceSpec spec = small_spec(log_schedule(0, 8, 2));
    const auto a = run_els_experiment(spec), b = run_els_experiment(spec);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].statistic == b.rows[i].statistic);
        CHECK(a.rows[i].value == b.rows[i].value);
    }
}

TEST_CASE("ELS experiment") {
    const SequenceSpec spec = default_sequence(50, {2, 2}, 3, 5);
    const ExperimentResult r = run_els_experiment(spec);
    INFO(failures(r));
    CHECK(r.pass());
    // At scale 1 the distance is exactly one minus the hyper-g shrinkage at the base fit.
    const auto base = make_sequence(spec).front().fit;
    CHECK(r.value("hyperg_distance", 1) == 1 - shrinkage_hyper_g(HyperGPrior(3), base));

    SequenceSpec tight = default_sequence(5, {1, 2}, 4, 1);  // n = p + 2 < a + p - 1
    CHECK_THROWS_AS(run_els_experiment(tight), PreconditionViolated);
}

TEST_CASE("CLP experiment: hyper-g BF vanishes, block BF stays above its floor") {
    const ExperimentResult r = run_clp_experiment(default_sequence(50, {2, 1}, 3, 7));
    INFO(failures(r));
    CHECK(r.pass());
    CHECK(r.value("block_bf_bound", 0) == 0.5);
    CHECK_THROWS_AS(run_clp_experiment(default_sequence(50, {2, 1, 1}, 3, 7)), PreconditionViolated);
}

TEST_CASE("small-n plateau of the hyper-g BF") {
    const ExperimentResult r = run_clp_plateau(3, 5, 4, 1, log_schedule(0, 8, 1));
    INFO(failures(r));
    CHECK(r.pass());
    const ExperimentResult r2 = run_clp_plateau(3.5, 4, 3, 2, log_schedule(0, 8, 1));
    CHECK(r2.pass());
    CHECK(r2.value("plateau", 0) == doctest::Approx((3.5 + 3 - 5) / (3.5 + 5 - 5)));
    CHECK_THROWS_AS(run_clp_plateau(3, 10, 4, 1, {1, 10}), PreconditionViolated);
}

TEST_CASE("information consistency") {
    SUBCASE("block 1 scaled, enough data: divergent") {
        const ExperimentResult r = run_info_consistency(default_sequence(50, {2, 1}, 3, 7), InfoRegime::block_scaled, 10);
        INFO(failures(r));
        CHECK(r.pass());
    }
    SUBCASE("all blocks scaled, n > k(a-2) + p + 1: divergent") {
        const ExperimentResult r =
            run_info_consistency(default_sequence(50, {2, 1}, 3, 7, 1.0), InfoRegime::r2_to_one, 10);
        INFO(failures(r));
        CHECK(r.pass());
    }
    SUBCASE("all blocks scaled, n < k(a-2) + p + 1: bounded") {
        const ExperimentResult r =
            run_info_consistency(default_sequence(5, {1, 1}, 4, 3, 1.0), InfoRegime::r2_to_one, 10);
        INFO(failures(r));
        CHECK(r.pass());
        const double top = r.value("block_log_bf", 1e8), limit = r.value("block_log_bf_limit", INFINITY);
        CHECK(top == doctest::Approx(limit).epsilon(1e-6));
    }
    SUBCASE("block 1 scaled below a + p_1 - 1: closed-form limit") {
        const ExperimentResult r = run_info_small_n(3, 5, {4, 2}, log_schedule(0, 8, 1));
        INFO(failures(r));
        CHECK(r.pass());
        // k = 1 is the hyper-g plateau (a-2)/(a+p-n-1).
        const ExperimentResult one = run_info_small_n(3.5, 4, {3}, log_schedule(0, 8, 1));
        CHECK(std::exp(one.value("block_log_bf_limit", INFINITY)) == doctest::Approx(1.5 / 1.5));
        CHECK(one.pass());
    }
}

TEST_CASE("sigma^2 posteriors approach their limits; the mean bound holds") {
    SequenceSpec spec = default_sequence(40, {2, 1}, 3, 2, 0.7);
    spec.scales = log_schedule(0, 8, 2);
    const ExperimentResult r = run_sigma2_limit_check(spec);
    INFO(failures(r));
    CHECK(r.pass());
    CHECK(r.value("hyperg_tv", 1) > r.value("hyperg_tv", 1e8));
}

TEST_CASE("selection simulation: structure and thread independence") {
    SimulationSpec sim;
    sim.replicates = 6;
    sim.n_schedule = {100, 400};
    sim.seed = 3;
    const ExperimentResult serial = run_selection_consistency(sim);
    sim.threads = 3;
    const ExperimentResult threaded = run_selection_consistency(sim);
    REQUIRE(serial.rows.size() == threaded.rows.size());
    for (std::size_t i = 0; i < serial.rows.size(); ++i) CHECK(serial.rows[i].value == threaded.rows[i].value);
    CHECK(serial.value("case1_median", 400) < serial.value("case1_median", 100));
    CHECK(serial.value("case1_median", 400) < -50);
    CHECK(serial.verdicts.size() == 5);

    sim.replicates = 0;
    CHECK_THROWS_AS(run_selection_consistency(sim), ConfigError);
}

TEST_CASE("noise-free prediction is exact") {
    SimulationSpec sim;
    sim.replicates = 3;
    sim.n_schedule = {20, 80};
    sim.sigma = 0;
    const ExperimentResult r = run_prediction_consistency(sim);
    CHECK(r.value("bma_error_median", 20) < 1e-8);
    CHECK(r.value("bma_error_median", 80) < 1e-8);
}

TEST_CASE("case 2A Laplace decay slope") {
    SimulationSpec sim;
    sim.replicates = 60;
    sim.n_schedule = {250, 1000, 4000};
    sim.seed = 5;
    const ExperimentResult r = run_case2a_laplace_slope(sim);
    INFO(failures(r));
    CHECK(r.value("expected_slope", 0) == -1);
    CHECK(r.pass());
}
