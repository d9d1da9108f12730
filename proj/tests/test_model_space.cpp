#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "blockg/model_space.hpp"

using namespace blockg;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

// Two blocks with orthogonal column spaces, then y from a known truth.
CenteredDesign orthogonal_design(int n, std::uint64_t seed, const Vector& beta, double sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0, 1);
    Matrix Z(n, beta.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < beta.size(); ++j) Z(i, j) = N(rng);
    Z.rowwise() -= Z.colwise().mean();
    Eigen::HouseholderQR<Matrix> qr(Z);
    Matrix Q = qr.householderQ() * Matrix::Identity(n, beta.size());
    Q *= std::sqrt(double(n));
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = 1.5 + Q.row(i).dot(beta) + sigma * N(rng);
    const int p1 = static_cast<int>(beta.size()) / 2;
    return center_design(Q, y, BlockPartition::contiguous({p1, static_cast<int>(beta.size()) - p1}));
}

}  // namespace

TEST_CASE("enumeration counts and order") {
    const auto all = enumerate_models(BlockPartition::single(3), EnumerationMode::all_subsets);
    CHECK(all.size() == 8);
    CHECK(all[0].is_null());
    CHECK(all[5].bits() == "101");
    const BlockPartition two = BlockPartition::contiguous({2, 2});
    const auto blocks = enumerate_models(two, EnumerationMode::block_subsets);
    REQUIRE(blocks.size() == 4);
    CHECK(blocks[0].induced_partition.k() == 0);
    CHECK(blocks[1].induced_partition.sizes() == std::vector<int>{2});
    CHECK(blocks[2].induced_partition.sizes() == std::vector<int>{2});
    CHECK(blocks[3].induced_partition.sizes() == std::vector<int>{2, 2});
    CHECK(blocks[2].columns == std::vector<int>{2, 3});
    CHECK_THROWS_AS(enumerate_models(BlockPartition::single(26), EnumerationMode::all_subsets), BudgetExceeded);
}

TEST_CASE("posterior model probabilities") {
    const auto models = enumerate_models(BlockPartition::single(2), EnumerationMode::all_subsets);
    SUBCASE("equal Bayes factors give the prior") {
        const ModelPosterior post = posterior_model_probs(models, {1.0, 1.0, 1.0, 1.0});
        for (double q : post.post_prob) CHECK(q == doctest::Approx(0.25).epsilon(1e-15));
    }
    SUBCASE("infinite Bayes factor takes all mass") {
        const ModelPosterior post = posterior_model_probs(models, {0.0, 3.0, INFINITY, 2.0});
        CHECK(post.post_prob[2] == 1.0);
        CHECK(post.post_prob[1] == 0.0);
    }
    SUBCASE("two infinite Bayes factors share by prior") {
        const ModelPosterior post = posterior_model_probs(models, {0.0, INFINITY, INFINITY, 2.0}, {1, 1, 3, 1});
        CHECK(post.post_prob[1] == doctest::Approx(0.25));
        CHECK(post.post_prob[2] == doctest::Approx(0.75));
    }
    SUBCASE("shift invariance") {
        const ModelPosterior a = posterior_model_probs(models, {0.0, 3.0, -2.0, 5.0});
        const ModelPosterior b = posterior_model_probs(models, {700.0, 703.0, 698.0, 705.0});
        for (int i = 0; i < 4; ++i) CHECK(std::abs(a.post_prob[i] - b.post_prob[i]) < 1e-14);
    }
    CHECK_THROWS_AS(posterior_model_probs({}, {}), EmptyModelList);
    CHECK_THROWS_AS(posterior_model_probs(models, {0.0, NAN, 0.0, 0.0}), DomainError);
}

TEST_CASE("posterior probabilities match a 50-digit normalization") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(-300, 300);
    const auto models = enumerate_models(BlockPartition::single(5), EnumerationMode::all_subsets);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> lbf(models.size()), prior(models.size());
        for (std::size_t i = 0; i < models.size(); ++i) lbf[i] = U(rng) / (1 + rep % 5), prior[i] = 1 + (i % 3);
        const ModelPosterior post = posterior_model_probs(models, lbf, prior);
        Big total = 0;
        std::vector<Big> w(models.size());
        for (std::size_t i = 0; i < models.size(); ++i) total += (w[i] = exp(Big(lbf[i])) * prior[i]);
        double sum = 0;
        for (std::size_t i = 0; i < models.size(); ++i) {
            CHECK(std::abs(post.post_prob[i] - static_cast<double>(w[i] / total)) < 1e-14);
            sum += post.post_prob[i];
        }
        CHECK(std::abs(sum - 1) < 1e-12);
    }
}

TEST_CASE("block-subset R^2 slices agree with refitting") {
    const Vector beta = (Vector(4) << 0.5, -0.3, 0.2, 0.0).finished();
    const CenteredDesign d = orthogonal_design(120, 2, beta, 1.0);
    const auto models = enumerate_models(d.partition, EnumerationMode::block_subsets);
    const auto evs = evaluate_models(d, models, EnumerationMode::block_subsets, 3.0);
    for (std::size_t i = 1; i < models.size(); ++i) {
        const FitSummary refit = fit_model(d, models[i]);
        CHECK(std::abs(refit.one_minus_r2 - evs[i].fit.one_minus_r2) < 1e-10);
        for (int b = 0; b < refit.k(); ++b) CHECK(std::abs(refit.r2_blocks(b) - evs[i].fit.r2_blocks(b)) < 1e-10);
    }
}

TEST_CASE("threaded evaluation is identical to serial") {
    const Vector beta = (Vector(6) << 0.5, -0.3, 0.2, 0.0, 0.1, 0.0).finished();
    const CenteredDesign d = orthogonal_design(80, 5, beta, 1.0);
    const auto models = enumerate_models(d.partition, EnumerationMode::all_subsets);
    const auto a = evaluate_models(d, models, EnumerationMode::all_subsets, 3.0, {}, 1);
    const auto b = evaluate_models(d, models, EnumerationMode::all_subsets, 3.0, {}, 4);
    for (std::size_t i = 0; i < models.size(); ++i) {
        CHECK(a[i].log_bf_null == b[i].log_bf_null);
        CHECK(a[i].beta_mean == b[i].beta_mean);
    }
}

TEST_CASE("BMA prediction") {
    const Vector beta = (Vector(4) << 0.8, -0.4, 0.3, 0.0).finished();
    const CenteredDesign d = orthogonal_design(100, 7, beta, 1.0);
    const auto models = enumerate_models(d.partition, EnumerationMode::block_subsets);
    const auto evs = evaluate_models(d, models, EnumerationMode::block_subsets, 3.0);
    std::vector<double> lbf;
    std::vector<Vector> means;
    for (const auto& e : evs) lbf.push_back(e.log_bf_null), means.push_back(e.beta_mean);
    const ModelPosterior post = posterior_model_probs(models, lbf);
    // At the column means the centered covariate vanishes.
    CHECK(bma_predict(d.x_mean, post, means, d.y_mean, d.x_mean) == doctest::Approx(d.y_mean).epsilon(1e-15));
    // A point mass on one model reproduces that model's prediction.
    std::vector<double> prior(models.size(), 0.0);
    prior[3] = 1;
    const ModelPosterior one = posterior_model_probs(models, lbf, prior);
    const Vector x = (Vector(4) << 1, 2, -1, 0.5).finished();
    CHECK(bma_predict(x, one, means, d.y_mean, d.x_mean) ==
          doctest::Approx(d.y_mean + (x - d.x_mean).dot(means[3])).epsilon(1e-14));
    CHECK_THROWS_AS(bma_predict(Vector::Zero(3), post, means, 0, d.x_mean), DimensionMismatch);
}

TEST_CASE("BMA prediction approaches the truth as n grows") {
    const Vector beta = (Vector(4) << 0.8, -0.4, 0.3, 0.0).finished();
    const Vector x = (Vector(4) << 1.0, -0.5, 0.7, 1.2).finished();
    double previous = INFINITY;
    for (int n : {125, 500, 2000}) {
        double err = 0;
        for (int rep = 0; rep < 8; ++rep) {
            const CenteredDesign d = orthogonal_design(n, 100 * n + rep, beta, 1.0);
            const auto models = enumerate_models(d.partition, EnumerationMode::block_subsets);
            const auto evs = evaluate_models(d, models, EnumerationMode::block_subsets, 3.0);
            std::vector<double> lbf;
            std::vector<Vector> means;
            for (const auto& e : evs) lbf.push_back(e.log_bf_null), means.push_back(e.beta_mean);
            const ModelPosterior post = posterior_model_probs(models, lbf);
            err += std::abs(bma_predict(x, post, means, d.y_mean, d.x_mean) - (1.5 + x.dot(beta)));
        }
        err /= 8;
        CHECK(err < previous);
        previous = err;
    }
    CHECK(previous < 0.05 * beta.norm());
}

TEST_CASE("split blocks are rejected in block-subsets mode") {
    const CenteredDesign d = orthogonal_design(50, 1, Vector::Constant(4, 0.3), 1.0);
    const auto models = enumerate_models(d.partition, EnumerationMode::all_subsets);
    CHECK_THROWS_AS(evaluate_models(d, models, EnumerationMode::block_subsets, 3.0), ConfigError);
}
