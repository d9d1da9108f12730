#include <doctest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <random>

#include "blockg/gprior.hpp"

using namespace blockg;

namespace {

// Direct g-space integral with Boost's exp-sinh rule, scaled at the integrand's peak.
double oracle_log_bf(double a, int n, int p, double w) {
    auto lf = [&](double g) {
        return std::log((a - 2) / 2) + 0.5 * (n - p - 1 - a) * std::log1p(g) - 0.5 * (n - 1) * std::log1p(g * w);
    };
    double peak = -INFINITY;
    for (double x = -20; x < 60; x += 0.05) peak = std::max(peak, lf(std::exp(x)));
    boost::math::quadrature::exp_sinh<double> es;
    const double v = es.integrate([&](double g) { return std::exp(lf(g) - peak); }, 1e-13);
    return peak + std::log(v);
}

}  // namespace

TEST_CASE("prior validation") {
    CHECK_THROWS_AS(HyperGPrior(2.0), DomainError);
    CHECK_THROWS_AS(HyperGPrior(4.5), DomainError);
    CHECK_NOTHROW(HyperGPrior(4.0));
    CHECK_THROWS_AS(FixedGPrior(0.0), DomainError);
}

TEST_CASE("fixed-g Bayes factor closed form") {
    const FixedGPrior pr(50.0);
    const double w = 0.3;
    const int n = 40, p = 3;
    const double want = std::pow(1 + 50.0, 0.5 * (n - p - 1)) * std::pow(1 + 50.0 * w, -0.5 * (n - 1));
    CHECK(std::exp(log_bf_fixed_g(pr, n, p, w)) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("hyper-g Bayes factor at R^2 = 0") {
    for (int p : {1, 3, 7}) {
        const HyperGPrior pr(3.0);
        CHECK(log_bf_hyper_g(pr, 50, p, 1.0) == doctest::Approx(std::log(1.0 / (p + 1.0))).epsilon(1e-14));
    }
}

TEST_CASE("hyper-g Bayes factor matches the exp-sinh g integral") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0, 1);
    for (int i = 0; i < 40; ++i) {
        const double a = 2.05 + 1.95 * U(rng);
        const int p = 1 + static_cast<int>(8 * U(rng));
        const int n = p + 5 + static_cast<int>(200 * U(rng));
        const double w = 0.02 + 0.98 * U(rng);
        CAPTURE(a);
        CAPTURE(n);
        CAPTURE(p);
        CAPTURE(w);
        const double got = log_bf_hyper_g(HyperGPrior(a), n, p, w);
        CHECK(std::abs(got - oracle_log_bf(a, n, p, w)) < 1e-9 * std::max(1.0, std::abs(got)));
    }
}

TEST_CASE("closed form and g-space quadrature agree at large n") {
    for (double w : {1e-3, 0.2, 0.9})
        for (int n : {1000, 20000}) {
            const HyperGPrior pr(3.5);
            const double a = log_bf_hyper_g(pr, n, 4, w), b = log_bf_hyper_g_integral(pr, n, 4, w);
            CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)));
        }
}

TEST_CASE("Bayes factor at R^2 = 1") {
    const HyperGPrior pr(3.0);
    CHECK(std::isinf(log_bf_hyper_g(pr, 30, 4, 0.0)));
    // n < a + p - 1: finite limit (a-2)/(a+p-n-1).
    CHECK(std::exp(log_bf_hyper_g(pr, 8, 10, 0.0)) == doctest::Approx(1.0 / 4.0).epsilon(1e-12));
    CHECK(in_boundary_band(pr, 13, 10));
    CHECK_FALSE(in_boundary_band(pr, 20, 10));
}

TEST_CASE("shrinkage limits as R^2 -> 1") {
    const HyperGPrior pr(3.0);
    const double w = 1e-10;
    CHECK(shrinkage_hyper_g(pr, 40, 3, w) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(shrinkage_hyper_g(pr, 8, 10, w) == doctest::Approx(2.0 / (3 + 10 - 8 + 1)).epsilon(1e-4));
    CHECK(shrinkage_hyper_g(pr, 8, 10, 0.0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("shrinkage at R^2 = 0 equals the ratio of parameters") {
    // E[t] with R^2 = 0 is 2/(a+p).
    CHECK(shrinkage_hyper_g(HyperGPrior(3.0), 25, 4, 1.0) == doctest::Approx(2.0 / 7.0).epsilon(1e-13));
}

TEST_CASE("shrinkage matches g-space quadrature") {
    const double a = 3.0, w = 0.35;
    const int n = 30, p = 3;
    auto lf = [&](double g) { return 0.5 * (n - p - 1 - a) * std::log1p(g) - 0.5 * (n - 1) * std::log1p(g * w); };
    boost::math::quadrature::exp_sinh<double> es;
    const double z = es.integrate([&](double g) { return std::exp(lf(g)); });
    const double t = es.integrate([&](double g) { return g / (1 + g) * std::exp(lf(g)); });
    CHECK(shrinkage_hyper_g(HyperGPrior(a), n, p, w) == doctest::Approx(t / z).epsilon(1e-10));
}

TEST_CASE("inverse gamma limit of the sigma^2 posterior") {
    const InverseGammaParams ig = sigma2_limit_hyper_g(HyperGPrior(3.0), 30, 2, 1.0);
    CHECK(ig.shape == doctest::Approx(13.0));
    CHECK(ig.mean() == doctest::Approx(1.125).epsilon(1e-14));
    CHECK(sigma2_limit_hyper_g(HyperGPrior(3.0), 30, 2, 0.0).degenerate());
}

TEST_CASE("sigma^2 density is normalized and consistent with the closed-form mean") {
    const double a = 3.0, tss = 10.0, w = 0.4;
    const int n = 25, p = 3;
    const FitSummary fit = summary_from_r2(n, {p}, Vector::Constant(1, 1 - w), w, tss);
    const Sigma2Density d = sigma2_posterior_hyper_g(HyperGPrior(a), fit);
    auto pdf_u = [&](double u) { return d.pdf(std::exp(u)) * std::exp(u); };
    const double lo = d.log_center() - d.log_halfwidth(), hi = d.log_center() + d.log_halfwidth();
    const double mass = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(pdf_u, lo, hi, 15, 1e-12);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    // E[sigma^2 | y] = tss (1 - E[t] R^2) / (n - 3).
    const double t = shrinkage_hyper_g(HyperGPrior(a), n, p, w);
    CHECK(d.mean() == doctest::Approx(tss * (1 - t * (1 - w)) / (n - 3)).epsilon(1e-8));
}

TEST_CASE("complete-gamma sigma^2 density equals the inverse gamma limit") {
    const int n = 30, p = 2;
    const double a = 3.0, rss = 27.0;
    const Sigma2Density d(n, rss, {0.5 * (a + p) - 1}, {INFINITY});
    const InverseGammaParams ig = sigma2_limit_hyper_g(HyperGPrior(a), n, p, rss / (n - p - 1));
    CHECK(d.mean() == doctest::Approx(ig.mean()).epsilon(1e-10));
    const double tv = total_variation([&](double x) { return d.pdf(x); },
                                      [&](double x) { return std::exp(ig.log_pdf(x)); }, -6, 6);
    CHECK(tv < 1e-8);
}

TEST_CASE("sigma^2 density rejects improper configurations") {
    CHECK_THROWS_AS(Sigma2Density(5, 1.0, {3.0}, {INFINITY}), DomainError);
    CHECK_THROWS_AS(Sigma2Density(20, 0.0, {1.0}, {1.0}), DomainError);
    CHECK_NOTHROW(Sigma2Density(5, 1.0, {3.0}, {2.0}));
}
