#include "blockg/gprior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blockg/quadrature.hpp"
#include "blockg/special_fn.hpp"

namespace blockg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_one_minus_r2(double w) {
    if (!(w >= 0) || !(w <= 1)) throw DomainError("R^2 must lie in [0, 1]");
}

// log of int_0^1 v^(c-1) exp(-v y) dv = gamma(c, y) / y^c.
double log_gamma_scaled(double c, double y) {
    if (y == 0) return -std::log(c);
    return log_lower_inc_gamma(c, y) - c * std::log(y);
}

}  // namespace

void HyperGPrior::validate() const {
    if (!(a > 2) || !(a <= 4)) throw DomainError("hyper-g prior needs 2 < a <= 4");
}

void FixedGPrior::validate() const {
    if (!(g > 0) || !std::isfinite(g)) throw DomainError("g prior needs g > 0");
}

double log_bf_fixed_g(const FixedGPrior& prior, int n, int p, double one_minus_r2) {
    check_one_minus_r2(one_minus_r2);
    if (n <= p + 1) throw DomainError("fixed-g Bayes factor needs n > p + 1");
    const double g = prior.g;
    return 0.5 * (n - p - 1) * std::log1p(g) - 0.5 * (n - 1) * std::log1p(g * one_minus_r2);
}

double log_bf_fixed_g(const FixedGPrior& prior, const FitSummary& fit) {
    return log_bf_fixed_g(prior, fit.n, fit.p, fit.one_minus_r2);
}

double bf_fixed_g(const FixedGPrior& prior, const FitSummary& fit) { return std::exp(log_bf_fixed_g(prior, fit)); }

double log_bf_hyper_g(const HyperGPrior& prior, int n, int p, double one_minus_r2) {
    prior.validate();
    check_one_minus_r2(one_minus_r2);
    if (p == 0) return 0;
    const double a = prior.a;
    const double m = 0.5 * (n - 1), c = 0.5 * (a + p);
    return std::log((a - 2) / (p + a - 2)) + log_hyp2f1(m, 1.0, c, 1 - one_minus_r2, one_minus_r2);
}

double log_bf_hyper_g(const HyperGPrior& prior, const FitSummary& fit) {
    return log_bf_hyper_g(prior, fit.n, fit.p, fit.one_minus_r2);
}

double bf_hyper_g(const HyperGPrior& prior, const FitSummary& fit) { return std::exp(log_bf_hyper_g(prior, fit)); }

double log_bf_hyper_g_integral(const HyperGPrior& prior, int n, int p, double one_minus_r2, double rel_tol) {
    prior.validate();
    check_one_minus_r2(one_minus_r2);
    if (one_minus_r2 == 0) return log_bf_hyper_g(prior, n, p, 0.0);
    const double a = prior.a, w = one_minus_r2;
    // g = e^x; the integrand decays like e^x on the left and e^(x (1 - (p+a)/2)) on the right.
    auto phi = [&](double x) {
        const double lg = x > 30 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        const double lgw = std::log(w) + x > 30 ? std::log(w) + x + std::log1p(std::exp(-x) / w)
                                                 : std::log1p(w * std::exp(x));
        return x + 0.5 * (n - p - 1 - a) * lg - 0.5 * (n - 1) * lgw;
    };
    double best = -kInf, xbest = 0;
    for (double x = -60; x <= 200; x += 0.25) {
        const double v = phi(x);
        if (v > best) best = v, xbest = x;
    }
    double lo = xbest, hi = xbest;
    while (phi(lo) > best - 60) lo -= 1;
    while (phi(hi) > best - 60) hi += 1;
    std::vector<double> brk;
    for (double x = lo; x <= hi + 1e-9; x += 0.5) brk.push_back(x);
    const QuadResult q = integrate([&](double x) { return std::exp(phi(x) - best); }, brk, rel_tol, 0.0, 2'000'000);
    if (!q.converged) throw NoConvergence("g-space integral did not converge");
    return std::log((a - 2) / 2) + best + std::log(q.value);
}

bool in_boundary_band(const HyperGPrior& prior, int n, int p) {
    return n >= prior.a + p - 1 && n <= prior.a + p + 1;
}

double shrinkage_hyper_g(const HyperGPrior& prior, int n, int p, double one_minus_r2) {
    prior.validate();
    check_one_minus_r2(one_minus_r2);
    const double a = prior.a;
    if (one_minus_r2 == 0) return n >= a + p - 1 ? 1.0 : 2.0 / (a + p - n + 1);
    const double m = 0.5 * (n - 1), c = 0.5 * (a + p), z = 1 - one_minus_r2;
    const double lr = log_hyp2f1(m, 2.0, c + 1, z, one_minus_r2) - log_hyp2f1(m, 1.0, c, z, one_minus_r2);
    return std::min(1.0, 2.0 / (p + a) * std::exp(lr));
}

double shrinkage_hyper_g(const HyperGPrior& prior, const FitSummary& fit) {
    return shrinkage_hyper_g(prior, fit.n, fit.p, fit.one_minus_r2);
}

Vector posterior_mean_hyper_g(const HyperGPrior& prior, const FitSummary& fit) {
    return shrinkage_hyper_g(prior, fit) * fit.beta_hat_ls;
}

double log_bf_ratio_hyper_g(const HyperGPrior& prior, const FitSummary& fit_big, const FitSummary& fit_small) {
    if (fit_big.n != fit_small.n) throw DimensionMismatch("nested fits must share n");
    const double big = log_bf_hyper_g(prior, fit_big), small = log_bf_hyper_g(prior, fit_small);
    if (fit_big.p == fit_small.p && fit_big.one_minus_r2 == fit_small.one_minus_r2) return 0;
    if (std::isinf(big) && std::isinf(small)) throw DomainError("both Bayes factors are infinite");
    return big - small;
}

double InverseGammaParams::mean() const {
    if (shape <= 1) return kInf;
    if (degenerate()) return 0;
    return 1.0 / (scale * (shape - 1));
}

double InverseGammaParams::log_pdf(double x) const {
    if (!(x > 0)) return -kInf;
    const double theta = rate();
    return shape * std::log(theta) - std::lgamma(shape) - (shape + 1) * std::log(x) - theta / x;
}

InverseGammaParams sigma2_limit_hyper_g(const HyperGPrior& prior, int n, int p, double sigma2_hat) {
    prior.validate();
    if (!(n > prior.a + p - 1)) throw DomainError("sigma^2 limit needs n > a + p - 1");
    if (!(sigma2_hat >= 0)) throw DomainError("sigma2_hat must be non-negative");
    InverseGammaParams ig;
    ig.shape = 0.5 * (n + 1 - prior.a - p);
    ig.scale = sigma2_hat > 0 ? 2.0 / ((n - p - 1) * sigma2_hat) : kInf;
    return ig;
}

Sigma2Density::Sigma2Density(int n, double rss, std::vector<double> c, std::vector<double> ess)
    : n_(n), rss_(rss), c_(std::move(c)), ess_(std::move(ess)) {
    if (c_.size() != ess_.size()) throw DimensionMismatch("one shape per block required");
    if (!(rss_ > 0)) throw DomainError("sigma^2 posterior is improper without residual variation");
    // Only complete-gamma blocks grow with x; the tail decays like x^(-(n+1)/2 + sum c_i).
    double csum = 0;
    for (std::size_t i = 0; i < c_.size(); ++i)
        if (std::isinf(ess_[i])) csum += c_[i];
    const double tail = 0.5 * (n_ + 1) - csum;
    if (!(tail > 1)) throw DomainError("sigma^2 posterior is improper: n <= 2 sum(c_i) + 1");
    auto g = [&](double u) { return log_unnormalized(std::exp(u)) + u; };
    const double u0 = std::log(rss_ / std::max(1, n_ - 1));
    double best = -kInf;
    for (double u = u0 - 60; u <= u0 + 60; u += 0.125) {
        const double v = g(u);
        if (v > best) best = v, center_ = u;
    }
    double lo = center_, hi = center_;
    while (g(lo) > best - 60) lo -= 0.5;
    while (g(hi) + (hi - center_) > best - 60 && hi - center_ < 4000) hi += 0.5;
    halfwidth_ = std::max(center_ - lo, hi - center_);
    std::vector<double> brk;
    for (double u = lo; u < hi; u += 0.25) brk.push_back(u);
    brk.push_back(hi);
    const QuadResult z = integrate([&](double u) { return std::exp(g(u) - best); }, brk, 1e-12);
    const QuadResult m = integrate([&](double u) { return std::exp(g(u) - best + u - center_); }, brk, 1e-12);
    if (!z.converged || !m.converged) throw NoConvergence("sigma^2 normalizer did not converge");
    log_norm_ = best + std::log(z.value);
    mean_ = tail > 2 ? std::exp(center_) * m.value / z.value : kInf;
}

double Sigma2Density::log_unnormalized(double x) const {
    if (!(x > 0)) return -kInf;
    const double lx = std::log(x);
    double v = -0.5 * (n_ + 1) * lx - rss_ / (2 * x);
    for (std::size_t i = 0; i < c_.size(); ++i) {
        if (std::isinf(ess_[i]))
            v += c_[i] * lx + std::lgamma(c_[i]);
        else
            v += log_gamma_scaled(c_[i], ess_[i] / (2 * x));
    }
    return v;
}

double Sigma2Density::pdf(double x) const { return std::exp(log_unnormalized(x) - log_norm_); }

Sigma2Density sigma2_posterior_hyper_g(const HyperGPrior& prior, const FitSummary& fit) {
    prior.validate();
    return Sigma2Density(fit.n, fit.rss, {0.5 * (prior.a + fit.p) - 1}, {fit.tss - fit.rss});
}

double total_variation(const std::function<double(double)>& f, const std::function<double(double)>& g, double lo,
                       double hi) {
    std::vector<double> brk;
    const double step = (hi - lo) / 400;
    for (int i = 0; i <= 400; ++i) brk.push_back(lo + i * step);
    const QuadResult q = integrate(
        [&](double u) {
            const double x = std::exp(u);
            return std::abs(f(x) - g(x)) * x;
        },
        brk, 1e-8, 1e-12);
    return 0.5 * q.value;
}

}  // namespace blockg
