#pragma once
#include <functional>
#include <limits>
#include <vector>

#include "blockg/core.hpp"
#include "blockg/design.hpp"

namespace blockg {

// Hyper-g prior pi(g) = ((a-2)/2) (1+g)^(-a/2), 2 < a <= 4.
struct HyperGPrior {
    double a{3.0};
    HyperGPrior() = default;
    explicit HyperGPrior(double a_) : a(a_) { validate(); }
    void validate() const;
};

struct FixedGPrior {
    double g{1.0};
    FixedGPrior() = default;
    explicit FixedGPrior(double g_) : g(g_) { validate(); }
    void validate() const;
};

// Zellner g prior, computed in log space.
double log_bf_fixed_g(const FixedGPrior& prior, int n, int p, double one_minus_r2);
double log_bf_fixed_g(const FixedGPrior& prior, const FitSummary& fit);
double bf_fixed_g(const FixedGPrior& prior, const FitSummary& fit);

// Hyper-g Bayes factor against the null model via 2F1((n-1)/2, 1; (a+p)/2; R^2).
// At R^2 = 1 the value is +inf for n >= a + p - 1 and (a-2)/(a+p-n-1) otherwise.
double log_bf_hyper_g(const HyperGPrior& prior, int n, int p, double one_minus_r2);
double log_bf_hyper_g(const HyperGPrior& prior, const FitSummary& fit);
double bf_hyper_g(const HyperGPrior& prior, const FitSummary& fit);

// Same quantity from adaptive quadrature of the g-space integral (log g substitution).
double log_bf_hyper_g_integral(const HyperGPrior& prior, int n, int p, double one_minus_r2,
                               double rel_tol = 1e-12);

// R^2 = 1 with a + p - 1 <= n <= a + p + 1: the limit is treated as divergent, flagged here.
bool in_boundary_band(const HyperGPrior& prior, int n, int p);

// E[g/(1+g) | y].
double shrinkage_hyper_g(const HyperGPrior& prior, int n, int p, double one_minus_r2);
double shrinkage_hyper_g(const HyperGPrior& prior, const FitSummary& fit);

Vector posterior_mean_hyper_g(const HyperGPrior& prior, const FitSummary& fit);

// log BF(big : small) for nested fits on the same response.
double log_bf_ratio_hyper_g(const HyperGPrior& prior, const FitSummary& fit_big, const FitSummary& fit_small);

// Inverse gamma with density x^(-shape-1) exp(-1/(scale x)) / (Gamma(shape) scale^shape).
struct InverseGammaParams {
    double shape{1};
    double scale{1};

    bool degenerate() const { return !(scale < std::numeric_limits<double>::infinity()); }
    double rate() const { return 1.0 / scale; }
    double mean() const;
    double log_pdf(double x) const;
};

// Limit of the sigma^2 posterior along a sequence with R^2 -> 1 at fixed n.
InverseGammaParams sigma2_limit_hyper_g(const HyperGPrior& prior, int n, int p, double sigma2_hat);

// Posterior density of sigma^2 after integrating the shrinkage factors analytically:
//   x^(-(n+1)/2) exp(-rss/(2x)) prod_i x^(c_i) lower_gamma(c_i, ess_i/(2x)),
// with ess_i = +inf giving the complete gamma function.
class Sigma2Density {
public:
    Sigma2Density(int n, double rss, std::vector<double> c, std::vector<double> ess);

    double log_unnormalized(double x) const;
    double log_normalizer() const { return log_norm_; }
    double pdf(double x) const;
    double mean() const { return mean_; }
    // Mode of the density in u = log x and a width covering its mass.
    double log_center() const { return center_; }
    double log_halfwidth() const { return halfwidth_; }

private:
    int n_;
    double rss_;
    std::vector<double> c_, ess_;
    double log_norm_{0}, mean_{0}, center_{0}, halfwidth_{0};
};

Sigma2Density sigma2_posterior_hyper_g(const HyperGPrior& prior, const FitSummary& fit);

// Total variation distance between two densities on (0, inf), integrated in log x over
// [lo, hi] (given in log x).
double total_variation(const std::function<double(double)>& f, const std::function<double(double)>& g, double lo,
                       double hi);

}  // namespace blockg
