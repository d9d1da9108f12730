#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "blockg/core.hpp"
#include "blockg/design.hpp"
#include "blockg/gprior.hpp"

namespace blockg {

// Independent hyper-g priors on the blocks of a partition, sharing a.
struct BlockHyperGPrior {
    double a{3.0};
    BlockPartition partition;

    BlockHyperGPrior() = default;
    BlockHyperGPrior(double a_, BlockPartition partition_) : a(a_), partition(std::move(partition_)) { validate(); }
    void validate() const;
};

enum class IntegrationMethod { automatic, quadrature, qmc, laplace };
std::string to_string(IntegrationMethod m);
IntegrationMethod integration_method_from_string(const std::string& s);

struct IntegrationOptions {
    IntegrationMethod method{IntegrationMethod::automatic};
    double rel_tol{1e-9};
    long max_evals{1'000'000};
    double max_rel_error{1e-4};  // NoConvergence beyond this after the budget is spent
    std::uint64_t seed{0};
    int qmc_log2_points{14};
    int qmc_randomizations{32};
    int laplace_min_n{200};
};

struct ShrinkagePosterior {
    Vector t_mean;            // E[t_i | y], t_i = g_i / (1 + g_i)
    Vector one_minus_t_mean;  // 1 - t_mean, kept for precision near 1
    double log_bf_null{0};
    IntegrationMethod method{IntegrationMethod::quadrature};
    double error_estimate{0};
    double sigma2_mean{0};
    long evaluations{0};
};

// Sufficient statistics of a block fit: R_i^2 = e_i and 1 - R^2 = rho.
struct BlockStats {
    double a{3};
    int n{0};
    std::vector<int> p_blocks;
    Vector e;
    double rho{1};
    double tss{1};
};

BlockStats block_stats(const BlockHyperGPrior& prior, const FitSummary& fit);

// log BF against the null, per-block shrinkage and E[sigma^2 | y] from one pass.
ShrinkagePosterior block_posterior(const BlockStats& s, const IntegrationOptions& opts = {});

ShrinkagePosterior bf_block_hyper_g(const BlockHyperGPrior& prior, const FitSummary& fit,
                                    const IntegrationOptions& opts = {});
ShrinkagePosterior block_shrinkage(const BlockHyperGPrior& prior, const FitSummary& fit,
                                   const IntegrationOptions& opts = {});
Vector posterior_mean_block(const BlockHyperGPrior& prior, const FitSummary& fit, const IntegrationOptions& opts = {});

// Interior maximizer of h(t) = sum b_i log(1-t_i) - m log(1 - sum t_i r_i).
struct LaplacePoint {
    Vector t_star;
    Matrix hessian;
    double log_height{0};
};
LaplacePoint laplace_t_star(const Vector& b, const Vector& r, double m);

enum class LaplaceForm {
    second_order,  // y = log(1-t) coordinates with the O(1/n) correction
    first_order,   // y coordinates, Gaussian term only
    t_space,       // t coordinates at t*, with p_i + 1 for blocks where a + p_i < 4
};

// log of the block integral (without the ((a-2)/2)^k factor) by Laplace's method.
// Throws OutOfInterior when the maximizer is on or near the boundary.
double laplace_log_integral(const BlockStats& s, LaplaceForm form, double* correction = nullptr);

// log BF(gamma : T) from Laplace approximations of both integrals.
double log_bf_laplace(const BlockHyperGPrior& prior, const FitSummary& fit_gamma, const FitSummary& fit_T,
                      LaplaceForm form = LaplaceForm::second_order);
double bf_laplace(const BlockHyperGPrior& prior, const FitSummary& fit_gamma, const FitSummary& fit_T,
                  LaplaceForm form = LaplaceForm::second_order);

// Per-block bracket 2/(a+p_i) <= hyper-g shrinkage at R_i^2 <= E[t_i|y] <= hyper-g shrinkage at kappa_i.
struct ShrinkageBracket {
    Vector floor;
    Vector lower;
    Vector upper;
};
ShrinkageBracket shrinkage_bracket(const BlockHyperGPrior& prior, const FitSummary& fit);

// E[t_m] under the density with only block j's term kept in the likelihood factor.
double lemma_f2_mean(const BlockStats& s, int m_block, int j_block, const IntegrationOptions& opts = {});

// sigma^2 posterior with the shrinkage factors integrated out; the limit form replaces
// block 1's incomplete gamma by the complete one.
Sigma2Density sigma2_density_block(const BlockHyperGPrior& prior, const FitSummary& fit);
Sigma2Density sigma2_density_limit_block(const BlockHyperGPrior& prior, const FitSummary& fit);

// [rss + sum_{i>=2} ess_i] / (n - 1 - a - p_1); requires n > a + p_1 + 1.
double sigma2_mean_bound_block(const BlockHyperGPrior& prior, const FitSummary& fit);

// (a-2)/(a+p2-2).
double clp_lower_bound(double a, int p2);

}  // namespace blockg
