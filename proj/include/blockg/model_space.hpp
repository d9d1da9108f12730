#pragma once
#include <string>
#include <vector>

#include "blockg/block_hyper_g.hpp"
#include "blockg/core.hpp"
#include "blockg/design.hpp"

namespace blockg {

struct ModelSpec {
    std::vector<bool> gamma;           // inclusion indicator per column
    std::vector<int> columns;          // included columns, in partition order
    BlockPartition induced_partition;  // indices into `columns`; empty for the null model

    bool is_null() const { return columns.empty(); }
    std::string bits() const;  // "0110..." in column order
};

enum class EnumerationMode { all_subsets, block_subsets };
std::string to_string(EnumerationMode m);
EnumerationMode enumeration_mode_from_string(const std::string& s);

inline constexpr int kMaxAllSubsetsP = 25;

// Models are ordered by the integer value of gamma (column 0 is the lowest bit), so the
// null model comes first.
std::vector<ModelSpec> enumerate_models(const BlockPartition& partition, EnumerationMode mode);

struct ModelPosterior {
    std::vector<ModelSpec> models;
    std::vector<double> log_bf_null;
    std::vector<double> prior_prob;
    std::vector<double> post_prob;
};

// prior empty means uniform. +inf log BFs take all the mass, shared by prior weight.
ModelPosterior posterior_model_probs(const std::vector<ModelSpec>& models, const std::vector<double>& log_bf_null,
                                     const std::vector<double>& prior = {});

// Least-squares summary of one model, refitted on its columns with the induced partition.
FitSummary fit_model(const CenteredDesign& d, const ModelSpec& m);

struct ModelEvaluation {
    FitSummary fit;
    double log_bf_null{0};
    Vector beta_mean;  // length p of the full design; excluded columns are exactly 0
    IntegrationMethod method{IntegrationMethod::quadrature};
    double error_estimate{0};
};

// all_subsets uses the hyper-g prior on each model; block_subsets uses the block hyper-g prior
// with the induced partition and takes every block R^2 from the full fit.
std::vector<ModelEvaluation> evaluate_models(const CenteredDesign& d, const std::vector<ModelSpec>& models,
                                             EnumerationMode mode, double a, const IntegrationOptions& opts = {},
                                             int threads = 1);

// alpha_hat + sum_gamma pi(gamma|y) (x* - xbar)' E(beta | y, gamma), with x* on the raw scale.
double bma_predict(const Vector& x_star, const ModelPosterior& posterior, const std::vector<Vector>& beta_means,
                   double alpha_hat, const Vector& x_mean);

}  // namespace blockg
