#include "blockg/model_space.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "blockg/gprior.hpp"

namespace blockg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ModelSpec make_spec(const BlockPartition& partition, const std::vector<bool>& gamma) {
    ModelSpec m;
    m.gamma = gamma;
    for (const auto& block : partition.blocks) {
        std::vector<int> local;
        for (int j : block)
            if (gamma[j]) {
                local.push_back(static_cast<int>(m.columns.size()));
                m.columns.push_back(j);
            }
        if (!local.empty()) m.induced_partition.blocks.push_back(std::move(local));
    }
    return m;
}

}  // namespace

std::string ModelSpec::bits() const {
    std::string s;
    for (bool b : gamma) s.push_back(b ? '1' : '0');
    return s;
}

std::string to_string(EnumerationMode m) { return m == EnumerationMode::all_subsets ? "all-subsets" : "block-subsets"; }

EnumerationMode enumeration_mode_from_string(const std::string& s) {
    if (s == "all-subsets") return EnumerationMode::all_subsets;
    if (s == "block-subsets") return EnumerationMode::block_subsets;
    throw ConfigError("unknown enumeration mode: " + s);
}

std::vector<ModelSpec> enumerate_models(const BlockPartition& partition, EnumerationMode mode) {
    const int p = partition.p();
    partition.validate(p);
    std::vector<ModelSpec> out;
    if (mode == EnumerationMode::all_subsets) {
        if (p > kMaxAllSubsetsP) throw BudgetExceeded("all-subsets enumeration limited to p <= 25");
        for (std::uint64_t code = 0; code < (std::uint64_t{1} << p); ++code) {
            std::vector<bool> gamma(p);
            for (int j = 0; j < p; ++j) gamma[j] = (code >> j) & 1;
            out.push_back(make_spec(partition, gamma));
        }
        return out;
    }
    const int k = partition.k();
    if (k > kMaxAllSubsetsP) throw BudgetExceeded("block-subsets enumeration limited to k <= 25");
    // Block masks do not follow gamma order when blocks interleave columns; sort them.
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << k); ++code) {
        std::vector<bool> gamma(p, false);
        for (int i = 0; i < k; ++i)
            if ((code >> i) & 1)
                for (int j : partition.blocks[i]) gamma[j] = true;
        out.push_back(make_spec(partition, gamma));
    }
    auto value_less = [](const ModelSpec& a, const ModelSpec& b) {
        for (std::size_t j = a.gamma.size(); j-- > 0;)
            if (a.gamma[j] != b.gamma[j]) return b.gamma[j];
        return false;
    };
    std::stable_sort(out.begin(), out.end(), value_less);
    return out;
}

ModelPosterior posterior_model_probs(const std::vector<ModelSpec>& models, const std::vector<double>& log_bf_null,
                                     const std::vector<double>& prior) {
    const std::size_t M = models.size();
    if (M == 0) throw EmptyModelList("no models to weigh");
    if (log_bf_null.size() != M) throw DimensionMismatch("one log Bayes factor per model required");
    if (!prior.empty() && prior.size() != M) throw DimensionMismatch("one prior weight per model required");
    ModelPosterior post;
    post.models = models;
    post.log_bf_null = log_bf_null;
    post.prior_prob.assign(M, 1.0 / M);
    if (!prior.empty()) {
        long double total = 0;
        for (double w : prior) {
            if (!(w >= 0) || !std::isfinite(w)) throw DomainError("model prior weights must be finite and >= 0");
            total += w;
        }
        if (!(total > 0)) throw DomainError("model prior weights sum to zero");
        for (std::size_t i = 0; i < M; ++i) post.prior_prob[i] = static_cast<double>(prior[i] / total);
    }
    post.post_prob.assign(M, 0.0);

    bool any_inf = false;
    for (std::size_t i = 0; i < M; ++i) {
        if (std::isnan(log_bf_null[i])) throw DomainError("log Bayes factor is NaN");
        if (log_bf_null[i] == kInf && post.prior_prob[i] > 0) any_inf = true;
    }
    std::vector<double> score(M, -kInf);
    double top = -kInf;
    for (std::size_t i = 0; i < M; ++i) {
        if (!(post.prior_prob[i] > 0)) continue;
        if (any_inf) {
            if (log_bf_null[i] == kInf) score[i] = std::log(post.prior_prob[i]);
        } else {
            score[i] = log_bf_null[i] + std::log(post.prior_prob[i]);
        }
        top = std::max(top, score[i]);
    }
    if (!(top > -kInf)) throw DomainError("every model has zero posterior weight");
    long double total = 0;
    for (std::size_t i = 0; i < M; ++i) total += std::exp(static_cast<long double>(score[i] - top));
    for (std::size_t i = 0; i < M; ++i)
        post.post_prob[i] = static_cast<double>(std::exp(static_cast<long double>(score[i] - top)) / total);
    return post;
}

FitSummary fit_model(const CenteredDesign& d, const ModelSpec& m) {
    if (static_cast<int>(m.gamma.size()) != d.p()) throw DimensionMismatch("model length differs from p");
    CenteredDesign sub;
    sub.y = d.y;
    sub.y_mean = d.y_mean;
    sub.X = gather_columns(d.X, m.columns);
    sub.partition = m.induced_partition;
    sub.x_mean = Vector::Zero(static_cast<Eigen::Index>(m.columns.size()));
    for (std::size_t j = 0; j < m.columns.size(); ++j) sub.x_mean(j) = d.x_mean(m.columns[j]);
    return fit_least_squares(sub);
}

std::vector<ModelEvaluation> evaluate_models(const CenteredDesign& d, const std::vector<ModelSpec>& models,
                                             EnumerationMode mode, double a, const IntegrationOptions& opts,
                                             int threads) {
    if (models.empty()) throw EmptyModelList("no models to evaluate");
    const int p = d.p();
    FitSummary full;
    if (mode == EnumerationMode::block_subsets) {
        full = fit_least_squares(d);
        if (!full.block_orthogonal)
            throw NotBlockOrthogonal("block-subsets mode needs a block-orthogonal design; apply block_orthogonalize");
    }

    auto evaluate = [&](const ModelSpec& m) {
        if (static_cast<int>(m.gamma.size()) != p) throw DimensionMismatch("model length differs from p");
        ModelEvaluation ev;
        ev.beta_mean = Vector::Zero(p);
        if (mode == EnumerationMode::all_subsets) {
            ev.fit = fit_model(d, m);
            if (m.is_null()) return ev;
            const HyperGPrior prior(a);
            ev.log_bf_null = log_bf_hyper_g(prior, ev.fit);
            const Vector beta = shrinkage_hyper_g(prior, ev.fit) * ev.fit.beta_hat_ls;
            for (std::size_t j = 0; j < m.columns.size(); ++j) ev.beta_mean(m.columns[j]) = beta(j);
            return ev;
        }
        std::vector<int> keep;
        for (int i = 0; i < d.partition.k(); ++i) {
            int inside = 0;
            for (int j : d.partition.blocks[i]) inside += m.gamma[j] ? 1 : 0;
            if (inside == static_cast<int>(d.partition.blocks[i].size()))
                keep.push_back(i);
            else if (inside != 0)
                throw ConfigError("block-subsets mode needs whole blocks; model " + m.bits() + " splits one");
        }
        ev.fit = restrict_blocks(full, keep);
        if (m.is_null()) return ev;
        const BlockHyperGPrior prior(a, ev.fit.partition);
        try {
            const ShrinkagePosterior post = block_shrinkage(prior, ev.fit, opts);
            ev.log_bf_null = post.log_bf_null;
            ev.method = post.method;
            ev.error_estimate = post.error_estimate;
            int col = 0;
            for (std::size_t b = 0; b < keep.size(); ++b)
                for (std::size_t c = 0; c < d.partition.blocks[keep[b]].size(); ++c, ++col)
                    ev.beta_mean(m.columns[col]) = post.t_mean(b) * ev.fit.beta_hat_ls(col);
        } catch (const IntegralDiverges&) {
            // Exact fit with enough data: the model dominates; shrinkage tends to 1.
            ev.log_bf_null = kInf;
            for (std::size_t j = 0; j < m.columns.size(); ++j) ev.beta_mean(m.columns[j]) = ev.fit.beta_hat_ls(j);
        }
        return ev;
    };

    std::vector<ModelEvaluation> out(models.size());
    std::vector<std::exception_ptr> errors(models.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < models.size(); i = next++) {
            try {
                out[i] = evaluate(models[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(models.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    // Report the failure of the earliest model so the error does not depend on scheduling.
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

double bma_predict(const Vector& x_star, const ModelPosterior& posterior, const std::vector<Vector>& beta_means,
                   double alpha_hat, const Vector& x_mean) {
    if (beta_means.size() != posterior.post_prob.size()) throw DimensionMismatch("one coefficient vector per model");
    if (x_star.size() != x_mean.size()) throw DimensionMismatch("x_star has the wrong length");
    const Vector xc = x_star - x_mean;
    long double pred = alpha_hat;
    for (std::size_t i = 0; i < beta_means.size(); ++i) {
        if (beta_means[i].size() != xc.size()) throw DimensionMismatch("coefficient vector has the wrong length");
        if (posterior.post_prob[i] == 0) continue;
        pred += static_cast<long double>(posterior.post_prob[i]) * xc.dot(beta_means[i]);
    }
    return static_cast<double>(pred);
}

}  // namespace blockg
