#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <optional>
#include <sstream>

#include "blockg/asymptotics.hpp"
#include "blockg/cli.hpp"
#include "blockg/gprior.hpp"
#include "blockg/model_space.hpp"

namespace blockg::cli {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

ordered num(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

ordered vec(const Vector& v) {
    ordered a = ordered::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

// SOURCE_DATE_EPOCH pins the timestamp for reproducible builds of the reports.
std::string timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered provenance(const RunConfig& cfg, const std::string& command, const Table* data = nullptr) {
    ordered p;
    p["command"] = command;
    p["config_hash"] = config_hash(cfg);
    if (data) p["data_hash"] = data->hash;
    p["seed"] = cfg.seed;
    p["version"] = kVersion;
    p["timestamp"] = timestamp();
    return p;
}

std::string dump(const ordered& j) { return j.dump(2) + "\n"; }

// QMC streams follow the run seed.
IntegrationOptions integration(const RunConfig& cfg) {
    IntegrationOptions o = cfg.integration;
    o.seed = cfg.seed;
    return o;
}

bool block_prior(const RunConfig& cfg) { return cfg.prior.type == "block-hyper-g"; }

struct Prepared {
    CenteredDesign design;
    std::vector<std::string> names;
    std::optional<Orthogonalized> orth;
};

Prepared prepare(const RunConfig& cfg, const Table& data) {
    Prepared out;
    std::vector<int> sizes;
    for (const auto& b : cfg.blocks) {
        sizes.push_back(static_cast<int>(b.size()));
        out.names.insert(out.names.end(), b.begin(), b.end());
    }
    const int y_col = data.column(cfg.response);
    const auto n = data.values.rows();
    Matrix X(n, static_cast<Eigen::Index>(out.names.size()));
    for (std::size_t j = 0; j < out.names.size(); ++j) X.col(static_cast<Eigen::Index>(j)) = data.values.col(data.column(out.names[j]));
    const Vector y = data.values.col(y_col);
    out.design = center_design<double>(X, y, BlockPartition::contiguous(sizes));
    if (block_prior(cfg) && out.design.partition.k() > 1 && !check_block_orthogonality(out.design)) {
        if (!cfg.orthogonalize)
            throw NotBlockOrthogonal("design blocks are not orthogonal; rerun with --orthogonalize to transform them");
        out.orth = block_orthogonalize(out.design);
        out.design = out.orth->design;
    }
    return out;
}

ordered fit_json(const FitSummary& f) {
    ordered j;
    j["method"] = "least-squares";
    j["n"] = f.n;
    j["p"] = f.p;
    j["p_blocks"] = f.p_blocks;
    j["alpha_hat"] = num(f.alpha_hat);
    j["beta_hat_ls"] = vec(f.beta_hat_ls);
    j["sigma2_hat"] = num(f.sigma2_hat);
    j["rss"] = num(f.rss);
    j["tss"] = num(f.tss);
    j["r2"] = num(f.r2);
    j["one_minus_r2"] = num(f.one_minus_r2);
    j["ess_blocks"] = vec(f.ess_blocks);
    j["r2_blocks"] = vec(f.r2_blocks);
    j["block_orthogonal"] = f.block_orthogonal;
    return j;
}

ordered prior_json(const PriorConfig& p) {
    ordered j;
    j["type"] = p.type;
    if (p.type == "fixed-g")
        j["g"] = p.g;
    else
        j["a"] = p.a;
    return j;
}

EnumerationMode enumeration_for(const RunConfig& cfg) {
    if (cfg.prior.type == "fixed-g") throw ConfigError("model selection supports the hyper-g and block hyper-g priors");
    const EnumerationMode want = block_prior(cfg) ? EnumerationMode::block_subsets : EnumerationMode::all_subsets;
    if (!cfg.enumeration.empty() && enumeration_mode_from_string(cfg.enumeration) != want)
        throw ConfigError("enumeration " + cfg.enumeration + " does not match prior " + cfg.prior.type +
                          " (hyper-g uses all-subsets, block-hyper-g uses block-subsets)");
    return want;
}

struct Selection {
    Prepared prep;
    std::vector<ModelSpec> models;
    std::vector<ModelEvaluation> evals;
    ModelPosterior posterior;
    EnumerationMode mode{};
};

Selection select_models(const RunConfig& cfg, const Table& data) {
    Selection s;
    s.mode = enumeration_for(cfg);
    s.prep = prepare(cfg, data);
    s.models = enumerate_models(s.prep.design.partition, s.mode);
    s.evals = evaluate_models(s.prep.design, s.models, s.mode, cfg.prior.a, integration(cfg), cfg.threads);
    std::vector<double> lbf;
    for (const auto& e : s.evals) lbf.push_back(e.log_bf_null);
    s.posterior = posterior_model_probs(s.models, lbf);
    return s;
}

ordered models_json(const Selection& s) {
    std::vector<std::size_t> order(s.models.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.posterior.post_prob[a] > s.posterior.post_prob[b]; });
    ordered rows = ordered::array();
    for (std::size_t i : order) {
        const ModelSpec& m = s.models[i];
        ordered r;
        r["model_id"] = i;
        r["gamma_bits"] = m.bits();
        ordered cols = ordered::array();
        for (int j : m.columns) cols.push_back(s.prep.names[j]);
        r["columns"] = cols;
        r["log_bf_null"] = num(s.posterior.log_bf_null[i]);
        r["post_prob"] = num(s.posterior.post_prob[i]);
        r["prior_prob"] = num(s.posterior.prior_prob[i]);
        const bool closed = s.mode == EnumerationMode::all_subsets || m.is_null() || m.induced_partition.k() == 1;
        r["method"] = closed ? std::string("closed-form") : to_string(s.evals[i].method);
        r["error_estimate"] = num(s.evals[i].error_estimate);
        rows.push_back(r);
    }
    return rows;
}

void write_experiment_csv(std::ostringstream& os, const ExperimentResult& r) {
    os << "x,statistic,value,err\n";
    char buf[64];
    auto put = [&](double v) {
        if (std::isnan(v))
            os << "nan";
        else if (std::isinf(v))
            os << (v > 0 ? "inf" : "-inf");
        else {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << buf;
        }
    };
    for (const auto& row : r.rows) {
        put(row.x);
        os << ',' << row.statistic << ',';
        put(row.value);
        os << ',';
        put(row.err);
        os << '\n';
    }
}

ExperimentResult dispatch_experiment(const RunConfig& cfg) {
    const ExperimentConfig& e = cfg.experiment;
    const IntegrationOptions opts = integration(cfg);
    const std::vector<double> scales = log_schedule(e.scale_from, e.scale_to, e.scale_step);
    auto sequence = [&](std::vector<int> default_blocks, double default_other) {
        SequenceSpec spec = default_sequence(e.n.value_or(50), e.p_blocks.value_or(default_blocks), e.a, cfg.seed,
                                             e.other_coef.value_or(default_other), e.scale_to);
        spec.scales = scales;
        spec.sigma = e.sigma;
        return spec;
    };
    auto simulation = [&](std::vector<int> default_schedule) {
        SimulationSpec sim;
        sim.a = e.a;
        sim.n_schedule = e.n_schedule.value_or(default_schedule);
        sim.replicates = e.replicates;
        sim.seed = cfg.seed;
        sim.sigma = e.sigma;
        sim.threads = cfg.threads;
        return sim;
    };
    const std::string& name = e.name;
    if (name == "els") return run_els_experiment(sequence({2, 2}, 0.0), opts);
    if (name == "clp") return run_clp_experiment(sequence({2, 1}, 0.0), opts);
    if (name == "info") {
        const bool r2 = e.regime == "r2";
        return run_info_consistency(sequence({2, 1}, r2 ? 1.0 : 0.0), r2 ? InfoRegime::r2_to_one : InfoRegime::block_scaled,
                                    e.fixed_g, opts);
    }
    if (name == "sigma2") return run_sigma2_limit_check(sequence({2, 1}, 0.0), opts);
    if (name == "clp-plateau") return run_clp_plateau(e.a, e.n.value_or(5), e.p1, e.p2, scales);
    if (name == "info-small-n") return run_info_small_n(e.a, e.n.value_or(5), e.p_blocks.value_or(std::vector<int>{4, 2}), scales, opts);
    if (name == "selection") return run_selection_consistency(simulation({100, 400, 1600}), opts);
    if (name == "prediction") return run_prediction_consistency(simulation({100, 400, 1600}), opts);
    if (name == "case2a-laplace") return run_case2a_laplace_slope(simulation({250, 1000, 4000}), opts);
    throw ConfigError("unknown experiment: " + name);
}

}  // namespace

Report cmd_fit(const RunConfig& cfg, const Table& data) {
    const Prepared prep = prepare(cfg, data);
    const FitSummary fit = fit_least_squares(prep.design);
    const int k = fit.k();
    ordered out;
    out["provenance"] = provenance(cfg, "fit", &data);
    out["prior"] = prior_json(cfg.prior);
    out["columns"] = prep.names;
    out["blocks"] = cfg.blocks;
    out["orthogonalized"] = prep.orth.has_value();
    out["fit"] = fit_json(fit);

    Vector t_mean(k);
    std::string method = "closed-form";
    double error = 0, lbf = 0, sigma2 = NAN;
    std::string sigma2_method = "closed-form";
    ordered bracket = ordered::array();
    if (cfg.prior.type == "fixed-g") {
        const FixedGPrior prior(cfg.prior.g);
        lbf = log_bf_fixed_g(prior, fit);
        t_mean.setConstant(cfg.prior.g / (1 + cfg.prior.g));
        if (fit.n > 3) sigma2 = fit.tss * (fit.one_minus_r2 + fit.r2 / (1 + cfg.prior.g)) / (fit.n - 3);
    } else if (cfg.prior.type == "hyper-g") {
        const HyperGPrior prior(cfg.prior.a);
        lbf = log_bf_hyper_g(prior, fit);
        t_mean.setConstant(shrinkage_hyper_g(prior, fit));
        if (fit.rss > 0) {
            sigma2 = sigma2_posterior_hyper_g(prior, fit).mean();
            sigma2_method = "quadrature";
        }
    } else {
        const BlockHyperGPrior prior(cfg.prior.a, fit.partition);
        const ShrinkagePosterior post = bf_block_hyper_g(prior, fit, integration(cfg));
        lbf = post.log_bf_null;
        t_mean = post.t_mean;
        method = k == 1 ? "closed-form" : to_string(post.method);
        error = post.error_estimate;
        sigma2 = post.sigma2_mean;
        sigma2_method = method;
        const ShrinkageBracket br = shrinkage_bracket(prior, fit);
        for (int i = 0; i < k; ++i) bracket.push_back({num(br.floor(i)), num(br.lower(i)), num(br.upper(i))});
    }
    out["log_bf_null"] = {{"value", num(lbf)}, {"method", method}, {"error_estimate", num(error)}};
    ordered shrink = ordered::array();
    for (int i = 0; i < k; ++i) {
        ordered s;
        s["block"] = i;
        s["value"] = num(t_mean(i));
        s["method"] = method;
        if (!bracket.empty()) s["bracket"] = bracket[i];
        shrink.push_back(s);
    }
    out["shrinkage"] = shrink;

    Vector beta = fit.beta_hat_ls;
    for (int i = 0; i < k; ++i)
        for (int j : fit.partition.blocks[i]) beta(j) *= t_mean(i);
    out["posterior_mean"] = {{"value", vec(beta)}, {"method", method}};
    if (prep.orth) {
        // X = Q T, so coefficients on the original columns are T^{-1} kappa.
        const auto lu = prep.orth->T.fullPivLu();
        out["posterior_mean_original"] = {{"value", vec(lu.solve(beta))}, {"method", method}};
        out["beta_hat_ls_original"] = vec(lu.solve(fit.beta_hat_ls));
    }
    ordered s2;
    s2["mean"] = num(sigma2);
    s2["method"] = std::isfinite(sigma2) ? sigma2_method : std::string("undefined");
    out["sigma2"] = s2;
    return {{{"fit.json", dump(out)}}, 0};
}

Report cmd_select(const RunConfig& cfg, const Table& data) {
    const Selection s = select_models(cfg, data);
    ordered out;
    out["provenance"] = provenance(cfg, "select", &data);
    out["prior"] = prior_json(cfg.prior);
    out["enumeration"] = to_string(s.mode);
    out["columns"] = s.prep.names;
    out["orthogonalized"] = s.prep.orth.has_value();
    out["models"] = models_json(s);
    return {{{"models.json", dump(out)}}, 0};
}

Report cmd_predict(const RunConfig& cfg, const Table& data) {
    const Selection s = select_models(cfg, data);
    std::vector<Vector> means;
    for (const auto& e : s.evals) means.push_back(e.beta_mean);
    ordered preds = ordered::array();
    for (const auto& point : cfg.predict_points) {
        Vector x(static_cast<Eigen::Index>(s.prep.names.size()));
        for (std::size_t j = 0; j < s.prep.names.size(); ++j) {
            const auto it = point.find(s.prep.names[j]);
            if (it == point.end()) throw ConfigError("predict point lacks column " + s.prep.names[j]);
            x(static_cast<Eigen::Index>(j)) = it->second;
        }
        for (const auto& [name, _] : point)
            if (std::find(s.prep.names.begin(), s.prep.names.end(), name) == s.prep.names.end())
                throw ConfigError("predict point has unknown column " + name);
        const Vector xc = s.prep.orth ? s.prep.orth->map_point(x) : x;
        ordered p;
        p["x"] = point;
        p["prediction"] = num(bma_predict(xc, s.posterior, means, s.prep.design.y_mean, s.prep.design.x_mean));
        p["method"] = "bma";
        preds.push_back(p);
    }
    ordered out;
    out["provenance"] = provenance(cfg, "predict", &data);
    out["prior"] = prior_json(cfg.prior);
    out["enumeration"] = to_string(s.mode);
    out["predictions"] = preds;
    out["models"] = models_json(s);
    return {{{"predictions.json", dump(out)}}, 0};
}

Report cmd_experiment(const RunConfig& cfg) {
    const ExperimentResult r = dispatch_experiment(cfg);
    std::ostringstream csv;
    write_experiment_csv(csv, r);
    const std::string base = cfg.experiment.name;
    ordered v;
    v["provenance"] = provenance(cfg, "experiment:" + base);
    v["experiment"] = r.name;
    v["pass"] = r.pass();
    ordered list = ordered::array();
    for (const auto& x : r.verdicts) list.push_back({{"claim", x.claim}, {"pass", x.pass}, {"detail", x.detail}});
    v["verdicts"] = list;
    ordered methods = ordered::object();
    for (const auto& [stat, m] : r.methods) methods[stat] = m;
    v["methods"] = methods;
    v["rows_file"] = base + ".csv";
    return {{{base + ".csv", csv.str()}, {base + "_verdict.json", dump(v)}}, r.pass() ? 0 : kExitVerdictFail};
}

Report run(const RunConfig& cfg) {
    if (cfg.mode.rfind("experiment:", 0) == 0) return cmd_experiment(cfg);
    std::filesystem::path data = cfg.data_path;
    if (data.is_relative()) data = std::filesystem::path(cfg.base_dir) / data;
    const Table table = read_csv_file(data.string());
    if (cfg.mode == "fit") return cmd_fit(cfg, table);
    if (cfg.mode == "select") return cmd_select(cfg, table);
    if (cfg.mode == "predict") return cmd_predict(cfg, table);
    throw ConfigError("unknown mode: " + cfg.mode);
}

void write_report(const Report& report, const std::string& output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + output_dir + ": " + ec.message());
    for (const auto& [name, contents] : report.files) {
        const auto path = std::filesystem::path(output_dir) / name;
        std::ofstream out(path, std::ios::binary);
        out << contents;
        if (!out) throw ConfigError("cannot write " + path.string());
    }
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config:
        case ErrorKind::precondition: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numerical: return 4;
        case ErrorKind::budget: return 5;
    }
    return 4;
}

std::string error_line(const Error& e) {
    static const char* kinds[] = {"config", "data", "numerical", "budget", "precondition"};
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return "blockg: error=" + e.tag() + " kind=" + kinds[static_cast<int>(e.kind())] + " message=" + msg;
}

}  // namespace blockg::cli
