#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "blockg/cli.hpp"
#include "blockg/model_space.hpp"

namespace blockg::cli {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError("unknown key in " + where + ": " + key);
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

template <class T>
void maybe(const json& obj, const std::string& key, const std::string& where, T& out) {
    if (obj.contains(key)) out = get<T>(obj, key, where);
}

template <class T>
void maybe(const json& obj, const std::string& key, const std::string& where, std::optional<T>& out) {
    if (obj.contains(key)) out = get<T>(obj, key, where);
}

const std::set<std::string> kExperiments{"els", "clp", "clp-plateau", "info", "info-small-n",
                                         "selection", "prediction", "sigma2", "case2a-laplace"};

void validate(const RunConfig& c) {
    const auto& p = c.prior;
    if (p.type != "hyper-g" && p.type != "block-hyper-g" && p.type != "fixed-g")
        throw ConfigError("prior.type must be hyper-g, block-hyper-g or fixed-g");
    if (p.type != "fixed-g" && !(p.a > 2 && p.a <= 4)) throw ConfigError("prior.a must lie in (2, 4]");
    if (p.type == "fixed-g" && !(p.g > 0 && std::isfinite(p.g))) throw ConfigError("prior.g must be positive");
    if (c.threads < 1) throw ConfigError("threads must be at least 1");
    const auto& o = c.integration;
    if (!(o.rel_tol > 0) || !(o.max_rel_error > 0) || o.max_evals < 1 || o.qmc_log2_points < 4 ||
        o.qmc_log2_points > 30 || o.qmc_randomizations < 2 || o.laplace_min_n < 1)
        throw ConfigError("integration settings out of range");
    if (!c.enumeration.empty()) enumeration_mode_from_string(c.enumeration);

    if (c.mode.rfind("experiment:", 0) == 0) {
        if (!kExperiments.count(c.experiment.name)) throw ConfigError("unknown experiment: " + c.experiment.name);
        const auto& e = c.experiment;
        if (!(e.a > 2 && e.a <= 4)) throw ConfigError("experiment.a must lie in (2, 4]");
        if (e.regime != "block" && e.regime != "r2") throw ConfigError("experiment.regime must be block or r2");
        if (e.replicates < 1) throw ConfigError("experiment.replicates must be positive");
        if (!(e.sigma >= 0)) throw ConfigError("experiment.sigma must be non-negative");
        if (!(e.scale_step > 0) || !(e.scale_to >= e.scale_from)) throw ConfigError("experiment.scales is empty");
        if (e.p_blocks)
            for (int q : *e.p_blocks)
                if (q < 1) throw ConfigError("experiment.p_blocks entries must be positive");
        return;
    }
    if (c.mode != "fit" && c.mode != "select" && c.mode != "predict")
        throw ConfigError("mode must be fit, select, predict or experiment:<name>");
    if (c.data_path.empty()) throw ConfigError("data path missing");
    if (c.response.empty()) throw ConfigError("response column missing");
    if (c.blocks.empty()) throw ConfigError("blocks missing");
    std::set<std::string> seen;
    for (const auto& b : c.blocks) {
        if (b.empty()) throw ConfigError("blocks must not be empty");
        for (const auto& name : b) {
            if (name == c.response) throw ConfigError("response column " + name + " listed as a predictor");
            if (!seen.insert(name).second) throw ConfigError("column " + name + " appears in two blocks");
        }
    }
    if (c.mode == "predict" && c.predict_points.empty()) throw ConfigError("predict mode needs predict points");
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config",
               {"data", "response", "blocks", "prior", "mode", "seed", "output_dir", "integration", "enumeration",
                "orthogonalize", "threads", "predict", "experiment"});
    RunConfig c;
    c.base_dir = base_dir;
    maybe(j, "data", "config", c.data_path);
    maybe(j, "response", "config", c.response);
    maybe(j, "blocks", "config", c.blocks);
    maybe(j, "mode", "config", c.mode);
    maybe(j, "seed", "config", c.seed);
    maybe(j, "output_dir", "config", c.output_dir);
    maybe(j, "enumeration", "config", c.enumeration);
    maybe(j, "orthogonalize", "config", c.orthogonalize);
    maybe(j, "threads", "config", c.threads);
    maybe(j, "predict", "config", c.predict_points);
    if (j.contains("prior")) {
        const json& p = j["prior"];
        check_keys(p, "prior", {"type", "a", "g"});
        maybe(p, "type", "prior", c.prior.type);
        maybe(p, "a", "prior", c.prior.a);
        maybe(p, "g", "prior", c.prior.g);
    }
    if (j.contains("integration")) {
        const json& o = j["integration"];
        check_keys(o, "integration",
                   {"method", "rel_tol", "max_evals", "max_rel_error", "qmc_log2_points", "qmc_randomizations",
                    "laplace_min_n"});
        if (o.contains("method")) c.integration.method = integration_method_from_string(get<std::string>(o, "method", "integration"));
        maybe(o, "rel_tol", "integration", c.integration.rel_tol);
        maybe(o, "max_evals", "integration", c.integration.max_evals);
        maybe(o, "max_rel_error", "integration", c.integration.max_rel_error);
        maybe(o, "qmc_log2_points", "integration", c.integration.qmc_log2_points);
        maybe(o, "qmc_randomizations", "integration", c.integration.qmc_randomizations);
        maybe(o, "laplace_min_n", "integration", c.integration.laplace_min_n);
    }
    if (c.mode.rfind("experiment:", 0) == 0) c.experiment.name = c.mode.substr(11);
    if (j.contains("experiment")) {
        const json& e = j["experiment"];
        check_keys(e, "experiment",
                   {"n", "p_blocks", "a", "other_coef", "sigma", "scales", "regime", "fixed_g", "replicates",
                    "n_schedule", "p1", "p2"});
        auto& x = c.experiment;
        maybe(e, "n", "experiment", x.n);
        maybe(e, "p_blocks", "experiment", x.p_blocks);
        maybe(e, "a", "experiment", x.a);
        maybe(e, "other_coef", "experiment", x.other_coef);
        maybe(e, "sigma", "experiment", x.sigma);
        maybe(e, "regime", "experiment", x.regime);
        maybe(e, "fixed_g", "experiment", x.fixed_g);
        maybe(e, "replicates", "experiment", x.replicates);
        maybe(e, "n_schedule", "experiment", x.n_schedule);
        maybe(e, "p1", "experiment", x.p1);
        maybe(e, "p2", "experiment", x.p2);
        if (e.contains("scales")) {
            const json& s = e["scales"];
            check_keys(s, "experiment.scales", {"from", "to", "step"});
            maybe(s, "from", "experiment.scales", x.scale_from);
            maybe(s, "to", "experiment.scales", x.scale_to);
            maybe(s, "step", "experiment.scales", x.scale_step);
        }
    }
    validate(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(ss.str(), dir.empty() ? "." : dir.string());
}

std::string canonical_config(const RunConfig& c) {
    json j;
    j["data"] = c.data_path;
    j["response"] = c.response;
    j["blocks"] = c.blocks;
    j["prior"] = {{"type", c.prior.type}, {"a", c.prior.a}, {"g", c.prior.g}};
    j["mode"] = c.mode;
    j["seed"] = c.seed;
    j["integration"] = {{"method", to_string(c.integration.method)},
                        {"rel_tol", c.integration.rel_tol},
                        {"max_evals", c.integration.max_evals},
                        {"max_rel_error", c.integration.max_rel_error},
                        {"qmc_log2_points", c.integration.qmc_log2_points},
                        {"qmc_randomizations", c.integration.qmc_randomizations},
                        {"laplace_min_n", c.integration.laplace_min_n}};
    j["enumeration"] = c.enumeration;
    j["orthogonalize"] = c.orthogonalize;
    j["predict"] = c.predict_points;
    // threads changes neither results nor their order, so it stays out of the hash.
    const auto& e = c.experiment;
    json ex = {{"name", e.name},         {"a", e.a},
               {"sigma", e.sigma},       {"scales", {{"from", e.scale_from}, {"to", e.scale_to}, {"step", e.scale_step}}},
               {"regime", e.regime},     {"fixed_g", e.fixed_g},
               {"replicates", e.replicates}, {"p1", e.p1},
               {"p2", e.p2}};
    ex["n"] = e.n ? json(*e.n) : json(nullptr);
    ex["p_blocks"] = e.p_blocks ? json(*e.p_blocks) : json(nullptr);
    ex["other_coef"] = e.other_coef ? json(*e.other_coef) : json(nullptr);
    ex["n_schedule"] = e.n_schedule ? json(*e.n_schedule) : json(nullptr);
    j["experiment"] = ex;
    return j.dump();
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(canonical_config(cfg)); }

}  // namespace blockg::cli
