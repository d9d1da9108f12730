#include <doctest.h>

#include <json.hpp>
#include <random>

#include "blockg/asymptotics.hpp"
#include "blockg/cli.hpp"
#include "blockg/gprior.hpp"

using namespace blockg;
using namespace blockg::cli;
using nlohmann::json;

namespace {

// Table with columns c0..c{p-1}, y from a random block-orthogonal design.
Table make_table(int n, const std::vector<int>& p_blocks, const Vector& beta, double sigma, std::uint64_t seed) {
    const CenteredDesign d = random_block_design(n, p_blocks, seed);
    std::mt19937_64 rng(derive_seed(seed, 99));
    std::normal_distribution<double> z;
    Table t;
    for (int j = 0; j < d.p(); ++j) t.header.push_back("c" + std::to_string(j));
    t.header.push_back("y");
    t.values.resize(n, d.p() + 1);
    t.values.leftCols(d.p()) = d.X;
    for (int r = 0; r < n; ++r) t.values(r, d.p()) = 2 + d.X.row(r).dot(beta) + sigma * z(rng);
    return t;
}

RunConfig config_for(const std::vector<int>& p_blocks, const std::string& prior, const std::string& mode) {
    RunConfig c;
    c.response = "y";
    c.data_path = "unused.csv";
    int col = 0;
    for (int q : p_blocks) {
        std::vector<std::string> b;
        for (int j = 0; j < q; ++j) b.push_back("c" + std::to_string(col++));
        c.blocks.push_back(b);
    }
    c.prior.type = prior;
    c.mode = mode;
    return c;
}

json body(const Report& r) {
    REQUIRE(r.files.size() == 1);
    return json::parse(r.files[0].second);
}

}  // namespace

TEST_CASE("CSV parsing") {
    const Table t = parse_csv("\xEF\xBB\xBF\"a\",b\r\n1,2.5\r\n\r\n-3e2,\"4\"\n");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.values.rows() == 2);
    CHECK(t.values(1, 0) == -300);
    CHECK(t.values(1, 1) == 4);
    CHECK(parse_csv("\"x,\"\"q\"\"\",b\n1,2").header[0] == "x,\"q\"");
    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), DataError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,\n"), DataError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,abc\n"), DataError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,nan\n"), DataError);
    CHECK_THROWS_AS(parse_csv("a,a\n1,2\n"), DataError);
    CHECK_THROWS_AS(parse_csv("a,\"b\n1,2\n"), DataError);
    CHECK_THROWS_AS(parse_csv(""), DataError);
    CHECK_THROWS_AS(t.column("zz"), DataError);
}

TEST_CASE("config validation") {
    const std::string ok = R"({"data":"d.csv","response":"y","blocks":[["a"],["b"]]})";
    const RunConfig c = parse_config(ok);
    CHECK(c.prior.type == "block-hyper-g");
    CHECK(c.mode == "fit");
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data":"d.csv","response":"y","blocks":[["a"]],"colour":1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data":"d.csv","response":"y","blocks":[["a"]],"prior":{"a":5}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data":"d.csv","response":"y","blocks":[["a"],["a"]]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data":"d.csv","response":"y","blocks":[["y"]]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"response":"y","blocks":[["a"]]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"mode":"experiment:nope"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data":"d.csv","response":"y","blocks":[["a"]],"seed":"x"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data":"d.csv","response":"y","blocks":[["a"]],"mode":"predict"})"), ConfigError);
    CHECK(parse_config(R"({"mode":"experiment:els"})").experiment.name == "els");
}

TEST_CASE("config hash is stable and ignores output location and threads") {
    const RunConfig a = parse_config(R"({"data":"d.csv","response":"y","blocks":[["a"]],"output_dir":"x","threads":4})");
    const RunConfig b = parse_config(R"({"threads":1,"blocks":[["a"]],"response":"y","data":"d.csv"})", "/elsewhere");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    RunConfig c = b;
    c.seed = 1;
    CHECK(config_hash(c) != config_hash(b));
    // FNV-1a 64 reference values.
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("all-subsets selection over three columns") {
    Vector beta(3);
    beta << 1, 0, 0.5;
    const Table t = make_table(60, {1, 1, 1}, beta, 1, 4);
    const json out = body(cmd_select(config_for({1, 1, 1}, "hyper-g", "select"), t));
    const auto& rows = out["models"];
    REQUIRE(rows.size() == 8);
    double total = 0, prev = 2;
    for (const auto& r : rows) {
        total += r["post_prob"].get<double>();
        CHECK(r["post_prob"].get<double>() <= prev);
        prev = r["post_prob"].get<double>();
    }
    CHECK(total == doctest::Approx(1).epsilon(1e-12));
    CHECK(out["enumeration"] == "all-subsets");
}

TEST_CASE("block-subsets selection has one row per block union") {
    Vector beta(3);
    beta << 1, 1, 0;
    const Table t = make_table(60, {2, 1}, beta, 1, 5);
    const json out = body(cmd_select(config_for({2, 1}, "block-hyper-g", "select"), t));
    CHECK(out["models"].size() == 4);
    CHECK(out["enumeration"] == "block-subsets");
    RunConfig bad = config_for({2, 1}, "block-hyper-g", "select");
    bad.enumeration = "all-subsets";
    CHECK_THROWS_AS(cmd_select(bad, t), ConfigError);
}

TEST_CASE("single-block fit reproduces the hyper-g shrinkage") {
    Vector beta(2);
    beta << 0.4, -0.2;
    const Table t = make_table(40, {2}, beta, 1, 6);
    const json out = body(cmd_fit(config_for({2}, "block-hyper-g", "fit"), t));
    const FitSummary f = fit_least_squares(center_design<double>(t.values.leftCols(2), t.values.col(2), BlockPartition::contiguous({2})));
    CHECK(out["shrinkage"][0]["value"].get<double>() == doctest::Approx(shrinkage_hyper_g(HyperGPrior(3), f)).epsilon(1e-6));
    CHECK(out["log_bf_null"]["value"].get<double>() == doctest::Approx(log_bf_hyper_g(HyperGPrior(3), f)).epsilon(1e-6));
}

TEST_CASE("data and design errors") {
    Vector beta = Vector::Zero(3);
    Table t = make_table(30, {2, 1}, beta, 1, 7);
    RunConfig c = config_for({2, 1}, "block-hyper-g", "fit");
    c.response = "missing";
    CHECK_THROWS_AS(cmd_fit(c, t), DataError);

    t.values.col(2) += 0.5 * t.values.col(0);  // block 2 now leans on block 1
    const RunConfig plain = config_for({2, 1}, "block-hyper-g", "fit");
    CHECK_THROWS_AS(cmd_fit(plain, t), NotBlockOrthogonal);
    RunConfig ortho = plain;
    ortho.orthogonalize = true;
    const json out = body(cmd_fit(ortho, t));
    CHECK(out["orthogonalized"] == true);
    // The hyper-g prior needs no orthogonality.
    CHECK_NOTHROW(cmd_fit(config_for({2, 1}, "hyper-g", "fit"), t));
}

TEST_CASE("strong signal at n = 1000 puts the most mass on the true block model") {
    // Every block is active. A block with zero coefficients keeps an O(1) Bayes factor under
    // this prior, so a truth that leaves one out cannot be picked with certainty as n grows.
    Vector beta(5);
    beta << 0.3, -0.3, 0.2, 0.2, 0.2;
    int hits = 0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
        const Table t = make_table(1000, {2, 1, 2}, beta, 1, derive_seed(11, r));
        const json out = body(cmd_select(config_for({2, 1, 2}, "block-hyper-g", "select"), t));
        if (out["models"][0]["gamma_bits"] == "11111") ++hits;
    }
    CHECK(hits >= 45);
}

TEST_CASE("predictions and experiments") {
    Vector beta(3);
    beta << 1, -1, 0.5;
    const Table t = make_table(200, {2, 1}, beta, 0.1, 8);
    RunConfig c = config_for({2, 1}, "block-hyper-g", "predict");
    c.predict_points = {{{"c0", 0.5}, {"c1", 0}, {"c2", 1}}};
    const json out = body(cmd_predict(c, t));
    CHECK(out["predictions"][0]["prediction"].get<double>() == doctest::Approx(3).epsilon(0.02));
    c.predict_points = {{{"c0", 0.5}, {"c1", 0}}};
    CHECK_THROWS_AS(cmd_predict(c, t), ConfigError);

    const RunConfig e = parse_config(R"({"mode":"experiment:clp-plateau","experiment":{"scales":{"from":0,"to":8,"step":2}}})");
    const Report r = cmd_experiment(e);
    CHECK(r.exit_code == 0);
    REQUIRE(r.files.size() == 2);
    CHECK(r.files[0].first == "clp-plateau.csv");
    CHECK(r.files[0].second.rfind("x,statistic,value,err\n", 0) == 0);
    CHECK(json::parse(r.files[1].second)["pass"] == true);
}

TEST_CASE("error lines and exit codes") {
    CHECK(exit_code_for(ErrorKind::config) == 2);
    CHECK(exit_code_for(ErrorKind::precondition) == 2);
    CHECK(exit_code_for(ErrorKind::data) == 3);
    CHECK(exit_code_for(ErrorKind::numerical) == 4);
    CHECK(exit_code_for(ErrorKind::budget) == 5);
    CHECK(error_line(RankDeficient("x\ny")) == "blockg: error=RankDeficient kind=data message=x y");
}
