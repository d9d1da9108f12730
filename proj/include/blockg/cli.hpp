#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blockg/block_hyper_g.hpp"
#include "blockg/core.hpp"

namespace blockg::cli {

// Numeric table read from an RFC-4180 CSV file with a header row.
struct Table {
    std::vector<std::string> header;
    Matrix values;  // rows x columns
    std::string hash;  // FNV-1a of the raw bytes

    // Column index by name; throws DataError when absent.
    int column(const std::string& name) const;
};

Table parse_csv(const std::string& text);
Table read_csv_file(const std::string& path);

struct PriorConfig {
    std::string type{"block-hyper-g"};  // hyper-g | block-hyper-g | fixed-g
    double a{3.0};
    double g{1.0};
};

// Unset optionals take per-experiment defaults.
struct ExperimentConfig {
    std::string name;
    std::optional<int> n;
    std::optional<std::vector<int>> p_blocks;
    double a{3.0};
    std::optional<double> other_coef;
    double sigma{1.0};
    double scale_from{0}, scale_to{8}, scale_step{0.5};
    std::string regime{"block"};  // block | r2
    double fixed_g{10.0};
    int replicates{200};
    std::optional<std::vector<int>> n_schedule;
    int p1{4}, p2{1};
};

struct RunConfig {
    std::string data_path;  // as written; relative paths resolve against base_dir
    std::string base_dir{"."};
    std::string response;
    std::vector<std::vector<std::string>> blocks;
    PriorConfig prior;
    std::string mode{"fit"};  // fit | select | predict | experiment:<name>
    std::uint64_t seed{0};
    std::string output_dir{"."};
    IntegrationOptions integration;
    std::string enumeration;  // empty: block-subsets for block priors, all-subsets otherwise
    bool orthogonalize{false};
    int threads{1};
    std::vector<std::map<std::string, double>> predict_points;
    ExperimentConfig experiment;
};

// Parses and validates a JSON config; unknown keys and out-of-range values throw ConfigError.
RunConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

// Canonical JSON of the effective config (sorted keys, output_dir and base_dir left out)
// and its FNV-1a 64-bit hash in hex.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);
std::string fnv1a_hex(const std::string& bytes);

struct Report {
    std::vector<std::pair<std::string, std::string>> files;  // file name -> contents
    int exit_code{0};
};

Report cmd_fit(const RunConfig& cfg, const Table& data);
Report cmd_select(const RunConfig& cfg, const Table& data);
Report cmd_predict(const RunConfig& cfg, const Table& data);
Report cmd_experiment(const RunConfig& cfg);

// Dispatch on cfg.mode; reads the data file when the mode needs one.
Report run(const RunConfig& cfg);

void write_report(const Report& report, const std::string& output_dir);

// Exit codes: 2 config or precondition, 3 data, 4 numerical, 5 budget.
int exit_code_for(ErrorKind kind);
inline constexpr int kExitVerdictFail = 6;

// One machine-parsable line: "blockg: error=<Tag> kind=<kind> message=<text>".
std::string error_line(const Error& e);

}  // namespace blockg::cli
