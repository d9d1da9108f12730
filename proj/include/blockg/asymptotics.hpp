#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blockg/block_hyper_g.hpp"
#include "blockg/design.hpp"

namespace blockg {

struct ExperimentRow {
    double x{0};
    std::string statistic;
    double value{0};
    double err{0};
};

struct Verdict {
    std::string claim;
    bool pass{false};
    std::string detail;
};

struct ExperimentResult {
    std::string name;
    std::uint64_t seed{0};
    std::vector<ExperimentRow> rows;
    std::vector<Verdict> verdicts;
    std::map<std::string, std::string> methods;  // statistic -> integration method

    bool pass() const;
    // Last row with this statistic at x; throws DomainError when absent.
    double value(const std::string& statistic, double x) const;
};

// Centered design whose blocks are exactly orthogonal: Gaussian columns, centered, then
// block-orthogonalized, with every column rescaled to norm sqrt(n).
CenteredDesign random_block_design(int n, const std::vector<int>& p_blocks, std::uint64_t seed);

// Psi_N: only the block-1 coefficients are multiplied by the scale (all blocks when
// scale_all is set); X, alpha, the other blocks and the noise draw stay fixed.
struct SequenceSpec {
    CenteredDesign base;  // X and partition; y is rebuilt
    double alpha{1.0};
    std::vector<Vector> beta;  // one vector per block
    double sigma{1.0};
    std::uint64_t seed{0};
    std::vector<double> scales;
    double a{3.0};
    bool scale_all{false};
};

struct SequenceElement {
    double scale{1};
    Vector y;  // raw response
    FitSummary fit;
};

// Fits use linearity in the scale (residuals do not change along the sequence), so R^2
// close to 1 keeps full relative precision in 1 - R^2.
std::vector<SequenceElement> make_sequence(const SequenceSpec& spec);

// 10^lo, 10^(lo+step), ..., 10^hi.
std::vector<double> log_schedule(double lo, double hi, double step);

// Default Psi_N sequence on a random block-orthogonal design: block 1 coefficients are 1,
// the other blocks use other_coef, sigma = 1, scales 10^0 .. 10^top_exponent in half decades.
SequenceSpec default_sequence(int n, const std::vector<int>& p_blocks, double a, std::uint64_t seed,
                              double other_coef = 0.0, double top_exponent = 8);

ExperimentResult run_els_experiment(const SequenceSpec& spec, const IntegrationOptions& opts = {});
ExperimentResult run_clp_experiment(const SequenceSpec& spec, const IntegrationOptions& opts = {});

// Small-n plateau of the hyper-g BF(M2:M1) from sufficient statistics alone (n can be below
// p + 2, where no design exists).
ExperimentResult run_clp_plateau(double a, int n, int p1, int p2, const std::vector<double>& scales);

// r2_to_one scales every block (diverges when n > k(a-2) + p + 1); block_scaled scales
// block 1 (diverges when n >= a + p_1 - 1).
enum class InfoRegime { r2_to_one, block_scaled };
ExperimentResult run_info_consistency(const SequenceSpec& spec, InfoRegime regime, double fixed_g,
                                      const IntegrationOptions& opts = {});

// Block 1 scaled with n < a + p_1 - 1, from sufficient statistics: the BF tends to
// ((a-2)/2)^k / ((c_1 - m) prod_{i>=2} c_i).
ExperimentResult run_info_small_n(double a, int n, const std::vector<int>& p_blocks, const std::vector<double>& scales,
                                  const IntegrationOptions& opts = {});

ExperimentResult run_sigma2_limit_check(const SequenceSpec& spec, const IntegrationOptions& opts = {});

struct SimulationSpec {
    double a{3.0};
    std::vector<int> n_schedule{100, 400, 1600};
    int replicates{200};
    std::uint64_t seed{0};
    double sigma{1.0};
    int threads{1};
};

// Truth uses two of four columns in block 1 and both columns of block 2; block 3 is null.
// Cases: 1 drops block 2, 2A adds the two null block-1 columns, 2B adds those and block 3,
// 2C adds block 3 only.
ExperimentResult run_selection_consistency(const SimulationSpec& spec, const IntegrationOptions& opts = {});

// Block-subsets BMA on three blocks of two, truth in blocks 1 and 2.
ExperimentResult run_prediction_consistency(const SimulationSpec& spec, const IntegrationOptions& opts = {});

// Case 2A pair at the given n values: slope of the median Laplace log BF against log m.
ExperimentResult run_case2a_laplace_slope(const SimulationSpec& spec, const IntegrationOptions& opts = {});

}  // namespace blockg
