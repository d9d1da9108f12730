#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blockg {

using Real = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr const char* kVersion = "1.0.0";

enum class ErrorKind { config, data, numerical, budget, precondition };

// Every library failure carries a stable tag so the CLI can print one parseable line.
class Error : public std::runtime_error {
public:
    Error(std::string tag, ErrorKind kind, const std::string& what)
        : std::runtime_error(what), tag_(std::move(tag)), kind_(kind) {}
    const std::string& tag() const noexcept { return tag_; }
    ErrorKind kind() const noexcept { return kind_; }

private:
    std::string tag_;
    ErrorKind kind_;
};

#define BLOCKG_ERROR(Name, Kind)                                                   \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& what) : Error(#Name, Kind, what) {}       \
    };

BLOCKG_ERROR(DomainError, ErrorKind::numerical)
BLOCKG_ERROR(NoConvergence, ErrorKind::numerical)
BLOCKG_ERROR(NotBlockOrthogonal, ErrorKind::numerical)
BLOCKG_ERROR(IntegralDiverges, ErrorKind::numerical)
BLOCKG_ERROR(OutOfInterior, ErrorKind::numerical)
BLOCKG_ERROR(RankDeficient, ErrorKind::data)
BLOCKG_ERROR(DimensionMismatch, ErrorKind::data)
BLOCKG_ERROR(DataError, ErrorKind::data)
BLOCKG_ERROR(EmptyModelList, ErrorKind::data)
BLOCKG_ERROR(ConfigError, ErrorKind::config)
BLOCKG_ERROR(PreconditionViolated, ErrorKind::precondition)
BLOCKG_ERROR(BudgetExceeded, ErrorKind::budget)

#undef BLOCKG_ERROR

// SplitMix64 finalizer; derives independent substream seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace blockg
