#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace genodcov {

inline constexpr std::uint8_t kMissing = 3;

using GenotypeVector = std::vector<std::uint8_t>;
using DosageVector = std::vector<double>;

enum class ErrorKind { InvalidArgument, Numerical, Io, Format, Config };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::InvalidArgument, what);
}

// Status flags shared by every test result.
enum Flag : std::uint32_t {
    kExact = 1u << 0,
    kBoundOnlyHigh = 1u << 1,  // p** <= m, reported value is p**
    kBoundOnlyLow = 1u << 2,   // p* >= M, reported value is p*
    kMonomorphic = 1u << 3,
    kDegenerate = 1u << 4,
    kAsymptotic = 1u << 5,
    kNotConverged = 1u << 6,
    kDroppedCells = 1u << 7,
    kError = 1u << 8,
};

inline std::string flag_token(std::uint32_t f) {
    if (f & kError) return "ERROR";
    if (f & kMonomorphic) return "MONOMORPHIC";
    if (f & kDegenerate) return "DEGENERATE";
    if (f & kBoundOnlyHigh) return "BOUND_ONLY_HIGH";
    if (f & kBoundOnlyLow) return "BOUND_ONLY_LOW";
    if (f & kNotConverged) return "NOT_CONVERGED";
    if (f & kAsymptotic) return "ASYMPTOTIC";
    return "EXACT";
}

inline std::uint32_t flag_from_token(const std::string& t) {
    if (t == "ERROR") return kError;
    if (t == "MONOMORPHIC") return kMonomorphic;
    if (t == "DEGENERATE") return kDegenerate;
    if (t == "BOUND_ONLY_HIGH") return kBoundOnlyHigh;
    if (t == "BOUND_ONLY_LOW") return kBoundOnlyLow;
    if (t == "NOT_CONVERGED") return kNotConverged;
    if (t == "ASYMPTOTIC") return kAsymptotic;
    if (t == "EXACT") return kExact;
    fail(ErrorKind::Format, "unknown flag token: " + t);
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::string method;
    std::vector<double> eigenvalues;
    long n_effective = 0;
    std::uint32_t flags = 0;
};

inline double clamp01(double p) {
    if (!(p > 0.0)) return 0.0;  // also maps NaN to 0 so callers see it via flags
    return p > 1.0 ? 1.0 : p;
}

}  // namespace genodcov
