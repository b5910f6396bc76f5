// Shared aliases, error types, seeding helpers and small numeric utilities.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vmfd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Malformed or unreadable on-disk data (scenes, checkpoints).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally invalid file contents (bad magic, version, truncation).
struct FormatError : IoError {
    using IoError::IoError;
};

// Invalid or incomplete configuration; maps to exit code 2 in the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kUnitNormTol = 1e-6;

// splitmix64 finalizer; used to derive independent seed streams so that
// consumers drawing from one stream cannot perturb another.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return mix_seed(base ^ mix_seed(stream));
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

// FNV-1a, used for config hashing and deterministic point splits.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline bool is_unit(const Vec& v, double tol = kUnitNormTol) {
    return std::abs(v.norm() - 1.0) <= tol;
}

inline Vec l2_normalized(const Vec& v) {
    const double n = v.norm();
    if (n == 0.0) throw std::invalid_argument("l2_normalized: zero vector");
    return v / n;
}

inline double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace vmfd
