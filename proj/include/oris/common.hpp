#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace oris {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Dimension or shape contract broken by the caller.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong order (e.g. backward before forward).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A state handed to an environment that cannot be mapped onto its state space.
class InvalidStateError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// NaN or infinity produced during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Configuration, schema or file-format problem.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// SplitMix64 finalizer; used to derive independent RNG streams from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    return Rng(derive_seed(seed, stream));
}

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace oris
