#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace csve {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stream tag (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(derive_seed(seed, stream));
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n) {
    Eigen::VectorXd v(n);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

/// Symmetric Dirichlet sample via normalized Gamma draws.
inline Eigen::VectorXd dirichlet(Rng& rng, Eigen::Index n, double concentration = 1.0) {
    std::gamma_distribution<double> gamma(concentration, 1.0);
    Eigen::VectorXd v(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = gamma(rng);
        total += v[i];
    }
    if (total <= 0.0) {
        v.setConstant(1.0 / static_cast<double>(n));
        return v;
    }
    return v / total;
}

/// Draws an index from a discrete distribution given by nonnegative weights summing to ~1.
template <typename Weights>
std::size_t sample_categorical(Rng& rng, const Weights& probs) {
    const double u = uniform(rng);
    double acc = 0.0;
    const auto n = static_cast<std::size_t>(probs.size());
    for (std::size_t i = 0; i < n; ++i) {
        acc += probs[static_cast<Eigen::Index>(i)];
        if (u < acc) return i;
    }
    // Rounding left u beyond the cumulative sum: fall back to the last positive entry.
    for (std::size_t i = n; i-- > 0;)
        if (probs[static_cast<Eigen::Index>(i)] > 0.0) return i;
    return n - 1;
}

}  // namespace csve
