#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "dpflab/numerics/linalg.hpp"
#include "dpflab/numerics/matrix.hpp"

namespace dpflab {

// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based generator: the i-th draw of stream `key` is mix64(key + i * gamma),
// so streams can be split off deterministically (one per rollout) and every
// draw is reproducible from (key, counter) alone. Normals use Marsaglia's polar
// method.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const noexcept { return key_; }

    // Independent child stream, e.g. rollout index r.
    CounterRng split(std::uint64_t stream) const { return CounterRng(mix64(key_ ^ mix64(stream + 0x632be59bd9b4e019ULL))); }

    std::uint64_t next_u64() { return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    // Uniform on the open interval (0, 1), 53 random bits.
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (spare_) {
            const double s = *spare_;
            spare_.reset();
            return s;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        return u * f;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

// Samples N(0, cov) as F z with F F' = cov (zero pivots allowed, so singular
// covariances such as W = sigma^2 e1 e1' work).
class GaussianVector {
public:
    explicit GaussianVector(const Matrix& cov) : factor_(numerics::psd_factor(cov)), zero_(cov.all_zero()) {}

    Matrix sample(CounterRng& rng) const {
        const std::size_t n = factor_.rows();
        if (zero_) return Matrix(n, 1);
        Matrix z(n, 1);
        for (std::size_t i = 0; i < n; ++i) z(i, 0) = rng.normal();
        return factor_ * z;
    }

private:
    Matrix factor_;
    bool zero_;
};

}  // namespace dpflab
