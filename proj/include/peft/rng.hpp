#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "peft/matrix.hpp"

namespace peft {

/// Seeded random source with hand-rolled uniform and Gaussian draws.
///
/// std::mt19937_64 has a fully specified output sequence, but the standard
/// distributions (std::uniform_real_distribution, std::normal_distribution)
/// are implementation-defined. Checkpoints and frozen test values must be
/// bit-stable across toolchains, so the value derivation is spelled out here:
/// uniforms take the top 53 engine bits, Gaussians come from Box-Muller with
/// the spare value cached.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; computes two values per trip and
    /// caches the second.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// rows x cols matrix of N(0, stddev^2) draws in row-major draw order.
template <typename T = float>
BasicMatrix<T> gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    BasicMatrix<T> out(rows, cols);
    for (auto& v : out.data()) v = static_cast<T>(rng.gaussian(0.0, stddev));
    return out;
}

/// rows x cols matrix of U[lo, hi) draws in row-major draw order.
template <typename T = float>
BasicMatrix<T> uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    BasicMatrix<T> out(rows, cols);
    for (auto& v : out.data()) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
    return out;
}

} // namespace peft
