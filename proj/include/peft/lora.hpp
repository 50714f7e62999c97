#pragma once

#include <cstdint>
#include <string>

#include "peft/errors.hpp"
#include "peft/matrix.hpp"
#include "peft/rng.hpp"

namespace peft {

/// Low-rank adapter for an n x k linear layer: delta = A * B with A (n x r)
/// initialized to zero and B (r x k) Gaussian, so the delta starts exactly
/// zero. No output scaling factor is applied to the delta.
///
/// Templated on the scalar so reference computations can run the identical
/// dataflow at double precision; the product type is BasicLoraAdapter<float>.
template <typename T = float>
struct BasicLoraAdapter {
    BasicMatrix<T> a;  // n x r, zero at init
    BasicMatrix<T> b;  // r x k, N(0, sigma^2) at init
    std::size_t rank = 0;
    T init_sigma = T{0};

    std::size_t n() const { return a.rows(); }
    std::size_t k() const { return b.cols(); }

    template <typename U>
    BasicLoraAdapter<U> cast() const {
        return BasicLoraAdapter<U>{a.template cast<U>(), b.template cast<U>(), rank,
                                   static_cast<U>(init_sigma)};
    }
};

using LoraAdapter = BasicLoraAdapter<float>;

/// A = 0 (n x r), B ~ N(0, sigma^2) (r x k) from a seeded generator; the
/// initial delta A*B is exactly the zero matrix.
inline LoraAdapter init_lora(std::size_t n, std::size_t k, std::size_t r, float sigma,
                             std::uint64_t seed) {
    if (r < 1 || r > std::min(n, k)) {
        throw ShapeError("init_lora: rank " + std::to_string(r) + " outside [1, min(" +
                         std::to_string(n) + ", " + std::to_string(k) + ")]");
    }
    if (!(sigma > 0.0f)) {
        throw ShapeError("init_lora: sigma must be > 0, got " + std::to_string(sigma));
    }
    LoraAdapter ad;
    ad.rank = r;
    ad.init_sigma = sigma;
    ad.a = Matrix(n, r);
    Rng rng(seed);
    ad.b = gaussian_matrix(rng, r, k, sigma);
    return ad;
}

/// Adapter contribution (x*A)*B, computed factored — the n x k delta matrix
/// is never materialized.
template <typename T>
BasicMatrix<T> lora_delta_forward(const BasicMatrix<T>& x, const BasicLoraAdapter<T>& ad) {
    return matmul(matmul(x, ad.a), ad.b);
}

/// y = x*W + (x*A)*B.
template <typename T>
BasicMatrix<T> lora_forward(const BasicMatrix<T>& x, const BasicMatrix<T>& w,
                            const BasicLoraAdapter<T>& ad) {
    if (x.cols() != w.rows()) {
        throw ShapeError("lora_forward: input " + x.shape_str() + " vs weight " + w.shape_str());
    }
    if (ad.a.rows() != w.rows() || ad.b.cols() != w.cols()) {
        throw ShapeError("lora_forward: adapter " + ad.a.shape_str() + "*" + ad.b.shape_str() +
                         " does not match weight " + w.shape_str());
    }
    return add(matmul(x, w), lora_delta_forward(x, ad));
}

/// Full-to-adapter trainable-parameter ratio n*k / ((n+k)*r).
inline double param_ratio(std::size_t n, std::size_t k, std::size_t r) {
    if (n == 0 || k == 0 || r == 0) {
        throw ShapeError("param_ratio: all arguments must be positive");
    }
    return static_cast<double>(n) * static_cast<double>(k) /
           (static_cast<double>(n + k) * static_cast<double>(r));
}

} // namespace peft
