#pragma once

#include <cmath>
#include <cstddef>

#include "peft/errors.hpp"
#include "peft/matrix.hpp"

namespace peft {

/// Row-wise softmax with max-subtraction for stability.
template <typename T>
BasicMatrix<T> row_softmax(const BasicMatrix<T>& logits) {
    BasicMatrix<T> out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        T row_max = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > row_max) row_max = logits(i, j);
        }
        T denom = T{0};
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            out(i, j) = std::exp(logits(i, j) - row_max);
            denom += out(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

/// Scaled dot-product self-attention: softmax(Q Kᵀ / sqrt(d_k)) V with
/// Q = X·Wq, K = X·Wk, V = X·Wv.
///
/// `weights_out`, when non-null, receives the post-softmax attention weight
/// matrix (rows sum to 1) — a test hook, not part of the data path.
template <typename T>
BasicMatrix<T> self_attention(const BasicMatrix<T>& x, const BasicMatrix<T>& wq,
                              const BasicMatrix<T>& wk, const BasicMatrix<T>& wv,
                              BasicMatrix<T>* weights_out = nullptr) {
    if (x.cols() != wq.rows() || x.cols() != wk.rows() || x.cols() != wv.rows()) {
        throw ShapeError("self_attention: input " + x.shape_str() + " does not match projections " +
                         wq.shape_str() + ", " + wk.shape_str() + ", " + wv.shape_str());
    }
    if (wq.cols() != wk.cols()) {
        throw ShapeError("self_attention: query dim " + wq.shape_str() + " != key dim " +
                         wk.shape_str());
    }
    const BasicMatrix<T> q = matmul(x, wq);
    const BasicMatrix<T> k = matmul(x, wk);
    const BasicMatrix<T> v = matmul(x, wv);
    const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(wq.cols())));
    const BasicMatrix<T> logits = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    const BasicMatrix<T> weights = row_softmax(logits);
    if (weights_out != nullptr) *weights_out = weights;
    return matmul(weights, v);
}

} // namespace peft
