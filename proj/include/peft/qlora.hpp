#pragma once

#include <cstddef>
#include <span>
#include <variant>

#include "peft/adalora.hpp"
#include "peft/errors.hpp"
#include "peft/lora.hpp"
#include "peft/matrix.hpp"
#include "peft/quantize.hpp"

namespace peft {

/// A linear layer whose base weight lives in quantized form and stays frozen;
/// only the attached adapter (if any) carries trainable parameters. The base
/// is dequantized on demand for compute and is never updated.
struct QuantizedLinear {
    QuantizedTensor w_q;
    std::variant<std::monostate, LoraAdapter, AdaLoraAdapter> adapter;
};

namespace detail {

template <typename T>
void check_linear_shapes(const BasicMatrix<T>& x, const BasicMatrix<T>& w,
                         const BasicMatrix<T>& upstream) {
    if (x.cols() != w.rows()) {
        throw ShapeError("qlora: input " + x.shape_str() + " vs weight " + w.shape_str());
    }
    if (upstream.rows() != x.rows() || upstream.cols() != w.cols()) {
        throw ShapeError("qlora: upstream gradient " + upstream.shape_str() +
                         " does not match output (" + std::to_string(x.rows()) + "x" +
                         std::to_string(w.cols()) + ")");
    }
}

} // namespace detail

/// y = x * dequantize(w_q) + adapter contribution.
inline Matrix qlora_forward(const Matrix& x, const QuantizedLinear& layer) {
    const Matrix w = dequantize(layer.w_q);
    if (std::holds_alternative<LoraAdapter>(layer.adapter)) {
        return lora_forward(x, w, std::get<LoraAdapter>(layer.adapter));
    }
    if (std::holds_alternative<AdaLoraAdapter>(layer.adapter)) {
        return adalora_forward(x, w, std::get<AdaLoraAdapter>(layer.adapter));
    }
    return matmul(x, w);
}

/// Gradients of a scalar loss through y = x*W + (x*A)*B with respect to the
/// adapter factors and the input. W receives no gradient by construction:
/// there is no field for one and nothing here touches stored codes.
template <typename T>
struct BasicLoraGrads {
    BasicMatrix<T> grad_a;      // n x r
    BasicMatrix<T> grad_b;      // r x k
    BasicMatrix<T> input_grad;  // m x n
};

using LoraGrads = BasicLoraGrads<float>;

template <typename T>
BasicLoraGrads<T> lora_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& w,
                                const BasicLoraAdapter<T>& ad,
                                const BasicMatrix<T>& upstream) {
    detail::check_linear_shapes(x, w, upstream);
    const BasicMatrix<T> g_bt = matmul(upstream, transpose(ad.b));  // m x r
    BasicLoraGrads<T> grads;
    grads.grad_a = matmul(transpose(x), g_bt);
    grads.grad_b = matmul(transpose(matmul(x, ad.a)), upstream);
    grads.input_grad = add(matmul(upstream, transpose(w)), matmul(g_bt, transpose(ad.a)));
    return grads;
}

inline LoraGrads qlora_backward(const Matrix& x, const QuantizedTensor& w_q,
                                const LoraAdapter& ad, const Matrix& upstream) {
    return lora_backward(x, dequantize(w_q), ad, upstream);
}

/// Task-loss gradients for the P * diag(lambda) * Q adapter. The
/// orthogonality-penalty gradients are a separate additive term supplied by
/// penalty_grad_p / penalty_grad_q.
template <typename T>
struct BasicAdaLoraGrads {
    BasicMatrix<T> grad_p;       // d1 x r
    std::vector<T> grad_lambda;  // r
    BasicMatrix<T> grad_q;       // r x d2
    BasicMatrix<T> input_grad;   // m x d1
};

using AdaLoraGrads = BasicAdaLoraGrads<float>;

template <typename T>
BasicAdaLoraGrads<T> adalora_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& w,
                                      const BasicAdaLoraAdapter<T>& ad,
                                      const BasicMatrix<T>& upstream) {
    detail::check_linear_shapes(x, w, upstream);
    const std::span<const T> lambda(ad.lambda);
    const BasicMatrix<T> u = matmul(x, ad.p);                        // m x r
    const BasicMatrix<T> g_qt = matmul(upstream, transpose(ad.q));   // m x r
    BasicAdaLoraGrads<T> grads;
    grads.grad_q = scale_rows(matmul(transpose(u), upstream), lambda);
    grads.grad_lambda.assign(ad.max_rank(), T(0));
    for (std::size_t i = 0; i < u.rows(); ++i) {
        for (std::size_t j = 0; j < u.cols(); ++j) {
            grads.grad_lambda[j] += u(i, j) * g_qt(i, j);
        }
    }
    const BasicMatrix<T> g_qt_scaled = scale_columns(g_qt, lambda);
    grads.grad_p = matmul(transpose(x), g_qt_scaled);
    grads.input_grad =
        add(matmul(upstream, transpose(w)), matmul(g_qt_scaled, transpose(ad.p)));
    return grads;
}

inline AdaLoraGrads qlora_backward(const Matrix& x, const QuantizedTensor& w_q,
                                   const AdaLoraAdapter& ad, const Matrix& upstream) {
    return adalora_backward(x, dequantize(w_q), ad, upstream);
}

} // namespace peft
