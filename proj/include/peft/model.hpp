#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "peft/adalora.hpp"
#include "peft/attention.hpp"
#include "peft/errors.hpp"
#include "peft/lora.hpp"
#include "peft/matrix.hpp"
#include "peft/qlora.hpp"
#include "peft/quantize.hpp"
#include "peft/rng.hpp"

namespace peft {

enum class AdapterKind { none, lora, adalora };
enum class QuantKind { none, int8, int4, nf4 };

/// One attention projection in compute form: the base weight is already
/// dense (dequantized if it was stored quantized) so the same code path
/// serves plain and quantized models at any scalar precision.
template <typename T>
struct ProjectionCompute {
    BasicMatrix<T> base;
    AdapterKind kind = AdapterKind::none;
    BasicLoraAdapter<T> lora;
    BasicAdaLoraAdapter<T> ada;

    template <typename U>
    ProjectionCompute<U> cast() const {
        return ProjectionCompute<U>{base.template cast<U>(), kind, lora.template cast<U>(),
                                    ada.template cast<U>()};
    }
};

template <typename T>
BasicMatrix<T> projection_forward(const ProjectionCompute<T>& proj, const BasicMatrix<T>& h) {
    switch (proj.kind) {
        case AdapterKind::lora:
            return lora_forward(h, proj.base, proj.lora);
        case AdapterKind::adalora:
            return adalora_forward(h, proj.base, proj.ada);
        case AdapterKind::none:
        default:
            return matmul(h, proj.base);
    }
}

/// Single-block attention model: token embedding, one self-attention layer
/// with adapter-capable Q/K/V projections, and a dense output head.
template <typename T>
struct ModelCompute {
    BasicMatrix<T> embedding;  // d_model x d_model
    ProjectionCompute<T> q, k, v;
    BasicMatrix<T> head;       // d_k x d_model

    template <typename U>
    ModelCompute<U> cast() const {
        return ModelCompute<U>{embedding.template cast<U>(), q.template cast<U>(),
                               k.template cast<U>(), v.template cast<U>(),
                               head.template cast<U>()};
    }
};

template <typename T>
struct BasicForwardTrace {
    BasicMatrix<T> h, q, k, v, attn, context, output;
};

using ForwardTrace = BasicForwardTrace<float>;

template <typename T>
BasicMatrix<T> model_forward(const ModelCompute<T>& m, const BasicMatrix<T>& x,
                             BasicForwardTrace<T>* trace = nullptr) {
    const BasicMatrix<T> h = matmul(x, m.embedding);
    const BasicMatrix<T> qm = projection_forward(m.q, h);
    const BasicMatrix<T> km = projection_forward(m.k, h);
    const BasicMatrix<T> vm = projection_forward(m.v, h);
    const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(qm.cols())));
    const BasicMatrix<T> logits = scale(matmul(qm, transpose(km)), inv_sqrt_dk);
    const BasicMatrix<T> attn = row_softmax(logits);
    const BasicMatrix<T> context = matmul(attn, vm);
    BasicMatrix<T> output = matmul(context, m.head);
    if (trace != nullptr) {
        trace->h = h;
        trace->q = qm;
        trace->k = km;
        trace->v = vm;
        trace->attn = attn;
        trace->context = context;
        trace->output = output;
    }
    return output;
}

/// Mean squared error over all entries, accumulated in double.
template <typename T>
T mse_loss(const BasicMatrix<T>& y, const BasicMatrix<T>& target) {
    if (y.rows() != target.rows() || y.cols() != target.cols()) {
        throw ShapeError("mse_loss: " + y.shape_str() + " vs " + target.shape_str());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t j = 0; j < y.cols(); ++j) {
            const double r = static_cast<double>(y(i, j)) - static_cast<double>(target(i, j));
            total += r * r;
        }
    }
    return static_cast<T>(total / static_cast<double>(y.rows() * y.cols()));
}

/// Sum of the orthogonality penalties of every AdaLoRA projection.
template <typename T>
T model_penalty(const ModelCompute<T>& m) {
    T total = T{0};
    for (const ProjectionCompute<T>* proj : {&m.q, &m.k, &m.v}) {
        if (proj->kind == AdapterKind::adalora) {
            total += orthogonality_penalty(proj->ada);
        }
    }
    return total;
}

/// Task loss (MSE) plus penalties — the quantity the trainer descends.
template <typename T>
T model_total_loss(const ModelCompute<T>& m, const BasicMatrix<T>& x,
                   const BasicMatrix<T>& target) {
    return mse_loss(model_forward(m, x), target) + model_penalty(m);
}

/// Gradients for the trainable parameters of one projection. Only the slots
/// for the projection's adapter kind are populated; the frozen base has no
/// gradient slot at all.
template <typename T>
struct BasicProjectionGrads {
    AdapterKind kind = AdapterKind::none;
    BasicMatrix<T> grad_a, grad_b;        // lora
    BasicMatrix<T> grad_p, grad_qf;       // adalora factors
    std::vector<T> grad_lambda;           // adalora singular values
};

template <typename T>
struct BasicModelGrads {
    BasicProjectionGrads<T> q, k, v;
    BasicMatrix<T> head_grad;
};

using ProjectionGrads = BasicProjectionGrads<float>;
using ModelGrads = BasicModelGrads<float>;

namespace detail {

template <typename T>
BasicProjectionGrads<T> projection_backward(const ProjectionCompute<T>& proj,
                                            const BasicMatrix<T>& h,
                                            const BasicMatrix<T>& upstream,
                                            bool include_penalty) {
    BasicProjectionGrads<T> grads;
    grads.kind = proj.kind;
    if (proj.kind == AdapterKind::lora) {
        BasicLoraGrads<T> lg = lora_backward(h, proj.base, proj.lora, upstream);
        grads.grad_a = std::move(lg.grad_a);
        grads.grad_b = std::move(lg.grad_b);
    } else if (proj.kind == AdapterKind::adalora) {
        BasicAdaLoraGrads<T> ag = adalora_backward(h, proj.base, proj.ada, upstream);
        grads.grad_p = std::move(ag.grad_p);
        grads.grad_qf = std::move(ag.grad_q);
        grads.grad_lambda = std::move(ag.grad_lambda);
        if (include_penalty) {
            grads.grad_p = add(grads.grad_p, penalty_grad_p(proj.ada));
            grads.grad_qf = add(grads.grad_qf, penalty_grad_q(proj.ada));
        }
    }
    return grads;
}

} // namespace detail

/// Analytic gradients of mse_loss(model_forward(m, x), target) plus (when
/// include_penalty) the orthogonality penalties, for every trainable slot:
/// adapter factors and the output head. Bases and embedding are frozen.
template <typename T>
BasicModelGrads<T> model_backward(const ModelCompute<T>& m, const BasicMatrix<T>& x,
                                  const BasicMatrix<T>& target,
                                  const BasicForwardTrace<T>& trace,
                                  bool include_penalty = true) {
    const std::size_t rows = trace.output.rows();
    const std::size_t cols = trace.output.cols();
    BasicMatrix<T> g_out(rows, cols);
    const T norm = T(2) / static_cast<T>(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            g_out(i, j) = norm * (trace.output(i, j) - target(i, j));
        }
    }

    BasicModelGrads<T> grads;
    grads.head_grad = matmul(transpose(trace.context), g_out);
    const BasicMatrix<T> g_context = matmul(g_out, transpose(m.head));
    const BasicMatrix<T> g_attn = matmul(g_context, transpose(trace.v));
    const BasicMatrix<T> g_v = matmul(transpose(trace.attn), g_context);

    // Row-softmax backward: g_logits = attn ⊙ (g_attn − rowdot(g_attn, attn)).
    BasicMatrix<T> g_logits(trace.attn.rows(), trace.attn.cols());
    for (std::size_t i = 0; i < trace.attn.rows(); ++i) {
        T row_dot = T(0);
        for (std::size_t j = 0; j < trace.attn.cols(); ++j) {
            row_dot += g_attn(i, j) * trace.attn(i, j);
        }
        for (std::size_t j = 0; j < trace.attn.cols(); ++j) {
            g_logits(i, j) = trace.attn(i, j) * (g_attn(i, j) - row_dot);
        }
    }
    const T inv_sqrt_dk =
        static_cast<T>(1.0 / std::sqrt(static_cast<double>(trace.q.cols())));
    const BasicMatrix<T> g_logits_scaled = scale(g_logits, inv_sqrt_dk);
    const BasicMatrix<T> g_q = matmul(g_logits_scaled, trace.k);
    const BasicMatrix<T> g_k = matmul(transpose(g_logits_scaled), trace.q);

    grads.q = detail::projection_backward(m.q, trace.h, g_q, include_penalty);
    grads.k = detail::projection_backward(m.k, trace.h, g_k, include_penalty);
    grads.v = detail::projection_backward(m.v, trace.h, g_v, include_penalty);
    return grads;
}

/// Product-form projection: the base weight is either dense (w) or a frozen
/// quantized tensor (w_q); at most one adapter is attached.
struct ProjectionLayer {
    Matrix w;
    std::optional<QuantizedTensor> w_q;
    std::variant<std::monostate, LoraAdapter, AdaLoraAdapter> adapter;

    Matrix base_dense() const { return w_q.has_value() ? dequantize(*w_q) : w; }

    AdapterKind kind() const {
        if (std::holds_alternative<LoraAdapter>(adapter)) {
            return AdapterKind::lora;
        }
        if (std::holds_alternative<AdaLoraAdapter>(adapter)) {
            return AdapterKind::adalora;
        }
        return AdapterKind::none;
    }
};

/// Attention model with bookkeeping: embedding and projection bases are
/// always frozen; adapters train; the head trains iff head_trainable.
struct AdapterizedModel {
    Matrix embedding;
    ProjectionLayer proj_q, proj_k, proj_v;
    Matrix head;
    bool head_trainable = false;
};

/// Dense compute view of the product model; quantized bases are dequantized
/// here, once per call, and the result carries no link back to the codes.
inline ModelCompute<float> compute_view(const AdapterizedModel& m) {
    ModelCompute<float> mc;
    mc.embedding = m.embedding;
    mc.head = m.head;
    ProjectionCompute<float>* outs[3] = {&mc.q, &mc.k, &mc.v};
    const ProjectionLayer* ins[3] = {&m.proj_q, &m.proj_k, &m.proj_v};
    for (int i = 0; i < 3; ++i) {
        outs[i]->base = ins[i]->base_dense();
        outs[i]->kind = ins[i]->kind();
        if (outs[i]->kind == AdapterKind::lora) {
            outs[i]->lora = std::get<LoraAdapter>(ins[i]->adapter);
        } else if (outs[i]->kind == AdapterKind::adalora) {
            outs[i]->ada = std::get<AdaLoraAdapter>(ins[i]->adapter);
        }
    }
    return mc;
}

/// How attach_adapters builds each adapter.
struct AdapterSpec {
    AdapterKind kind = AdapterKind::none;
    std::size_t rank = 4;
    float sigma = 0.02f;   // lora init spread
    float gamma = 0.0f;    // adalora penalty weight
    std::uint64_t seed = 0;
};

/// Attach one fresh adapter per named target ("q", "k", "v"). Targets must
/// be distinct members of that set; anything else is an argument error.
/// Seeds are offset per target so factors differ across projections.
inline void attach_adapters(AdapterizedModel& m, const AdapterSpec& spec,
                            const std::vector<std::string>& targets) {
    if (spec.kind == AdapterKind::none) {
        throw ShapeError("attach_adapters: adapter kind is none");
    }
    if (targets.empty()) {
        throw ShapeError("attach_adapters: no targets given");
    }
    bool seen[3] = {false, false, false};
    for (const std::string& t : targets) {
        int idx = -1;
        if (t == "q") {
            idx = 0;
        } else if (t == "k") {
            idx = 1;
        } else if (t == "v") {
            idx = 2;
        } else {
            throw ShapeError("attach_adapters: unknown target \"" + t +
                             "\" (expected q, k, or v)");
        }
        if (seen[idx]) {
            throw ShapeError("attach_adapters: duplicate target \"" + t + "\"");
        }
        seen[idx] = true;
        ProjectionLayer& layer = idx == 0 ? m.proj_q : idx == 1 ? m.proj_k : m.proj_v;
        const Matrix base = layer.base_dense();
        const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(idx);
        if (spec.kind == AdapterKind::lora) {
            layer.adapter = init_lora(base.rows(), base.cols(), spec.rank, spec.sigma, seed);
        } else {
            layer.adapter =
                init_adalora(base.rows(), base.cols(), spec.rank, spec.gamma, seed);
        }
    }
}

inline std::size_t adapter_param_count(const ProjectionLayer& layer) {
    if (const auto* lora = std::get_if<LoraAdapter>(&layer.adapter)) {
        return lora->rank * (lora->n() + lora->k());
    }
    if (const auto* ada = std::get_if<AdaLoraAdapter>(&layer.adapter)) {
        return ada->max_rank() * (ada->d1() + ada->d2() + 1);
    }
    return 0;
}

inline std::size_t trainable_param_count(const AdapterizedModel& m) {
    std::size_t total = adapter_param_count(m.proj_q) + adapter_param_count(m.proj_k) +
                        adapter_param_count(m.proj_v);
    if (m.head_trainable) {
        total += m.head.rows() * m.head.cols();
    }
    return total;
}

inline std::size_t total_param_count(const AdapterizedModel& m) {
    const auto base_elems = [](const ProjectionLayer& layer) {
        return layer.w_q.has_value() ? layer.w_q->elements() : layer.w.rows() * layer.w.cols();
    };
    return m.embedding.rows() * m.embedding.cols() + base_elems(m.proj_q) +
           base_elems(m.proj_k) + base_elems(m.proj_v) + m.head.rows() * m.head.cols() +
           adapter_param_count(m.proj_q) + adapter_param_count(m.proj_k) +
           adapter_param_count(m.proj_v);
}

/// Synthetic attention regression task. A hidden teacher shares every weight
/// with the student base except W^V, which carries an extra rank-2
/// perturbation scaled to half the Frobenius norm of the base W^V — so a
/// rank >= 2 adapter on the value projection can close the gap. Weights are
/// drawn with spread 1/sqrt(fan-in); targets are teacher outputs.
struct ToyTask {
    ModelCompute<float> teacher;
    Matrix base_wq, base_wk, base_wv;  // student bases (W^V unperturbed)
    std::vector<Matrix> train_inputs, train_targets;
    std::vector<Matrix> val_inputs, val_targets;
};

inline ToyTask make_toy_task(std::uint64_t seed, std::size_t d_model, std::size_t d_k,
                             std::size_t seq_len, std::size_t n_examples = 64) {
    if (d_model == 0 || d_k == 0 || seq_len == 0 || n_examples < 5) {
        throw ShapeError("make_toy_task: dims and example count must be positive (>= 5 examples)");
    }
    Rng rng(seed);
    const float emb_std = 1.0f / std::sqrt(static_cast<float>(d_model));
    const float head_std = 1.0f / std::sqrt(static_cast<float>(d_k));

    ToyTask task;
    task.teacher.embedding = gaussian_matrix(rng, d_model, d_model, emb_std);
    task.base_wq = gaussian_matrix(rng, d_model, d_k, emb_std);
    task.base_wk = gaussian_matrix(rng, d_model, d_k, emb_std);
    task.base_wv = gaussian_matrix(rng, d_model, d_k, emb_std);
    task.teacher.head = gaussian_matrix(rng, d_k, d_model, head_std);

    const Matrix pert_u = gaussian_matrix(rng, d_model, 2, 1.0f);
    const Matrix pert_v = gaussian_matrix(rng, 2, d_k, 1.0f);
    Matrix pert = matmul(pert_u, pert_v);
    const double base_norm = frobenius_norm(task.base_wv);
    const double pert_norm = frobenius_norm(pert);
    if (pert_norm > 0.0) {
        pert = scale(pert, static_cast<float>(0.5 * base_norm / pert_norm));
    }

    task.teacher.q.base = task.base_wq;
    task.teacher.k.base = task.base_wk;
    task.teacher.v.base = add(task.base_wv, pert);

    const std::size_t n_train = n_examples * 4 / 5;
    for (std::size_t i = 0; i < n_examples; ++i) {
        Matrix x = gaussian_matrix(rng, seq_len, d_model, 1.0f);
        Matrix y = model_forward(task.teacher, x);
        if (i < n_train) {
            task.train_inputs.push_back(std::move(x));
            task.train_targets.push_back(std::move(y));
        } else {
            task.val_inputs.push_back(std::move(x));
            task.val_targets.push_back(std::move(y));
        }
    }
    return task;
}

} // namespace peft
