#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "peft/adalora.hpp"
#include "peft/errors.hpp"
#include "peft/model.hpp"
#include "peft/quantize.hpp"

namespace peft {

/// Everything a desk-scale run needs. Budget fields left at kUnset fall back
/// to the adapter rank (a constant budget, i.e. no pruning pressure).
struct RunConfig {
    static constexpr std::size_t kUnset = static_cast<std::size_t>(-1);

    std::uint64_t seed = 0;
    std::size_t d_model = 16;
    std::size_t d_k = 8;
    std::size_t seq_len = 8;
    std::size_t n_examples = 64;
    std::size_t batch_size = 8;
    std::size_t steps = 100;
    float eta = 1e-3f;

    AdapterKind adapter = AdapterKind::none;
    std::vector<std::string> targets = {"q", "k", "v"};
    std::size_t rank = 4;
    float sigma = 0.02f;
    float gamma = 0.0f;
    std::size_t b_init = kUnset;
    std::size_t b_final = kUnset;
    std::size_t warmup_steps = 0;

    QuantKind quant = QuantKind::none;
    QuantMode quant_mode = QuantMode::symmetric;
    bool quant_mode_explicit = false;
    std::size_t block_size = 64;
    bool double_quant = false;
    std::size_t super_block = 256;

    bool train_head = false;
};

inline BudgetSchedule budget_schedule(const RunConfig& cfg) {
    const std::size_t bi = cfg.b_init == RunConfig::kUnset ? cfg.rank : cfg.b_init;
    const std::size_t bf = cfg.b_final == RunConfig::kUnset ? bi : cfg.b_final;
    return BudgetSchedule{bi, bf, cfg.warmup_steps, cfg.steps};
}

inline void validate_config(const RunConfig& cfg) {
    if (cfg.d_model < 1) {
        throw ConfigError("config.d_model: must be >= 1");
    }
    if (cfg.d_k < 1) {
        throw ConfigError("config.d_k: must be >= 1");
    }
    if (cfg.seq_len < 1) {
        throw ConfigError("config.seq_len: must be >= 1");
    }
    if (cfg.n_examples < 5) {
        throw ConfigError("config.n_examples: must be >= 5 for an 80/20 split");
    }
    const std::size_t n_train = cfg.n_examples * 4 / 5;
    if (cfg.batch_size < 1 || cfg.batch_size > n_train) {
        throw ConfigError("config.batch_size: must be in [1, " + std::to_string(n_train) +
                          "] for " + std::to_string(cfg.n_examples) + " examples");
    }
    if (cfg.steps < 1) {
        throw ConfigError("config.steps: must be >= 1");
    }
    if (!(cfg.eta > 0.0f) || !std::isfinite(cfg.eta)) {
        throw ConfigError("config.eta: must be positive and finite");
    }
    if (cfg.adapter != AdapterKind::none) {
        if (cfg.rank < 1 || cfg.rank > std::min(cfg.d_model, cfg.d_k)) {
            throw ConfigError("config.rank: must be in [1, min(d_model, d_k)]");
        }
        if (cfg.targets.empty()) {
            throw ConfigError("config.targets: must name at least one of q, k, v");
        }
        bool seen[3] = {false, false, false};
        for (const std::string& t : cfg.targets) {
            const int idx = t == "q" ? 0 : t == "k" ? 1 : t == "v" ? 2 : -1;
            if (idx < 0) {
                throw ConfigError("config.targets: unknown target \"" + t + "\"");
            }
            if (seen[idx]) {
                throw ConfigError("config.targets: duplicate target \"" + t + "\"");
            }
            seen[idx] = true;
        }
    }
    if (cfg.adapter == AdapterKind::lora && !(cfg.sigma > 0.0f)) {
        throw ConfigError("config.sigma: must be > 0");
    }
    if (cfg.adapter == AdapterKind::adalora) {
        if (cfg.gamma < 0.0f) {
            throw ConfigError("config.gamma: must be >= 0");
        }
        const BudgetSchedule sched = budget_schedule(cfg);
        if (sched.b_init > cfg.rank) {
            throw ConfigError("config.b_init: exceeds rank");
        }
        if (sched.b_final > sched.b_init) {
            throw ConfigError("config.b_final: exceeds b_init");
        }
        if (sched.warmup_steps > sched.total_steps) {
            throw ConfigError("config.warmup_steps: exceeds steps");
        }
    }
    if (cfg.quant != QuantKind::none && cfg.block_size < 1) {
        throw ConfigError("config.block_size: must be >= 1");
    }
    if (cfg.quant == QuantKind::nf4 && cfg.quant_mode_explicit) {
        throw ConfigError("config.quant_mode: the nf4 codec has a fixed codebook and no mode");
    }
    if (cfg.double_quant && cfg.super_block < 1) {
        throw ConfigError("config.super_block: must be >= 1");
    }
}

namespace detail {

inline QuantizedTensor quantize_base(const RunConfig& cfg, const Matrix& w) {
    switch (cfg.quant) {
        case QuantKind::int8:
            return quantize_blockwise_affine(w, 8, cfg.quant_mode, cfg.block_size,
                                             cfg.double_quant, cfg.super_block);
        case QuantKind::int4:
            return quantize_blockwise_affine(w, 4, cfg.quant_mode, cfg.block_size,
                                             cfg.double_quant, cfg.super_block);
        case QuantKind::nf4:
            return quantize_nf4(w, cfg.block_size, cfg.double_quant, cfg.super_block);
        case QuantKind::none:
        default:
            throw ShapeError("quantize_base: no codec configured");
    }
}

} // namespace detail

/// Student model from explicit weights: bases are quantized per the config
/// (and the dense copies dropped), then adapters are attached.
inline AdapterizedModel build_student(const RunConfig& cfg, Matrix embedding, Matrix wq,
                                      Matrix wk, Matrix wv, Matrix head) {
    AdapterizedModel m;
    m.embedding = std::move(embedding);
    m.head = std::move(head);
    m.head_trainable = cfg.train_head;
    m.proj_q.w = std::move(wq);
    m.proj_k.w = std::move(wk);
    m.proj_v.w = std::move(wv);
    if (cfg.quant != QuantKind::none) {
        for (ProjectionLayer* layer : {&m.proj_q, &m.proj_k, &m.proj_v}) {
            layer->w_q = detail::quantize_base(cfg, layer->w);
            layer->w = Matrix();
        }
    }
    if (cfg.adapter != AdapterKind::none) {
        AdapterSpec spec;
        spec.kind = cfg.adapter;
        spec.rank = cfg.rank;
        spec.sigma = cfg.sigma;
        spec.gamma = cfg.gamma;
        spec.seed = cfg.seed + 1000;
        attach_adapters(m, spec, cfg.targets);
    }
    return m;
}

inline AdapterizedModel build_student(const RunConfig& cfg, const ToyTask& task) {
    return build_student(cfg, task.teacher.embedding, task.base_wq, task.base_wk, task.base_wv,
                         task.teacher.head);
}

/// Student-shaped model with seeded Gaussian weights and no task attached;
/// enough structure for storage/parameter accounting.
inline AdapterizedModel build_report_model(const RunConfig& cfg) {
    Rng rng(cfg.seed);
    const float emb_std = 1.0f / std::sqrt(static_cast<float>(cfg.d_model));
    const float head_std = 1.0f / std::sqrt(static_cast<float>(cfg.d_k));
    Matrix embedding = gaussian_matrix(rng, cfg.d_model, cfg.d_model, emb_std);
    Matrix wq = gaussian_matrix(rng, cfg.d_model, cfg.d_k, emb_std);
    Matrix wk = gaussian_matrix(rng, cfg.d_model, cfg.d_k, emb_std);
    Matrix wv = gaussian_matrix(rng, cfg.d_model, cfg.d_k, emb_std);
    Matrix head = gaussian_matrix(rng, cfg.d_k, cfg.d_model, head_std);
    return build_student(cfg, std::move(embedding), std::move(wq), std::move(wk), std::move(wv),
                         std::move(head));
}

struct TrainReport {
    std::vector<float> loss_curve;  // total loss (task MSE + penalty) per step
    float final_loss = 0.0f;
    float val_loss = 0.0f;          // task MSE on the held-out split
    std::size_t trainable_params = 0;
    std::size_t total_params = 0;
    double compression_ratio = 1.0;
    double ms_per_step = 0.0;
};

struct TrainResult {
    AdapterizedModel model;
    TrainReport report;
};

/// Called after each optimizer step with the just-updated model.
using StepObserver =
    std::function<void(std::size_t step, const AdapterizedModel& model, float loss)>;

namespace detail {

template <typename T>
void accumulate(BasicMatrix<T>& acc, const BasicMatrix<T>& g) {
    if (acc.rows() == 0) {
        acc = g;
    } else {
        acc = add(acc, g);
    }
}

template <typename T>
void accumulate(BasicProjectionGrads<T>& acc, const BasicProjectionGrads<T>& g) {
    acc.kind = g.kind;
    if (g.kind == AdapterKind::lora) {
        accumulate(acc.grad_a, g.grad_a);
        accumulate(acc.grad_b, g.grad_b);
    } else if (g.kind == AdapterKind::adalora) {
        accumulate(acc.grad_p, g.grad_p);
        accumulate(acc.grad_qf, g.grad_qf);
        if (acc.grad_lambda.empty()) {
            acc.grad_lambda = g.grad_lambda;
        } else {
            for (std::size_t i = 0; i < acc.grad_lambda.size(); ++i) {
                acc.grad_lambda[i] += g.grad_lambda[i];
            }
        }
    }
}

template <typename T>
void scale_grads(BasicProjectionGrads<T>& g, T factor) {
    if (g.kind == AdapterKind::lora) {
        g.grad_a = scale(g.grad_a, factor);
        g.grad_b = scale(g.grad_b, factor);
    } else if (g.kind == AdapterKind::adalora) {
        g.grad_p = scale(g.grad_p, factor);
        g.grad_qf = scale(g.grad_qf, factor);
        for (T& v : g.grad_lambda) {
            v *= factor;
        }
    }
}

inline void apply_sgd(ProjectionLayer& layer, const ProjectionGrads& g, float eta,
                      const BudgetSchedule& sched, std::size_t t) {
    if (g.kind == AdapterKind::lora) {
        LoraAdapter& ad = std::get<LoraAdapter>(layer.adapter);
        for (std::size_t i = 0; i < ad.a.rows(); ++i) {
            for (std::size_t j = 0; j < ad.a.cols(); ++j) {
                ad.a(i, j) -= eta * g.grad_a(i, j);
            }
        }
        for (std::size_t i = 0; i < ad.b.rows(); ++i) {
            for (std::size_t j = 0; j < ad.b.cols(); ++j) {
                ad.b(i, j) -= eta * g.grad_b(i, j);
            }
        }
    } else if (g.kind == AdapterKind::adalora) {
        AdaLoraAdapter& ad = std::get<AdaLoraAdapter>(layer.adapter);
        for (std::size_t i = 0; i < ad.p.rows(); ++i) {
            for (std::size_t j = 0; j < ad.p.cols(); ++j) {
                ad.p(i, j) -= eta * g.grad_p(i, j);
            }
        }
        for (std::size_t i = 0; i < ad.q.rows(); ++i) {
            for (std::size_t j = 0; j < ad.q.cols(); ++j) {
                ad.q(i, j) -= eta * g.grad_qf(i, j);
            }
        }
        ad.lambda = lambda_sgd_step(ad.lambda, g.grad_lambda, eta, sched, t);
    }
}

/// Runs `nsteps` SGD steps starting at step index `begin`. Each step sees
/// batch_size training examples in a fixed round-robin order, so two runs of
/// the same config replay the identical sequence of floating-point work.
inline void run_training_steps(const RunConfig& cfg, AdapterizedModel& model,
                               const ToyTask& task, const BudgetSchedule& sched,
                               std::size_t begin, std::size_t nsteps, std::vector<float>* curve,
                               const StepObserver& observer) {
    const std::size_t n_train = task.train_inputs.size();
    for (std::size_t step = begin; step < begin + nsteps; ++step) {
        const ModelCompute<float> mc = compute_view(model);
        ModelGrads acc;
        double task_loss_sum = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx = (step * cfg.batch_size + b) % n_train;
            ForwardTrace trace;
            model_forward(mc, task.train_inputs[idx], &trace);
            task_loss_sum +=
                static_cast<double>(mse_loss(trace.output, task.train_targets[idx]));
            const ModelGrads g = model_backward(mc, task.train_inputs[idx],
                                                task.train_targets[idx], trace,
                                                /*include_penalty=*/false);
            accumulate(acc.q, g.q);
            accumulate(acc.k, g.k);
            accumulate(acc.v, g.v);
            accumulate(acc.head_grad, g.head_grad);
        }
        const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
        scale_grads(acc.q, inv_batch);
        scale_grads(acc.k, inv_batch);
        scale_grads(acc.v, inv_batch);
        acc.head_grad = scale(acc.head_grad, inv_batch);

        // The penalty term enters once per step, not once per example.
        const ProjectionCompute<float>* mcs[3] = {&mc.q, &mc.k, &mc.v};
        ProjectionGrads* accs[3] = {&acc.q, &acc.k, &acc.v};
        for (int i = 0; i < 3; ++i) {
            if (mcs[i]->kind == AdapterKind::adalora) {
                accs[i]->grad_p = add(accs[i]->grad_p, penalty_grad_p(mcs[i]->ada));
                accs[i]->grad_qf = add(accs[i]->grad_qf, penalty_grad_q(mcs[i]->ada));
            }
        }

        const float loss =
            static_cast<float>(task_loss_sum / static_cast<double>(cfg.batch_size)) +
            model_penalty(mc);
        if (!std::isfinite(loss)) {
            throw TrainingError("train: non-finite loss at step " + std::to_string(step));
        }
        if (curve != nullptr) {
            curve->push_back(loss);
        }

        apply_sgd(model.proj_q, acc.q, cfg.eta, sched, step + 1);
        apply_sgd(model.proj_k, acc.k, cfg.eta, sched, step + 1);
        apply_sgd(model.proj_v, acc.v, cfg.eta, sched, step + 1);
        if (model.head_trainable) {
            for (std::size_t i = 0; i < model.head.rows(); ++i) {
                for (std::size_t j = 0; j < model.head.cols(); ++j) {
                    model.head(i, j) -= cfg.eta * acc.head_grad(i, j);
                }
            }
        }
        if (observer) {
            observer(step, model, loss);
        }
    }
}

} // namespace detail

/// Mean task MSE of the model on the held-out split.
inline float validation_loss(const AdapterizedModel& model, const ToyTask& task) {
    const ModelCompute<float> mc = compute_view(model);
    double total = 0.0;
    for (std::size_t i = 0; i < task.val_inputs.size(); ++i) {
        total += static_cast<double>(
            mse_loss(model_forward(mc, task.val_inputs[i]), task.val_targets[i]));
    }
    return static_cast<float>(total / static_cast<double>(task.val_inputs.size()));
}

/// Dense bytes over stored bytes for the frozen projection bases; 1.0 when
/// nothing is quantized.
inline double frozen_compression_ratio(const AdapterizedModel& m) {
    std::size_t dense = 0;
    std::size_t stored = 0;
    for (const ProjectionLayer* layer : {&m.proj_q, &m.proj_k, &m.proj_v}) {
        if (layer->w_q.has_value()) {
            dense += layer->w_q->elements() * sizeof(float);
            stored += storage_report(*layer->w_q).total_bytes;
        }
    }
    if (stored == 0) {
        return 1.0;
    }
    return static_cast<double>(dense) / static_cast<double>(stored);
}

/// Full fine-tuning run: build the toy task and student from the seed, run
/// SGD, and report the loss curve plus parameter and storage accounting.
inline TrainResult train(const RunConfig& cfg, const StepObserver& observer = {}) {
    validate_config(cfg);
    const ToyTask task =
        make_toy_task(cfg.seed, cfg.d_model, cfg.d_k, cfg.seq_len, cfg.n_examples);
    TrainResult result;
    result.model = build_student(cfg, task);
    const BudgetSchedule sched = budget_schedule(cfg);

    const auto start = std::chrono::steady_clock::now();
    detail::run_training_steps(cfg, result.model, task, sched, 0, cfg.steps,
                               &result.report.loss_curve, observer);
    const auto end = std::chrono::steady_clock::now();

    result.report.final_loss = result.report.loss_curve.back();
    result.report.val_loss = validation_loss(result.model, task);
    result.report.trainable_params = trainable_param_count(result.model);
    result.report.total_params = total_param_count(result.model);
    result.report.compression_ratio = frozen_compression_ratio(result.model);
    result.report.ms_per_step =
        std::chrono::duration<double, std::milli>(end - start).count() /
        static_cast<double>(cfg.steps);
    return result;
}

struct AuditReport {
    double max_rel_error = 0.0;
    std::size_t params_checked = 0;
    double epsilon = 0.0;
};

/// Checks every analytic gradient (adapter factors and, if trainable, the
/// head) against central differences of a double-precision replay of the
/// same forward pass. warm_steps > 0 first moves off the all-zero init so
/// the factors see nonzero gradients. Capped at 500 trainable parameters.
inline AuditReport finite_difference_audit(const RunConfig& cfg, double epsilon,
                                           std::size_t warm_steps = 0) {
    validate_config(cfg);
    if (!(epsilon > 0.0)) {
        throw ShapeError("finite_difference_audit: epsilon must be > 0");
    }
    const ToyTask task =
        make_toy_task(cfg.seed, cfg.d_model, cfg.d_k, cfg.seq_len, cfg.n_examples);
    AdapterizedModel model = build_student(cfg, task);
    const std::size_t n_params = trainable_param_count(model);
    if (n_params > 500) {
        throw ShapeError("finite_difference_audit: " + std::to_string(n_params) +
                         " trainable parameters exceed the supported 500");
    }
    const BudgetSchedule sched = budget_schedule(cfg);
    if (warm_steps > 0) {
        detail::run_training_steps(cfg, model, task, sched, 0, warm_steps, nullptr, {});
    }

    // Both sides of the comparison run on the same double-precision lift of the
    // trained parameters: the audit is checking the gradient derivation, and
    // single-precision rounding would otherwise drown the tiny early-training
    // gradients it has to certify.
    ModelCompute<double> lifted = compute_view(model).cast<double>();
    const std::size_t n_train = task.train_inputs.size();
    std::vector<BasicMatrix<double>> xs;
    std::vector<BasicMatrix<double>> ys;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::size_t idx = (warm_steps * cfg.batch_size + b) % n_train;
        xs.push_back(task.train_inputs[idx].cast<double>());
        ys.push_back(task.train_targets[idx].cast<double>());
    }

    // Analytic batch gradient at the current parameters, penalty included.
    BasicModelGrads<double> acc;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        BasicForwardTrace<double> trace;
        model_forward(lifted, xs[i], &trace);
        const BasicModelGrads<double> g =
            model_backward(lifted, xs[i], ys[i], trace, /*include_penalty=*/false);
        detail::accumulate(acc.q, g.q);
        detail::accumulate(acc.k, g.k);
        detail::accumulate(acc.v, g.v);
        detail::accumulate(acc.head_grad, g.head_grad);
    }
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    detail::scale_grads(acc.q, inv_batch);
    detail::scale_grads(acc.k, inv_batch);
    detail::scale_grads(acc.v, inv_batch);
    acc.head_grad = scale(acc.head_grad, inv_batch);
    const ProjectionCompute<double>* mcs[3] = {&lifted.q, &lifted.k, &lifted.v};
    BasicProjectionGrads<double>* accs[3] = {&acc.q, &acc.k, &acc.v};
    for (int i = 0; i < 3; ++i) {
        if (mcs[i]->kind == AdapterKind::adalora) {
            accs[i]->grad_p = add(accs[i]->grad_p, penalty_grad_p(mcs[i]->ada));
            accs[i]->grad_qf = add(accs[i]->grad_qf, penalty_grad_q(mcs[i]->ada));
        }
    }
    const auto batch_loss = [&]() {
        double total = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            total += mse_loss(model_forward(lifted, xs[i]), ys[i]);
        }
        return total / static_cast<double>(xs.size()) + model_penalty(lifted);
    };

    AuditReport report;
    report.epsilon = epsilon;
    const auto check = [&](double& slot, double analytic) {
        const double saved = slot;
        slot = saved + epsilon;
        const double up = batch_loss();
        slot = saved - epsilon;
        const double down = batch_loss();
        slot = saved;
        const double fd = (up - down) / (2.0 * epsilon);
        const double rel = std::fabs(analytic - fd) /
                           std::max({std::fabs(analytic), std::fabs(fd), 1e-6});
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.params_checked;
    };

    ProjectionCompute<double>* lifts[3] = {&lifted.q, &lifted.k, &lifted.v};
    for (int p = 0; p < 3; ++p) {
        const BasicProjectionGrads<double>& g = *accs[p];
        if (g.kind == AdapterKind::lora) {
            auto& ad = lifts[p]->lora;
            for (std::size_t i = 0; i < ad.a.rows(); ++i) {
                for (std::size_t j = 0; j < ad.a.cols(); ++j) {
                    check(ad.a(i, j), g.grad_a(i, j));
                }
            }
            for (std::size_t i = 0; i < ad.b.rows(); ++i) {
                for (std::size_t j = 0; j < ad.b.cols(); ++j) {
                    check(ad.b(i, j), g.grad_b(i, j));
                }
            }
        } else if (g.kind == AdapterKind::adalora) {
            auto& ad = lifts[p]->ada;
            for (std::size_t i = 0; i < ad.p.rows(); ++i) {
                for (std::size_t j = 0; j < ad.p.cols(); ++j) {
                    check(ad.p(i, j), g.grad_p(i, j));
                }
            }
            for (std::size_t i = 0; i < ad.lambda.size(); ++i) {
                check(ad.lambda[i], g.grad_lambda[i]);
            }
            for (std::size_t i = 0; i < ad.q.rows(); ++i) {
                for (std::size_t j = 0; j < ad.q.cols(); ++j) {
                    check(ad.q(i, j), g.grad_qf(i, j));
                }
            }
        }
    }
    if (model.head_trainable) {
        for (std::size_t i = 0; i < lifted.head.rows(); ++i) {
            for (std::size_t j = 0; j < lifted.head.cols(); ++j) {
                check(lifted.head(i, j), acc.head_grad(i, j));
            }
        }
    }
    return report;
}

struct CompressionRow {
    std::string tensor;
    std::string precision;
    std::size_t dense_bytes = 0;
    std::size_t stored_bytes = 0;
    double ratio = 1.0;
};

struct CompressionReport {
    std::vector<CompressionRow> rows;   // one per projection base
    std::size_t frozen_dense_bytes = 0;
    std::size_t frozen_stored_bytes = 0;
    double ratio = 1.0;                 // aggregate over the rows
    std::size_t trainable_params = 0;
    std::size_t total_params = 0;
};

inline const char* quant_kind_name(QuantKind kind) {
    switch (kind) {
        case QuantKind::int8:
            return "int8";
        case QuantKind::int4:
            return "int4";
        case QuantKind::nf4:
            return "nf4";
        case QuantKind::none:
        default:
            return "fp32";
    }
}

/// Storage and parameter accounting for the model a config describes.
inline CompressionReport compression_report(const RunConfig& cfg) {
    validate_config(cfg);
    const AdapterizedModel model = build_report_model(cfg);
    CompressionReport report;
    const char* names[3] = {"wq", "wk", "wv"};
    const ProjectionLayer* layers[3] = {&model.proj_q, &model.proj_k, &model.proj_v};
    for (int i = 0; i < 3; ++i) {
        CompressionRow row;
        row.tensor = names[i];
        row.precision = quant_kind_name(cfg.quant);
        if (layers[i]->w_q.has_value()) {
            const StorageReport sr = storage_report(*layers[i]->w_q);
            row.dense_bytes = layers[i]->w_q->elements() * sizeof(float);
            row.stored_bytes = sr.total_bytes;
        } else {
            row.dense_bytes = layers[i]->w.rows() * layers[i]->w.cols() * sizeof(float);
            row.stored_bytes = row.dense_bytes;
        }
        row.ratio = static_cast<double>(row.dense_bytes) / static_cast<double>(row.stored_bytes);
        report.frozen_dense_bytes += row.dense_bytes;
        report.frozen_stored_bytes += row.stored_bytes;
        report.rows.push_back(std::move(row));
    }
    report.ratio = static_cast<double>(report.frozen_dense_bytes) /
                   static_cast<double>(report.frozen_stored_bytes);
    report.trainable_params = trainable_param_count(model);
    report.total_params = total_param_count(model);
    return report;
}

} // namespace peft
