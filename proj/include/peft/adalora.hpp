#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "peft/errors.hpp"
#include "peft/matrix.hpp"
#include "peft/rng.hpp"
#include "peft/svd.hpp"

namespace peft {

/// Budget-aware low-rank adapter: delta = P * diag(lambda) * Q where the
/// factors are kept near-orthonormal by a penalty term and lambda entries are
/// pruned to a step-dependent budget. max_rank is the allocated rank r; the
/// effective rank at any step is the number of nonzero lambda entries.
template <typename T = float>
struct BasicAdaLoraAdapter {
    BasicMatrix<T> p;       // d1 x r, orthonormal columns at init
    std::vector<T> lambda;  // r singular-value slots, zero at init
    BasicMatrix<T> q;       // r x d2, orthonormal rows at init
    T gamma = T{0};         // orthogonality penalty weight

    std::size_t max_rank() const { return lambda.size(); }
    std::size_t d1() const { return p.rows(); }
    std::size_t d2() const { return q.cols(); }

    template <typename U>
    BasicAdaLoraAdapter<U> cast() const {
        std::vector<U> lam(lambda.begin(), lambda.end());
        return BasicAdaLoraAdapter<U>{p.template cast<U>(), std::move(lam),
                                      q.template cast<U>(), static_cast<U>(gamma)};
    }
};

using AdaLoraAdapter = BasicAdaLoraAdapter<float>;

/// P gets orthonormal columns (Gram-Schmidt over a seeded Gaussian draw), Q
/// gets orthonormal rows the same way, lambda starts at zero so the initial
/// delta is exactly the zero matrix.
inline AdaLoraAdapter init_adalora(std::size_t d1, std::size_t d2, std::size_t r, float gamma,
                                   std::uint64_t seed) {
    if (r < 1 || r > std::min(d1, d2)) {
        throw ShapeError("init_adalora: rank " + std::to_string(r) + " outside [1, min(" +
                         std::to_string(d1) + ", " + std::to_string(d2) + ")]");
    }
    if (gamma < 0.0f) {
        throw ShapeError("init_adalora: gamma must be >= 0, got " + std::to_string(gamma));
    }
    Rng rng(seed);
    AdaLoraAdapter ad;
    ad.gamma = gamma;
    ad.p = orthonormalize_columns(gaussian_matrix(rng, d1, r, 1.0f));
    ad.q = transpose(orthonormalize_columns(gaussian_matrix(rng, d2, r, 1.0f)));
    ad.lambda.assign(r, 0.0f);
    return ad;
}

/// Columns of m scaled by the matching entry of s.
template <typename T>
BasicMatrix<T> scale_columns(const BasicMatrix<T>& m, std::span<const T> s) {
    if (s.size() != m.cols()) {
        throw ShapeError("scale_columns: " + std::to_string(s.size()) + " factors for " +
                         m.shape_str());
    }
    BasicMatrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = m(i, j) * s[j];
        }
    }
    return out;
}

/// Rows of m scaled by the matching entry of s.
template <typename T>
BasicMatrix<T> scale_rows(const BasicMatrix<T>& m, std::span<const T> s) {
    if (s.size() != m.rows()) {
        throw ShapeError("scale_rows: " + std::to_string(s.size()) + " factors for " +
                         m.shape_str());
    }
    BasicMatrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = m(i, j) * s[i];
        }
    }
    return out;
}

/// delta = (P with columns scaled by lambda) * Q.
template <typename T>
BasicMatrix<T> adalora_delta(const BasicAdaLoraAdapter<T>& ad) {
    return matmul(scale_columns(ad.p, std::span<const T>(ad.lambda)), ad.q);
}

/// Adapter contribution ((x*P) with columns scaled by lambda) * Q, factored
/// so the d1 x d2 delta is never materialized.
template <typename T>
BasicMatrix<T> adalora_delta_forward(const BasicMatrix<T>& x, const BasicAdaLoraAdapter<T>& ad) {
    return matmul(scale_columns(matmul(x, ad.p), std::span<const T>(ad.lambda)), ad.q);
}

/// y = x*W + adapter contribution.
template <typename T>
BasicMatrix<T> adalora_forward(const BasicMatrix<T>& x, const BasicMatrix<T>& w,
                               const BasicAdaLoraAdapter<T>& ad) {
    if (x.cols() != w.rows()) {
        throw ShapeError("adalora_forward: input " + x.shape_str() + " vs weight " +
                         w.shape_str());
    }
    if (ad.p.rows() != w.rows() || ad.q.cols() != w.cols()) {
        throw ShapeError("adalora_forward: adapter " + ad.p.shape_str() + "*" + ad.q.shape_str() +
                         " does not match weight " + w.shape_str());
    }
    return add(matmul(x, w), adalora_delta_forward(x, ad));
}

namespace detail {

/// || m - I ||_F^2 accumulated in double.
template <typename T>
double deviation_from_identity_sq(const BasicMatrix<T>& m) {
    double total = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double d =
                static_cast<double>(m(i, j)) - (i == j ? 1.0 : 0.0);
            total += d * d;
        }
    }
    return total;
}

} // namespace detail

/// gamma * (||P^T P - I||_F^2 + ||Q Q^T - I||_F^2).
template <typename T>
T orthogonality_penalty(const BasicAdaLoraAdapter<T>& ad) {
    const double p_term = detail::deviation_from_identity_sq(matmul(transpose(ad.p), ad.p));
    const double q_term = detail::deviation_from_identity_sq(matmul(ad.q, transpose(ad.q)));
    return static_cast<T>(static_cast<double>(ad.gamma) * (p_term + q_term));
}

/// Total training loss: task cost plus the orthogonality penalty.
template <typename T>
T regularized_loss(T task_cost, const BasicAdaLoraAdapter<T>& ad) {
    return task_cost + orthogonality_penalty(ad);
}

/// d(penalty)/dP = 4*gamma * P * (P^T P - I).
template <typename T>
BasicMatrix<T> penalty_grad_p(const BasicAdaLoraAdapter<T>& ad) {
    BasicMatrix<T> ptp = matmul(transpose(ad.p), ad.p);
    for (std::size_t i = 0; i < ptp.rows(); ++i) {
        ptp(i, i) -= T{1};
    }
    return scale(matmul(ad.p, ptp), T{4} * ad.gamma);
}

/// d(penalty)/dQ = 4*gamma * (Q Q^T - I) * Q.
template <typename T>
BasicMatrix<T> penalty_grad_q(const BasicAdaLoraAdapter<T>& ad) {
    BasicMatrix<T> qqt = matmul(ad.q, transpose(ad.q));
    for (std::size_t i = 0; i < qqt.rows(); ++i) {
        qqt(i, i) -= T{1};
    }
    return scale(matmul(qqt, ad.q), T{4} * ad.gamma);
}

/// Importance of each singular-value slot: |lambda_tilde_i|.
inline std::vector<float> importance_scores(std::span<const float> lambda_tilde) {
    std::vector<float> scores(lambda_tilde.size());
    for (std::size_t i = 0; i < lambda_tilde.size(); ++i) {
        scores[i] = std::fabs(lambda_tilde[i]);
    }
    return scores;
}

/// Linear rank-budget decay: b_init during warmup, then a straight line down
/// to b_final at total_steps, rounded to the nearest integer (ties to even).
struct BudgetSchedule {
    std::size_t b_init = 0;
    std::size_t b_final = 0;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 0;
};

inline std::size_t budget_at(const BudgetSchedule& s, std::size_t t) {
    if (s.b_final > s.b_init) {
        throw ShapeError("budget_at: b_final " + std::to_string(s.b_final) + " exceeds b_init " +
                         std::to_string(s.b_init));
    }
    if (s.warmup_steps > s.total_steps) {
        throw ShapeError("budget_at: warmup_steps " + std::to_string(s.warmup_steps) +
                         " exceeds total_steps " + std::to_string(s.total_steps));
    }
    if (t > s.total_steps) {
        throw ShapeError("budget_at: step " + std::to_string(t) + " outside [0, " +
                         std::to_string(s.total_steps) + "]");
    }
    if (t < s.warmup_steps) {
        return s.b_init;
    }
    if (s.total_steps == s.warmup_steps) {
        return s.b_final;
    }
    const double span = static_cast<double>(s.total_steps - s.warmup_steps);
    const double drop = static_cast<double>(s.b_init - s.b_final) *
                        static_cast<double>(t - s.warmup_steps) / span;
    return static_cast<std::size_t>(
        std::nearbyint(static_cast<double>(s.b_init) - drop));
}

/// Keep the b highest-scoring lambda entries bit-exactly, zero the rest.
/// Ties keep the lower index; b >= length keeps everything.
inline std::vector<float> prune_lambda(std::span<const float> lambda_tilde,
                                       std::span<const float> scores, std::size_t b) {
    if (scores.size() != lambda_tilde.size()) {
        throw ShapeError("prune_lambda: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(lambda_tilde.size()) + " values");
    }
    std::vector<std::size_t> order(lambda_tilde.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
        return scores[lhs] > scores[rhs];
    });
    std::vector<float> pruned(lambda_tilde.size(), 0.0f);
    const std::size_t keep = std::min(b, order.size());
    for (std::size_t i = 0; i < keep; ++i) {
        pruned[order[i]] = lambda_tilde[order[i]];
    }
    return pruned;
}

/// One lambda update: SGD step, score by magnitude, prune to the step budget.
/// Pruned slots stay in the adapter and can be revived by later steps.
inline std::vector<float> lambda_sgd_step(std::span<const float> lambda,
                                          std::span<const float> grad_lambda, float eta,
                                          const BudgetSchedule& schedule, std::size_t t) {
    if (grad_lambda.size() != lambda.size()) {
        throw ShapeError("lambda_sgd_step: " + std::to_string(grad_lambda.size()) +
                         " gradients for " + std::to_string(lambda.size()) + " values");
    }
    std::vector<float> tilde(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        tilde[i] = lambda[i] - eta * grad_lambda[i];
    }
    const std::vector<float> scores = importance_scores(tilde);
    return prune_lambda(tilde, scores, budget_at(schedule, t));
}

} // namespace peft
