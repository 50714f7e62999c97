#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "peft/errors.hpp"
#include "peft/matrix.hpp"

namespace peft {

/// Thin SVD of an m x n matrix: m = u * diag(sigma) * vt, p = min(m, n).
/// sigma is sorted descending; columns of u and rows of vt are orthonormal.
struct SvdResult {
    Matrix u;                 // m x p
    std::vector<float> sigma; // length p, descending, >= 0
    Matrix vt;                // p x n
};

namespace detail {

inline double column_dot(const std::vector<double>& w, std::size_t rows, std::size_t cols,
                         std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += w[i * cols + p] * w[i * cols + q];
    return s;
}

/// One-sided Jacobi on a matrix with rows >= cols; works in double.
/// Returns column norms (unsorted); w ends up with mutually orthogonal
/// columns, and v accumulates the right-side rotations (cols x cols).
inline std::vector<double> jacobi_orthogonalize(std::vector<double>& w, std::size_t rows,
                                                std::size_t cols, std::vector<double>& v,
                                                int max_sweeps, double tol) {
    for (std::size_t i = 0; i < cols; ++i) v[i * cols + i] = 1.0;
    // Columns whose squared norm falls this far below the largest column are
    // numerically zero; rotating against them only churns round-off.
    double max_sq = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        max_sq = std::max(max_sq, column_dot(w, rows, cols, j, j));
    }
    const double negligible = max_sq * 1e-30;
    double worst = 0.0;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        worst = 0.0;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                const double app = column_dot(w, rows, cols, p, p);
                const double aqq = column_dot(w, rows, cols, q, q);
                const double apq = column_dot(w, rows, cols, p, q);
                if (app <= negligible || aqq <= negligible) continue;
                const double off = std::abs(apq) / (std::sqrt(app) * std::sqrt(aqq));
                worst = std::max(worst, off);
                if (off <= tol) continue;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double wp = w[i * cols + p];
                    const double wq = w[i * cols + q];
                    w[i * cols + p] = cs * wp - sn * wq;
                    w[i * cols + q] = sn * wp + cs * wq;
                }
                for (std::size_t i = 0; i < cols; ++i) {
                    const double vp = v[i * cols + p];
                    const double vq = v[i * cols + q];
                    v[i * cols + p] = cs * vp - sn * vq;
                    v[i * cols + q] = sn * vp + cs * vq;
                }
            }
        }
        if (worst <= tol) {
            std::vector<double> norms(cols);
            for (std::size_t j = 0; j < cols; ++j) {
                norms[j] = std::sqrt(column_dot(w, rows, cols, j, j));
            }
            return norms;
        }
    }
    throw ConvergenceError("svd: Jacobi sweeps exhausted after " + std::to_string(max_sweeps) +
                           " sweeps, residual " + std::to_string(worst));
}

/// SVD of a tall-or-square matrix (rows >= cols), double workspace.
inline void svd_tall(const Matrix& m, Matrix& u, std::vector<float>& sigma, Matrix& vt,
                     int max_sweeps, double tol) {
    const std::size_t rows = m.rows(), cols = m.cols();
    std::vector<double> w(rows * cols);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(m.data()[i]);
    std::vector<double> v(cols * cols, 0.0);
    std::vector<double> norms = jacobi_orthogonalize(w, rows, cols, v, max_sweeps, tol);

    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    u = Matrix(rows, cols);
    vt = Matrix(cols, cols);
    sigma.assign(cols, 0.0f);
    const double max_norm = cols ? norms[order[0]] : 0.0;
    const double rank_cut = max_norm * 1e-12;
    for (std::size_t jj = 0; jj < cols; ++jj) {
        const std::size_t j = order[jj];
        sigma[jj] = static_cast<float>(norms[j]);
        for (std::size_t i = 0; i < cols; ++i) {
            vt(jj, i) = static_cast<float>(v[i * cols + j]);
        }
        if (norms[j] > rank_cut && norms[j] > 0.0) {
            for (std::size_t i = 0; i < rows; ++i) {
                u(i, jj) = static_cast<float>(w[i * cols + j] / norms[j]);
            }
        }
    }
    // Columns with (numerically) zero singular value get an orthonormal
    // completion: the first standard basis vector whose residual after
    // projecting out the filled columns is well-conditioned.
    for (std::size_t jj = 0; jj < cols; ++jj) {
        const std::size_t j = order[jj];
        if (norms[j] > rank_cut && norms[j] > 0.0) continue;
        sigma[jj] = 0.0f;
        for (std::size_t basis = 0; basis < rows; ++basis) {
            std::vector<double> cand(rows, 0.0);
            cand[basis] = 1.0;
            for (std::size_t k = 0; k < cols; ++k) {
                if (k == jj) continue;
                double dot = 0.0;
                for (std::size_t i = 0; i < rows; ++i) dot += cand[i] * u(i, k);
                for (std::size_t i = 0; i < rows; ++i) cand[i] -= dot * u(i, k);
            }
            double nrm = 0.0;
            for (double c : cand) nrm += c * c;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (std::size_t i = 0; i < rows; ++i) {
                    u(i, jj) = static_cast<float>(cand[i] / nrm);
                }
                break;
            }
        }
    }
}

} // namespace detail

/// Thin SVD via one-sided Jacobi (100-sweep cap, off-diagonal tolerance
/// 1e-10). Wide inputs are handled by factoring the transpose and swapping
/// the sides. Throws ConvergenceError if the sweep cap is hit.
inline SvdResult svd(const Matrix& m, int max_sweeps = 100, double tol = 1e-10) {
    SvdResult r;
    if (m.rows() >= m.cols()) {
        detail::svd_tall(m, r.u, r.sigma, r.vt, max_sweeps, tol);
    } else {
        // m = (u' s vt')^T of m^T  =>  u = vt'^T, vt = u'^T
        Matrix ut, v;
        detail::svd_tall(transpose(m), v, r.sigma, ut, max_sweeps, tol);
        r.u = transpose(ut);
        r.vt = transpose(v);
    }
    return r;
}

/// Gram-Schmidt orthonormalization of the columns of a (rows >= cols
/// required for full column rank); double accumulation, two passes for
/// numerical quality. Throws ShapeError if cols > rows.
template <typename T>
BasicMatrix<T> orthonormalize_columns(const BasicMatrix<T>& a) {
    const std::size_t rows = a.rows(), cols = a.cols();
    if (cols > rows) {
        throw ShapeError("orthonormalize_columns: more columns than rows, " + a.shape_str());
    }
    std::vector<double> w(rows * cols);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(a.data()[i]);
    for (std::size_t j = 0; j < cols; ++j) {
        double orig = 0.0;
        for (std::size_t i = 0; i < rows; ++i) orig += w[i * cols + j] * w[i * cols + j];
        orig = std::sqrt(orig);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double dot = 0.0;
                for (std::size_t i = 0; i < rows; ++i) dot += w[i * cols + j] * w[i * cols + k];
                for (std::size_t i = 0; i < rows; ++i) w[i * cols + j] -= dot * w[i * cols + k];
            }
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < rows; ++i) nrm += w[i * cols + j] * w[i * cols + j];
        nrm = std::sqrt(nrm);
        // A residual this far below the column's original norm means the
        // column lies (numerically) in the span of its predecessors.
        if (nrm <= orig * 1e-10) {
            throw ConvergenceError("orthonormalize_columns: column " + std::to_string(j) +
                                   " is linearly dependent");
        }
        for (std::size_t i = 0; i < rows; ++i) w[i * cols + j] /= nrm;
    }
    BasicMatrix<T> out(rows, cols);
    for (std::size_t i = 0; i < w.size(); ++i) out.data()[i] = static_cast<T>(w[i]);
    return out;
}

} // namespace peft
