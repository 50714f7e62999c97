#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "peft/errors.hpp"

namespace peft {

/// Dense row-major matrix over scalar T.
///
/// The scalar is a template parameter so the same compute path can be
/// instantiated at double precision for finite-difference reference
/// computations; product code uses `Matrix` (float).
template <typename T>
class BasicMatrix {
  public:
    using value_type = T;

    BasicMatrix() = default;

    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    BasicMatrix(std::initializer_list<std::initializer_list<T>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) {
                throw ShapeError("ragged initializer: expected " + std::to_string(cols_) +
                                 " columns, got " + std::to_string(row.size()));
            }
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    /// Lift / narrow the scalar type (e.g. float -> double for reference math).
    template <typename U>
    BasicMatrix<U> cast() const {
        BasicMatrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out.data()[i] = static_cast<U>(data_[i]);
        }
        return out;
    }

    bool operator==(const BasicMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;

template <typename T>
BasicMatrix<T> identity(std::size_t n) {
    BasicMatrix<T> out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
    return out;
}

/// C = A * B with a fixed i-k-j loop order: each output element accumulates
/// its k-terms in ascending order, which keeps results bit-identical across
/// runs regardless of surrounding code.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " * " +
                         b.shape_str());
    }
    BasicMatrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
    BasicMatrix<T> out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    BasicMatrix<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

template <typename T>
BasicMatrix<T> sub(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("sub: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    BasicMatrix<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

template <typename T>
BasicMatrix<T> scale(const BasicMatrix<T>& a, T s) {
    BasicMatrix<T> c = a;
    for (auto& v : c.data()) v *= s;
    return c;
}

/// Frobenius norm, accumulated in double regardless of T for accuracy.
template <typename T>
double frobenius_norm(const BasicMatrix<T>& a) {
    double sum = 0.0;
    for (const T& v : a.data()) {
        const double d = static_cast<double>(v);
        sum += d * d;
    }
    return std::sqrt(sum);
}

} // namespace peft
