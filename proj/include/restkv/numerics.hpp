#pragma once

// Dense 64-bit vectors and row-major matrices with explicit dimensions.
// Every entry is finite; constructors reject NaN and Inf. No broadcasting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "restkv/errors.hpp"

namespace restkv {

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw DomainError(std::string(what) + ": non-finite entry");
        }
    }
}

}  // namespace detail

class Vector {
public:
    Vector() = default;

    explicit Vector(std::vector<double> data) : data_(std::move(data)) {
        detail::require_finite(data_, "Vector");
    }

    Vector(std::initializer_list<double> values) : Vector(std::vector<double>(values)) {}

    explicit Vector(std::span<const double> values)
        : Vector(std::vector<double>(values.begin(), values.end())) {}

    static Vector zeros(std::size_t n) { return Vector(std::vector<double>(n, 0.0)); }

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::size_t i) const {
        if (i >= data_.size()) throw DomainError("Vector::at: index out of range");
        return data_[i];
    }

    std::span<const double> span() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DomainError("Matrix: data length " + std::to_string(data_.size()) +
                              " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
        detail::require_finite(data_, "Matrix");
    }

    static Matrix zeros(std::size_t rows, std::size_t cols) {
        return Matrix(rows, cols, std::vector<double>(rows * cols, 0.0));
    }

    static Matrix identity(std::size_t n) {
        Matrix m = zeros(n, n);
        for (std::size_t i = 0; i < n; ++i) m.data_[i * n + i] = 1.0;
        return m;
    }

    // Stack equal-length rows.
    static Matrix from_rows(const std::vector<Vector>& rows, std::size_t cols) {
        std::vector<double> data;
        data.reserve(rows.size() * cols);
        for (const auto& r : rows) {
            if (r.size() != cols) throw DomainError("Matrix::from_rows: ragged rows");
            data.insert(data.end(), r.begin(), r.end());
        }
        return Matrix(rows.size(), cols, std::move(data));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        if (r >= rows_) throw DomainError("Matrix::row: index out of range");
        return std::span<const double>(data_).subspan(r * cols_, cols_);
    }

    std::span<const double> data() const noexcept { return data_; }

    void append_row(std::span<const double> values) {
        if (values.size() != cols_) {
            throw DomainError("Matrix::append_row: expected " + std::to_string(cols_) +
                              " columns, got " + std::to_string(values.size()));
        }
        detail::require_finite(values, "Matrix::append_row");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    // Rows listed in `indices`, in that order.
    Matrix select_rows(std::span<const std::size_t> indices) const {
        std::vector<double> out;
        out.reserve(indices.size() * cols_);
        for (std::size_t i : indices) {
            auto r = row(i);
            out.insert(out.end(), r.begin(), r.end());
        }
        Matrix m;
        m.rows_ = indices.size();
        m.cols_ = cols_;
        m.data_ = std::move(out);
        return m;
    }

    Matrix without_row(std::size_t index) const {
        if (index >= rows_) throw DomainError("Matrix::without_row: index out of range");
        std::vector<std::size_t> keep;
        keep.reserve(rows_ - 1);
        for (std::size_t i = 0; i < rows_; ++i)
            if (i != index) keep.push_back(i);
        return select_rows(keep);
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DomainError("dot: length mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double l2_norm(std::span<const double> v) {
    // Scaled accumulation avoids overflow for large entries.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double sum = 0.0;
    for (double x : v) {
        double y = x / scale;
        sum += y * y;
    }
    return scale * std::sqrt(sum);
}

inline double l2_norm(const Vector& v) { return l2_norm(v.span()); }

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DomainError("subtract: length mismatch");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return Vector(std::move(out));
}

inline Vector scale(std::span<const double> v, double c) {
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x *= c;
    return Vector(std::move(out));
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    return l2_norm(subtract(a, b));
}

// Max-subtracted softmax.
inline Vector stable_softmax(std::span<const double> logits) {
    if (logits.empty()) throw DomainError("stable_softmax: empty input");
    detail::require_finite(logits, "stable_softmax");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return Vector(std::move(out));
}

inline Vector stable_softmax(const Vector& logits) { return stable_softmax(logits.span()); }

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DomainError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    std::vector<double> out(a.rows() * b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* dst = out.data() + i * b.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * brow[j];
        }
    }
    return Matrix(a.rows(), b.cols(), std::move(out));
}

// Row vector times matrix: x (1 x rows) * m (rows x cols).
inline Vector vecmat(std::span<const double> x, const Matrix& m) {
    if (x.size() != m.rows()) {
        throw DomainError("vecmat: vector length " + std::to_string(x.size()) + " != matrix rows " +
                          std::to_string(m.rows()));
    }
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        auto r = m.row(k);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += x[k] * r[j];
    }
    return Vector(std::move(out));
}

inline Vector vecmat(const Vector& x, const Matrix& m) { return vecmat(x.span(), m); }

}  // namespace restkv
