#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dpflab/errors.hpp"

namespace dpflab {

// Dense row-major matrix of doubles. Column vectors are n x 1 matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    // Nested-list literal: Matrix{{1, 2}, {3, 4}}.
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw DimensionError("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix column(std::span<const double> values) {
        Matrix m(values.size(), 1);
        std::copy(values.begin(), values.end(), m.data_.begin());
        return m;
    }

    static Matrix column(std::initializer_list<double> values) {
        return column(std::span<const double>(values.begin(), values.size()));
    }

    static Matrix diagonal(std::span<const double> values) {
        Matrix m(values.size(), values.size());
        for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
        return m;
    }

    // e_i of length n.
    static Matrix unit(std::size_t n, std::size_t i) {
        Matrix m(n, 1);
        m(i, 0) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    // Linear indexing, mostly for vectors.
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
        if (r0 + nr > rows_ || c0 + nc > cols_) throw DimensionError("block out of range");
        Matrix b(nr, nc);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
        return b;
    }

    void set_block(std::size_t r0, std::size_t c0, const Matrix& b) {
        if (r0 + b.rows_ > rows_ || c0 + b.cols_ > cols_) throw DimensionError("set_block out of range");
        for (std::size_t i = 0; i < b.rows_; ++i)
            for (std::size_t j = 0; j < b.cols_; ++j) (*this)(r0 + i, c0 + j) = b(i, j);
    }

    Matrix col(std::size_t j) const { return block(0, j, rows_, 1); }
    Matrix row(std::size_t i) const { return block(i, 0, 1, cols_); }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool all_zero() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
    }

    double trace() const {
        if (!is_square()) throw DimensionError("trace of non-square matrix");
        double t = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) t += (*this)(i, i);
        return t;
    }

    // (M + M^T) / 2
    Matrix symmetrized() const {
        if (!is_square()) throw DimensionError("symmetrize of non-square matrix");
        Matrix s(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
        return s;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend Matrix operator-(Matrix a) { return a *= -1.0; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_)
            throw DimensionError("matrix product " + a.shape() + " * " + b.shape());
        Matrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
            }
        return c;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend std::ostream& operator<<(std::ostream& os, const Matrix& m) {
        os << '[';
        for (std::size_t i = 0; i < m.rows_; ++i) {
            if (i) os << "; ";
            for (std::size_t j = 0; j < m.cols_; ++j) {
                if (j) os << ", ";
                os << m(i, j);
            }
        }
        return os << ']';
    }

private:
    void require_same_shape(const Matrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw DimensionError(std::string("operator") + op + " on " + shape() + " and " + o.shape());
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Largest absolute entry of a - b.
inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).max_abs(); }

inline void require_finite(const Matrix& m, const char* name) {
    if (!m.all_finite()) throw InputError(std::string(name) + " has non-finite entries");
}

inline void require_square(const Matrix& m, const char* name) {
    if (!m.is_square()) throw DimensionError(std::string(name) + " must be square, got " + m.shape());
}

// Stack blocks vertically; all must share a column count.
inline Matrix vstack(std::initializer_list<Matrix> parts) {
    std::size_t rows = 0, cols = parts.size() ? parts.begin()->cols() : 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw DimensionError("vstack column mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t r = 0;
    for (const auto& p : parts) {
        out.set_block(r, 0, p);
        r += p.rows();
    }
    return out;
}

inline Matrix hstack(std::initializer_list<Matrix> parts) {
    std::size_t cols = 0, rows = parts.size() ? parts.begin()->rows() : 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw DimensionError("hstack row mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::size_t c = 0;
    for (const auto& p : parts) {
        out.set_block(0, c, p);
        c += p.cols();
    }
    return out;
}

}  // namespace dpflab
