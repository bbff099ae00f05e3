#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "clipit/errors.hpp"
#include "clipit/rng.hpp"

namespace clipit {

// Dense row-major matrix of 64-bit reals. Column vectors are d x 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows_(r), cols_(c), data_(r * c, fill) {}

    static Matrix column(const std::vector<double>& v) {
        Matrix m(v.size(), 1);
        m.data_ = v;
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix gaussian(std::size_t r, std::size_t c, double stddev, Rng& rng) {
        Matrix m(r, c);
        for (auto& x : m.data_) x = stddev * rng.next_gaussian();
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& vec() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool bit_equal(const Matrix& o) const {
        if (!same_shape(o)) return false;
        for (std::size_t i = 0; i < data_.size(); ++i)
            if (data_[i] != o.data_[i]) return false;
        return true;
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double v) { data_.assign(data_.size(), v); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionMismatchError("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                out(i, j) += aik * b(k, j);
        }
    return out;
}

// out += a * b^T   (outer-product style accumulation used by adjoints)
inline void add_matmul_nt(Matrix& out, const Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < out.cols(); ++j)
                out(i, j) += aik * b(j, k);
        }
}

// out += a^T * b
inline void add_matmul_tn(Matrix& out, const Matrix& a, const Matrix& b) {
    for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < out.rows(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < out.cols(); ++j)
                out(i, j) += aki * b(k, j);
        }
}

inline void add_scaled_into(Matrix& dst, const Matrix& src, double c) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

}  // namespace clipit
