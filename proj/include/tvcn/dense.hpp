#pragma once

// Small dense linear algebra. The systems solved in this library are at most
// a few dozen rows (users and congested links on user routes), so plain
// row-major storage and textbook algorithms are sufficient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tvcn/common.hpp"

namespace tvcn {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    /// Largest absolute entry; 0 for an empty matrix.
    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_)
            throw ShapeError("matrix product: " + std::to_string(a.rows_) + "x" +
                             std::to_string(a.cols_) + " times " + std::to_string(b.rows_) + "x" +
                             std::to_string(b.cols_));
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += aik * b(k, j);
            }
        return out;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) {
        check_same_shape(a, b, "sum");
        for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] += b.data_[i];
        return a;
    }

    friend Matrix operator-(Matrix a, const Matrix& b) {
        check_same_shape(a, b, "difference");
        for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] -= b.data_[i];
        return a;
    }

    friend Matrix operator*(double s, Matrix a) {
        for (double& v : a.data_) v *= s;
        return a;
    }

    /// diag(d) * this, without forming diag(d).
    Matrix scale_rows(std::span<const double> d) const {
        if (d.size() != rows_) throw ShapeError("scale_rows: length mismatch");
        Matrix out = *this;
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) *= d[r];
        return out;
    }

    /// this * diag(d).
    Matrix scale_cols(std::span<const double> d) const {
        if (d.size() != cols_) throw ShapeError("scale_cols: length mismatch");
        Matrix out = *this;
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) *= d[c];
        return out;
    }

    std::vector<double> apply(std::span<const double> v) const {
        if (v.size() != cols_) throw ShapeError("apply: length mismatch");
        std::vector<double> out(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out[r] += (*this)(r, c) * v[c];
        return out;
    }

    const std::vector<double>& data() const { return data_; }

private:
    static void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
        if (a.rows_ != b.rows_ || a.cols_ != b.cols_)
            throw ShapeError(std::string("matrix ") + op + ": shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline constexpr double kSingularPivot = 1e-12;

/// LU factorization with partial pivoting, reused for several right-hand sides.
class LuFactorization {
public:
    explicit LuFactorization(Matrix a, double pivot_tol = kSingularPivot)
        : lu_(std::move(a)), perm_(lu_.rows()) {
        if (lu_.rows() != lu_.cols()) throw ShapeError("LU: matrix is not square");
        const std::size_t n = lu_.rows();
        for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t p = k;
            for (std::size_t i = k + 1; i < n; ++i)
                if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
            if (std::abs(lu_(p, k)) < pivot_tol)
                throw SingularMatrix("pivot below " + std::to_string(pivot_tol) + " in column " +
                                         std::to_string(k),
                                     k);
            if (p != k) {
                for (std::size_t c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(p, c));
                std::swap(perm_[k], perm_[p]);
            }
            for (std::size_t i = k + 1; i < n; ++i) {
                const double m = lu_(i, k) / lu_(k, k);
                lu_(i, k) = m;
                if (m == 0.0) continue;
                for (std::size_t c = k + 1; c < n; ++c) lu_(i, c) -= m * lu_(k, c);
            }
        }
    }

    std::vector<double> solve(std::span<const double> b) const {
        const std::size_t n = lu_.rows();
        if (b.size() != n) throw ShapeError("LU solve: length mismatch");
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[perm_[i]];
            for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
            x[i] = s;
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = x[i];
            for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
            x[i] = s / lu_(i, i);
        }
        return x;
    }

    Matrix solve(const Matrix& b) const {
        if (b.rows() != lu_.rows()) throw ShapeError("LU solve: row mismatch");
        Matrix out(b.rows(), b.cols());
        std::vector<double> col(b.rows());
        for (std::size_t c = 0; c < b.cols(); ++c) {
            for (std::size_t r = 0; r < b.rows(); ++r) col[r] = b(r, c);
            const auto x = solve(col);
            for (std::size_t r = 0; r < b.rows(); ++r) out(r, c) = x[r];
        }
        return out;
    }

    std::size_t size() const { return lu_.rows(); }

private:
    Matrix lu_;
    std::vector<std::size_t> perm_;
};

inline std::vector<double> solve_linear(const Matrix& a, std::span<const double> b) {
    return LuFactorization(a).solve(b);
}

inline bool is_diagonal(const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            if (r != c && m(r, c) != 0.0) return false;
    return true;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending. Iterates until the off-diagonal Frobenius norm is below `tol`.
inline std::vector<double> symmetric_eigenvalues(Matrix a, double tol = 1e-12,
                                                 int max_sweeps = 100) {
    if (a.rows() != a.cols()) throw ShapeError("eigenvalues: matrix is not square");
    const std::size_t n = a.rows();
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };
    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

}  // namespace tvcn
