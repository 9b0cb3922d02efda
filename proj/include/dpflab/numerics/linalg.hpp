#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "dpflab/numerics/matrix.hpp"

namespace dpflab::numerics {

// LU factorization with partial pivoting, PA = LU stored in place.
class LuDecomposition {
public:
    explicit LuDecomposition(Matrix a) : lu_(std::move(a)), perm_(lu_.rows()) {
        require_square(lu_, "LU operand");
        const std::size_t n = lu_.rows();
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        const double scale = std::max(lu_.max_abs(), std::numeric_limits<double>::min());
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t piv = k;
            for (std::size_t i = k + 1; i < n; ++i)
                if (std::abs(lu_(i, k)) > std::abs(lu_(piv, k))) piv = i;
            if (std::abs(lu_(piv, k)) <= scale * 1e-14) {
                singular_ = true;
                continue;
            }
            if (piv != k) {
                for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(piv, j));
                std::swap(perm_[k], perm_[piv]);
            }
            for (std::size_t i = k + 1; i < n; ++i) {
                const double f = lu_(i, k) / lu_(k, k);
                lu_(i, k) = f;
                if (f == 0.0) continue;
                for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
            }
        }
    }

    bool singular() const noexcept { return singular_; }

    Matrix solve(const Matrix& b) const {
        const std::size_t n = lu_.rows();
        if (b.rows() != n) throw DimensionError("LU solve rhs has " + b.shape() + ", expected " + std::to_string(n) + " rows");
        if (singular_) throw InputError("matrix is singular to working precision");
        Matrix x(n, b.cols());
        for (std::size_t c = 0; c < b.cols(); ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                double s = b(perm_[i], c);
                for (std::size_t k = 0; k < i; ++k) s -= lu_(i, k) * x(k, c);
                x(i, c) = s;
            }
            for (std::size_t i = n; i-- > 0;) {
                double s = x(i, c);
                for (std::size_t k = i + 1; k < n; ++k) s -= lu_(i, k) * x(k, c);
                x(i, c) = s / lu_(i, i);
            }
        }
        return x;
    }

private:
    Matrix lu_;
    std::vector<std::size_t> perm_;
    bool singular_ = false;
};

inline Matrix solve(const Matrix& a, const Matrix& b) { return LuDecomposition(a).solve(b); }

inline Matrix inverse(const Matrix& a) { return LuDecomposition(a).solve(Matrix::identity(a.rows())); }

// Cholesky factor L (lower) of a symmetric positive-definite matrix, or nullopt
// when a pivot is not strictly positive.
inline std::optional<Matrix> cholesky(const Matrix& a) {
    require_square(a, "Cholesky operand");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) return std::nullopt;
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

// Solve S X = B for symmetric positive-definite S.
inline Matrix solve_spd(const Matrix& s, const Matrix& b) {
    auto l = cholesky(s);
    if (!l) throw InputError("matrix is not positive definite");
    const std::size_t n = s.rows();
    if (b.rows() != n) throw DimensionError("solve_spd rhs shape " + b.shape());
    Matrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double v = x(i, c);
            for (std::size_t k = 0; k < i; ++k) v -= (*l)(i, k) * x(k, c);
            x(i, c) = v / (*l)(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double v = x(i, c);
            for (std::size_t k = i + 1; k < n; ++k) v -= (*l)(k, i) * x(k, c);
            x(i, c) = v / (*l)(i, i);
        }
    }
    return x;
}

// Lower factor F with F F^T = A for symmetric positive-semidefinite A. Pivots
// below `tol * max|A|` are treated as exact zeros, which is what noise
// covariances with unexcited channels need.
inline Matrix psd_factor(const Matrix& a, double tol = 1e-13) {
    require_square(a, "covariance");
    const std::size_t n = a.rows();
    const double cutoff = tol * std::max(1.0, a.max_abs());
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d < -cutoff) throw InputError("covariance is not positive semidefinite");
        if (d <= cutoff) continue;
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

inline bool is_symmetric(const Matrix& a, double tol = 1e-12) {
    if (!a.is_square()) return false;
    const double scale = std::max(1.0, a.max_abs());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol * scale) return false;
    return true;
}

inline bool is_psd(const Matrix& a, double tol = 1e-12) {
    if (!is_symmetric(a, tol)) return false;
    try {
        psd_factor(a, tol);
        return true;
    } catch (const InputError&) {
        return false;
    }
}

inline bool is_pd(const Matrix& a) { return is_symmetric(a) && cholesky(a).has_value(); }

inline Matrix matrix_power(Matrix a, unsigned k) {
    require_square(a, "matrix_power operand");
    Matrix r = Matrix::identity(a.rows());
    while (k) {
        if (k & 1u) r = r * a;
        k >>= 1u;
        if (k) a = a * a;
    }
    return r;
}

// Householder QR with column pivoting of an m x n matrix: A P = Q R.
// Q is returned explicitly (m x m) since callers need the null-space basis.
struct PivotedQr {
    Matrix q;                        // m x m orthogonal
    Matrix r;                        // m x n upper trapezoidal
    std::vector<std::size_t> perm;   // column j of A P is column perm[j] of A
    std::size_t rank = 0;
};

inline PivotedQr pivoted_qr(const Matrix& a, std::optional<double> rank_tol = std::nullopt) {
    const std::size_t m = a.rows(), n = a.cols();
    PivotedQr out{Matrix::identity(m), a, std::vector<std::size_t>(n), 0};
    std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
    Matrix& r = out.r;
    Matrix& q = out.q;

    std::vector<double> norms(n);
    auto col_norm2 = [&](std::size_t j, std::size_t from) {
        double s = 0.0;
        for (std::size_t i = from; i < m; ++i) s += r(i, j) * r(i, j);
        return s;
    };

    const std::size_t steps = std::min(m, n);
    std::vector<double> v(m);
    for (std::size_t k = 0; k < steps; ++k) {
        // Recompute remaining norms each step; sizes here are small.
        std::size_t best = k;
        double best_norm = -1.0;
        for (std::size_t j = k; j < n; ++j) {
            norms[j] = col_norm2(j, k);
            if (norms[j] > best_norm) {
                best_norm = norms[j];
                best = j;
            }
        }
        if (best != k) {
            for (std::size_t i = 0; i < m; ++i) std::swap(r(i, k), r(i, best));
            std::swap(out.perm[k], out.perm[best]);
        }
        const double alpha_norm = std::sqrt(best_norm);
        if (alpha_norm == 0.0) break;
        const double alpha = r(k, k) > 0 ? -alpha_norm : alpha_norm;
        for (std::size_t i = 0; i < m; ++i) v[i] = 0.0;
        for (std::size_t i = k; i < m; ++i) v[i] = r(i, k);
        v[k] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < m; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;
        // R <- (I - 2 v v^T / v^T v) R
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i] * r(i, j);
            s = 2.0 * s / vnorm2;
            for (std::size_t i = k; i < m; ++i) r(i, j) -= s * v[i];
        }
        // Q <- Q (I - 2 v v^T / v^T v)
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t l = k; l < m; ++l) s += q(i, l) * v[l];
            s = 2.0 * s / vnorm2;
            for (std::size_t l = k; l < m; ++l) q(i, l) -= s * v[l];
        }
        for (std::size_t i = k + 1; i < m; ++i) r(i, k) = 0.0;
    }

    const double r00 = steps ? std::abs(r(0, 0)) : 0.0;
    const double tol = rank_tol.value_or(static_cast<double>(std::max(m, n)) *
                                         std::numeric_limits<double>::epsilon() * r00);
    for (std::size_t k = 0; k < steps; ++k)
        if (std::abs(r(k, k)) > tol) out.rank = k + 1;
        else break;
    return out;
}

}  // namespace dpflab::numerics
