#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "dpflab/numerics/eigen.hpp"
#include "dpflab/numerics/linalg.hpp"
#include "dpflab/numerics/matrix.hpp"

namespace dpflab::numerics {

struct RiccatiOptions {
    // Stop when max|Ric(P) - P| <= tolerance * max(1, max|P|).
    double tolerance = 1e-12;
    std::size_t max_iterations = 1'000'000;
};

struct RiccatiSolution {
    Matrix p;                    // stabilizing solution, symmetric PSD
    Matrix gain;                 // (R + B'PB)^-1 B'PA for control; L for the filter form
    double residual = 0.0;       // max-abs DARE defect at p
    std::size_t iterations = 0;  // Riccati map applications, summed over restarts
};

namespace detail {

// One application of the control Riccati map, symmetrized.
inline Matrix riccati_map(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& p,
                          Matrix* gain_out = nullptr) {
    const Matrix at = a.transpose();
    const Matrix bt = b.transpose();
    const Matrix pa = p * a;
    const Matrix gain = solve_spd(r + bt * p * b, bt * pa);
    if (gain_out) *gain_out = gain;
    Matrix next = at * pa - (at * p * b) * gain + q;
    return next.symmetrized();
}

struct IterationOutcome {
    Matrix p;
    double residual;
    std::size_t iterations;
    bool converged;
};

inline IterationOutcome iterate_riccati(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, Matrix p,
                                        const RiccatiOptions& opts) {
    double residual = 0.0;
    for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
        Matrix next = riccati_map(a, b, q, r, p);
        if (!next.all_finite()) return {std::move(p), residual, it, false};
        residual = max_abs_diff(next, p);
        p = std::move(next);
        if (residual <= opts.tolerance * std::max(1.0, p.max_abs())) return {std::move(p), residual, it, true};
    }
    return {std::move(p), residual, opts.max_iterations, false};
}

}  // namespace detail

// Max-abs defect of the control DARE at P.
inline double dare_residual(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& p) {
    return max_abs_diff(detail::riccati_map(a, b, q, r, p), p);
}

// Stabilizing solution of P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q by fixed-point
// iteration from P0 = Q. When that limit is not stabilizing (Q misses an
// unstable mode) the iteration restarts from successively larger multiples of
// the identity, which decrease monotonically onto the maximal solution.
inline RiccatiSolution solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                                  const RiccatiOptions& opts = {}) {
    require_square(a, "A");
    require_square(q, "Q");
    require_square(r, "R");
    require_finite(a, "A");
    require_finite(b, "B");
    require_finite(q, "Q");
    require_finite(r, "R");
    const std::size_t n = a.rows();
    if (b.rows() != n || q.rows() != n || r.rows() != b.cols())
        throw DimensionError("solve_dare: A " + a.shape() + ", B " + b.shape() + ", Q " + q.shape() + ", R " + r.shape());
    if (!is_symmetric(q) || !is_psd(q)) throw InputError("Q must be symmetric positive semidefinite");
    if (!is_pd(r)) throw InputError("R must be symmetric positive definite");

    std::size_t total_iterations = 0;
    double last_residual = 0.0;
    const double base = std::max({1.0, q.max_abs(), r.max_abs()});
    Matrix start = q;
    for (int attempt = 0; attempt < 6; ++attempt) {
        auto out = detail::iterate_riccati(a, b, q, r, start, opts);
        total_iterations += out.iterations;
        last_residual = out.residual;
        if (out.converged) {
            Matrix gain;
            detail::riccati_map(a, b, q, r, out.p, &gain);
            const double rho = spectral_radius(a - b * gain);
            if (rho < 1.0) {
                const double residual = dare_residual(a, b, q, r, out.p);
                return {std::move(out.p), std::move(gain), residual, total_iterations};
            }
        }
        // Restart from above: P0 = Q + c I with c = base * 1e2, 1e4, ...
        start = q + Matrix::identity(n) * (base * std::pow(10.0, 2.0 * (attempt + 1)));
    }
    throw NonConvergenceError("DARE iteration found no stabilizing solution (last residual " +
                                  std::to_string(last_residual) + ")",
                              last_residual, total_iterations);
}

// Filter (estimation) DARE, the dual of solve_dare: returns the covariance P and
// the predictor gain L = A P C' (C P C' + V)^-1 with A - LC stable.
inline RiccatiSolution solve_filter_dare(const Matrix& a, const Matrix& c, const Matrix& w, const Matrix& v,
                                         const RiccatiOptions& opts = {}) {
    auto dual = solve_dare(a.transpose(), c.transpose(), w, v, opts);
    dual.gain = dual.gain.transpose();
    return dual;
}

}  // namespace dpflab::numerics
