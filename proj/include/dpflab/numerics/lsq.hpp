#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dpflab/numerics/linalg.hpp"
#include "dpflab/numerics/matrix.hpp"

namespace dpflab::numerics {

struct LsqOptions {
    // Constraint rows violated by more than this (scaled by max(1, |d|, |C|))
    // after the least-norm solve are reported as infeasible.
    double feasibility_tolerance = 1e-9;
};

struct LsqSolution {
    Matrix x;                             // decision values, masked entries exactly 0
    Matrix multipliers;                   // one per constraint row
    double constraint_residual = 0.0;     // max |C x - d|
    double stationarity_residual = 0.0;   // max |(H x + C' lambda)_free|
};

// Minimizes x' H x subject to C x = d and x_i = 0 wherever zero_mask[i].
//
// Null-space method: a pivoted QR of C_free' gives a least-norm particular
// solution and an orthonormal basis Z of the feasible directions; the reduced
// Hessian Z' H Z must be positive definite.
inline LsqSolution lsq_equality(const Matrix& h, const Matrix& c, const Matrix& d, const std::vector<bool>& zero_mask,
                                const LsqOptions& opts = {}) {
    const std::size_t nvar = c.cols(), ncon = c.rows();
    if (h.rows() != nvar || h.cols() != nvar) throw DimensionError("lsq_equality: weights " + h.shape() + " for " + std::to_string(nvar) + " variables");
    if (d.rows() != ncon || d.cols() != 1) throw DimensionError("lsq_equality: rhs " + d.shape() + " for " + std::to_string(ncon) + " constraints");
    if (zero_mask.size() != nvar) throw DimensionError("lsq_equality: mask length mismatch");
    require_finite(h, "weights");
    require_finite(c, "constraint matrix");
    require_finite(d, "constraint rhs");

    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < nvar; ++i)
        if (!zero_mask[i]) free.push_back(i);
    const std::size_t nf = free.size();

    Matrix cf(ncon, nf), hf(nf, nf);
    for (std::size_t r = 0; r < ncon; ++r)
        for (std::size_t k = 0; k < nf; ++k) cf(r, k) = c(r, free[k]);
    for (std::size_t i = 0; i < nf; ++i)
        for (std::size_t k = 0; k < nf; ++k) hf(i, k) = h(free[i], free[k]);

    // C_f' P = Q R; rows of C_f selected by P are independent.
    const PivotedQr qr = pivoted_qr(cf.transpose());
    const std::size_t rank = qr.rank;

    Matrix xp(nf, 1);
    if (rank > 0) {
        // R11' z = (P' d)[0:rank], then x_p = Q1 z.
        Matrix z(rank, 1);
        for (std::size_t i = 0; i < rank; ++i) {
            double s = d(qr.perm[i], 0);
            for (std::size_t k = 0; k < i; ++k) s -= qr.r(k, i) * z(k, 0);
            z(i, 0) = s / qr.r(i, i);
        }
        for (std::size_t i = 0; i < nf; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < rank; ++k) s += qr.q(i, k) * z(k, 0);
            xp(i, 0) = s;
        }
    }

    const double scale = std::max({1.0, d.max_abs(), c.max_abs()});
    {
        const Matrix viol = cf * xp - d;
        std::size_t worst = 0;
        double worst_val = 0.0;
        for (std::size_t r = 0; r < ncon; ++r)
            if (std::abs(viol(r, 0)) > worst_val) {
                worst_val = std::abs(viol(r, 0));
                worst = r;
            }
        if (worst_val > opts.feasibility_tolerance * scale)
            throw InfeasibleError("equality constraints infeasible: row " + std::to_string(worst) + " violated by " +
                                      std::to_string(worst_val),
                                  worst, worst_val);
    }

    Matrix xf = xp;
    const std::size_t nnull = nf - rank;
    if (nnull > 0) {
        const Matrix zb = qr.q.block(0, rank, nf, nnull);
        const Matrix zt = zb.transpose();
        const Matrix reduced = (zt * hf * zb).symmetrized();
        if (!cholesky(reduced)) throw InputError("objective is not positive definite on the feasible directions");
        const Matrix y = solve_spd(reduced, -(zt * (hf * xp)));
        xf = xp + zb * y;
    }

    LsqSolution out;
    out.x = Matrix(nvar, 1);
    for (std::size_t k = 0; k < nf; ++k) out.x(free[k], 0) = xf(k, 0);

    // Multipliers from C_f' lambda = -H_f x_f restricted to the independent rows.
    out.multipliers = Matrix(ncon, 1);
    const Matrix grad = hf * xf;
    if (rank > 0) {
        // Q1' (-grad) = R11 lambda_sel  (R11 upper triangular)
        Matrix rhs(rank, 1);
        for (std::size_t i = 0; i < rank; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < nf; ++k) s -= qr.q(k, i) * grad(k, 0);
            rhs(i, 0) = s;
        }
        Matrix lam(rank, 1);
        for (std::size_t i = rank; i-- > 0;) {
            double s = rhs(i, 0);
            for (std::size_t k = i + 1; k < rank; ++k) s -= qr.r(i, k) * lam(k, 0);
            lam(i, 0) = s / qr.r(i, i);
        }
        for (std::size_t i = 0; i < rank; ++i) out.multipliers(qr.perm[i], 0) = lam(i, 0);
    }
    out.constraint_residual = (cf * xf - d).max_abs();
    out.stationarity_residual = (grad + cf.transpose() * out.multipliers).max_abs();
    return out;
}

}  // namespace dpflab::numerics
