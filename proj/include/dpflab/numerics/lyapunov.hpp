#pragma once

#include <cstddef>

#include "dpflab/numerics/eigen.hpp"
#include "dpflab/numerics/matrix.hpp"

namespace dpflab::numerics {

// Solves X = F X F' + G for stable F with Smith's doubling iteration:
// X_{k+1} = X_k + F_k X_k F_k',  F_{k+1} = F_k^2.
inline Matrix solve_discrete_lyapunov(const Matrix& f, const Matrix& g, double tolerance = 1e-15,
                                      std::size_t max_doublings = 200) {
    require_square(f, "F");
    require_square(g, "G");
    if (f.rows() != g.rows()) throw DimensionError("solve_discrete_lyapunov: F " + f.shape() + ", G " + g.shape());
    const double rho = spectral_radius(f);
    if (!(rho < 1.0)) throw InstabilityError("Lyapunov equation requires a stable F", rho);

    Matrix x = g.symmetrized();
    Matrix fk = f;
    for (std::size_t k = 0; k < max_doublings; ++k) {
        Matrix increment = fk * x * fk.transpose();
        x += increment;
        x = x.symmetrized();
        if (increment.max_abs() <= tolerance * std::max(1.0, x.max_abs()) && fk.max_abs() < 1e-3) return x;
        fk = fk * fk;
    }
    throw NonConvergenceError("Lyapunov doubling did not converge", 0.0, max_doublings);
}

}  // namespace dpflab::numerics
