#pragma once

#include <cmath>
#include <cstddef>
#include <optional>

#include "dpflab/numerics.hpp"
#include "dpflab/plant.hpp"

namespace dpflab {

// rho must stay this far below 1 to count as stable. Boundary plants such as
// a = 2, Td = 1 have a double closed-loop root exactly on the unit circle and
// the computed radius can land a few ulps on either side.
inline constexpr double kStabilityMargin = 1e-9;

struct StabilizabilityOptions {
    double l1_min = -4.0;
    double l1_max = 4.0;
    double l1_step = 1e-3;
    std::size_t golden_iterations = 60;
};

struct NoDpfCheck {
    bool stabilizable = false;
    double best_gain = 0.0;    // l1 minimizing the closed-loop radius
    double best_radius = 0.0;  // spectral radius at best_gain
};

struct StabilizabilityResult {
    std::size_t td = 0;
    double max_abs_a = 0.0;
    double witness_gain = 0.0;  // certifies stability at a = max_abs_a - tol
    double witness_a = 0.0;
    double bisection_tolerance = 0.0;
};

namespace detail {

// Closed loop A - l1 e1 C of the Td-chain with only the forward gain.
inline Matrix no_dpf_loop(double a, std::size_t td, double l1) {
    const std::size_t n = td + 1;
    Matrix m(n, n);
    m(0, 0) = a;
    for (std::size_t i = 1; i < n; ++i) m(i, i - 1) = 1.0;
    m(0, n - 1) -= l1;
    return m;
}

}  // namespace detail

inline double no_dpf_radius(double a, std::size_t td, double l1) {
    return numerics::spectral_radius(detail::no_dpf_loop(a, td, l1));
}

// Is there l1 with rho(A - l1 e1 C) < 1, i.e. stabilization with every
// internal-wire gain l_i (i >= 2) pinned to zero? Dense grid over l1, then a
// golden-section polish around the best grid point.
inline NoDpfCheck is_stabilizable_without_dpf(double a, std::size_t td, const StabilizabilityOptions& opts = {}) {
    if (td < 1) throw InputError("is_stabilizable_without_dpf requires td >= 1");
    if (!std::isfinite(a)) throw InputError("plant pole must be finite");
    if (!(opts.l1_step > 0.0) || !(opts.l1_max > opts.l1_min)) throw InputError("invalid l1 search range");

    NoDpfCheck best{false, opts.l1_min, std::numeric_limits<double>::infinity()};
    const auto steps = static_cast<std::size_t>(std::llround((opts.l1_max - opts.l1_min) / opts.l1_step));
    for (std::size_t i = 0; i <= steps; ++i) {
        const double l1 = opts.l1_min + static_cast<double>(i) * opts.l1_step;
        const double r = no_dpf_radius(a, td, l1);
        if (r < best.best_radius) {
            best.best_radius = r;
            best.best_gain = l1;
        }
    }

    double lo = std::max(opts.l1_min, best.best_gain - opts.l1_step);
    double hi = std::min(opts.l1_max, best.best_gain + opts.l1_step);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = no_dpf_radius(a, td, x1), f2 = no_dpf_radius(a, td, x2);
    for (std::size_t it = 0; it < opts.golden_iterations; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = no_dpf_radius(a, td, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = no_dpf_radius(a, td, x2);
        }
    }
    const double polished = f1 < f2 ? x1 : x2;
    const double polished_r = std::min(f1, f2);
    if (polished_r < best.best_radius) {
        best.best_radius = polished_r;
        best.best_gain = polished;
    }
    best.stabilizable = best.best_radius < 1.0 - kStabilityMargin;
    return best;
}

// Largest |a| stabilizable without DPF, by bisection on a in [1, 4]. The
// no-DPF stabilizable set is symmetric in a (l1 -> -l1 under lambda -> -lambda),
// so only a > 0 is searched.
inline StabilizabilityResult max_stabilizable_a(std::size_t td, double tol = 1e-3,
                                                const StabilizabilityOptions& opts = {}) {
    if (td < 1) throw InputError("max_stabilizable_a requires td >= 1");
    if (!(tol > 0.0)) throw InputError("bisection tolerance must be positive");
    double lo = 1.0, hi = 4.0;
    auto at_lo = is_stabilizable_without_dpf(lo, td, opts);
    if (!at_lo.stabilizable) throw SynthesisError("a = 1 is not stabilizable without DPF; bracket invalid");
    if (is_stabilizable_without_dpf(hi, td, opts).stabilizable)
        throw SynthesisError("a = 4 is stabilizable without DPF; bracket invalid");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        auto r = is_stabilizable_without_dpf(mid, td, opts);
        if (r.stabilizable) {
            lo = mid;
            at_lo = r;
        } else {
            hi = mid;
        }
    }
    return {td, 0.5 * (lo + hi), at_lo.best_gain, lo, tol};
}

struct DeadbeatResult {
    bool stabilizes = false;
    Matrix gain;              // full L (DPF gains l2..l_{Td+1} included)
    double radius = 0.0;      // rho(A - LC) for the exact deadbeat gain
    double realized_radius = 0.0;  // rho with the gain rounded to double
};

// Deadbeat observer on the Td-chain by Ackermann's formula, L = A^n O^-1 e_n.
//
// The rounded gains l_i = a^(n+1-i) are exact only for dyadic a; otherwise the
// rounded loop has radius ~eps^(1/n). The placement is therefore certified on
// the scaled chain: with D = diag(a^(n-1), ..., a, 1), A = a D A1 D^-1 where A1 is
// the a = 1 chain, so rho(A - LC) = |a| rho(A1 - L1 C) with L = a D L1. A1 and its
// deadbeat gain L1 are integer valued and the check is exact.
inline DeadbeatResult dpf_stabilizes_everything(double a, std::size_t td) {
    if (a == 0.0 || !std::isfinite(a)) throw InputError("dpf_stabilizes_everything requires finite a != 0");
    const std::size_t n = td + 1;
    const auto unit = delay_chain_plant({td, 1.0, 1.0, 1.0, true, true});
    const Matrix obs = observability_matrix(unit.a, unit.c);
    numerics::LuDecomposition lu(obs);
    if (lu.singular()) throw Error("deadbeat placement failed: chain not observable");
    const Matrix l1 = numerics::matrix_power(unit.a, static_cast<unsigned>(n)) * lu.solve(Matrix::unit(n, n - 1));
    const double scaled_radius = numerics::spectral_radius(unit.a - l1 * unit.c);

    DeadbeatResult out;
    out.gain = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) out.gain(i, 0) = a * std::pow(a, static_cast<double>(n - 1 - i)) * l1(i, 0);
    out.radius = std::abs(a) * scaled_radius;
    const auto plant = delay_chain_plant({td, a, 1.0, 1.0, true, true});
    out.realized_radius = numerics::spectral_radius(plant.a - out.gain * plant.c);
    if (!(out.radius < 1e-9)) throw Error("deadbeat placement failed: radius " + std::to_string(out.radius));
    out.stabilizes = out.radius < 1.0 - kStabilityMargin;
    return out;
}

}  // namespace dpflab
