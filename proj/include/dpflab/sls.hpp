#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dpflab/controllers.hpp"
#include "dpflab/numerics.hpp"
#include "dpflab/plant.hpp"

namespace dpflab::sls {

// Minimum communication delay (in steps) from disturbance j to state i
// (x_delay, n x n) and to input i (u_delay, m x n). Entry (i, j) of the k-th
// spectral component is forced to zero whenever k <= delay(i, j).
struct DelayMask {
    Matrix x_delay;
    Matrix u_delay;

    bool masks_x(std::size_t k, std::size_t i, std::size_t j) const { return static_cast<double>(k) <= x_delay(i, j); }
    bool masks_u(std::size_t k, std::size_t i, std::size_t j) const { return static_cast<double>(k) <= u_delay(i, j); }
};

inline DelayMask no_delay_mask(std::size_t n, std::size_t m) { return {Matrix(n, n), Matrix(m, n)}; }

// FIR closed-loop response x = Phi_x w, u = Phi_u w with T spectral components.
// phi_x[k-1] is Phi_x^(k).
struct SlsResponse {
    std::size_t horizon = 0;
    std::vector<Matrix> phi_x;
    std::vector<Matrix> phi_u;
    std::optional<DelayMask> mask;
    double cost = 0.0;                 // sum of the per-column objectives (incl. the k = 1 term)
    std::vector<double> column_costs;

    std::size_t states() const { return phi_x.empty() ? 0 : phi_x.front().rows(); }
    std::size_t inputs() const { return phi_u.empty() ? 0 : phi_u.front().rows(); }

    // 1 where the entry of component k (1-based) is forced to zero.
    Matrix mask_x(std::size_t k) const {
        Matrix out(states(), states());
        if (mask)
            for (std::size_t i = 0; i < states(); ++i)
                for (std::size_t j = 0; j < states(); ++j) out(i, j) = mask->masks_x(k, i, j) ? 1.0 : 0.0;
        return out;
    }

    Matrix mask_u(std::size_t k) const {
        Matrix out(inputs(), states());
        if (mask)
            for (std::size_t i = 0; i < inputs(); ++i)
                for (std::size_t j = 0; j < states(); ++j) out(i, j) = mask->masks_u(k, i, j) ? 1.0 : 0.0;
        return out;
    }
};

struct SynthesisOptions {
    numerics::LsqOptions lsq{};
    double residual_tolerance = 1e-9;
};

struct AchievabilityReport {
    std::vector<double> recursion;  // k = 1..T-1: max|Phi_x^(k+1) - A Phi_x^(k) - B Phi_u^(k)|
    double terminal = 0.0;          // max|A Phi_x^(T) + B Phi_u^(T)|
    double identity = 0.0;          // max|Phi_x^(1) - I|
    double mask = 0.0;              // max |entry| over masked positions

    double worst() const {
        double w = std::max({terminal, identity, mask});
        for (double r : recursion) w = std::max(w, r);
        return w;
    }
};

inline AchievabilityReport check_achievability(const SlsResponse& resp, const StateSpace& plant) {
    AchievabilityReport rep;
    const std::size_t t = resp.horizon;
    if (t == 0 || resp.phi_x.size() != t || resp.phi_u.size() != t) throw DimensionError("response has inconsistent horizon");
    for (std::size_t k = 0; k < t; ++k) {
        if (resp.phi_x[k].rows() != plant.states() || resp.phi_x[k].cols() != plant.states() ||
            resp.phi_u[k].rows() != plant.inputs() || resp.phi_u[k].cols() != plant.states())
            throw DimensionError("response component shapes do not match the plant");
    }
    rep.identity = max_abs_diff(resp.phi_x[0], Matrix::identity(plant.states()));
    for (std::size_t k = 1; k < t; ++k)
        rep.recursion.push_back((resp.phi_x[k] - plant.a * resp.phi_x[k - 1] - plant.b * resp.phi_u[k - 1]).max_abs());
    rep.terminal = (plant.a * resp.phi_x[t - 1] + plant.b * resp.phi_u[t - 1]).max_abs();
    if (resp.mask) {
        for (std::size_t k = 1; k <= t; ++k) {
            const Matrix mx = resp.mask_x(k), mu = resp.mask_u(k);
            for (std::size_t i = 0; i < mx.size(); ++i)
                if (mx[i] != 0.0 && k > 1) rep.mask = std::max(rep.mask, std::abs(resp.phi_x[k - 1][i]));
            for (std::size_t i = 0; i < mu.size(); ++i)
                if (mu[i] != 0.0) rep.mask = std::max(rep.mask, std::abs(resp.phi_u[k - 1][i]));
        }
    }
    return rep;
}

// sum_k ||Q^1/2 Phi_x^(k)||_F^2 + ||R^1/2 Phi_u^(k)||_F^2
inline double response_cost(const SlsResponse& resp, const Matrix& q, const Matrix& r) {
    double c = 0.0;
    for (std::size_t k = 0; k < resp.horizon; ++k)
        c += (resp.phi_x[k].transpose() * q * resp.phi_x[k]).trace() + (resp.phi_u[k].transpose() * r * resp.phi_u[k]).trace();
    return c;
}

// H2-optimal FIR response of horizon T under the achievability constraints
//   Phi_x^(1) = I,  Phi_x^(k+1) = A Phi_x^(k) + B Phi_u^(k),  A Phi_x^(T) + B Phi_u^(T) = 0
// and the delay mask. Columns (disturbance directions) are independent
// equality-constrained least-squares problems.
//
// Column j unknowns: z = [phi_x^(2); ...; phi_x^(T); phi_u^(1); ...; phi_u^(T)].
inline SlsResponse synthesize(const StateSpace& plant, std::size_t horizon, const Matrix& q, const Matrix& r,
                              const std::optional<DelayMask>& mask = std::nullopt, const SynthesisOptions& opts = {}) {
    validate(plant);
    const std::size_t n = plant.states(), m = plant.inputs(), t = horizon;
    if (t < 1) throw InputError("SLS horizon must be at least 1");
    if (q.rows() != n || q.cols() != n || r.rows() != m || r.cols() != m)
        throw DimensionError("SLS weights Q " + q.shape() + ", R " + r.shape() + " for n = " + std::to_string(n) +
                             ", m = " + std::to_string(m));
    if (!numerics::is_psd(q)) throw InputError("Q must be symmetric positive semidefinite");
    if (!numerics::is_pd(r)) throw InputError("R must be symmetric positive definite");
    if (numerical_rank(plant.b) != m) throw PreconditionError("SLS synthesis requires B with full column rank");
    // the realized controller reads y as the state
    if (!(plant.c == Matrix::identity(n))) throw PreconditionError("SLS state feedback requires C = I (full state measurement)");
    if (mask) {
        if (mask->x_delay.rows() != n || mask->x_delay.cols() != n || mask->u_delay.rows() != m ||
            mask->u_delay.cols() != n)
            throw DimensionError("delay mask shapes do not match the plant");
        for (std::size_t i = 0; i < n; ++i)
            if (mask->x_delay(i, i) >= 1.0)
                throw InputError("delay mask: state " + std::to_string(i) + " has a nonzero self-delay, but Phi_x^(1) = I");
        for (double d : mask->x_delay.values())
            if (d < 0.0 || d != std::floor(d)) throw InputError("delay mask entries must be nonnegative integers");
        for (double d : mask->u_delay.values())
            if (d < 0.0 || d != std::floor(d)) throw InputError("delay mask entries must be nonnegative integers");
    }

    const std::size_t nx = n * (t - 1), nv = nx + m * t, nc = n * t;
    auto xcol = [&](std::size_t k) { return (k - 2) * n; };       // offset of phi_x^(k), k >= 2
    auto ucol = [&](std::size_t k) { return nx + (k - 1) * m; };  // offset of phi_u^(k), k >= 1

    Matrix h(nv, nv);
    for (std::size_t k = 2; k <= t; ++k) h.set_block(xcol(k), xcol(k), q);
    for (std::size_t k = 1; k <= t; ++k) h.set_block(ucol(k), ucol(k), r);

    // Rows (k-1) n .. k n - 1 hold the k-th block equation.
    Matrix c(nc, nv);
    for (std::size_t k = 1; k <= t; ++k) {
        const std::size_t row = (k - 1) * n;
        const bool terminal = k == t;
        if (!terminal) c.set_block(row, xcol(k + 1), Matrix::identity(n));
        if (k >= 2) c.set_block(row, xcol(k), terminal ? plant.a : -plant.a);
        c.set_block(row, ucol(k), terminal ? plant.b : -plant.b);
    }

    SlsResponse resp;
    resp.horizon = t;
    resp.mask = mask;
    resp.phi_x.assign(t, Matrix(n, n));
    resp.phi_u.assign(t, Matrix(m, n));
    resp.phi_x[0] = Matrix::identity(n);
    resp.column_costs.assign(n, 0.0);

    for (std::size_t j = 0; j < n; ++j) {
        // phi_x^(1) = e_j moves to the right-hand side of the k = 1 block.
        Matrix d(nc, 1);
        const Matrix aej = plant.a.col(j);
        for (std::size_t i = 0; i < n; ++i) d(i, 0) = t == 1 ? -aej(i, 0) : aej(i, 0);

        std::vector<bool> zero(nv, false);
        if (mask) {
            for (std::size_t k = 2; k <= t; ++k)
                for (std::size_t i = 0; i < n; ++i) zero[xcol(k) + i] = mask->masks_x(k, i, j);
            for (std::size_t k = 1; k <= t; ++k)
                for (std::size_t i = 0; i < m; ++i) zero[ucol(k) + i] = mask->masks_u(k, i, j);
        }

        numerics::LsqSolution sol;
        try {
            sol = numerics::lsq_equality(h, c, d, zero, opts.lsq);
        } catch (const InfeasibleError& e) {
            const std::size_t k = e.index() / n + 1;
            throw InfeasibleError("SLS synthesis infeasible for disturbance column " + std::to_string(j) +
                                      " (constraint block k = " + std::to_string(k) + ", violation " +
                                      std::to_string(e.violation()) + "); relax the mask or lengthen the horizon",
                                  j, e.violation());
        }
        for (std::size_t k = 2; k <= t; ++k)
            for (std::size_t i = 0; i < n; ++i) resp.phi_x[k - 1](i, j) = sol.x(xcol(k) + i, 0);
        for (std::size_t k = 1; k <= t; ++k)
            for (std::size_t i = 0; i < m; ++i) resp.phi_u[k - 1](i, j) = sol.x(ucol(k) + i, 0);
        resp.column_costs[j] = (sol.x.transpose() * h * sol.x)(0, 0) + q(j, j);
        resp.cost += resp.column_costs[j];
    }

    const auto rep = check_achievability(resp, plant);
    if (rep.worst() > opts.residual_tolerance * std::max(1.0, plant.a.max_abs()))
        throw SynthesisError("SLS synthesis residual " + std::to_string(rep.worst()) + " exceeds tolerance");
    return resp;
}

// Forward: the disturbance estimate (n); feedback: the n (T - 1) buffered
// estimates feeding the I - z Phi_x block.
inline DimensionReport report_signal_dims(const SlsResponse& resp) {
    return {resp.states(), resp.states() * (resp.horizon - 1)};
}

// State-feedback SLS controller (measurement y is the state):
//   dhat = y - xhat,  u = sum_k Phi_u^(k) dhat(t-k+1),  xhat(t+1) = sum_{k>=2} Phi_x^(k) dhat(t-k+2)
inline ControllerRealization make_sls_controller(const SlsResponse& resp) {
    if (resp.horizon == 0 || resp.phi_x.size() != resp.horizon || resp.phi_u.size() != resp.horizon)
        throw DimensionError("response has inconsistent horizon");
    const std::size_t n = resp.states(), m = resp.inputs();
    std::vector<Edge> wiring;
    wiring.push_back({"y", "delta_hat", Matrix::identity(n), EdgeDirection::Forward, 0, "I"});
    for (std::size_t k = 1; k <= resp.horizon; ++k) {
        const Matrix& g = resp.phi_u[k - 1];
        if (g.max_abs() >= kStructuralZero)
            wiring.push_back({"delta_hat", "u", g, EdgeDirection::Forward, k - 1, "Phi_u^(" + std::to_string(k) + ")"});
    }
    for (std::size_t k = 2; k <= resp.horizon; ++k) {
        const Matrix& g = resp.phi_x[k - 1];
        if (g.max_abs() >= kStructuralZero)
            wiring.push_back({"delta_hat", "xhat", g, EdgeDirection::Feedback, k - 1, "Phi_x^(" + std::to_string(k) + ")"});
    }
    SlsEngine engine{resp.phi_x, resp.phi_u, {}, 0};
    return ControllerRealization(ControllerKind::Sls, std::move(engine), std::move(wiring), {"u"}, n, m);
}

}  // namespace dpflab::sls
