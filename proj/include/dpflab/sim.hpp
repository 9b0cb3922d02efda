#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dpflab/controllers.hpp"
#include "dpflab/numerics.hpp"
#include "dpflab/plant.hpp"
#include "dpflab/random.hpp"

namespace dpflab::sim {

struct NoiseSpec {
    enum class Kind { Zero, Gaussian, Impulse };
    Kind kind = Kind::Zero;
    std::uint64_t seed = 0;
    std::size_t channel = 0;  // impulse: w(t0) = magnitude * e_channel
    std::size_t time = 0;
    double magnitude = 1.0;

    static NoiseSpec zero() { return {}; }
    static NoiseSpec gaussian(std::uint64_t seed) { return {Kind::Gaussian, seed, 0, 0, 1.0}; }
    static NoiseSpec impulse(std::size_t channel, std::size_t time = 0, double magnitude = 1.0) {
        return {Kind::Impulse, 0, channel, time, magnitude};
    }
};

// Row t holds x(t), u(t) = controller(y(t)), y(t) = C x(t) + v(t).
struct Trajectory {
    std::size_t horizon = 0;  // requested length; rows actually stored may be fewer after divergence
    std::vector<Matrix> x, u, y;
    std::vector<std::vector<NamedSignal>> internal;
    std::vector<std::pair<std::string, std::size_t>> internal_layout;
    std::uint64_t seed = 0;
    bool diverged = false;
    std::size_t diverged_at = 0;  // first step whose state was not finite

    std::size_t steps() const { return x.size(); }
};

inline void check_compatible(const StateSpace& plant, const ControllerRealization& ctrl) {
    if (ctrl.measurement_dim() != plant.outputs() || ctrl.input_dim() != plant.inputs())
        throw InputError("controller expects " + std::to_string(ctrl.measurement_dim()) + " measurements and drives " +
                         std::to_string(ctrl.input_dim()) + " inputs; plant has " + std::to_string(plant.outputs()) +
                         " outputs and " + std::to_string(plant.inputs()) + " inputs");
}

// x(t+1) = A x(t) + B u(t) + w(t). The controller is reset first and stepped
// once per step. A nonfinite state ends the run with the divergence flag set.
inline Trajectory simulate(const StateSpace& plant, ControllerRealization& ctrl, std::size_t horizon,
                           const NoiseSpec& noise, const Matrix& x0 = Matrix()) {
    validate(plant);
    check_compatible(plant, ctrl);
    const std::size_t n = plant.states();
    if (noise.kind == NoiseSpec::Kind::Impulse && noise.channel >= n)
        throw InputError("impulse channel " + std::to_string(noise.channel) + " out of range");
    Matrix x = x0.size() ? x0 : Matrix(n, 1);
    if (x.rows() != n || x.cols() != 1) throw InputError("initial state has shape " + x.shape());

    ctrl.reset();
    Trajectory tr;
    tr.horizon = horizon;
    tr.seed = noise.seed;
    tr.internal_layout = ctrl.internal_signal_layout();
    tr.x.reserve(horizon);
    tr.u.reserve(horizon);
    tr.y.reserve(horizon);

    CounterRng rng(noise.seed);
    const GaussianVector wdist(plant.w), vdist(plant.v);
    const bool gaussian = noise.kind == NoiseSpec::Kind::Gaussian;

    for (std::size_t t = 0; t < horizon; ++t) {
        if (!x.all_finite()) {
            tr.diverged = true;
            tr.diverged_at = t;
            break;
        }
        Matrix v = gaussian ? vdist.sample(rng) : Matrix(plant.outputs(), 1);
        Matrix w = gaussian ? wdist.sample(rng) : Matrix(n, 1);
        if (noise.kind == NoiseSpec::Kind::Impulse && t == noise.time) w(noise.channel, 0) = noise.magnitude;

        Matrix y = plant.c * x + v;
        Matrix u = ctrl.step(y);
        tr.x.push_back(x);
        tr.y.push_back(y);
        tr.u.push_back(u);
        tr.internal.push_back(ctrl.internal_signals());
        x = plant.a * x + plant.b * u + w;
    }
    return tr;
}

// One noiseless rollout per disturbance basis vector e_j, impulse at t = 0.
inline std::vector<Trajectory> impulse_response(const StateSpace& plant, ControllerRealization ctrl, std::size_t steps) {
    std::vector<Trajectory> out;
    for (std::size_t j = 0; j < plant.states(); ++j) out.push_back(simulate(plant, ctrl, steps, NoiseSpec::impulse(j, 0)));
    return out;
}

// Plant plus LTI controller, state [x; xi]:
//   F = [A + B Dc C, B Cc; Bc C, Ac]
inline Matrix closed_loop_matrix(const StateSpace& plant, const ControllerRealization& ctrl) {
    check_compatible(plant, ctrl);
    const auto k = ctrl.lti();
    const std::size_t n = plant.states(), nc = k.ac.rows();
    Matrix f(n + nc, n + nc);
    f.set_block(0, 0, plant.a + plant.b * k.dc * plant.c);
    if (nc > 0) {
        f.set_block(0, n, plant.b * k.cc);
        f.set_block(n, 0, k.bc * plant.c);
        f.set_block(n, n, k.ac);
    }
    return f;
}

inline double closed_loop_radius(const StateSpace& plant, const ControllerRealization& ctrl) {
    return numerics::spectral_radius(closed_loop_matrix(plant, ctrl));
}

// Stationary E[x'Qx + u'Ru] from the closed-loop Lyapunov equation. With
// z = [x; xi], z(t+1) = F z + G [w; v], G = [I, B Dc; 0, Bc], u = H z + Dc v,
// H = [Dc C, Cc].
inline double stationary_cost(const StateSpace& plant, const ControllerRealization& ctrl, const Matrix& q,
                              const Matrix& r) {
    const Matrix f = closed_loop_matrix(plant, ctrl);
    const double rho = numerics::spectral_radius(f);
    if (!(rho < 1.0)) throw InstabilityError("closed loop is unstable (spectral radius " + std::to_string(rho) + ")", rho);
    const auto k = ctrl.lti();
    const std::size_t n = plant.states(), nc = k.ac.rows(), p = plant.outputs();
    Matrix g(n + nc, n + p);
    g.set_block(0, 0, Matrix::identity(n));
    g.set_block(0, n, plant.b * k.dc);
    if (nc > 0) g.set_block(n, n, k.bc);
    Matrix noise(n + p, n + p);
    noise.set_block(0, 0, plant.w);
    noise.set_block(n, n, plant.v);
    const Matrix sigma = numerics::solve_discrete_lyapunov(f, g * noise * g.transpose());
    Matrix h(plant.inputs(), n + nc);
    h.set_block(0, 0, k.dc * plant.c);
    if (nc > 0) h.set_block(0, n, k.cc);
    const Matrix suu = h * sigma * h.transpose() + k.dc * plant.v * k.dc.transpose();
    return (q * sigma.block(0, 0, n, n)).trace() + (r * suu).trace();
}

struct LqgOptions {
    std::size_t horizon = 10000;
    std::size_t rollouts = 64;
    std::uint64_t seed = 0;
    double burn_in_fraction = 0.2;
    std::size_t jobs = 1;
};

struct CostEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    double spectral_radius = 0.0;
    std::vector<double> per_rollout;
};

// Time-averaged x'Qx + u'Ru after burn-in, averaged over independent rollouts
// (rollout r uses stream split(r) of the seed). Refuses unstable loops.
inline CostEstimate lqg_cost(const StateSpace& plant, const ControllerRealization& ctrl, const Matrix& q,
                             const Matrix& r, const LqgOptions& opts = {}) {
    if (opts.rollouts < 2) throw InputError("lqg_cost needs at least two rollouts for a standard error");
    const auto burn = static_cast<std::size_t>(std::floor(opts.burn_in_fraction * static_cast<double>(opts.horizon)));
    if (burn >= opts.horizon) throw InputError("burn-in consumes the whole horizon");
    CostEstimate est;
    est.spectral_radius = closed_loop_radius(plant, ctrl);
    if (!(est.spectral_radius < 1.0))
        throw InstabilityError("refusing cost of an unstable closed loop (spectral radius " +
                                   std::to_string(est.spectral_radius) + ")",
                               est.spectral_radius);

    est.per_rollout.assign(opts.rollouts, 0.0);
    const CounterRng root(opts.seed);
    auto run = [&](std::size_t i) {
        ControllerRealization local = ctrl;
        const auto tr = simulate(plant, local, opts.horizon, NoiseSpec::gaussian(root.split(i).key()));
        double acc = 0.0;
        for (std::size_t t = burn; t < tr.steps(); ++t)
            acc += (tr.x[t].transpose() * q * tr.x[t])(0, 0) + (tr.u[t].transpose() * r * tr.u[t])(0, 0);
        est.per_rollout[i] = tr.diverged ? std::numeric_limits<double>::infinity()
                                         : acc / static_cast<double>(opts.horizon - burn);
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, opts.rollouts));
    if (jobs == 1) {
        for (std::size_t i = 0; i < opts.rollouts; ++i) run(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < jobs; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < opts.rollouts; i += jobs) run(i);
            });
        for (auto& th : pool) th.join();
    }

    double sum = 0.0;
    for (double c : est.per_rollout) sum += c;
    est.mean = sum / static_cast<double>(opts.rollouts);
    double ss = 0.0;
    for (double c : est.per_rollout) ss += (c - est.mean) * (c - est.mean);
    est.standard_error = std::sqrt(ss / static_cast<double>(opts.rollouts - 1) / static_cast<double>(opts.rollouts));
    return est;
}

// CSV with columns t, x_1..x_n, u_1..u_m, y_1..y_p, then internal signals by
// name (xhat_1.., delta_hat_1..). Footer lines start with '#'.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, const std::vector<std::string>& footer = {}) {
    const std::size_t n = tr.x.empty() ? 0 : tr.x.front().rows();
    const std::size_t m = tr.u.empty() ? 0 : tr.u.front().rows();
    const std::size_t p = tr.y.empty() ? 0 : tr.y.front().rows();
    os << "t";
    for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
    for (std::size_t i = 1; i <= m; ++i) os << ",u_" << i;
    for (std::size_t i = 1; i <= p; ++i) os << ",y_" << i;
    for (const auto& [name, size] : tr.internal_layout)
        for (std::size_t i = 1; i <= size; ++i) os << ',' << name << '_' << i;
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t t = 0; t < tr.steps(); ++t) {
        os << t;
        for (const Matrix* v : {&tr.x[t], &tr.u[t], &tr.y[t]})
            for (std::size_t i = 0; i < v->rows(); ++i) os << ',' << (*v)(i, 0);
        const auto& sig = tr.internal[t];
        for (std::size_t s = 0; s < tr.internal_layout.size(); ++s) {
            const std::size_t size = tr.internal_layout[s].second;
            for (std::size_t i = 0; i < size; ++i) os << ',' << (s < sig.size() ? sig[s].value(i, 0) : 0.0);
        }
        os << '\n';
    }
    os << "# steps=" << tr.steps() << " horizon=" << tr.horizon << " seed=" << tr.seed << '\n';
    if (tr.diverged) os << "# diverged_at=" << tr.diverged_at << '\n';
    for (const auto& line : footer) os << "# " << line << '\n';
}

}  // namespace dpflab::sim
