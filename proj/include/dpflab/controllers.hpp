#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dpflab/numerics.hpp"
#include "dpflab/plant.hpp"

namespace dpflab {

// Gains below this magnitude are structural zeros: no edge is emitted for them.
inline constexpr double kStructuralZero = 1e-12;

enum class EdgeDirection { Forward, Feedback, Lateral };

inline std::string_view to_string(EdgeDirection d) {
    switch (d) {
        case EdgeDirection::Forward: return "forward";
        case EdgeDirection::Feedback: return "feedback";
        case EdgeDirection::Lateral: return "lateral";
    }
    return "forward";
}

// One labeled connection inside a controller. `gain` maps the source signal
// (cols) to the destination (rows) exactly as applied at run time.
struct Edge {
    std::string source;
    std::string dest;
    Matrix gain;
    EdgeDirection direction = EdgeDirection::Forward;
    std::size_t delay_steps = 0;
    std::string label;
};

struct DimensionReport {
    std::size_t forward_dim = 0;
    std::size_t feedback_dim = 0;

    friend bool operator==(const DimensionReport&, const DimensionReport&) = default;
};

enum class ControllerKind { StateFeedback, FullControl, OutputFeedback, Sls };

inline std::string_view to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::StateFeedback: return "sf";
        case ControllerKind::FullControl: return "fc";
        case ControllerKind::OutputFeedback: return "of";
        case ControllerKind::Sls: return "sls";
    }
    return "sf";
}

// xi(t+1) = Ac xi(t) + Bc y(t),  u(t) = Cc xi(t) + Dc y(t)
struct LtiRealization {
    Matrix ac, bc, cc, dc;
};

struct NamedSignal {
    std::string name;
    Matrix value;
};

// u = gain * y
struct StaticGainEngine {
    Matrix gain;
};

// u = -K xhat;  xhat(t+1) = (A - LC) xhat + B u + L y
struct ObserverEngine {
    Matrix a, b, c, k, l;
    Matrix xhat;
};

// Disturbance-estimating realization of a FIR closed-loop response:
//   xhat(t)  = sum_{k=2..T} Phi_x^(k) dhat(t-k+1)
//   dhat(t)  = y(t) - xhat(t)
//   u(t)     = sum_{k=1..T} Phi_u^(k) dhat(t-k+1)
// Only the last T-1 disturbance estimates are stored; xhat is recomputed from them.
struct SlsEngine {
    std::vector<Matrix> phi_x;  // phi_x[0] = I
    std::vector<Matrix> phi_u;
    std::vector<Matrix> ring;   // capacity T-1
    std::size_t head = 0;       // slot of the most recent dhat

    std::size_t horizon() const { return phi_x.size(); }

    // dhat(t - lag), lag >= 1
    const Matrix& past(std::size_t lag) const {
        const std::size_t cap = ring.size();
        return ring[(head + cap - (lag - 1)) % cap];
    }

    void push(Matrix dhat) {
        if (ring.empty()) return;
        head = (head + 1) % ring.size();
        ring[head] = std::move(dhat);
    }

    Matrix prediction() const {
        const std::size_t n = phi_x.front().rows();
        Matrix xhat(n, 1);
        for (std::size_t k = 2; k <= horizon(); ++k) xhat += phi_x[k - 1] * past(k - 1);
        return xhat;
    }
};

using ControllerEngine = std::variant<StaticGainEngine, ObserverEngine, SlsEngine>;

// Executable controller plus its wiring graph. step() is deterministic given
// the internal state; one thread per instance.
class ControllerRealization {
public:
    ControllerRealization(ControllerKind kind, ControllerEngine engine, std::vector<Edge> wiring,
                          std::vector<std::string> actuation, std::size_t measurement_dim, std::size_t input_dim)
        : kind_(kind),
          engine_(std::move(engine)),
          wiring_(std::move(wiring)),
          actuation_(std::move(actuation)),
          measurement_dim_(measurement_dim),
          input_dim_(input_dim) {
        reset();
    }

    ControllerKind kind() const noexcept { return kind_; }
    const std::vector<Edge>& wiring() const noexcept { return wiring_; }
    const std::vector<std::string>& actuation_signals() const noexcept { return actuation_; }
    const ControllerEngine& engine() const noexcept { return engine_; }
    std::size_t measurement_dim() const noexcept { return measurement_dim_; }
    std::size_t input_dim() const noexcept { return input_dim_; }

    // Edge classification for the (A - LC) estimator dynamics of OF controllers.
    void set_estimator_dynamics_direction(EdgeDirection d) {
        for (auto& e : wiring_)
            if (e.source == "xhat" && e.dest == "xhat") e.direction = d;
    }

    void reset() {
        last_internal_.clear();
        std::visit(
            [](auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, ObserverEngine>) {
                    e.xhat = Matrix(e.a.rows(), 1);
                } else if constexpr (std::is_same_v<E, SlsEngine>) {
                    const std::size_t n = e.phi_x.front().rows();
                    e.ring.assign(e.horizon() - 1, Matrix(n, 1));
                    e.head = 0;
                }
            },
            engine_);
    }

    // Consume measurement y(t), return actuation u(t), advance internal state.
    Matrix step(const Matrix& y) {
        if (y.rows() != measurement_dim_ || y.cols() != 1)
            throw DimensionError("controller measurement " + y.shape() + ", expected " + std::to_string(measurement_dim_) + "x1");
        return std::visit([&](auto& e) { return step_impl(e, y); }, engine_);
    }

    // Internal signals produced by the most recent step (empty for static gains).
    const std::vector<NamedSignal>& internal_signals() const noexcept { return last_internal_; }

    // Names and sizes of internal signals, fixed at construction.
    std::vector<std::pair<std::string, std::size_t>> internal_signal_layout() const {
        return std::visit(
            [](const auto& e) -> std::vector<std::pair<std::string, std::size_t>> {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, ObserverEngine>) {
                    return {{"xhat", e.a.rows()}};
                } else if constexpr (std::is_same_v<E, SlsEngine>) {
                    const std::size_t n = e.phi_x.front().rows();
                    return {{"xhat", n}, {"delta_hat", n}};
                } else {
                    return {};
                }
            },
            engine_);
    }

    LtiRealization lti() const {
        return std::visit([&](const auto& e) { return lti_impl(e); }, engine_);
    }

private:
    Matrix step_impl(StaticGainEngine& e, const Matrix& y) { return e.gain * y; }

    Matrix step_impl(ObserverEngine& e, const Matrix& y) {
        Matrix u = -(e.k * e.xhat);
        last_internal_ = {{"xhat", e.xhat}};
        e.xhat = e.a * e.xhat - e.l * (e.c * e.xhat) + e.b * u + e.l * y;
        return u;
    }

    Matrix step_impl(SlsEngine& e, const Matrix& y) {
        const Matrix xhat = e.prediction();
        Matrix dhat = y - xhat;
        Matrix u = e.phi_u[0] * dhat;
        for (std::size_t k = 2; k <= e.horizon(); ++k) u += e.phi_u[k - 1] * e.past(k - 1);
        last_internal_ = {{"xhat", xhat}, {"delta_hat", dhat}};
        e.push(std::move(dhat));
        return u;
    }

    LtiRealization lti_impl(const StaticGainEngine& e) const {
        return {Matrix(0, 0), Matrix(0, measurement_dim_), Matrix(input_dim_, 0), e.gain};
    }

    LtiRealization lti_impl(const ObserverEngine& e) const {
        return {e.a - e.l * e.c - e.b * e.k, e.l, -e.k, Matrix(input_dim_, measurement_dim_)};
    }

    LtiRealization lti_impl(const SlsEngine& e) const {
        const std::size_t n = e.phi_x.front().rows();
        const std::size_t m = e.phi_u.front().rows();
        const std::size_t taps = e.horizon() - 1;
        const std::size_t dim = n * taps;
        Matrix hx(n, dim), hu(m, dim);
        for (std::size_t k = 2; k <= e.horizon(); ++k) {
            hx.set_block(0, (k - 2) * n, e.phi_x[k - 1]);
            hu.set_block(0, (k - 2) * n, e.phi_u[k - 1]);
        }
        Matrix ac(dim, dim), bc(dim, n);
        if (dim > 0) {
            ac.set_block(0, 0, -hx);
            for (std::size_t i = n; i < dim; ++i) ac(i, i - n) = 1.0;
            bc.set_block(0, 0, Matrix::identity(n));
        }
        return {ac, bc, hu - e.phi_u[0] * hx, e.phi_u[0]};
    }

    ControllerKind kind_;
    ControllerEngine engine_;
    std::vector<Edge> wiring_;
    std::vector<std::string> actuation_;
    std::size_t measurement_dim_;
    std::size_t input_dim_;
    std::vector<NamedSignal> last_internal_;
};

// ---------------------------------------------------------------------------
// Structural analysis

inline std::vector<Edge> extract_dpf(const ControllerRealization& ctrl) {
    std::vector<Edge> out;
    for (const auto& e : ctrl.wiring())
        if (e.direction == EdgeDirection::Feedback) out.push_back(e);
    return out;
}

// forward: distinct signals entering external actuation through forward edges;
// feedback: every feedback or lateral edge contributes the size of the signal it carries.
inline DimensionReport report_signal_dims(const ControllerRealization& ctrl) {
    DimensionReport rep;
    const auto& act = ctrl.actuation_signals();
    std::set<std::string> seen;
    for (const auto& e : ctrl.wiring()) {
        if (e.direction == EdgeDirection::Forward) {
            if (std::find(act.begin(), act.end(), e.dest) == act.end()) continue;
            if (seen.insert(e.source).second) rep.forward_dim += e.gain.cols();
        } else {
            rep.feedback_dim += e.gain.cols();
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Constructors

namespace detail {

inline std::string input_name(const StateSpace& p, std::size_t i) {
    return p.inputs() == 1 ? std::string("u") : "u" + std::to_string(i + 1);
}

inline std::string state_name(const StateSpace& p, std::size_t i) {
    return p.states() == 1 ? std::string("x") : "x" + std::to_string(i + 1);
}

inline std::vector<std::string> external_inputs(const StateSpace& p) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < p.inputs(); ++i)
        if (p.input_roles[i] == SignalRole::External) out.push_back(input_name(p, i));
    return out;
}

// Delay states are controller-internal memory: each nonzero A(i, j) into an
// internal-delay state is a forward wire with one step of latency.
inline void append_delay_wires(const StateSpace& p, std::vector<Edge>& wiring) {
    for (std::size_t i = 0; i < p.states(); ++i) {
        if (p.state_roles[i] != SignalRole::InternalDelay) continue;
        for (std::size_t j = 0; j < p.states(); ++j) {
            if (std::abs(p.a(i, j)) < kStructuralZero) continue;
            wiring.push_back({state_name(p, j), state_name(p, i), Matrix{{p.a(i, j)}}, EdgeDirection::Forward, 1,
                              "z^-1"});
        }
    }
    // The sensor reads a delay state directly.
    for (std::size_t r = 0; r < p.outputs(); ++r)
        for (std::size_t j = 0; j < p.states(); ++j)
            if (p.state_roles[j] == SignalRole::InternalDelay && std::abs(p.c(r, j)) >= kStructuralZero)
                wiring.push_back({state_name(p, j), p.outputs() == 1 ? std::string("y") : "y" + std::to_string(r + 1),
                                  Matrix{{p.c(r, j)}}, EdgeDirection::Forward, 0, "C"});
}

inline bool is_identity(const Matrix& m) { return m.is_square() && m == Matrix::identity(m.rows()); }

inline bool is_zero_matrix(const Matrix& m) { return m.max_abs() == 0.0; }

}  // namespace detail

// Static output gain u = gain * y on a full-actuation plant; per-input edges,
// classified feedback when they drive an internal wire.
inline ControllerRealization make_fc_with_gain(const StateSpace& plant, const Matrix& gain) {
    validate(plant);
    if (gain.rows() != plant.inputs() || gain.cols() != plant.outputs())
        throw DimensionError("FC gain " + gain.shape() + " for plant with " + std::to_string(plant.inputs()) +
                             " inputs and " + std::to_string(plant.outputs()) + " outputs");
    std::vector<Edge> wiring;
    for (std::size_t i = 0; i < plant.inputs(); ++i) {
        const Matrix row = gain.row(i);
        if (row.max_abs() < kStructuralZero) continue;
        const auto dir = plant.input_roles[i] == SignalRole::InternalWire ? EdgeDirection::Feedback : EdgeDirection::Forward;
        wiring.push_back({"y", detail::input_name(plant, i), row, dir, 0, "l" + std::to_string(i + 1)});
    }
    detail::append_delay_wires(plant, wiring);
    return ControllerRealization(ControllerKind::FullControl, StaticGainEngine{gain}, std::move(wiring),
                                 detail::external_inputs(plant), plant.outputs(), plant.inputs());
}

// Static state feedback u = gain * y with y = C x; one forward edge, no DPF.
inline ControllerRealization make_sf_with_gain(const StateSpace& plant, const Matrix& gain) {
    validate(plant);
    if (gain.rows() != plant.inputs() || gain.cols() != plant.outputs())
        throw DimensionError("SF gain " + gain.shape() + " for plant with " + std::to_string(plant.inputs()) +
                             " inputs and " + std::to_string(plant.outputs()) + " outputs");
    std::vector<Edge> wiring;
    if (gain.max_abs() >= kStructuralZero) wiring.push_back({"y", "u", gain, EdgeDirection::Forward, 0, "K"});
    return ControllerRealization(ControllerKind::StateFeedback, StaticGainEngine{gain}, std::move(wiring), {"u"},
                                 plant.outputs(), plant.inputs());
}

// State feedback u = -K x for perfectly sensed plants (V = 0, C invertible).
inline ControllerRealization make_sf(const StateSpace& plant, const Matrix& q, const Matrix& r,
                                     const numerics::RiccatiOptions& opts = {}) {
    validate(plant);
    if (!detail::is_zero_matrix(plant.v))
        throw PreconditionError("SF requires perfect sensing (V = 0); use the FC or OF controller for noisy measurements");
    if (!plant.c.is_square()) throw PreconditionError("SF requires a square, invertible C");
    numerics::LuDecomposition lu(plant.c);
    if (lu.singular()) throw PreconditionError("SF requires a square, invertible C");

    numerics::RiccatiSolution sol;
    try {
        sol = numerics::solve_dare(plant.a, plant.b, q, r, opts);
    } catch (const NonConvergenceError& e) {
        throw SynthesisError(std::string("SF synthesis failed: ") + e.what());
    }
    // u = -K x = -K C^-1 y
    return make_sf_with_gain(plant, -(sol.gain * numerics::inverse(plant.c)));
}

// Full control u = -L y with L the predictor gain of the filter DARE (W, V).
inline ControllerRealization make_fc(const StateSpace& plant, const Matrix& w, const Matrix& v,
                                     const numerics::RiccatiOptions& opts = {}) {
    validate(plant);
    if (!detail::is_identity(plant.b))
        throw PreconditionError("FC requires full actuation (B = I); reformulate delay states with internal wires");
    if (!numerics::is_pd(v)) throw PreconditionError("FC synthesis requires a positive-definite sensor noise covariance V");
    numerics::RiccatiSolution sol;
    try {
        sol = numerics::solve_filter_dare(plant.a, plant.c, w, v, opts);
    } catch (const NonConvergenceError& e) {
        throw SynthesisError(std::string("FC synthesis failed: ") + e.what());
    }
    return make_fc_with_gain(plant, -sol.gain);
}

inline ControllerRealization make_fc(const StateSpace& plant, const numerics::RiccatiOptions& opts = {}) {
    return make_fc(plant, plant.w, plant.v, opts);
}

struct OfOptions {
    // (A - LC) estimator dynamics read as lateral connections unless set.
    bool estimator_dynamics_as_feedback = false;
    numerics::RiccatiOptions riccati{};
};

// Observer-based controller from explicit gains.
inline ControllerRealization make_of_with_gains(const StateSpace& plant, const Matrix& k, const Matrix& l,
                                                const OfOptions& opts = {}) {
    validate(plant);
    const std::size_t n = plant.states();
    if (k.rows() != plant.inputs() || k.cols() != n) throw DimensionError("K has shape " + k.shape());
    if (l.rows() != n || l.cols() != plant.outputs()) throw DimensionError("L has shape " + l.shape());

    std::vector<Edge> wiring;
    const Matrix alc = plant.a - l * plant.c;
    const auto dyn = opts.estimator_dynamics_as_feedback ? EdgeDirection::Feedback : EdgeDirection::Lateral;
    if (l.max_abs() >= kStructuralZero) wiring.push_back({"y", "xhat", l, EdgeDirection::Forward, 1, "L"});
    if (plant.b.max_abs() >= kStructuralZero) wiring.push_back({"u", "xhat", plant.b, EdgeDirection::Feedback, 1, "B"});
    if (alc.max_abs() >= kStructuralZero) wiring.push_back({"xhat", "xhat", alc, dyn, 1, "A-LC"});
    if (k.max_abs() >= kStructuralZero) wiring.push_back({"xhat", "u", -k, EdgeDirection::Forward, 0, "-K"});

    ObserverEngine engine{plant.a, plant.b, plant.c, k, l, Matrix(n, 1)};
    return ControllerRealization(ControllerKind::OutputFeedback, std::move(engine), std::move(wiring), {"u"},
                                 plant.outputs(), plant.inputs());
}

// Output feedback: K from the control DARE (Q, R), L from the filter DARE (W, V).
inline ControllerRealization make_of(const StateSpace& plant, const Matrix& q, const Matrix& r, const Matrix& w,
                                     const Matrix& v, const OfOptions& opts = {}) {
    validate(plant);
    numerics::RiccatiSolution ctrl, filt;
    try {
        ctrl = numerics::solve_dare(plant.a, plant.b, q, r, opts.riccati);
    } catch (const NonConvergenceError& e) {
        throw SynthesisError(std::string("OF synthesis failed, (A, B) not stabilizable: ") + e.what());
    }
    try {
        filt = numerics::solve_filter_dare(plant.a, plant.c, w, v, opts.riccati);
    } catch (const NonConvergenceError& e) {
        throw SynthesisError(std::string("OF synthesis failed, (C, A) not detectable: ") + e.what());
    }
    return make_of_with_gains(plant, ctrl.gain, filt.gain, opts);
}

// ---------------------------------------------------------------------------
// Closed-form gains for the one-step delay chain

struct ScalarDelayGains {
    double l1 = 0.0;
    double l2 = 0.0;
    double p2 = 0.0;    // off-diagonal entry of the filter Riccati solution
    double beta = 0.0;  // NaN in the limit case
    bool limit_case = false;  // a = 0: closed form undefined, iteration used
};

// Filter gains of the Td = 1 chain (W = sigma_w^2 e1 e1', V = sigma_v^2) in
// closed form. With P the stabilizing filter solution:
//   beta = (1/a - a) sigma_v^2 - sigma_w^2 / a
//   p2   = P12 = (a^2 / 2) (-beta +- sqrt(beta^2 + (2 sigma_w sigma_v / a)^2))
//   P22  = p2 / a,   P11 = P22 + p2^2 / (P22 + sigma_v^2)
//   l2   = p2 / (P22 + sigma_v^2),   l1 = a l2
// The root is the one whose assembled P is PSD and stabilizing.
inline ScalarDelayGains scalar_delay_gains(double a, double sigma_w, double sigma_v) {
    if (!(sigma_w >= 0.0) || !(sigma_v >= 0.0)) throw InputError("standard deviations must be nonnegative");
    if (!std::isfinite(a)) throw InputError("plant pole must be finite");
    const double vw = sigma_w * sigma_w, vv = sigma_v * sigma_v;

    if (a == 0.0) {
        ScalarDelayGains g;
        g.limit_case = true;
        g.beta = std::numeric_limits<double>::quiet_NaN();
        if (vv > 0.0) {
            const auto plant = delay_chain_plant({1, 0.0, sigma_w, sigma_v, true, true});
            const auto sol = numerics::solve_filter_dare(plant.a, plant.c, plant.w, plant.v);
            g.l1 = sol.gain(0, 0);
            g.l2 = sol.gain(1, 0);
            g.p2 = sol.p(0, 1);
        }
        return g;
    }

    const double beta = (1.0 / a - a) * vv - vw / a;
    const double disc = std::sqrt(beta * beta + std::pow(2.0 * sigma_w * sigma_v / a, 2));
    const std::array<double, 2> roots{0.5 * a * a * (-beta + disc), 0.5 * a * a * (-beta - disc)};

    std::optional<ScalarDelayGains> best;
    double best_trace = -1.0;
    for (double p2 : roots) {
        const double p22 = p2 / a;
        const double denom = p22 + vv;
        if (!(denom > 0.0)) continue;
        const double p11 = p22 + p2 * p2 / denom;
        const double tol = 1e-12 * std::max(1.0, std::abs(p11) + std::abs(p22));
        if (p22 < -tol || p11 < -tol || p11 * p22 - p2 * p2 < -tol * std::max(1.0, std::abs(p11))) continue;
        const double l2 = p2 / denom;
        const double l1 = a * l2;
        // A - LC = [[a, -l1], [1, -l2]]
        const double rho = numerics::spectral_radius(Matrix{{a, -l1}, {1.0, -l2}});
        if (!(rho < 1.0)) continue;
        if (p11 + p22 > best_trace) {
            best_trace = p11 + p22;
            best = ScalarDelayGains{l1, l2, p2, beta, false};
        }
    }
    if (!best) {
        if (vv == 0.0 && vw == 0.0) throw InputError("gain undefined with sigma_w = sigma_v = 0");
        throw SynthesisError("no root of the closed form yields a stabilizing PSD solution");
    }
    return *best;
}

// ---------------------------------------------------------------------------
// DOT export

inline std::string to_dot(const ControllerRealization& ctrl, const std::string& name = "controller") {
    std::ostringstream os;
    os << "digraph " << name << " {\n  rankdir=LR;\n  node [shape=box];\n";
    for (const auto& e : ctrl.wiring()) {
        os << "  \"" << e.source << "\" -> \"" << e.dest << "\" [label=\"" << e.label;
        if (e.delay_steps > 0) os << " z^-" << e.delay_steps;
        os << "\"";
        switch (e.direction) {
            case EdgeDirection::Feedback: os << ", color=blue, fontcolor=blue"; break;
            case EdgeDirection::Lateral: os << ", color=gray40, style=dashed"; break;
            case EdgeDirection::Forward: break;
        }
        os << ", class=\"" << to_string(e.direction) << "\"];\n";
    }
    if (ctrl.kind() == ControllerKind::Sls && !ctrl.wiring().empty())
        os << "  \"xhat\" -> \"delta_hat\" [label=\"-I (comparator)\", color=blue, style=dotted];\n";
    os << "}\n";
    return os.str();
}

}  // namespace dpflab
