#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dpflab/numerics.hpp"

namespace dpflab {

// Which side of the controller/plant boundary a state or input lives on.
enum class SignalRole {
    External,       // physical plant state or costly actuator
    InternalDelay,  // delay state carried inside the controller
    InternalWire,   // cheap internal actuation of a delay state
};

inline std::string_view to_string(SignalRole r) {
    switch (r) {
        case SignalRole::External: return "external";
        case SignalRole::InternalDelay: return "internal-delay";
        case SignalRole::InternalWire: return "internal-wire";
    }
    return "external";
}

inline SignalRole signal_role_from_string(std::string_view s) {
    if (s == "external") return SignalRole::External;
    if (s == "internal-delay") return SignalRole::InternalDelay;
    if (s == "internal-wire") return SignalRole::InternalWire;
    throw InputError("unknown signal role '" + std::string(s) + "'");
}

// x(t+1) = A x(t) + B u(t) + w(t),  y(t) = C x(t) + v(t),  w ~ (0, W), v ~ (0, V).
struct StateSpace {
    Matrix a, b, c, w, v;
    std::vector<SignalRole> state_roles;  // size n
    std::vector<SignalRole> input_roles;  // size m

    std::size_t states() const { return a.rows(); }
    std::size_t inputs() const { return b.cols(); }
    std::size_t outputs() const { return c.rows(); }

    std::size_t external_states() const {
        std::size_t k = 0;
        for (auto r : state_roles) k += r == SignalRole::External;
        return k;
    }

    std::size_t internal_delay_states() const {
        std::size_t k = 0;
        for (auto r : state_roles) k += r == SignalRole::InternalDelay;
        return k;
    }
};

// Throws DimensionError / InputError when the invariants of StateSpace fail.
inline void validate(const StateSpace& p) {
    const std::size_t n = p.a.rows();
    require_square(p.a, "A");
    if (p.b.rows() != n) throw DimensionError("B has " + p.b.shape() + ", expected " + std::to_string(n) + " rows");
    if (p.c.cols() != n) throw DimensionError("C has " + p.c.shape() + ", expected " + std::to_string(n) + " columns");
    if (p.w.rows() != n || p.w.cols() != n) throw DimensionError("W has " + p.w.shape() + ", expected " + std::to_string(n) + "x" + std::to_string(n));
    const std::size_t q = p.c.rows();
    if (p.v.rows() != q || p.v.cols() != q) throw DimensionError("V has " + p.v.shape() + ", expected " + std::to_string(q) + "x" + std::to_string(q));
    if (p.state_roles.size() != n) throw DimensionError("state_roles length mismatch");
    if (p.input_roles.size() != p.b.cols()) throw DimensionError("input_roles length mismatch");
    for (const auto* m : {&p.a, &p.b, &p.c, &p.w, &p.v}) require_finite(*m, "plant matrix");
    if (!numerics::is_psd(p.w)) throw InputError("W must be symmetric positive semidefinite");
    if (!numerics::is_psd(p.v)) throw InputError("V must be symmetric positive semidefinite");
}

// Plant with every state and input labeled external.
inline StateSpace make_state_space(Matrix a, Matrix b, Matrix c, Matrix w, Matrix v) {
    StateSpace p{std::move(a), std::move(b), std::move(c), std::move(w), std::move(v), {}, {}};
    p.state_roles.assign(p.a.rows(), SignalRole::External);
    p.input_roles.assign(p.b.cols(), SignalRole::External);
    validate(p);
    return p;
}

// x(t+1) = a x(t) + u(t) + w(t),  y(t) = x(t) + v(t).
inline StateSpace scalar_plant(double a, double sigma_w, double sigma_v) {
    if (!(sigma_w >= 0.0) || !(sigma_v >= 0.0)) throw InputError("standard deviations must be nonnegative");
    if (!std::isfinite(a)) throw InputError("plant pole must be finite");
    return make_state_space(Matrix{{a}}, Matrix{{1.0}}, Matrix{{1.0}}, Matrix{{sigma_w * sigma_w}},
                            Matrix{{sigma_v * sigma_v}});
}

struct DelaySpec {
    std::size_t net_delay_steps = 1;  // Td
    double base_a = 1.0;
    double sigma_w = 1.0;
    double sigma_v = 1.0;
    bool disturbance_on_external_only = true;
    // B = I (internal wires actuate every delay state) instead of B = e1.
    bool full_control = true;
};

// External state x1 followed by Td delay states:
//   x1(t+1) = a x1(t) + u1(t) + w1(t)
//   x_i(t+1) = x_{i-1}(t) + u_i(t),  i = 2..Td+1   (u_i only when full_control)
//   y(t) = x_{Td+1}(t) + v(t)
inline StateSpace delay_chain_plant(const DelaySpec& spec) {
    if (!(spec.sigma_w >= 0.0) || !(spec.sigma_v >= 0.0)) throw InputError("standard deviations must be nonnegative");
    if (!std::isfinite(spec.base_a)) throw InputError("plant pole must be finite");
    const std::size_t n = spec.net_delay_steps + 1;

    StateSpace p;
    p.a = Matrix(n, n);
    p.a(0, 0) = spec.base_a;
    for (std::size_t i = 1; i < n; ++i) p.a(i, i - 1) = 1.0;

    if (spec.full_control || n == 1) {
        p.b = Matrix::identity(n);
    } else {
        p.b = Matrix::unit(n, 0);
    }
    p.c = Matrix(1, n);
    p.c(0, n - 1) = 1.0;

    const double vw = spec.sigma_w * spec.sigma_w;
    if (spec.disturbance_on_external_only) {
        p.w = Matrix(n, n);
        p.w(0, 0) = vw;
    } else {
        p.w = Matrix::identity(n) * vw;
    }
    p.v = Matrix{{spec.sigma_v * spec.sigma_v}};

    p.state_roles.assign(n, SignalRole::InternalDelay);
    p.state_roles[0] = SignalRole::External;
    p.input_roles.assign(p.b.cols(), SignalRole::InternalWire);
    p.input_roles[0] = SignalRole::External;
    validate(p);
    return p;
}

// Default LQG weights: unit cost on external states and external inputs,
// zero on delay states, and `internal_input_weight` on internal wires so R
// stays positive definite.
struct Weights {
    Matrix q, r;
};

inline Weights default_weights(const StateSpace& p, double internal_input_weight = 1e-8) {
    Weights w{Matrix(p.states(), p.states()), Matrix(p.inputs(), p.inputs())};
    for (std::size_t i = 0; i < p.states(); ++i) w.q(i, i) = p.state_roles[i] == SignalRole::External ? 1.0 : 0.0;
    for (std::size_t i = 0; i < p.inputs(); ++i)
        w.r(i, i) = p.input_roles[i] == SignalRole::External ? 1.0 : internal_input_weight;
    return w;
}

// [C; CA; ...; CA^{n-1}]
inline Matrix observability_matrix(const Matrix& a, const Matrix& c) {
    const std::size_t n = a.rows(), q = c.rows();
    Matrix o(n * q, n);
    Matrix block = c;
    for (std::size_t k = 0; k < n; ++k) {
        o.set_block(k * q, 0, block);
        block = block * a;
    }
    return o;
}

inline std::size_t numerical_rank(const Matrix& m) { return numerics::pivoted_qr(m).rank; }

inline bool is_observable(const Matrix& a, const Matrix& c) { return numerical_rank(observability_matrix(a, c)) == a.rows(); }

}  // namespace dpflab
