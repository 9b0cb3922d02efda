#pragma once

// Plain-text artifacts: INI documents (boost::property_tree) whose values are
// scalars, comma lists or matrix literals "[1, 0; 0, 1]". Grammar in docs/formats.md.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpflab/controllers.hpp"
#include "dpflab/plant.hpp"
#include "dpflab/sls.hpp"

namespace dpflab::io {

using Document = boost::property_tree::ptree;

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::string_view what) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw InputError("cannot parse number '" + std::string(text) + "' in " + std::string(what));
    if (!std::isfinite(v)) throw InputError(std::string(what) + " must be finite");
    return v;
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i)
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace detail

// "[a, b; c, d]" (rows by ';', entries by ','), "[]" for an empty matrix, or a
// bare number for 1x1.
inline Matrix parse_matrix(std::string_view text, std::string_view what) {
    text = detail::trim(text);
    if (text.empty()) throw InputError(std::string(what) + " is empty");
    if (text.front() != '[') return Matrix{{parse_double(text, what)}};
    if (text.back() != ']') throw InputError(std::string(what) + ": missing closing ']'");
    const std::string_view body = detail::trim(text.substr(1, text.size() - 2));
    if (body.empty()) return Matrix();
    std::vector<std::vector<double>> rows;
    for (auto row : detail::split(body, ';')) {
        rows.emplace_back();
        for (auto cell : detail::split(row, ',')) rows.back().push_back(parse_double(cell, what));
        if (rows.back().size() != rows.front().size())
            throw InputError(std::string(what) + ": ragged matrix literal (row " + std::to_string(rows.size()) + ")");
    }
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    return m;
}

inline std::string format_matrix(const Matrix& m) {
    std::string s = "[";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (i) s += "; ";
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) s += ", ";
            s += format_double(m(i, j));
        }
    }
    return s + "]";
}

inline Document read_document(std::istream& is, const std::string& source) {
    Document doc;
    try {
        boost::property_tree::ini_parser::read_ini(is, doc);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw InputError(source + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    return doc;
}

inline Document read_document_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_document(in, path);
}

inline void write_document(std::ostream& os, const Document& doc) { boost::property_tree::ini_parser::write_ini(os, doc); }

inline void write_document_file(const std::string& path, const Document& doc) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    write_document(out, doc);
}

// Rejects keys outside `allowed` in section `name` (absent section is fine).
inline void check_keys(const Document& doc, const std::string& name, const std::set<std::string>& allowed) {
    const auto sec = doc.get_child_optional(name);
    if (!sec) return;
    for (const auto& [key, _] : *sec)
        if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in section [" + name + "]");
}

inline void check_sections(const Document& doc, const std::set<std::string>& allowed) {
    for (const auto& [key, node] : doc) {
        if (node.empty() && !node.data().empty())
            throw InputError("key '" + key + "' outside any section");
        if (!allowed.count(key)) throw InputError("unknown section [" + key + "]");
    }
}

inline std::optional<std::string> get(const Document& doc, const std::string& section, const std::string& key) {
    const auto sec = doc.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return *v;
}

inline std::string require(const Document& doc, const std::string& section, const std::string& key) {
    auto v = get(doc, section, key);
    if (!v) throw InputError("missing key '" + key + "' in section [" + section + "]");
    return *v;
}

inline Matrix require_matrix(const Document& doc, const std::string& section, const std::string& key) {
    return parse_matrix(require(doc, section, key), "[" + section + "] " + key);
}

inline void put(Document& doc, const std::string& section, const std::string& key, const std::string& value) {
    doc.put(boost::property_tree::ptree::path_type(section + '\x1f' + key, '\x1f'), value);
}

inline void put_matrix(Document& doc, const std::string& section, const std::string& key, const Matrix& m) {
    put(doc, section, key, format_matrix(m));
}

// ---------------------------------------------------------------------------
// Plant: [plant] A, B, C, W, V, optional state_roles / input_roles.

inline StateSpace plant_from_document(const Document& doc) {
    check_keys(doc, "plant", {"A", "B", "C", "W", "V", "state_roles", "input_roles"});
    if (!doc.get_child_optional("plant")) throw InputError("missing section [plant]");
    StateSpace p;
    p.a = require_matrix(doc, "plant", "A");
    p.b = require_matrix(doc, "plant", "B");
    p.c = require_matrix(doc, "plant", "C");
    p.w = require_matrix(doc, "plant", "W");
    p.v = require_matrix(doc, "plant", "V");
    auto roles = [&](const std::string& key, std::size_t count) {
        std::vector<SignalRole> out(count, SignalRole::External);
        if (auto text = get(doc, "plant", key)) {
            const auto parts = detail::split(*text, ',');
            if (parts.size() != count)
                throw InputError("[plant] " + key + " lists " + std::to_string(parts.size()) + " roles, expected " +
                                 std::to_string(count));
            for (std::size_t i = 0; i < count; ++i) out[i] = signal_role_from_string(detail::trim(parts[i]));
        }
        return out;
    };
    p.state_roles = roles("state_roles", p.a.rows());
    p.input_roles = roles("input_roles", p.b.cols());
    validate(p);
    return p;
}

inline void plant_to_document(Document& doc, const StateSpace& p) {
    put_matrix(doc, "plant", "A", p.a);
    put_matrix(doc, "plant", "B", p.b);
    put_matrix(doc, "plant", "C", p.c);
    put_matrix(doc, "plant", "W", p.w);
    put_matrix(doc, "plant", "V", p.v);
    auto join = [](const std::vector<SignalRole>& roles) {
        std::string s;
        for (std::size_t i = 0; i < roles.size(); ++i) s += (i ? ", " : "") + std::string(to_string(roles[i]));
        return s;
    };
    put(doc, "plant", "state_roles", join(p.state_roles));
    put(doc, "plant", "input_roles", join(p.input_roles));
}

inline StateSpace read_plant_file(const std::string& path) {
    const auto doc = read_document_file(path);
    check_sections(doc, {"plant"});
    return plant_from_document(doc);
}

// ---------------------------------------------------------------------------
// SLS response: [sls] horizon, cost, phi_x_k, phi_u_k (k = 1..T), optional
// x_delay / u_delay.

inline sls::SlsResponse sls_from_document(const Document& doc) {
    if (!doc.get_child_optional("sls")) throw InputError("missing section [sls]");
    sls::SlsResponse r;
    const double t = parse_double(require(doc, "sls", "horizon"), "[sls] horizon");
    if (t < 1 || t != std::floor(t) || t > 100000) throw InputError("[sls] horizon must be a positive integer");
    r.horizon = static_cast<std::size_t>(t);
    std::set<std::string> allowed{"horizon", "cost", "x_delay", "u_delay"};
    for (std::size_t k = 1; k <= r.horizon; ++k) {
        allowed.insert("phi_x_" + std::to_string(k));
        allowed.insert("phi_u_" + std::to_string(k));
        r.phi_x.push_back(require_matrix(doc, "sls", "phi_x_" + std::to_string(k)));
        r.phi_u.push_back(require_matrix(doc, "sls", "phi_u_" + std::to_string(k)));
    }
    check_keys(doc, "sls", allowed);
    const std::size_t n = r.phi_x.front().rows(), m = r.phi_u.front().rows();
    for (std::size_t k = 0; k < r.horizon; ++k) {
        if (r.phi_x[k].rows() != n || r.phi_x[k].cols() != n)
            throw DimensionError("phi_x_" + std::to_string(k + 1) + " has shape " + r.phi_x[k].shape());
        if (r.phi_u[k].rows() != m || r.phi_u[k].cols() != n)
            throw DimensionError("phi_u_" + std::to_string(k + 1) + " has shape " + r.phi_u[k].shape());
    }
    if (auto c = get(doc, "sls", "cost")) r.cost = parse_double(*c, "[sls] cost");
    const auto xd = get(doc, "sls", "x_delay"), ud = get(doc, "sls", "u_delay");
    if (xd.has_value() != ud.has_value()) throw InputError("[sls] needs both x_delay and u_delay, or neither");
    if (xd) r.mask = sls::DelayMask{parse_matrix(*xd, "[sls] x_delay"), parse_matrix(*ud, "[sls] u_delay")};
    return r;
}

inline void sls_to_document(Document& doc, const sls::SlsResponse& r) {
    put(doc, "sls", "horizon", std::to_string(r.horizon));
    put(doc, "sls", "cost", format_double(r.cost));
    for (std::size_t k = 1; k <= r.horizon; ++k) {
        put_matrix(doc, "sls", "phi_x_" + std::to_string(k), r.phi_x[k - 1]);
        put_matrix(doc, "sls", "phi_u_" + std::to_string(k), r.phi_u[k - 1]);
    }
    if (r.mask) {
        put_matrix(doc, "sls", "x_delay", r.mask->x_delay);
        put_matrix(doc, "sls", "u_delay", r.mask->u_delay);
    }
}

// Long-form CSV of the spectral components: map, k, row, col, value.
inline void write_sls_csv(std::ostream& os, const sls::SlsResponse& r) {
    os << "map,k,row,col,value\n";
    for (const char* name : {"phi_x", "phi_u"}) {
        const auto& comps = std::string_view(name) == "phi_x" ? r.phi_x : r.phi_u;
        for (std::size_t k = 1; k <= comps.size(); ++k)
            for (std::size_t i = 0; i < comps[k - 1].rows(); ++i)
                for (std::size_t j = 0; j < comps[k - 1].cols(); ++j)
                    os << name << ',' << k << ',' << i + 1 << ',' << j + 1 << ',' << format_double(comps[k - 1](i, j))
                       << '\n';
    }
}

// Mask file: [mask] x_delay, u_delay.
inline sls::DelayMask read_mask_file(const std::string& path) {
    const auto doc = read_document_file(path);
    check_sections(doc, {"mask"});
    check_keys(doc, "mask", {"x_delay", "u_delay"});
    return {require_matrix(doc, "mask", "x_delay"), require_matrix(doc, "mask", "u_delay")};
}

// ---------------------------------------------------------------------------
// Controller artifact: the plant it was designed for plus the design data.
//   [controller] kind = sf | fc | of | sls, estimator_dynamics = lateral | feedback (of)
//   [gains]      gain (sf, fc: u = gain y), K and L (of)
//   [weights]    Q, R (optional; used by audits)
//   [sls]        see above

struct ControllerArtifact {
    ControllerKind kind = ControllerKind::FullControl;
    StateSpace plant;
    Matrix gain;  // sf, fc
    Matrix k, l;  // of
    bool estimator_dynamics_as_feedback = false;
    std::optional<sls::SlsResponse> response;
    std::optional<Matrix> q, r;

    ControllerRealization realize() const {
        switch (kind) {
            case ControllerKind::StateFeedback:
                return make_sf_with_gain(plant, gain);
            case ControllerKind::FullControl:
                return make_fc_with_gain(plant, gain);
            case ControllerKind::OutputFeedback: {
                OfOptions opts;
                opts.estimator_dynamics_as_feedback = estimator_dynamics_as_feedback;
                return make_of_with_gains(plant, k, l, opts);
            }
            case ControllerKind::Sls:
                if (!response) throw InputError("SLS artifact has no response");
                if (response->states() != plant.states() || response->inputs() != plant.inputs())
                    throw DimensionError("SLS response does not match the plant dimensions");
                return sls::make_sls_controller(*response);
        }
        throw InputError("unknown controller kind");
    }
};

inline ControllerKind controller_kind_from_string(std::string_view s) {
    if (s == "sf") return ControllerKind::StateFeedback;
    if (s == "fc") return ControllerKind::FullControl;
    if (s == "of") return ControllerKind::OutputFeedback;
    if (s == "sls") return ControllerKind::Sls;
    throw InputError("unknown controller kind '" + std::string(s) + "' (expected sf, fc, of or sls)");
}

inline ControllerArtifact artifact_from_document(const Document& doc) {
    check_sections(doc, {"plant", "controller", "gains", "weights", "sls"});
    check_keys(doc, "controller", {"kind", "estimator_dynamics"});
    check_keys(doc, "gains", {"gain", "K", "L"});
    check_keys(doc, "weights", {"Q", "R"});
    ControllerArtifact a;
    a.plant = plant_from_document(doc);
    a.kind = controller_kind_from_string(require(doc, "controller", "kind"));
    if (auto dyn = get(doc, "controller", "estimator_dynamics")) {
        if (*dyn != "lateral" && *dyn != "feedback")
            throw InputError("[controller] estimator_dynamics must be lateral or feedback");
        a.estimator_dynamics_as_feedback = *dyn == "feedback";
    }
    switch (a.kind) {
        case ControllerKind::StateFeedback:
        case ControllerKind::FullControl:
            a.gain = require_matrix(doc, "gains", "gain");
            break;
        case ControllerKind::OutputFeedback:
            a.k = require_matrix(doc, "gains", "K");
            a.l = require_matrix(doc, "gains", "L");
            break;
        case ControllerKind::Sls:
            a.response = sls_from_document(doc);
            break;
    }
    if (auto q = get(doc, "weights", "Q")) a.q = parse_matrix(*q, "[weights] Q");
    if (auto r = get(doc, "weights", "R")) a.r = parse_matrix(*r, "[weights] R");
    return a;
}

inline Document artifact_to_document(const ControllerArtifact& a) {
    Document doc;
    put(doc, "controller", "kind", std::string(to_string(a.kind)));
    if (a.kind == ControllerKind::OutputFeedback)
        put(doc, "controller", "estimator_dynamics", a.estimator_dynamics_as_feedback ? "feedback" : "lateral");
    plant_to_document(doc, a.plant);
    switch (a.kind) {
        case ControllerKind::StateFeedback:
        case ControllerKind::FullControl:
            put_matrix(doc, "gains", "gain", a.gain);
            break;
        case ControllerKind::OutputFeedback:
            put_matrix(doc, "gains", "K", a.k);
            put_matrix(doc, "gains", "L", a.l);
            break;
        case ControllerKind::Sls:
            if (a.response) sls_to_document(doc, *a.response);
            break;
    }
    if (a.q) put_matrix(doc, "weights", "Q", *a.q);
    if (a.r) put_matrix(doc, "weights", "R", *a.r);
    return doc;
}

inline ControllerArtifact read_artifact_file(const std::string& path) { return artifact_from_document(read_document_file(path)); }

inline void write_artifact_file(const std::string& path, const ControllerArtifact& a) {
    write_document_file(path, artifact_to_document(a));
}

}  // namespace dpflab::io
