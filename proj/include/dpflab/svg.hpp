#pragma once

// Diagnostic SVG plots. CSV is the data contract; these are for eyeballing.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace dpflab::svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Blue -> yellow, t in [0, 1].
inline std::string color(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(40 + 215 * t));
    const int g = static_cast<int>(std::lround(40 + 190 * t));
    const int b = static_cast<int>(std::lround(140 - 110 * t));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return colors[i % 6];
}

}  // namespace detail

inline void line_plot(std::ostream& os, const std::vector<Series>& series, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel) {
    const double w = 640, h = 420, l = 70, r = 20, t = 40, b = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return l + (x - x0) / (x1 - x0) * (w - l - r); };
    auto py = [&](double y) { return h - b - (y - y0) / (y1 - y0) * (h - t - b); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title)
       << "</text>\n"
       << "<line x1=\"" << l << "\" y1=\"" << h - b << "\" x2=\"" << w - r << "\" y2=\"" << h - b
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << l << "\" y1=\"" << t << "\" x2=\"" << l << "\" y2=\"" << h - b << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << h - b + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << detail::num(xv) << "</text>\n"
           << "<text x=\"" << l - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
           << detail::num(yv) << "</text>\n";
    }
    os << "<text x=\"" << (l + w - r) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << detail::escape(xlabel) << "</text>\n"
       << "<text x=\"16\" y=\"" << (t + h - b) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (t + h - b) / 2 << ")\">" << detail::escape(ylabel) << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        os << "<polyline fill=\"none\" stroke=\"" << detail::palette(si) << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        os << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
                os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\""
                   << detail::palette(si) << "\"/>\n";
        os << "<text x=\"" << w - r - 4 << "\" y=\"" << t + 14 * (si + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
           << detail::palette(si) << "\">" << detail::escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
}

// values[iy][ix]; rows drawn bottom-up so y increases upward.
inline void heatmap(std::ostream& os, const std::vector<std::vector<double>>& values, const std::vector<double>& xs,
                    const std::vector<double>& ys, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel) {
    const double w = 560, h = 500, l = 70, r = 90, t = 40, b = 50;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& row : values)
        for (double v : row)
            if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    const double span = hi > lo ? hi - lo : 1.0;
    const std::size_t nx = xs.size(), ny = ys.size();
    const double cw = (w - l - r) / std::max<std::size_t>(nx, 1), ch = (h - t - b) / std::max<std::size_t>(ny, 1);

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << (l + w - r) / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
       << detail::escape(title) << "</text>\n";
    for (std::size_t iy = 0; iy < ny && iy < values.size(); ++iy)
        for (std::size_t ix = 0; ix < nx && ix < values[iy].size(); ++ix)
            os << "<rect x=\"" << l + ix * cw << "\" y=\"" << h - b - (iy + 1) * ch << "\" width=\"" << cw + 0.5
               << "\" height=\"" << ch + 0.5 << "\" fill=\"" << detail::color((values[iy][ix] - lo) / span) << "\"/>\n";
    const std::size_t stride_x = std::max<std::size_t>(1, nx / 5), stride_y = std::max<std::size_t>(1, ny / 5);
    for (std::size_t ix = 0; ix < nx; ix += stride_x)
        os << "<text x=\"" << l + (ix + 0.5) * cw << "\" y=\"" << h - b + 16
           << "\" text-anchor=\"middle\" font-size=\"11\">" << detail::num(xs[ix]) << "</text>\n";
    for (std::size_t iy = 0; iy < ny; iy += stride_y)
        os << "<text x=\"" << l - 6 << "\" y=\"" << h - b - (iy + 0.5) * ch + 4
           << "\" text-anchor=\"end\" font-size=\"11\">" << detail::num(ys[iy]) << "</text>\n";
    os << "<text x=\"" << (l + w - r) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << detail::escape(xlabel) << "</text>\n"
       << "<text x=\"16\" y=\"" << (t + h - b) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (t + h - b) / 2 << ")\">" << detail::escape(ylabel) << "</text>\n";
    // color bar
    for (int k = 0; k < 20; ++k)
        os << "<rect x=\"" << w - r + 20 << "\" y=\"" << h - b - (k + 1) * (h - t - b) / 20 << "\" width=\"16\" height=\""
           << (h - t - b) / 20 + 0.5 << "\" fill=\"" << detail::color((k + 0.5) / 20) << "\"/>\n";
    os << "<text x=\"" << w - r + 40 << "\" y=\"" << t + 10 << "\" font-size=\"11\">" << detail::num(hi) << "</text>\n"
       << "<text x=\"" << w - r + 40 << "\" y=\"" << h - b << "\" font-size=\"11\">" << detail::num(lo) << "</text>\n"
       << "</svg>\n";
}

}  // namespace dpflab::svg
