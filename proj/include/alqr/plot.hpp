#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "alqr/harness.hpp"
#include "alqr/io.hpp"

namespace alqr {

enum class PlotMetric { Regret, StateNorm };

struct PlotOptions {
    PlotMetric metric{PlotMetric::Regret};
    bool log_x{false};
    bool log_y{false};
    std::string title{};
    int width{720};
    int height{440};
    std::size_t max_points{600}; // per series, evenly spaced
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
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

inline std::string fmt_coord(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, std::round(v * 100.0) / 100.0, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

inline const char* series_color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return palette[i % 6];
}

struct Axis {
    double lo{0.0};
    double hi{1.0};
    bool log{false};

    [[nodiscard]] double map(double v, double p0, double p1) const {
        double a = lo;
        double b = hi;
        if (log) {
            v = std::log10(std::max(v, lo));
            a = std::log10(lo);
            b = std::log10(hi);
        }
        const double f = b > a ? (v - a) / (b - a) : 0.5;
        return p0 + f * (p1 - p0);
    }
};

} // namespace detail

/// SVG with one median line and one shaded p20-p80 band per summary.
[[nodiscard]] inline std::string render_plot(const std::vector<McSummary>& series, const PlotOptions& opts) {
    const bool regret = opts.metric == PlotMetric::Regret;
    auto pick = [&](const McSummary& s, int which) -> const std::vector<double>& {
        if (regret) {
            return which == 0 ? s.regret_p20 : (which == 1 ? s.regret_median : s.regret_p80);
        }
        return which == 0 ? s.state_p20 : (which == 1 ? s.state_median : s.state_p80);
    };

    std::size_t steps = 0;
    double ylo = std::numeric_limits<double>::infinity();
    double yhi = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        steps = std::max(steps, s.steps());
        for (int w = 0; w < 3; ++w) {
            for (const double v : pick(s, w)) {
                if (!std::isfinite(v) || (opts.log_y && v <= 0.0)) {
                    continue;
                }
                ylo = std::min(ylo, v);
                yhi = std::max(yhi, v);
            }
        }
    }
    if (!std::isfinite(ylo)) {
        ylo = opts.log_y ? 1.0 : 0.0;
        yhi = opts.log_y ? 10.0 : 1.0;
    }
    if (yhi == ylo) {
        const double pad = opts.log_y ? ylo : std::max(1.0, std::abs(ylo)) * 0.5;
        ylo -= opts.log_y ? 0.5 * pad : pad;
        yhi += pad;
    }
    const detail::Axis xa{opts.log_x ? 1.0 : 0.0, std::max<double>(opts.log_x ? 2.0 : 1.0, static_cast<double>(steps)),
                          opts.log_x};
    const detail::Axis ya{ylo, yhi, opts.log_y};

    const double left = 70;
    const double right = opts.width - 20.0;
    const double top = 40;
    const double bottom = opts.height - 50.0;
    auto px = [&](double t) { return xa.map(t, left, right); };
    auto py = [&](double v) { return ya.map(v, bottom, top); };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opts.width) + "\" height=\"" +
           std::to_string(opts.height) + "\" viewBox=\"0 0 " + std::to_string(opts.width) + " " +
           std::to_string(opts.height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + detail::fmt_coord(0.5 * (left + right)) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" +
           detail::xml_escape(opts.title) + "</text>\n";
    svg += "<rect x=\"" + detail::fmt_coord(left) + "\" y=\"" + detail::fmt_coord(top) + "\" width=\"" +
           detail::fmt_coord(right - left) + "\" height=\"" + detail::fmt_coord(bottom - top) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt_coord(0.5 * (left + right)) + "\" y=\"" + detail::fmt_coord(opts.height - 12.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">t" +
           std::string(opts.log_x ? " (log)" : "") + "</text>\n";
    svg += "<text x=\"16\" y=\"" + detail::fmt_coord(0.5 * (top + bottom)) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
           detail::fmt_coord(0.5 * (top + bottom)) + ")\">" + (regret ? "regret" : "||x||") +
           std::string(opts.log_y ? " (log)" : "") + "</text>\n";
    for (const auto& [v, anchor] : {std::pair{ylo, bottom}, std::pair{yhi, top}}) {
        svg += "<text x=\"" + detail::fmt_coord(left - 6) + "\" y=\"" + detail::fmt_coord(anchor + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + format_double(v) + "</text>\n";
    }

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const std::size_t n = s.steps();
        if (n == 0) {
            continue;
        }
        std::vector<std::size_t> idx;
        const std::size_t stride = std::max<std::size_t>(1, (n + opts.max_points - 1) / opts.max_points);
        for (std::size_t t = 0; t < n; t += stride) {
            idx.push_back(t);
        }
        if (idx.back() != n - 1) {
            idx.push_back(n - 1);
        }
        auto tx = [&](std::size_t t) { return px(static_cast<double>(t) + (opts.log_x ? 1.0 : 0.0)); };
        auto clampy = [&](double v) { return py(std::isfinite(v) ? v : yhi); };
        const auto& lo = pick(s, 0);
        const auto& med = pick(s, 1);
        const auto& hi = pick(s, 2);
        std::string band;
        for (const auto t : idx) {
            band += detail::fmt_coord(tx(t)) + "," + detail::fmt_coord(clampy(hi[t])) + " ";
        }
        for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
            band += detail::fmt_coord(tx(*it)) + "," + detail::fmt_coord(clampy(lo[*it])) + " ";
        }
        band.pop_back();
        std::string line;
        for (const auto t : idx) {
            line += detail::fmt_coord(tx(t)) + "," + detail::fmt_coord(clampy(med[t])) + " ";
        }
        line.pop_back();
        const char* color = detail::series_color(si);
        svg += "<polygon class=\"band\" points=\"" + band + "\" fill=\"" + color +
               "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        svg += "<polyline class=\"median\" points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1.6\"/>\n";
        svg += "<text x=\"" + detail::fmt_coord(left + 10) + "\" y=\"" + detail::fmt_coord(top + 16 + 15.0 * si) +
               "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" +
               detail::xml_escape(s.controller) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline void emit_plot(const std::vector<McSummary>& series, const std::filesystem::path& path,
                      const PlotOptions& opts = {}) {
    detail::write_file(path, render_plot(series, opts));
}

} // namespace alqr
