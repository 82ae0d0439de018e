#include "vibeharvest/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>

#include "vibeharvest/errors.hpp"

namespace vibeharvest {
namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v, int precision = 4) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, precision);
    return std::string(buf, res.ptr);
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axis {
    bool log = false;
    double lo = 0.0;
    double hi = 1.0;

    double map(double v) const { return log ? std::log10(v) : v; }
    double frac(double v) const { return (map(v) - lo) / (hi - lo); }
};

Axis make_axis(const std::vector<PlotSeries>& series, bool use_x, bool log) {
    Axis a{log, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& s : series) {
        const auto& vals = use_x ? s.x : s.y;
        for (double v : vals) {
            if (!std::isfinite(v) || (log && !(v > 0.0))) continue;
            a.lo = std::min(a.lo, a.map(v));
            a.hi = std::max(a.hi, a.map(v));
        }
    }
    if (!std::isfinite(a.lo)) a.lo = 0.0, a.hi = 1.0;
    if (a.hi - a.lo <= 0.0) {
        const double pad = a.lo == 0.0 ? 1.0 : 0.05 * std::abs(a.lo);
        a.lo -= pad;
        a.hi += pad;
    }
    return a;
}

std::vector<double> ticks(const Axis& a) {
    std::vector<double> out;
    if (a.log) {
        for (double e = std::ceil(a.lo); e <= a.hi + 1e-9; e += 1.0) out.push_back(e);
        return out;
    }
    const double raw = (a.hi - a.lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    for (double t = std::ceil(a.lo / step) * step; t <= a.hi + 1e-9 * step; t += step) {
        out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    }
    return out;
}

std::string tick_label(const Axis& a, double t) { return a.log ? "1e" + num(t, 3) : num(t, 3); }

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec) {
    std::vector<PlotSeries> usable;
    for (const auto& s : series) {
        PlotSeries clean{s.label, {}, {}};
        const std::size_t n = std::min(s.x.size(), s.y.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if ((spec.x_log && !(s.x[i] > 0.0)) || (spec.y_log && !(s.y[i] > 0.0))) continue;
            clean.x.push_back(s.x[i]);
            clean.y.push_back(s.y[i]);
        }
        if (clean.x.size() >= 2) usable.push_back(std::move(clean));
    }
    if (usable.empty()) throw PlotError("a plot needs at least 2 data points");

    const Axis ax = make_axis(usable, true, spec.x_log);
    const Axis ay = make_axis(usable, false, spec.y_log);
    const double left = 80, right = 20, top = 40, bottom = 50;
    const double pw = spec.width - left - right;
    const double ph = spec.height - top - bottom;
    auto px = [&](double v) { return left + ax.frac(v) * pw; };
    auto py = [&](double v) { return top + (1.0 - ay.frac(v)) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) +
           "\" height=\"" + std::to_string(spec.height) + "\" viewBox=\"0 0 " +
           std::to_string(spec.width) + " " + std::to_string(spec.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(spec.width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(spec.title) + "</text>\n";
    svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" +
           num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

    svg += "<g font-size=\"11\" stroke=\"#ddd\">\n";
    for (double t : ticks(ax)) {
        const double x = left + (t - ax.lo) / (ax.hi - ax.lo) * pw;
        svg += "<line x1=\"" + num(x, 6) + "\" y1=\"" + num(top) + "\" x2=\"" + num(x, 6) + "\" y2=\"" +
               num(top + ph) + "\"/>\n";
        svg += "<text x=\"" + num(x, 6) + "\" y=\"" + num(top + ph + 16) +
               "\" text-anchor=\"middle\" stroke=\"none\">" + tick_label(ax, t) + "</text>\n";
    }
    for (double t : ticks(ay)) {
        const double y = top + (1.0 - (t - ay.lo) / (ay.hi - ay.lo)) * ph;
        svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(y, 6) + "\" x2=\"" + num(left + pw) +
               "\" y2=\"" + num(y, 6) + "\"/>\n";
        svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(y + 4, 6) +
               "\" text-anchor=\"end\" stroke=\"none\">" + tick_label(ay, t) + "</text>\n";
    }
    svg += "</g>\n";
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(spec.height - 10.0) +
           "\" text-anchor=\"middle\" font-size=\"12\">" + escape(spec.x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\" "
           "transform=\"rotate(-90 16 " + num(top + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";

    for (std::size_t k = 0; k < usable.size(); ++k) {
        const auto& s = usable[k];
        const char* color = kColors[k % std::size(kColors)];
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i > 0) svg += ' ';
            svg += num(px(s.x[i]), 7) + "," + num(py(s.y[i]), 7);
        }
        svg += "\"/>\n";
        if (usable.size() > 1 && !s.label.empty()) {
            const double y = top + 14.0 + 14.0 * static_cast<double>(k);
            svg += "<text x=\"" + num(left + pw - 8) + "\" y=\"" + num(y) +
                   "\" text-anchor=\"end\" font-size=\"11\" fill=\"" + color + "\">" + escape(s.label) +
                   "</text>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_svg(const SweepResult& sweep, const std::vector<std::string>& columns,
                       const PlotSpec& spec) {
    std::vector<PlotSeries> series;
    const auto x = sweep.independent();
    for (const auto& name : columns) series.push_back({name, x, sweep.column(name)});
    return render_svg(series, spec);
}

std::string render_svg(const Trace& trace, const PlotSpec& spec) {
    if (trace.node_count() == 0) throw PlotError("trace has no node voltages");
    const int node = trace.storage_node > 0 ? trace.storage_node : 1;
    return render_svg({{"v_node_" + std::to_string(node), trace.time, trace.node(node)}}, spec);
}

}  // namespace vibeharvest
