#pragma once

#include <string>
#include <vector>

#include "vibeharvest/sweep.hpp"
#include "vibeharvest/transient.hpp"

namespace vibeharvest {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool x_log = false;
    bool y_log = false;
    int width = 640;
    int height = 420;
};

/// Single-panel line plot, one polyline per series. Output depends only on
/// the inputs. Throws PlotError when no series has at least 2 plottable points.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec);

/// Plots the named metric columns against the independent variable.
std::string render_svg(const SweepResult& sweep, const std::vector<std::string>& columns,
                       const PlotSpec& spec);

/// Plots the storage voltage (or the port voltage when there is no storage
/// node) against time.
std::string render_svg(const Trace& trace, const PlotSpec& spec);

}  // namespace vibeharvest
