#pragma once

#include <functional>
#include <vector>

namespace vibeharvest {

struct ScalarOptimum {
    double x = 0.0;
    double value = 0.0;
};

/// Golden-section maximization of a unimodal function on [lo, hi]. Stops when
/// the bracket width falls below `rel_tol * |midpoint|`. Equal values keep the
/// lower sub-interval, so ties resolve toward smaller x.
ScalarOptimum golden_section_maximize(const std::function<double(double)>& f, double lo,
                                      double hi, double rel_tol = 1e-6, bool log_scale = false);

struct GridSearchOptions {
    int grid_points = 81;
    bool log_scale = false;
    double rel_tol = 1e-6;
    /// Fail with SearchFailed when the best grid point sits on a bound.
    bool require_interior = false;
};

/// Coarse grid scan followed by golden-section refinement around the best
/// grid point.
ScalarOptimum grid_then_golden_maximize(const std::function<double(double)>& f, double lo,
                                        double hi, const GridSearchOptions& options);

/// Root of a continuous function by bisection; f(lo) and f(hi) must differ in sign.
double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double abs_tol = 0.0, int max_iter = 200);

std::vector<double> log_grid(double lo, double hi, int points);
std::vector<double> linear_grid(double lo, double hi, int points);

struct SimplexResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
};

/// Nelder-Mead simplex minimization (standard coefficients 1, 2, 0.5, 0.5).
/// `step` sets the initial simplex edge per coordinate.
SimplexResult nelder_mead_minimize(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> start, const std::vector<double>& step,
                                   int max_evaluations, double f_tol = 1e-12);

}  // namespace vibeharvest
