#include "vibeharvest/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vibeharvest/errors.hpp"

namespace vibeharvest {
namespace {

constexpr double kInvPhi = 0.6180339887498949;  // 1/golden ratio

}  // namespace

std::vector<double> log_grid(double lo, double hi, int points) {
    if (points < 2 || !(lo > 0.0) || !(hi > lo)) {
        throw InvalidSweep("log grid needs 0 < lo < hi and at least 2 points");
    }
    std::vector<double> grid(static_cast<std::size_t>(points));
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (int i = 0; i < points; ++i) {
        grid[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (points - 1));
    }
    grid.front() = lo;
    grid.back() = hi;
    return grid;
}

std::vector<double> linear_grid(double lo, double hi, int points) {
    if (points < 2 || !(hi > lo)) {
        throw InvalidSweep("linear grid needs lo < hi and at least 2 points");
    }
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
    }
    grid.back() = hi;
    return grid;
}

ScalarOptimum golden_section_maximize(const std::function<double(double)>& f, double lo,
                                      double hi, double rel_tol, bool log_scale) {
    auto to_x = [&](double u) { return log_scale ? std::exp(u) : u; };
    double a = log_scale ? std::log(lo) : lo;
    double b = log_scale ? std::log(hi) : hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(to_x(c));
    double fd = f(to_x(d));
    for (int iter = 0; iter < 400; ++iter) {
        const double width = log_scale ? (b - a) : (b - a) / std::max(std::abs(0.5 * (a + b)), 1e-300);
        if (width <= rel_tol) break;
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(to_x(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(to_x(d));
        }
    }
    if (fc >= fd) return {to_x(c), fc};
    return {to_x(d), fd};
}

ScalarOptimum grid_then_golden_maximize(const std::function<double(double)>& f, double lo,
                                        double hi, const GridSearchOptions& options) {
    const auto grid = options.log_scale ? log_grid(lo, hi, options.grid_points)
                                        : linear_grid(lo, hi, options.grid_points);
    std::size_t best = 0;
    double best_value = f(grid[0]);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double value = f(grid[i]);
        if (value > best_value) {  // strict: first maximum wins
            best_value = value;
            best = i;
        }
    }
    if (options.require_interior && (best == 0 || best + 1 == grid.size())) {
        throw SearchFailed("no interior maximum inside the search bounds");
    }
    const double left = grid[best == 0 ? 0 : best - 1];
    const double right = grid[std::min(best + 1, grid.size() - 1)];
    auto refined = golden_section_maximize(f, left, right, options.rel_tol, options.log_scale);
    if (refined.value < best_value) return {grid[best], best_value};
    return refined;
}

double bisect_root(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                   int max_iter) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo < 0.0) == (fhi < 0.0)) {
        throw SearchFailed("bisection bounds do not bracket a sign change");
    }
    for (int i = 0; i < max_iter; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi || hi - lo <= abs_tol) return mid;
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

SimplexResult nelder_mead_minimize(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> start, const std::vector<double>& step,
                                   int max_evaluations, double f_tol) {
    const std::size_t n = start.size();
    std::vector<std::vector<double>> simplex(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step[i];

    int evaluations = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evaluations;
        return f(x);
    };
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    auto point = [n](const std::vector<double>& base, const std::vector<double>& toward,
                     double coeff) {
        std::vector<double> out(n);
        for (std::size_t j = 0; j < n; ++j) out[j] = base[j] + coeff * (toward[j] - base[j]);
        return out;
    };

    while (evaluations < max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[n - 1];
        if (std::abs(values[worst] - values[best]) <= f_tol * (std::abs(values[best]) + f_tol)) {
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i : order) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
        }

        const auto reflected = point(centroid, simplex[worst], -1.0);
        const double f_reflected = eval(reflected);
        if (f_reflected < values[best]) {
            const auto expanded = point(centroid, simplex[worst], -2.0);
            const double f_expanded = eval(expanded);
            if (f_expanded < f_reflected) {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if (f_reflected < values[second]) {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }
        const bool outside = f_reflected < values[worst];
        const auto contracted =
            outside ? point(centroid, reflected, 0.5) : point(centroid, simplex[worst], 0.5);
        const double f_contracted = eval(contracted);
        if (f_contracted < std::min(f_reflected, values[worst])) {
            simplex[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            simplex[i] = point(simplex[best], simplex[i], 0.5);
            values[i] = eval(simplex[i]);
        }
    }

    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best = static_cast<std::size_t>(best_it - values.begin());
    return {simplex[best], values[best], evaluations};
}

}  // namespace vibeharvest
