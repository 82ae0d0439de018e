#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "vibeharvest/errors.hpp"
#include "vibeharvest/optimize.hpp"
#include "vibeharvest/sweep.hpp"
#include "vibeharvest/units.hpp"

using namespace vibeharvest;

TEST_CASE("unit suffixes") {
    CHECK(parse_quantity("430kohm") == doctest::Approx(4.3e5).epsilon(1e-15));
    CHECK(parse_quantity("0.2g") == doctest::Approx(1.96133).epsilon(1e-15));
    CHECK(parse_quantity("40pF") == doctest::Approx(40e-12).epsilon(1e-15));
    CHECK(parse_quantity("6.8nF") == doctest::Approx(6.8e-9).epsilon(1e-15));
    CHECK(parse_quantity("1uF") == doctest::Approx(1e-6).epsilon(1e-15));
    CHECK(parse_quantity("10Mohm") == doctest::Approx(1e7).epsilon(1e-15));
    CHECK(parse_quantity("50mV") == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(parse_quantity("800um") == doctest::Approx(8e-4).epsilon(1e-15));
    CHECK(parse_quantity("1.5kHz") == doctest::Approx(1500.0).epsilon(1e-15));
    CHECK(parse_quantity("700nW") == doctest::Approx(7e-7).epsilon(1e-15));
    CHECK(parse_quantity("1e-3") == 1e-3);
    CHECK(parse_quantity(" 12 ") == 12.0);

    CHECK_THROWS_AS(parse_quantity("12 furlongs"), std::invalid_argument);
    CHECK_THROWS_AS(parse_quantity("abc"), std::invalid_argument);
    CHECK_THROWS_AS(parse_quantity(""), std::invalid_argument);

    CHECK(parse_quantity_as("2.5Mohm", "resistance") == doctest::Approx(2.5e6));
    CHECK_THROWS_AS(parse_quantity_as("2.5pF", "resistance"), std::invalid_argument);
    CHECK(parse_quantity_as("3", "resistance") == 3.0);
}

TEST_CASE("golden section") {
    auto f = [](double x) { return -(x - 2.0) * (x - 2.0); };
    const auto r = golden_section_maximize(f, 0.0, 5.0, 1e-9);
    CHECK(r.x == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(r.value == doctest::Approx(0.0));

    auto g = [](double x) { return -std::pow(std::log(x / 3e5), 2); };
    const auto rl = golden_section_maximize(g, 1e3, 1e9, 1e-9, true);
    CHECK(rl.x == doctest::Approx(3e5).epsilon(1e-6));
}

TEST_CASE("grid then golden") {
    // two bumps, the taller at 7
    auto f = [](double x) { return std::exp(-(x - 2) * (x - 2)) + 2 * std::exp(-(x - 7) * (x - 7)); };
    const auto r = grid_then_golden_maximize(f, 0.0, 10.0, {.grid_points = 41});
    CHECK(r.x == doctest::Approx(7.0).epsilon(1e-5));

    auto edge = [](double x) { return x; };
    CHECK_THROWS_AS(grid_then_golden_maximize(edge, 0.0, 1.0, {.grid_points = 11, .require_interior = true}),
                    SearchFailed);
    // flat function: ties go to the low end
    auto flat = [](double) { return 1.0; };
    CHECK(grid_then_golden_maximize(flat, 1.0, 2.0, {.grid_points = 11}).x == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("bisection") {
    const double r = bisect_root([](double x) { return x * x - 2.0; }, 0.0, 2.0);
    CHECK(r == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(bisect_root([](double x) { return x * x + 1.0; }, -1.0, 1.0), SearchFailed);
}

TEST_CASE("grids") {
    const auto g = log_grid(1e3, 1e9, 60);
    REQUIRE(g.size() == 60);
    CHECK(g.front() == 1e3);
    CHECK(g.back() == 1e9);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
    const auto l = linear_grid(0.25, 2.0, 8);
    CHECK(l[3] == doctest::Approx(1.0));
    CHECK_THROWS_AS(log_grid(-1.0, 1.0, 5), InvalidSweep);
    CHECK_THROWS_AS(log_grid(1.0, 10.0, 0), InvalidSweep);
}

TEST_CASE("nelder mead") {
    auto rosen = [](const std::vector<double>& x) {
        return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
    };
    const auto r = nelder_mead_minimize(rosen, {-1.2, 1.0}, {0.5, 0.5}, 2000, 1e-20);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.evaluations <= 2000);
}

TEST_CASE("sweep result") {
    SweepResult s("r_load", "ohm", {{"power_W", "W"}, {"v", "V"}});
    s.add_row(1.0, {1.0, 2.0});
    s.add_row(2.0, {3.0, 4.0});
    CHECK(s.size() == 2);
    CHECK(s.column("v") == std::vector<double>{2.0, 4.0});
    CHECK(s.independent() == std::vector<double>{1.0, 2.0});
    CHECK_THROWS_AS(s.add_row(0.5, {1.0, 1.0}), InvalidSweep);
    CHECK_THROWS_AS(s.add_row(3.0, {1.0}), InvalidSweep);
    CHECK_THROWS_AS(s.column("nope"), InvalidSweep);
}
