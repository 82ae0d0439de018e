#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "support.hpp"
#include "vibeharvest/errors.hpp"
#include "vibeharvest/harvester.hpp"
#include "vibeharvest/optimize.hpp"
#include "vibeharvest/units.hpp"

using namespace vibeharvest;
using testing::rel_err;

namespace {

HarvesterParams toy() {
    return {.m_eff = 7e-7, .f0 = 1495.0, .zeta = 0.00145, .theta = 5e-6, .cp = 40e-12, .c_par = 0.0};
}

// Best power over a 10^4-point log grid.
std::pair<double, double> dense_grid_optimum(const HarvesterParams& p, const Excitation& exc, double lo,
                                             double hi) {
    double best_r = lo, best_p = -1.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double r = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
        const double pw = steady_state_response(p, exc, r).avg_power;
        if (pw > best_p) {
            best_p = pw;
            best_r = r;
        }
    }
    return {best_r, best_p};
}

}  // namespace

TEST_CASE("natural frequency") {
    auto p = toy();
    p.f0 = 1.0 / kTwoPi;
    CHECK(natural_frequency(p) == doctest::Approx(0.15915494).epsilon(1e-7));
    CHECK(p.omega0() == doctest::Approx(1.0).epsilon(1e-14));

    const auto cat = testing::catalog();
    CHECK(natural_frequency(cat.harvester("experimental")) == 1495.0);
    CHECK(natural_frequency(cat.harvester("fem")) == 1577.5);
}

TEST_CASE("stiffness and damping coefficient") {
    const auto p = toy();
    const double w = kTwoPi * 1495.0;
    CHECK(p.stiffness() == doctest::Approx(7e-7 * w * w).epsilon(1e-14));
    CHECK(p.damping_coefficient() == doctest::Approx(2 * 0.00145 * std::sqrt(p.stiffness() * 7e-7)).epsilon(1e-14));
}

TEST_CASE("params validation") {
    auto p = toy();
    CHECK_NOTHROW(p.validate());
    p.zeta = 1.0;
    CHECK_THROWS_AS(p.validate(), InvalidParams);
    p = toy();
    p.cp = 0.0;
    CHECK_THROWS_AS(p.validate(), InvalidParams);
    p = toy();
    p.theta = -1e-6;
    CHECK_THROWS_AS(p.validate(), InvalidParams);
    p = toy();
    p.theta = 0.0;
    CHECK_NOTHROW(p.validate());

    Excitation e{0.2, 1495.0, 1.0};
    CHECK(e.acceleration_amplitude() == doctest::Approx(1.96133).epsilon(1e-12));
    e.frequency_hz = 0.0;
    CHECK_THROWS_AS(e.validate(), InvalidParams);
}

TEST_CASE("geometry reduction") {
    const auto g = reference_geometry();
    const auto mat = silicon_aln_materials();
    // 800 x 800 x 500 um of silicon at 2330 kg/m^3
    const double block = 2330.0 * 800e-6 * 800e-6 * 500e-6;
    CHECK(block == doctest::Approx(7.456e-7).epsilon(1e-10));
    const auto p = derive_params_from_geometry(g, mat);
    const double beam_mass =
        g.beam_length * g.beam_width * (mat.silicon_density * g.beam_thickness + mat.piezo_density * g.piezo_thickness);
    CHECK(p.m_eff == doctest::Approx(block + 33.0 / 140.0 * beam_mass).epsilon(1e-12));
    CHECK(p.cp > 40e-12 / 3.0);
    CHECK(p.cp < 40e-12 * 3.0);
    CHECK(p.theta > 0.0);
    CHECK(p.f0 > 0.0);

    auto bad = g;
    bad.beam_length = 0.0;
    CHECK_THROWS_AS(derive_params_from_geometry(bad, mat), InvalidGeometry);
    bad = g;
    bad.piezo_thickness = 11.0 * g.beam_thickness;
    CHECK_THROWS_AS(derive_params_from_geometry(bad, mat), InvalidGeometry);
}

TEST_CASE("damping ratio from quality factors") {
    const std::array<QualityComponent, 1> aln{{{120.0, 1.0}}};
    CHECK(damping_ratio_from_q(aln) == doctest::Approx(1.0 / 240.0).epsilon(1e-12));
    // fraction solved from zeta = f / 240
    const double f = 0.00145 * 240.0;
    CHECK(f == doctest::Approx(0.348));
    const std::array<QualityComponent, 1> part{{{120.0, f}}};
    CHECK(damping_ratio_from_q(part) == doctest::Approx(0.00145).epsilon(1e-12));
    const std::array<QualityComponent, 1> si{{{1e5, 1.0}}};
    CHECK(damping_ratio_from_q(si) == doctest::Approx(5e-6).epsilon(1e-12));

    const std::array<QualityComponent, 1> neg{{{120.0, -0.1}}};
    CHECK_THROWS_AS(damping_ratio_from_q(neg), InvalidDamping);
    const std::array<QualityComponent, 1> negq{{{-5.0, 0.5}}};
    CHECK_THROWS_AS(damping_ratio_from_q(negq), InvalidDamping);
}

TEST_CASE("decoupled limit") {
    auto p = toy();
    p.theta = 0.0;
    const Excitation exc{1.0, 1480.0, 1.0};
    const auto r = steady_state_response(p, exc, 1e5);
    CHECK(r.voltage_amplitude == 0.0);
    CHECK(r.avg_power == 0.0);
    const double w = kTwoPi * exc.frequency_hz;
    const double k = p.stiffness();
    const double c = p.damping_coefficient();
    const double expected = p.m_eff * exc.acceleration_amplitude() /
                            std::hypot(k - p.m_eff * w * w, w * c);
    CHECK(r.disp_amplitude == doctest::Approx(expected).epsilon(1e-12));

    const double f_a = peak_power_frequency(p, 1e3, 1450.0, 1550.0);
    const double f_b = peak_power_frequency(p, 1e8, 1450.0, 1550.0);
    CHECK(f_a == f_b);
}

TEST_CASE("phasor response matches an independent 2x2 solve") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        HarvesterParams p{
            .m_eff = 1e-7 * std::pow(100.0, u(rng)),
            .f0 = 200.0 + 3000.0 * u(rng),
            .zeta = 0.0005 + 0.05 * u(rng),
            .theta = 1e-7 * std::pow(1000.0, u(rng)),
            .cp = 1e-11 * std::pow(100.0, u(rng)),
            .c_par = 1e-11 * u(rng),
        };
        const double f = p.f0 * (0.9 + 0.2 * u(rng));
        const double r = std::pow(10.0, 3.0 + 6.0 * u(rng));
        const Excitation exc{0.5, f, 1.0};
        const auto res = steady_state_response(p, exc, r);
        const double v = std::abs(testing::phasor_voltage(p, f, exc.acceleration_amplitude(), r));
        CHECK(rel_err(res.voltage_amplitude, v) < 1e-10);
        CHECK(res.avg_power == doctest::Approx(res.voltage_amplitude * res.voltage_amplitude / (2 * r)).epsilon(1e-14));
        CHECK(res.avg_power >= 0.0);
    }
}

TEST_CASE("power vanishes at both load extremes") {
    const auto p = toy();
    const Excitation exc{1.0, 1495.0, 1.0};
    const double peak = find_optimal_load(p, exc, 1e3, 1e9).power;
    CHECK(steady_state_response(p, exc, 1e-3).avg_power < 1e-6 * peak);
    CHECK(steady_state_response(p, exc, 1e15).avg_power < 1e-6 * peak);
}

TEST_CASE("amplitude scaling is exact") {
    const auto p = toy();
    for (double alpha : {0.1, 2.0, 7.5}) {
        for (double r : {1e3, 4.3e5, 1e8}) {
            const auto a = steady_state_response(p, {0.4, 1497.0, 1.0}, r);
            const auto b = steady_state_response(p, {0.4 * alpha, 1497.0, 1.0}, r);
            CHECK(rel_err(b.voltage_amplitude, alpha * a.voltage_amplitude) < 1e-14);
            CHECK(rel_err(b.avg_power, alpha * alpha * a.avg_power) < 1e-14);
        }
    }
}

TEST_CASE("weak coupling optimum is 1/(w cp)") {
    auto p = toy();
    p.theta = 1e-9;
    const Excitation exc{1.0, 1495.0, 1.0};
    const auto opt = find_optimal_load(p, exc, 1e3, 1e9);
    const double expected = 1.0 / (kTwoPi * 1495.0 * 40e-12);
    CHECK(expected == doctest::Approx(2.66e6).epsilon(0.002));
    CHECK(rel_err(opt.r_load, expected) < 0.02);
    const auto [r_grid, p_grid] = dense_grid_optimum(p, exc, 1e3, 1e9);
    CHECK(rel_err(opt.r_load, r_grid) < 0.02);
    CHECK(opt.power >= p_grid * (1 - 1e-9));
}

TEST_CASE("load sweep") {
    const auto p = toy();
    const Excitation exc{0.2, 1495.0, 1.0};
    const auto grid = log_grid(1e3, 1e9, 25);
    const auto s = sweep_load(p, exc, grid);
    REQUIRE(s.size() == 25);
    CHECK(s.independent_name() == "r_load");
    const auto power = s.column("power_W");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(power[i] == steady_state_response(p, exc, grid[i]).avg_power);
    }
    const std::vector<double> empty;
    CHECK_THROWS_AS(sweep_load(p, exc, empty), InvalidSweep);
    const std::vector<double> negative{-1.0, 10.0};
    CHECK_THROWS_AS(sweep_load(p, exc, negative), InvalidSweep);
    const std::vector<double> unordered{10.0, 1.0};
    CHECK_THROWS_AS(sweep_load(p, exc, unordered), InvalidSweep);
}

TEST_CASE("preset optima") {
    const auto cat = testing::catalog();
    const auto fem = cat.harvester("fem");
    const auto exc = Excitation{0.2, fem.f0, 1.0};
    const auto opt = find_optimal_load(fem, exc, 1e3, 1e9);
    CHECK(opt.r_load > 0.5e6);
    CHECK(opt.r_load < 2e6);
    CHECK(rel_err(opt.power, 11e-9) < 0.2);

    const auto ex = cat.harvester("experimental");
    const auto opt_ex = find_optimal_load(ex, {0.5, ex.f0, 1.0}, 1e3, 1e9);
    CHECK(rel_err(opt_ex.r_load, 430e3) < 0.02);
}

TEST_CASE("two power peaks on the fem preset") {
    const auto fem = testing::catalog().harvester("fem");
    const double f_low = peak_power_frequency(fem, 1e3, 1560.0, 1600.0);
    const double f_high = peak_power_frequency(fem, 1e8, 1560.0, 1600.0);
    CHECK(f_low == doctest::Approx(1577.5).epsilon(0.0005));
    CHECK(f_high == doctest::Approx(1581.5).epsilon(0.0005));
    // k^2 implied by the two quoted frequencies
    const double k2_quoted = (1581.5 * 1581.5 - 1577.5 * 1577.5) / (1577.5 * 1577.5);
    CHECK(k2_quoted == doctest::Approx(0.00507).epsilon(0.002));
    CHECK(rel_err(effective_coupling(fem), k2_quoted) < 0.02);
    CHECK(rel_err((f_high * f_high - f_low * f_low) / (f_low * f_low), k2_quoted) < 0.05);
}

TEST_CASE("peak frequency rises with load") {
    const auto p = toy();
    double prev = 0.0;
    for (double r : log_grid(1e2, 1e10, 17)) {
        const double f = peak_power_frequency(p, r, 1400.0, 1600.0);
        CHECK(f >= prev * (1 - 1e-9));
        prev = f;
    }
    CHECK_THROWS_AS(peak_power_frequency(p, 1e5, 1000.0, 1200.0), SearchFailed);
}

TEST_CASE("effective coupling") {
    auto p = toy();
    const double k2 = effective_coupling(p);
    CHECK(k2 == doctest::Approx(p.theta * p.theta / (p.stiffness() * p.cp)).epsilon(1e-14));
    p.c_par = p.cp;
    CHECK(effective_coupling(p) / k2 == doctest::Approx(0.5).epsilon(1e-14));
    double prev = k2;
    for (double c : {1e-12, 5e-12, 2e-11, 1e-10}) {
        p.c_par = c;
        CHECK(effective_coupling(p) < prev);
        prev = effective_coupling(p);
    }
    p.theta = 0.0;
    CHECK(effective_coupling(p) == 0.0);
}

TEST_CASE("parasitic capacitance barely moves the fem peak power") {
    auto fem = testing::catalog().harvester("fem");
    auto best = [](const HarvesterParams& p) {
        auto at_f = [&](double f) { return find_optimal_load(p, {0.2, f, 1.0}, 1e3, 1e10).power; };
        return golden_section_maximize(at_f, 1570.0, 1590.0, 1e-9).value;
    };
    const double p0 = best(fem);
    fem.c_par = 0.1 * fem.cp;
    const double p1 = best(fem);
    CHECK(rel_err(p1, p0) < 0.01);
}
