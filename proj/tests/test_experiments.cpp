#include <doctest.h>

#include <cmath>
#include <string>

#include "support.hpp"
#include "vibeharvest/errors.hpp"
#include "vibeharvest/experiments.hpp"
#include "vibeharvest/io.hpp"

using namespace vibeharvest;
using testing::rel_err;

namespace {

HarvesterParams weak() {
    HarvesterParams p{.m_eff = 7e-7, .f0 = 1495.0, .zeta = 0.00145, .theta = 0.0, .cp = 40e-12, .c_par = 0.0};
    p.theta = std::sqrt(0.002 * p.stiffness() * p.cp);
    return p;
}

ExperimentSetup fem_setup() {
    ExperimentSetup s;
    s.preset_name = "fem";
    s.harvester = testing::catalog().harvester("fem");
    return s;
}

}  // namespace

TEST_CASE("experiment names") {
    CHECK(experiment_names() == std::vector<std::string>{"fig3", "fig6", "fig7", "fig8", "fig9"});
    CHECK_THROWS_AS(run_experiment("fig4", fem_setup()), UnknownExperiment);
}

TEST_CASE("fig3 load sweep") {
    const auto res = run_experiment("fig3", fem_setup());
    const auto& t = res.tables.at(0).data;
    CHECK(t.size() == 60);
    CHECK(t.independent().front() == 1e3);
    CHECK(t.independent().back() == 1e9);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.independent()[i] > t.independent()[i - 1]);
    CHECK(rel_err(res.summary.at("peak_power_W"), 11e-9) < 0.2);
    CHECK(res.summary.at("r_opt_ohm") > 0.5e6);
    CHECK(res.summary.at("r_opt_ohm") < 2e6);
    CHECK(res.summary.at("acceleration_g") == 0.2);
}

TEST_CASE("overrides") {
    auto s = fem_setup();
    s.overrides["points"] = "5";
    s.overrides["r_min"] = "10kohm";
    s.overrides["acceleration"] = "0.4g";
    const auto res = run_experiment("fig3", s);
    CHECK(res.tables[0].data.size() == 5);
    CHECK(res.tables[0].data.independent().front() == doctest::Approx(1e4));
    CHECK(res.summary.at("acceleration_g") == doctest::Approx(0.4));

    s.overrides["r_min"] = "10pF";
    CHECK_THROWS_AS(run_experiment("fig3", s), InvalidParams);
    s.overrides.erase("r_min");
    s.overrides["bogus"] = "1";
    CHECK_THROWS_AS(run_experiment("fig3", s), InvalidParams);
}

TEST_CASE("identical runs give identical CSV") {
    const auto a = run_experiment("fig3", fem_setup());
    const auto b = run_experiment("fig3", fem_setup());
    CHECK(sweep_to_csv(a.tables[0].data) == sweep_to_csv(b.tables[0].data));

    const std::vector<double> amps{0.1, 0.4};
    const auto lowvt = testing::catalog().diode("lowvt");
    VmOptions o;
    o.probe_load = lowvt.probe_load;
    o.max_duration = 0.4;
    const auto va = vm_transfer_curve(lowvt.diode, 3, 40e-12, amps, o);
    const auto vb = vm_transfer_curve(lowvt.diode, 3, 40e-12, amps, o);
    CHECK(sweep_to_csv(va) == sweep_to_csv(vb));
}

TEST_CASE("multiplier amplitude list must be positive and ascending") {
    const auto d = near_ideal_diode();
    CHECK_THROWS_AS(vm_transfer_curve(d, 2, 40e-12, std::vector<double>{}), InvalidSweep);
    CHECK_THROWS_AS(vm_transfer_curve(d, 2, 40e-12, std::vector<double>{0.5, 0.1}), InvalidSweep);
    CHECK_THROWS_AS(vm_transfer_curve(d, 2, 40e-12, std::vector<double>{0.0, 0.1}), InvalidSweep);
}

TEST_CASE("ideal diodes approach the 2N bound") {
    const std::vector<double> amps{1.0};
    VmOptions o;
    o.max_duration = 1.6;
    double prev = 0.0;
    for (int n = 1; n <= 6; ++n) {
        const auto s = vm_transfer_curve(near_ideal_diode(), n, 40e-12, amps, o);
        const double v = s.column("v_out_V")[0];
        CHECK(v <= ideal_multiplier_output(n, 1.0, 0.0) * (1 + 1e-6));
        CHECK(v >= prev);
        prev = v;
        if (n == 6) CHECK(s.column("factor")[0] > 11.0);
    }
}

TEST_CASE("multiplier factor grows with input amplitude") {
    const auto lowvt = testing::catalog().diode("lowvt");
    const std::vector<double> amps{0.05, 0.1, 0.3, 1.0};
    VmOptions o;
    o.probe_load = lowvt.probe_load;
    const auto s = vm_transfer_curve(lowvt.diode, 6, 40e-12, amps, o);
    const auto f = s.column("factor");
    for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i] >= f[i - 1]);
    for (double settled : s.column("settled")) CHECK(settled == 1.0);
    for (double v : f) CHECK(v <= 12.0);
}

TEST_CASE("calibration preconditions") {
    const std::vector<FreeParameter> none;
    const std::vector<CalibrationTarget> targets{{"t", "r_opt", 1e5, "ohm", 1.0, 0.01}};
    auto model = [](const std::vector<double>&) { return std::map<std::string, double>{{"r_opt", 1.0}}; };
    CHECK_THROWS_AS(calibrate(none, targets, model), InvalidParams);
    const std::vector<FreeParameter> bad{{"theta", 1.0, 0.5, true}};
    CHECK_THROWS_AS(calibrate(bad, targets, model), InvalidParams);
    const std::vector<FreeParameter> ok{{"theta", 1e-7, 1e-4, true}};
    const std::vector<CalibrationTarget> no_targets;
    CHECK_THROWS_AS(calibrate(ok, no_targets, model), InvalidParams);
}

TEST_CASE("synthetic calibration recovers theta") {
    const auto truth = weak();
    const std::vector<std::string> names{"peak_power_1Mohm_0.2g", "r_opt"};
    const auto obs = harvester_observables(truth, names);
    const std::vector<FreeParameter> free{{"theta", 1e-7, 1e-4, true}};
    const std::vector<CalibrationTarget> targets{
        {"power", "peak_power_1Mohm_0.2g", obs.at("peak_power_1Mohm_0.2g"), "W", 1.0, 0.01},
        {"load", "r_opt", obs.at("r_opt"), "ohm", 1.0, 0.01}};
    auto base = truth;
    base.theta = 1e-6;
    const auto res = calibrate(
        free, targets,
        [&](const std::vector<double>& x) { return harvester_observables(apply_harvester_params(base, free, x), names); });
    CHECK(res.within_tolerance);
    CHECK(rel_err(res.param("theta"), truth.theta) < 0.01);
}

TEST_CASE("calibration stays inside its bounds and reports misses") {
    const std::vector<FreeParameter> free{{"a", 1.0, 2.0, false}, {"b", 1e-3, 1e3, true}};
    const std::vector<CalibrationTarget> targets{{"far", "y", 100.0, "1", 1.0, 0.01}};
    int calls = 0;
    auto model = [&](const std::vector<double>& x) {
        ++calls;
        CHECK(x[0] >= 1.0);
        CHECK(x[0] <= 2.0);
        CHECK(x[1] >= 1e-3);
        CHECK(x[1] <= 1e3);
        return std::map<std::string, double>{{"y", x[0] + 1e-3 * x[1]}};
    };
    CalibrationOptions o;
    o.strict = false;
    o.max_evaluations = 60;
    const auto res = calibrate(free, targets, model, o);
    CHECK(!res.within_tolerance);
    CHECK(res.evaluations <= 60);
    CHECK(res.evaluations == calls);
    CHECK(res.param("a") == doctest::Approx(2.0));
    CHECK(res.param("b") == doctest::Approx(1e3));
    CHECK(describe(res).find("far") != std::string::npos);

    o.strict = true;
    try {
        calibrate(free, targets, model, o);
        FAIL("expected CalibrationFailed");
    } catch (const CalibrationFailed& e) {
        CHECK(std::string(e.what()).find("far") != std::string::npos);
    }
}

TEST_CASE("model failures are penalised, not fatal") {
    const std::vector<FreeParameter> free{{"x", -1.0, 1.0, false}};
    const std::vector<CalibrationTarget> targets{{"t", "y", 0.5, "1", 1.0, 0.01}};
    auto model = [](const std::vector<double>& x) {
        if (x[0] < 0.0) throw InvalidParams("negative");
        return std::map<std::string, double>{{"y", x[0]}};
    };
    const auto res = calibrate(free, targets, model);
    CHECK(res.param("x") == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("fem recipe lands on its targets") {
    CalibrationOptions o;
    const auto out = run_calibration_recipe(calibration_recipe("fem"), o);
    CHECK(out.within_tolerance);
    const auto obs = harvester_observables(out.harvester, {"peak_power_1Mohm_0.2g", "peak_separation"});
    CHECK(rel_err(obs.at("peak_power_1Mohm_0.2g"), 11e-9) < 0.05);
    CHECK(rel_err(obs.at("peak_separation"), 4.0) < 0.05);
    // committed preset matches a fresh fit
    const auto committed = testing::catalog().harvester("fem");
    CHECK(rel_err(committed.theta, out.harvester.theta) < 1e-6);
    CHECK(rel_err(committed.m_eff, out.harvester.m_eff) < 1e-6);
    CHECK_THROWS_AS(calibration_recipe("nope"), InvalidParams);
}
