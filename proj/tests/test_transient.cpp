#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vibeharvest/errors.hpp"
#include "vibeharvest/transient.hpp"
#include "vibeharvest/units.hpp"

using namespace vibeharvest;
using testing::rel_err;

namespace {

HarvesterParams experimental() { return testing::catalog().harvester("experimental"); }

Netlist rc_series(double r, double c) {
    Netlist n;
    const int a = n.add_node();
    const int b = n.add_node();
    n.add_port(a);
    n.add_resistor(a, b, r);
    n.add_capacitor(b, 0, c);
    return n;
}

}  // namespace

TEST_CASE("solver options validation") {
    SolverOptions o;
    CHECK_NOTHROW(o.validate());
    o.dt_min = 1e-3;
    CHECK_THROWS_AS(o.validate(), InvalidParams);
    o = {};
    o.local_error_tol = 0.0;
    CHECK_THROWS_AS(o.validate(), InvalidParams);
}

TEST_CASE("zero drive, zero state gives a zero trace") {
    const auto model = SystemModel::from_topology(experimental(), DoublerRectifier{});
    const auto tr = simulate(model, {0.0, 1495.0, 0.02});
    CHECK(tr.size() == static_cast<std::size_t>(0.02 * 1495 * 40) + 1);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        CHECK(tr.x[i] == 0.0);
        for (int n = 1; n <= tr.node_count(); ++n) CHECK(tr.node(n)[i] == 0.0);
    }
    const auto m = detect_steady_state(tr, {0.0, 1495.0, 0.02}, 1e-5);
    CHECK(m.first_cycle == 0);
    CHECK(m.t_start == 0.0);
}

TEST_CASE("trace bookkeeping") {
    const auto model = SystemModel::from_topology(experimental(), DoublerRectifier{});
    const Excitation exc{1.0, 1495.0, 0.05};
    const auto tr = simulate(model, exc);
    CHECK(tr.samples_per_cycle == 40);
    CHECK(tr.period == doctest::Approx(1.0 / 1495.0));
    for (std::size_t i = 1; i < tr.size(); ++i) {
        CHECK(tr.time[i] > tr.time[i - 1]);
        CHECK(tr.energy[i].diss_mech >= tr.energy[i - 1].diss_mech);
        CHECK(tr.energy[i].diss_resistors >= tr.energy[i - 1].diss_resistors);
        CHECK(tr.energy[i].diss_diodes >= tr.energy[i - 1].diss_diodes);
    }
    CHECK(tr.storage_node == 0);
    const auto audit = energy_audit(tr);
    CHECK(audit.residual < 1e-3 * audit.bound);
}

TEST_CASE("linear load transient settles onto the phasor solution") {
    const auto p = experimental();
    const Excitation exc{0.5, 1495.0, 1.0};
    const double r = 430e3;
    const auto tr = simulate(SystemModel::from_topology(p, ResistiveLoad{r}), exc);
    const auto m = detect_steady_state(tr, exc, 1e-5);
    const auto ref = steady_state_response(p, exc, r);
    CHECK(rel_err(m.node(1).amplitude, ref.voltage_amplitude) < 1e-3);
    CHECK(rel_err(m.x_amplitude, ref.disp_amplitude) < 1e-3);
    // energy per cycle in the load against the closed-form power
    CHECK(rel_err(m.energy_resistors_per_cycle, ref.avg_power * exc.period()) < 5e-3);

    // envelope time constant 1/(zeta w)
    const double tau = 1.0 / (p.zeta * kTwoPi * exc.frequency_hz);
    CHECK(m.t_start >= 3 * tau);
    CHECK(m.t_start <= 8 * tau);
}

TEST_CASE("short traces and unsettled runs") {
    const auto p = experimental();
    const Excitation short_run{0.5, 1495.0, 5.0 / 1495.0};
    const auto tr = simulate(SystemModel::from_topology(p, ResistiveLoad{1e5}), short_run);
    CHECK_THROWS_AS(detect_steady_state(tr, short_run, 1e-5), InsufficientData);

    DoublerRectifier d;
    d.load = CapacitorLoad{1e-6, 0.0};
    const Excitation charging{1.0, 1495.0, 0.1};
    const auto tc = simulate(SystemModel::from_topology(p, d), charging);
    CHECK_THROWS_AS(detect_steady_state(tc, charging, 1e-5), NotSettled);
}

TEST_CASE("free decay is fully accounted for") {
    const auto p = experimental();
    const auto model = SystemModel::from_topology(p, ResistiveLoad{1e12}, {1e-6, 0.0});
    const auto tr = simulate(model, {0.0, 1495.0, 0.3});
    const auto a = energy_audit(tr);
    CHECK(a.final.work_in == 0.0);
    const double e0 = 0.5 * p.stiffness() * 1e-12;
    CHECK(a.initial.stored() == doctest::Approx(e0).epsilon(1e-12));
    const double accounted = a.final.stored() + a.final.dissipated();
    CHECK(std::abs(accounted - e0) <= 1e-9 * e0);
    CHECK(a.final.diss_mech > 0.9 * (e0 - a.final.stored()));
}

TEST_CASE("charging a capacitor from a fixed source loses half the energy") {
    const double c = 1e-6;
    const double v = 1.5;
    for (double r : {10.0, 1e3, 1e5}) {
        const double rc = r * c;
        const VoltageSource src{0.0, 1.0 / rc, v};
        const auto tr = simulate_circuit(rc_series(r, c), src, 25 * rc);
        const auto a = energy_audit(tr);
        CHECK(tr.node(2).back() == doctest::Approx(v).epsilon(1e-8));
        CHECK(a.final.diss_resistors / a.final.work_in == doctest::Approx(0.5).epsilon(0.01));
        CHECK(a.final.e_caps == doctest::Approx(0.5 * c * v * v).epsilon(1e-6));
    }
}

TEST_CASE("instantaneous charging power") {
    const double c = 2e-6;
    const double alpha = 3.0;
    std::vector<double> t, v;
    for (int i = 0; i <= 200; ++i) {
        t.push_back(i * 1e-3);
        v.push_back(alpha * i * 1e-3);
    }
    const auto p = instantaneous_charge_power(t, v, c, 0.01);
    REQUIRE(!p.time.empty());
    CHECK(p.time.front() >= 0.005);
    CHECK(p.time.back() <= 0.2 - 0.005);
    CHECK(p.time.size() >= t.size() - 12);
    for (std::size_t i = 0; i < p.time.size(); ++i) {
        CHECK(p.power[i] == doctest::Approx(c * alpha * alpha * p.time[i]).epsilon(1e-9));
    }
    const std::vector<double> flat(t.size(), 0.7);
    for (double w : instantaneous_charge_power(t, flat, c, 0.01).power) CHECK(w == 0.0);

    const std::vector<double> two{0.0, 1.0};
    CHECK_THROWS_AS(instantaneous_charge_power(two, two, c, 0.01), InsufficientData);
}

TEST_CASE("storage voltage only rises behind the rectifier") {
    const auto p = experimental();
    DoublerRectifier d;
    d.diode = near_ideal_diode();
    d.load = CapacitorLoad{1e-6, 0.0};
    const auto tr = simulate(SystemModel::from_topology(p, d), {1.0, 1495.0, 0.2});
    const auto vs = tr.storage_voltage();
    REQUIRE(!vs.empty());
    for (std::size_t i = 1; i < vs.size(); ++i) CHECK(vs[i] >= vs[i - 1] - 1e-9);

    // Schottky leakage gives back a little within a cycle; cycle to cycle it still rises.
    d.diode = schottky_hp5082_2835();
    const auto ts = simulate(SystemModel::from_topology(p, d), {1.0, 1495.0, 0.2});
    const auto ws = ts.storage_voltage();
    for (std::size_t i = 40; i < ws.size(); i += 40) CHECK(ws[i] >= ws[i - 40] - 1e-9);
}

TEST_CASE("charging result converges with the step tolerance") {
    const auto p = experimental();
    DoublerRectifier d;
    d.load = CapacitorLoad{1e-6, 0.0};
    const auto model = SystemModel::from_topology(p, d);
    const Excitation exc{1.0, 1495.0, 0.3};
    SolverOptions a;
    SolverOptions b;
    b.local_error_tol = 0.5 * a.local_error_tol;
    const double va = simulate(model, exc, a).storage_voltage().back();
    const double vb = simulate(model, exc, b).storage_voltage().back();
    CHECK(rel_err(va, vb) < 1e-3);
}

TEST_CASE("charge_storage with no drive") {
    const auto p = experimental();
    DoublerRectifier d;
    d.load = CapacitorLoad{1e-6, 0.0};
    ChargeOptions co;
    co.t_max = 0.1;
    const auto c = charge_storage(SystemModel::from_topology(p, d), {0.0, 1495.0, 1.0}, {}, co);
    CHECK(c.v_max == 0.0);
    CHECK(c.p_inst_max == 0.0);

    CHECK_THROWS_AS(charge_storage(SystemModel::from_topology(p, ResistiveLoad{1e5}), {1.0, 1495.0, 1.0}, {}, co),
                    InvalidTopology);
}

TEST_CASE("charge curve rises then tapers") {
    const auto p = experimental();
    DoublerRectifier d;
    d.load = CapacitorLoad{1e-6, 0.0};
    ChargeOptions co;
    co.t_max = 8.0;
    const auto c = charge_storage(SystemModel::from_topology(p, d), {1.0, 1495.0, 1.0}, {}, co);
    CHECK(c.v_max > 0.0);
    CHECK(c.p_inst_max > 0.0);
    // power peaks early and has fallen well below the peak by the end
    std::size_t i_max = 0;
    for (std::size_t i = 0; i < c.power.power.size(); ++i) {
        if (c.power.power[i] > c.power.power[i_max]) i_max = i;
    }
    CHECK(c.power.time[i_max] < 0.25 * c.trace.time.back());
    CHECK(c.power.power.back() < 0.5 * c.p_inst_max);
}

TEST_CASE("stalled integration reports the time reached") {
    const auto p = experimental();
    SolverOptions o;
    o.dt_min = o.dt_init = o.dt_max = 2e-5;
    o.local_error_tol = 1e-14;
    try {
        simulate(SystemModel::from_topology(p, DoublerRectifier{}), {2.0, 1495.0, 0.05}, o);
        FAIL("expected SimulationStalled");
    } catch (const SimulationStalled& e) {
        CHECK(e.time_reached() >= 0.0);
        CHECK(e.time_reached() < 0.05);
    }
}
