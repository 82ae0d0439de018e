#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vibeharvest/circuit.hpp"
#include "vibeharvest/config.hpp"
#include "vibeharvest/errors.hpp"
#include "vibeharvest/experiments.hpp"
#include "vibeharvest/harvester.hpp"
#include "vibeharvest/io.hpp"
#include "vibeharvest/presets.hpp"
#include "vibeharvest/transient.hpp"

namespace py = pybind11;
using namespace vibeharvest;

namespace {

// sweeps cross over as {"<independent>": [...], "<column>": [...], ...}
py::dict sweep_dict(const SweepResult& s) {
    py::dict d;
    d[py::str(s.independent_name())] = s.independent();
    for (const auto& c : s.columns()) d[py::str(c.name)] = s.column(c.name);
    return d;
}

py::dict trace_dict(const Trace& tr) {
    py::dict d;
    d["time"] = tr.time;
    d["x"] = tr.x;
    d["x_dot"] = tr.x_dot;
    d["nodes"] = tr.node_voltages;
    d["period"] = tr.period;
    d["samples_per_cycle"] = tr.samples_per_cycle;
    d["storage_node"] = tr.storage_node;
    return d;
}

PresetCatalog make_catalog(std::optional<std::vector<std::filesystem::path>> dirs) {
    return dirs ? PresetCatalog(*dirs) : PresetCatalog::from_environment();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Piezoelectric vibration harvester simulator";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidParams>(m, "InvalidParams", base);
    py::register_exception<InvalidGeometry>(m, "InvalidGeometry", base);
    py::register_exception<InvalidDamping>(m, "InvalidDamping", base);
    py::register_exception<InvalidSweep>(m, "InvalidSweep", base);
    py::register_exception<SearchFailed>(m, "SearchFailed", base);
    py::register_exception<InvalidTopology>(m, "InvalidTopology", base);
    py::register_exception<NewtonDivergence>(m, "NewtonDivergence", base);
    py::register_exception<InsufficientData>(m, "InsufficientData", base);
    py::register_exception<NotSettled>(m, "NotSettled", base);
    py::register_exception<EnergyImbalance>(m, "EnergyImbalance", base);
    py::register_exception<UnknownExperiment>(m, "UnknownExperiment", base);
    py::register_exception<CalibrationFailed>(m, "CalibrationFailed", base);
    py::register_exception<PlotError>(m, "PlotError", base);
    py::register_exception<PresetError>(m, "PresetError", base);
    py::register_exception<SimulationStalled>(m, "SimulationStalled", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);

    py::class_<HarvesterParams>(m, "HarvesterParams")
        .def(py::init([](double m_eff, double f0, double zeta, double theta, double cp, double c_par) {
                 HarvesterParams p{m_eff, f0, zeta, theta, cp, c_par};
                 p.validate();
                 return p;
             }),
             py::arg("m_eff"), py::arg("f0"), py::arg("zeta"), py::arg("theta"), py::arg("cp"),
             py::arg("c_par") = 0.0)
        .def_readwrite("m_eff", &HarvesterParams::m_eff)
        .def_readwrite("f0", &HarvesterParams::f0)
        .def_readwrite("zeta", &HarvesterParams::zeta)
        .def_readwrite("theta", &HarvesterParams::theta)
        .def_readwrite("cp", &HarvesterParams::cp)
        .def_readwrite("c_par", &HarvesterParams::c_par)
        .def("validate", &HarvesterParams::validate)
        .def("stiffness", &HarvesterParams::stiffness)
        .def("damping_coefficient", &HarvesterParams::damping_coefficient)
        .def(py::self == py::self)
        .def("__repr__", [](const HarvesterParams& p) {
            return "HarvesterParams(m_eff=" + format_scientific(p.m_eff) + ", f0=" + format_scientific(p.f0) +
                   ", zeta=" + format_scientific(p.zeta) + ", theta=" + format_scientific(p.theta) +
                   ", cp=" + format_scientific(p.cp) + ", c_par=" + format_scientific(p.c_par) + ")";
        });

    py::class_<Excitation>(m, "Excitation")
        .def(py::init([](double g, double f, double d) {
                 Excitation e{g, f, d};
                 e.validate();
                 return e;
             }),
             py::arg("amplitude_g"), py::arg("frequency_hz"), py::arg("duration_s") = 1.0)
        .def_readwrite("amplitude_g", &Excitation::amplitude_g)
        .def_readwrite("frequency_hz", &Excitation::frequency_hz)
        .def_readwrite("duration_s", &Excitation::duration_s)
        .def("acceleration_amplitude", &Excitation::acceleration_amplitude);

    py::class_<SteadyStateResult>(m, "SteadyStateResult")
        .def_readonly("disp_amplitude", &SteadyStateResult::disp_amplitude)
        .def_readonly("voltage_amplitude", &SteadyStateResult::voltage_amplitude)
        .def_readonly("avg_power", &SteadyStateResult::avg_power)
        .def_readonly("phase", &SteadyStateResult::phase);

    py::class_<LoadOptimum>(m, "LoadOptimum")
        .def_readonly("r_load", &LoadOptimum::r_load)
        .def_readonly("power", &LoadOptimum::power);

    m.def("natural_frequency", &natural_frequency);
    m.def("effective_coupling", &effective_coupling);
    m.def("steady_state_response", &steady_state_response, py::arg("params"), py::arg("exc"), py::arg("r_load"));
    m.def("open_circuit_voltage", &open_circuit_voltage);
    m.def("solve_phasors",
          [](const HarvesterParams& p, double f, double a, std::complex<double> y) {
              const auto ph = solve_phasors(p, f, a, y);
              return py::make_tuple(ph.displacement, ph.voltage);
          },
          py::arg("params"), py::arg("frequency_hz"), py::arg("accel_amplitude"), py::arg("y_load"));
    m.def("sweep_load",
          [](const HarvesterParams& p, const Excitation& e, const std::vector<double>& r) {
              return sweep_dict(sweep_load(p, e, r));
          });
    m.def("find_optimal_load", &find_optimal_load, py::arg("params"), py::arg("exc"), py::arg("r_lo"),
          py::arg("r_hi"));
    m.def("peak_power_frequency", &peak_power_frequency, py::arg("params"), py::arg("r_load"), py::arg("f_lo"),
          py::arg("f_hi"));

    py::class_<DiodeParams>(m, "DiodeParams")
        .def(py::init([](double i_sat, double ideality, double v_thermal, double r_series) {
                 DiodeParams d{i_sat, ideality, v_thermal, r_series};
                 d.validate();
                 return d;
             }),
             py::arg("i_sat"), py::arg("ideality") = 1.0, py::arg("v_thermal") = 0.02585,
             py::arg("r_series") = 0.0)
        .def_readwrite("i_sat", &DiodeParams::i_sat)
        .def_readwrite("ideality", &DiodeParams::ideality)
        .def_readwrite("v_thermal", &DiodeParams::v_thermal)
        .def_readwrite("r_series", &DiodeParams::r_series)
        .def(py::self == py::self);
    m.def("schottky_hp5082_2835", &schottky_hp5082_2835);
    m.def("low_threshold_diode", &low_threshold_diode);
    m.def("near_ideal_diode", &near_ideal_diode);
    m.def("diode_current", &diode_current);
    m.def("ideal_multiplier_output", &ideal_multiplier_output, py::arg("stages"), py::arg("v_amp"),
          py::arg("v_drop") = 0.0);

    py::class_<OpenLoad>(m, "OpenLoad").def(py::init<>());
    py::class_<ResistorLoad>(m, "ResistorLoad")
        .def(py::init<double>(), py::arg("r"))
        .def_readwrite("r", &ResistorLoad::r);
    py::class_<CapacitorLoad>(m, "CapacitorLoad")
        .def(py::init<double, double>(), py::arg("c"), py::arg("v_init") = 0.0)
        .def_readwrite("c", &CapacitorLoad::c)
        .def_readwrite("v_init", &CapacitorLoad::v_init);
    py::class_<ResistiveLoad>(m, "ResistiveLoad")
        .def(py::init<double>(), py::arg("r"))
        .def_readwrite("r", &ResistiveLoad::r);
    py::class_<DoublerRectifier>(m, "DoublerRectifier")
        .def(py::init([](double c_r, const DiodeParams& d, const LoadSpec& load) {
                 return DoublerRectifier{c_r, d, load};
             }),
             py::arg("c_r") = 6.8e-9, py::arg("diode") = schottky_hp5082_2835(),
             py::arg("load") = LoadSpec{ResistorLoad{10e6}})
        .def_readwrite("c_r", &DoublerRectifier::c_r)
        .def_readwrite("diode", &DoublerRectifier::diode)
        .def_readwrite("load", &DoublerRectifier::load);
    py::class_<Villard>(m, "Villard")
        .def(py::init([](int stages, double c_stage, const DiodeParams& d, const LoadSpec& load) {
                 return Villard{stages, c_stage, d, load};
             }),
             py::arg("stages") = 6, py::arg("c_stage") = 40e-12, py::arg("diode") = low_threshold_diode(),
             py::arg("load") = LoadSpec{OpenLoad{}})
        .def_readwrite("stages", &Villard::stages)
        .def_readwrite("c_stage", &Villard::c_stage)
        .def_readwrite("diode", &Villard::diode)
        .def_readwrite("load", &Villard::load);

    py::class_<SolverOptions>(m, "SolverOptions")
        .def(py::init<>())
        .def_readwrite("dt_init", &SolverOptions::dt_init)
        .def_readwrite("dt_min", &SolverOptions::dt_min)
        .def_readwrite("dt_max", &SolverOptions::dt_max)
        .def_readwrite("local_error_tol", &SolverOptions::local_error_tol)
        .def_readwrite("steady_state_tol", &SolverOptions::steady_state_tol)
        .def_readwrite("samples_per_cycle", &SolverOptions::samples_per_cycle);

    py::class_<EnergyLedger>(m, "EnergyLedger")
        .def_readonly("e_kinetic", &EnergyLedger::e_kinetic)
        .def_readonly("e_spring", &EnergyLedger::e_spring)
        .def_readonly("e_caps", &EnergyLedger::e_caps)
        .def_readonly("work_in", &EnergyLedger::work_in)
        .def_readonly("diss_mech", &EnergyLedger::diss_mech)
        .def_readonly("diss_resistors", &EnergyLedger::diss_resistors)
        .def_readonly("diss_diodes", &EnergyLedger::diss_diodes)
        .def("stored", &EnergyLedger::stored)
        .def("dissipated", &EnergyLedger::dissipated);

    // A transient run: trace as lists, energy audit and, when it settles,
    // cycle-averaged steady-state metrics.
    m.def(
        "simulate",
        [](const HarvesterParams& p, const Topology& topology, const Excitation& exc,
           const SolverOptions& options) {
            const auto tr = simulate(SystemModel::from_topology(p, topology), exc, options);
            const auto audit = energy_audit(tr);
            py::dict out;
            out["trace"] = trace_dict(tr);
            out["energy_initial"] = audit.initial;
            out["energy_final"] = audit.final;
            out["energy_residual"] = audit.residual;
            try {
                const auto s = detect_steady_state(tr, exc, options.steady_state_tol);
                py::dict ss;
                ss["t_start"] = s.t_start;
                ss["x_amplitude"] = s.x_amplitude;
                py::list amps, means;
                for (const auto& n : s.nodes) {
                    amps.append(n.amplitude);
                    means.append(n.mean);
                }
                ss["node_amplitude"] = amps;
                ss["node_mean"] = means;
                ss["power_in"] = s.power_in;
                ss["power_resistors"] = s.power_resistors;
                out["steady_state"] = ss;
            } catch (const NotSettled&) {
                out["steady_state"] = py::none();
            } catch (const InsufficientData&) {
                out["steady_state"] = py::none();
            }
            return out;
        },
        py::arg("params"), py::arg("topology"), py::arg("exc"), py::arg("options") = SolverOptions{});

    m.def(
        "charge_storage",
        [](const HarvesterParams& p, const Topology& topology, const Excitation& exc, double t_max,
           std::optional<double> v_target, const SolverOptions& options) {
            ChargeOptions co;
            co.t_max = t_max;
            co.v_target = v_target;
            const auto c = charge_storage(SystemModel::from_topology(p, topology), exc, options, co);
            py::dict out;
            out["time"] = c.trace.time;
            out["v_store"] = c.trace.storage_voltage();
            out["power_time"] = c.power.time;
            out["power"] = c.power.power;
            out["v_max"] = c.v_max;
            out["p_inst_max"] = c.p_inst_max;
            out["input_vpp_max"] = c.input_vpp_max;
            out["plateau_reached"] = c.plateau_reached;
            return out;
        },
        py::arg("params"), py::arg("topology"), py::arg("exc"), py::arg("t_max") = 30.0,
        py::arg("v_target") = std::nullopt, py::arg("options") = SolverOptions{});

    m.def(
        "instantaneous_charge_power",
        [](const std::vector<double>& t, const std::vector<double>& v, double c, double window) {
            const auto p = instantaneous_charge_power(t, v, c, window);
            return py::make_tuple(p.time, p.power);
        },
        py::arg("time"), py::arg("voltage"), py::arg("capacitance"), py::arg("window_s"));

    m.def(
        "vm_transfer_curve",
        [](const DiodeParams& d, int stages, double c_stage, const std::vector<double>& amps, double probe_load,
           double frequency_hz) {
            VmOptions o;
            o.probe_load = probe_load;
            o.frequency_hz = frequency_hz;
            return sweep_dict(vm_transfer_curve(d, stages, c_stage, amps, o));
        },
        py::arg("diode"), py::arg("stages"), py::arg("c_stage"), py::arg("amplitudes"), py::arg("probe_load") = 0.0,
        py::arg("frequency_hz") = 1495.0);

    py::class_<DiodePreset>(m, "DiodePreset")
        .def_readonly("diode", &DiodePreset::diode)
        .def_readonly("probe_load", &DiodePreset::probe_load);

    py::class_<PresetCatalog>(m, "PresetCatalog")
        .def(py::init(&make_catalog), py::arg("dirs") = std::nullopt)
        .def("names",
             [](const PresetCatalog& c) {
                 std::vector<std::pair<std::string, std::string>> out;
                 for (const auto& info : c.list()) out.emplace_back(info.name, info.kind);
                 return out;
             })
        .def("harvester", &PresetCatalog::harvester)
        .def("diode", &PresetCatalog::diode)
        .def("hash", &PresetCatalog::hash)
        .def_property_readonly("directories", &PresetCatalog::directories);

    m.def("experiment_names", &experiment_names);
    m.def(
        "run_experiment",
        [](const std::string& name, const PresetCatalog& catalog, std::optional<std::string> preset,
           const std::map<std::string, std::string>& overrides) {
            ExperimentSetup s;
            s.preset_name = preset.value_or(name == "fig3" ? "fem" : "experimental");
            s.harvester = catalog.harvester(s.preset_name);
            s.rectifier_diode = catalog.diode("schottky").diode;
            const auto vm = catalog.diode("lowvt");
            s.vm_diode = vm.diode;
            s.vm_probe_load = vm.probe_load;
            s.overrides = overrides;
            const auto res = run_experiment(name, s);
            py::dict out;
            out["summary"] = res.summary;
            py::dict tables;
            for (const auto& t : res.tables) tables[py::str(t.name)] = sweep_dict(t.data);
            out["tables"] = tables;
            out["metadata"] = res.metadata;
            out["csv"] = sweep_to_csv(res.tables.at(0).data);
            return out;
        },
        py::arg("name"), py::arg("catalog"), py::arg("preset") = std::nullopt,
        py::arg("overrides") = std::map<std::string, std::string>{});
}
