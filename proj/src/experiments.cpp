#include "vibeharvest/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

#include "vibeharvest/errors.hpp"
#include "vibeharvest/optimize.hpp"
#include "vibeharvest/units.hpp"

namespace vibeharvest {
namespace {

constexpr double kStorageCapacitance = 1e-6;
constexpr double kDirectMatchedLoad = 430e3;
constexpr double kRectifierLoad = 10e6;
constexpr double kDirectPowerTarget = 700e-9;
constexpr double kVmHighInput = 1.0;
constexpr double kVmLowInput = 0.1;
constexpr double kRectifiedFactor = 1.0;  // DC out >= input amplitude counts as rectified

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads; results
// are stored by index so the outcome does not depend on scheduling.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, Fn fn) {
    std::vector<T> out(n);
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    for (std::size_t begin = 0; begin < n; begin += workers) {
        std::vector<std::future<T>> batch;
        for (std::size_t i = begin; i < std::min(n, begin + workers); ++i) {
            batch.push_back(std::async(std::launch::async, fn, i));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) out[begin + k] = batch[k].get();
    }
    return out;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(9);
    os << v;
    return os.str();
}

class Overrides {
public:
    explicit Overrides(const std::map<std::string, std::string>& values) : values_(values) {}

    double quantity(const std::string& key, double fallback, std::string_view dimension) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return parse_quantity_as(it->second, dimension);
        } catch (const std::invalid_argument& e) {
            throw InvalidParams("override " + key + ": " + e.what());
        }
    }

    std::vector<double> list(const std::string& key, std::vector<double> fallback,
                             std::string_view dimension) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto first = item.find_first_not_of(" \t");
            if (first == std::string::npos) continue;
            const auto last = item.find_last_not_of(" \t");
            try {
                out.push_back(parse_quantity_as(item.substr(first, last - first + 1), dimension));
            } catch (const std::invalid_argument& e) {
                throw InvalidParams("override " + key + ": " + e.what());
            }
        }
        if (out.empty()) throw InvalidParams("override " + key + " is empty");
        return out;
    }

    bool has(const std::string& key) const { return values_.contains(key); }

private:
    const std::map<std::string, std::string>& values_;
};

// Frequency window holding both power peaks of a coupled generator.
std::pair<double, double> peak_search_band(const HarvesterParams& p) {
    const double k2 = effective_coupling(p);
    const double f_oc = p.f0 * std::sqrt(1.0 + k2);
    const double margin = 40.0 * p.zeta * p.f0;
    return {std::max(p.f0 - margin, 0.5 * p.f0), f_oc + margin};
}

struct RectifiedPoint {
    double frequency = 0.0;
    double v_dc = 0.0;
    double power = 0.0;
    double input_vpp = 0.0;
};

RectifiedPoint rectified_operating_point(const HarvesterParams& params, const DiodeParams& diode,
                                         double accel_g, double frequency, const SolverOptions& solver) {
    const auto model = SystemModel::from_topology(
        params, DoublerRectifier{.c_r = 6.8e-9, .diode = diode, .load = ResistorLoad{kRectifierLoad}});
    Excitation exc{accel_g, frequency, 4.8};
    Simulator sim(model, exc, solver);
    const int out = model.netlist.output_node();
    double duration = 0.6;
    for (;;) {
        sim.advance_to(duration);
        exc.duration_s = duration;
        try {
            const auto m = detect_steady_state(sim.trace(), exc, 1e-4);
            energy_audit(sim.trace());
            const double v = m.node(out).mean;
            return {frequency, v, v * v / kRectifierLoad, m.node(model.netlist.port_node()).peak_to_peak};
        } catch (const NotSettled&) {
            if (duration >= 4.8) throw;
            duration *= 2.0;
        }
    }
}

ChargeCurve charge_run(const HarvesterParams& params, const DiodeParams& diode, double accel_g,
                       double frequency, double storage_c, const SolverOptions& solver, double t_max) {
    const auto model = SystemModel::from_topology(
        params, DoublerRectifier{.c_r = 6.8e-9, .diode = diode, .load = CapacitorLoad{storage_c, 0.0}});
    ChargeOptions charge;
    charge.t_max = t_max;
    return charge_storage(model, Excitation{accel_g, frequency, t_max}, solver, charge);
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const auto i = static_cast<std::size_t>(it - xs.begin());
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

std::string g_label(double accel_g) { return format_number(accel_g) + "g"; }

// ---------------------------------------------------------------------------

ExperimentResult run_fig3(const ExperimentSetup& setup) {
    const Overrides ov(setup.overrides);
    const auto& p = setup.harvester;
    const double accel = ov.quantity("acceleration", 0.2 * kStandardGravity, "acceleration") / kStandardGravity;
    const double freq = ov.quantity("frequency", p.f0, "frequency");
    const double r_min = ov.quantity("r_min", 1e3, "resistance");
    const double r_max = ov.quantity("r_max", 1e9, "resistance");
    const int points = static_cast<int>(ov.quantity("points", 60, "count"));
    const Excitation exc{accel, freq, 1.0};

    ExperimentResult res;
    res.name = "fig3";
    const auto grid = log_grid(r_min, r_max, points);
    res.tables.push_back({"fig3", sweep_load(p, exc, grid)});
    const auto best = find_optimal_load(p, exc, r_min, r_max);
    res.summary["r_opt_ohm"] = best.r_load;
    res.summary["peak_power_W"] = best.power;
    res.summary["acceleration_g"] = accel;
    res.summary["frequency_Hz"] = freq;
    res.plot = {{"power", res.tables[0].data.independent(), res.tables[0].data.column("power_W")}};
    res.plot_spec = {.title = "Output power versus load resistance", .x_label = "load (ohm)",
                     .y_label = "power (W)", .x_log = true};
    return res;
}

ExperimentResult run_fig6(const ExperimentSetup& setup) {
    const Overrides ov(setup.overrides);
    const auto& p = setup.harvester;
    const auto [f_lo, f_hi] = peak_search_band(p);
    const double r_direct = ov.quantity("direct_load", kDirectMatchedLoad, "resistance");
    const double f_direct = ov.has("frequency") ? ov.quantity("frequency", p.f0, "frequency")
                                                : peak_power_frequency(p, r_direct, f_lo, f_hi);

    ExperimentResult res;
    res.name = "fig6";
    double accel = 0.0;
    if (ov.has("acceleration")) {
        accel = ov.quantity("acceleration", 1.0, "acceleration") / kStandardGravity;
    } else {
        const double target = ov.quantity("direct_power", kDirectPowerTarget, "power");
        auto excess = [&](double a) {
            return steady_state_response(p, Excitation{a, f_direct, 1.0}, r_direct).avg_power - target;
        };
        double hi = 1.0;
        while (excess(hi) < 0.0 && hi < 1e6) hi *= 2.0;
        accel = bisect_root(excess, 0.0, hi, 1e-12 * hi);
        res.metadata.emplace_back("acceleration_solved_for", format_number(target) + " W direct");
    }
    const Excitation direct_exc{accel, f_direct, 1.0};
    const auto direct = steady_state_response(p, direct_exc, r_direct);
    const double v_oc = open_circuit_voltage(p, direct_exc);

    // The rectified case runs at its own best frequency unless one is given.
    RectifiedPoint rect;
    if (ov.has("rectified_frequency")) {
        rect = rectified_operating_point(p, setup.rectifier_diode, accel,
                                         ov.quantity("rectified_frequency", p.f0, "frequency"),
                                         setup.solver);
    } else {
        const double lo = f_direct - 2.0 * p.zeta * p.f0;
        const double hi = f_hi;
        const int n = 13;
        const auto grid = linear_grid(lo, hi, n);
        const auto points = parallel_map<RectifiedPoint>(grid.size(), [&](std::size_t i) {
            return rectified_operating_point(p, setup.rectifier_diode, accel, grid[i], setup.solver);
        });
        std::size_t best = 0;
        for (std::size_t i = 1; i < points.size(); ++i) {
            if (points[i].power > points[best].power) best = i;
        }
        const double a = grid[best == 0 ? 0 : best - 1];
        const double b = grid[std::min(best + 1, grid.size() - 1)];
        rect = points[best];
        auto dc_power = [&](double f) {
            const auto pt = rectified_operating_point(p, setup.rectifier_diode, accel, f, setup.solver);
            if (pt.power > rect.power) rect = pt;
            return pt.power;
        };
        golden_section_maximize(dc_power, a, b, 0.05 / p.f0);
    }

    SweepResult table("case", "index",
                      {{"voltage_V", "V"}, {"power_W", "W"}, {"frequency_Hz", "Hz"}});
    table.add_row(0, {v_oc, 0.0, f_direct});
    table.add_row(1, {direct.voltage_amplitude, direct.avg_power, f_direct});
    table.add_row(2, {rect.v_dc, rect.power, rect.frequency});
    res.tables.push_back({"fig6", std::move(table)});
    res.metadata.emplace_back("case 0", "open circuit, amplitude");
    res.metadata.emplace_back("case 1", "direct " + format_number(r_direct) + " ohm, amplitude");
    res.metadata.emplace_back("case 2", "doubler + 10 Mohm, DC");
    res.summary["acceleration_g"] = accel;
    res.summary["open_circuit_V"] = v_oc;
    res.summary["direct_power_W"] = direct.avg_power;
    res.summary["direct_frequency_Hz"] = f_direct;
    res.summary["rectified_power_W"] = rect.power;
    res.summary["rectified_voltage_V"] = rect.v_dc;
    res.summary["rectified_frequency_Hz"] = rect.frequency;
    res.summary["rectified_over_direct"] = rect.power / direct.avg_power;
    res.plot = {{"power", {0.0, 1.0, 2.0}, {0.0, direct.avg_power, rect.power}}};
    res.plot_spec = {.title = "Open circuit / direct load / rectified", .x_label = "case",
                     .y_label = "power (W)"};
    return res;
}

ExperimentResult run_fig7(const ExperimentSetup& setup) {
    const Overrides ov(setup.overrides);
    const auto& p = setup.harvester;
    auto accels = ov.list("accelerations", {0.5 * kStandardGravity, 1.0 * kStandardGravity,
                                            1.5 * kStandardGravity, 2.0 * kStandardGravity},
                          "acceleration");
    for (double& a : accels) a /= kStandardGravity;
    std::sort(accels.begin(), accels.end());
    const double freq = ov.quantity("frequency", p.f0, "frequency");
    const double c_store = ov.quantity("storage_c", kStorageCapacitance, "capacitance");
    const double t_max = ov.quantity("t_max", 30.0, "time");

    const auto curves = parallel_map<ChargeCurve>(accels.size(), [&](std::size_t i) {
        return charge_run(p, setup.rectifier_diode, accels[i], freq, c_store, setup.solver, t_max);
    });

    // Common time base every 10 cycles; a finished curve holds its last value.
    double t_end = 0.0;
    for (const auto& c : curves) t_end = std::max(t_end, c.trace.time.back());
    const double dt = 10.0 / freq;
    std::vector<SweepColumn> cols;
    for (double a : accels) cols.push_back({"v_store_" + g_label(a) + "_V", "V"});
    SweepResult table("t", "s", cols);
    ExperimentResult res;
    res.name = "fig7";
    res.plot.resize(accels.size());
    for (std::size_t k = 0; k < accels.size(); ++k) res.plot[k].label = g_label(accels[k]);
    const auto steps = static_cast<long>(std::floor(t_end / dt + 1e-9));
    for (long i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        std::vector<double> row;
        for (std::size_t k = 0; k < curves.size(); ++k) {
            const auto& tr = curves[k].trace;
            const double v = interpolate(tr.time, tr.node(tr.storage_node), t);
            row.push_back(v);
            res.plot[k].x.push_back(t);
            res.plot[k].y.push_back(v);
        }
        table.add_row(t, std::move(row));
    }
    res.tables.push_back({"fig7", std::move(table)});
    for (std::size_t k = 0; k < accels.size(); ++k) {
        res.summary["v_max_" + g_label(accels[k]) + "_V"] = curves[k].v_max;
        res.summary["p_inst_max_" + g_label(accels[k]) + "_W"] = curves[k].p_inst_max;
    }
    res.metadata.emplace_back("storage_c_F", format_number(c_store));
    res.metadata.emplace_back("frequency_Hz", format_number(freq));
    res.plot_spec = {.title = "Storage capacitor voltage", .x_label = "time (s)",
                     .y_label = "voltage (V)"};
    return res;
}

ExperimentResult run_fig8(const ExperimentSetup& setup) {
    const Overrides ov(setup.overrides);
    const auto& p = setup.harvester;
    std::vector<double> fallback;
    for (int i = 1; i <= 8; ++i) fallback.push_back(0.25 * i * kStandardGravity);
    auto accels = ov.list("accelerations", fallback, "acceleration");
    for (double& a : accels) a /= kStandardGravity;
    std::sort(accels.begin(), accels.end());
    const double freq = ov.quantity("frequency", p.f0, "frequency");
    const double c_store = ov.quantity("storage_c", kStorageCapacitance, "capacitance");
    const double t_max = ov.quantity("t_max", 30.0, "time");

    const auto curves = parallel_map<ChargeCurve>(accels.size(), [&](std::size_t i) {
        return charge_run(p, setup.rectifier_diode, accels[i], freq, c_store, setup.solver, t_max);
    });
    SweepResult table("acceleration", "g",
                      {{"input_vpp_V", "V"}, {"v_max_V", "V"}, {"p_inst_max_W", "W"}, {"plateau", "1"}});
    for (std::size_t i = 0; i < accels.size(); ++i) {
        table.add_row(accels[i], {curves[i].input_vpp_max, curves[i].v_max, curves[i].p_inst_max,
                                  curves[i].plateau_reached ? 1.0 : 0.0});
    }
    ExperimentResult res;
    res.name = "fig8";
    res.plot = {{"input V_pp", accels, table.column("input_vpp_V")},
                {"v_max", accels, table.column("v_max_V")}};
    res.tables.push_back({"fig8", std::move(table)});
    const auto& vmax = res.plot[1].y;
    for (std::size_t i = 0; i < accels.size(); ++i) {
        res.summary["v_max_" + g_label(accels[i]) + "_V"] = vmax[i];
        res.summary["p_inst_max_" + g_label(accels[i]) + "_W"] = curves[i].p_inst_max;
    }
    res.metadata.emplace_back("storage_c_F", format_number(c_store));
    res.plot_spec = {.title = "Charging a storage capacitor", .x_label = "acceleration (g)",
                     .y_label = "voltage (V)"};
    return res;
}

ExperimentResult run_fig9(const ExperimentSetup& setup) {
    const Overrides ov(setup.overrides);
    const auto amps = ov.list("amplitudes",
                              {0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0},
                              "voltage");
    VmOptions opts;
    opts.frequency_hz = ov.quantity("frequency", 1495.0, "frequency");
    opts.probe_load = ov.quantity("probe_load", setup.vm_probe_load, "resistance");
    const int stages = static_cast<int>(ov.quantity("stages", 6, "count"));
    const double c_stage = ov.quantity("c_stage", 40e-12, "capacitance");

    ExperimentResult res;
    res.name = "fig9";
    auto table = vm_transfer_curve(setup.vm_diode, stages, c_stage, amps, opts);
    const auto in = table.independent();
    const auto out = table.column("v_out_V");
    const auto factor = table.column("factor");
    res.summary["factor_high"] = interpolate(in, factor, kVmHighInput);
    res.summary["factor_low"] = interpolate(in, factor, kVmLowInput);
    double min_rectified = std::numeric_limits<double>::infinity();
    for (std::size_t i = in.size(); i-- > 0;) {
        if (factor[i] >= kRectifiedFactor) min_rectified = in[i];
        else break;
    }
    res.summary["min_rectified_amplitude_V"] = min_rectified;
    res.metadata.emplace_back("stages", std::to_string(stages));
    res.metadata.emplace_back("probe_load_ohm", format_number(opts.probe_load));
    res.metadata.emplace_back("frequency_Hz", format_number(opts.frequency_hz));
    res.plot = {{"v_out", in, out}};
    res.tables.push_back({"fig9", std::move(table)});
    res.plot_spec = {.title = "Multiplier output versus input amplitude",
                     .x_label = "input amplitude (V)", .y_label = "DC output (V)"};
    return res;
}

}  // namespace

// =============================================================================
// Voltage multiplier
// =============================================================================

SweepResult vm_transfer_curve(const DiodeParams& diode, int stages, double c_stage,
                              std::span<const double> amplitudes, const VmOptions& options) {
    if (amplitudes.empty()) throw InvalidSweep("amplitude list is empty");
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        if (!(amplitudes[i] > 0.0)) throw InvalidSweep("amplitudes must be > 0");
        if (i > 0 && !(amplitudes[i] > amplitudes[i - 1])) throw InvalidSweep("amplitudes must ascend");
    }
    const LoadSpec load = options.probe_load > 0.0 ? LoadSpec{ResistorLoad{options.probe_load}}
                                                   : LoadSpec{OpenLoad{}};
    const auto net = build_topology(Villard{stages, c_stage, diode, load}, 0.0);
    const int out = net.output_node();

    struct Point {
        double v_out = 0.0;
        bool settled = false;
    };
    const auto points = parallel_map<Point>(amplitudes.size(), [&](std::size_t i) {
        Simulator sim(net, VoltageSource{amplitudes[i], options.frequency_hz, 0.0}, options.solver);
        Excitation exc{1.0, options.frequency_hz, options.min_duration};
        for (double duration = options.min_duration;; duration *= 2.0) {
            sim.advance_to(duration);
            exc.duration_s = duration;
            try {
                const auto m = detect_steady_state(sim.trace(), exc, options.settle_tol);
                energy_audit(sim.trace());
                return Point{m.node(out).mean, true};
            } catch (const NotSettled&) {
                if (duration * 2.0 > options.max_duration * (1.0 + 1e-12)) break;
            }
        }
        energy_audit(sim.trace());
        const auto& v = sim.trace().node(out);
        const auto window = std::min<std::size_t>(v.size(), 10 * static_cast<std::size_t>(sim.trace().samples_per_cycle));
        double mean = 0.0;
        for (std::size_t k = v.size() - window; k < v.size(); ++k) mean += v[k];
        return Point{mean / static_cast<double>(window), false};
    });

    SweepResult table("input_amplitude", "V", {{"v_out_V", "V"}, {"factor", "1"}, {"settled", "1"}});
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        table.add_row(amplitudes[i], {points[i].v_out, points[i].v_out / amplitudes[i],
                                      points[i].settled ? 1.0 : 0.0});
    }
    return table;
}

// =============================================================================
// Experiments
// =============================================================================

std::vector<std::string> experiment_names() { return {"fig3", "fig6", "fig7", "fig8", "fig9"}; }

const std::vector<std::string>& experiment_override_keys() {
    static const std::vector<std::string> keys{
        "acceleration", "accelerations", "amplitudes", "c_stage",  "direct_load",
        "direct_power", "frequency",     "points",     "probe_load", "r_max",
        "r_min",        "rectified_frequency", "stages", "storage_c", "t_max", "v_target"};
    return keys;
}

ExperimentResult run_experiment(const std::string& name, const ExperimentSetup& setup) {
    const auto& keys = experiment_override_keys();
    for (const auto& [key, value] : setup.overrides) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw InvalidParams("unknown experiment override '" + key + "'");
        }
    }
    if (name == "fig3") return run_fig3(setup);
    if (name == "fig6") return run_fig6(setup);
    if (name == "fig7") return run_fig7(setup);
    if (name == "fig8") return run_fig8(setup);
    if (name == "fig9") return run_fig9(setup);
    throw UnknownExperiment("unknown experiment '" + name + "' (expected fig3, fig6, fig7, fig8 or fig9)");
}

// =============================================================================
// Calibration
// =============================================================================

double CalibrationResult::param(const std::string& name) const {
    for (const auto& [key, value] : params) {
        if (key == name) return value;
    }
    throw InvalidParams("no fitted parameter named " + name);
}

namespace {

double from_unit(const FreeParameter& p, double u) {
    u = std::clamp(u, 0.0, 1.0);
    return p.log_scale ? p.lo * std::pow(p.hi / p.lo, u) : p.lo + (p.hi - p.lo) * u;
}

constexpr double kPenalty = 1e6;

}  // namespace

CalibrationResult calibrate(std::span<const FreeParameter> free, std::span<const CalibrationTarget> targets,
                            const ObservableModel& model, const CalibrationOptions& options) {
    if (free.empty()) throw InvalidParams("calibration needs at least one free parameter");
    if (targets.empty()) throw InvalidParams("calibration needs at least one target");
    for (const auto& p : free) {
        if (!std::isfinite(p.lo) || !std::isfinite(p.hi) || !(p.hi > p.lo)) {
            throw InvalidParams("bounds of " + p.name + " must be finite with lo < hi");
        }
        if (p.log_scale && !(p.lo > 0.0)) throw InvalidParams("log-scaled bounds of " + p.name + " must be > 0");
    }
    for (const auto& t : targets) {
        if (!(t.weight > 0.0) || !(t.tolerance > 0.0) || t.target == 0.0) {
            throw InvalidParams("target " + t.name + " needs weight > 0, tolerance > 0 and a nonzero value");
        }
    }

    const std::size_t n = free.size();
    auto to_params = [&](const std::vector<double>& u) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = from_unit(free[i], u[i]);
        return x;
    };
    int evaluations = 0;
    // observables at the best point so far, so the result needs no extra model call
    double best_seen = std::numeric_limits<double>::infinity();
    std::vector<double> best_seen_u;
    std::map<std::string, double> best_obs;
    auto objective = [&](const std::vector<double>& u) {
        ++evaluations;
        std::map<std::string, double> obs;
        double sum = 0.0;
        try {
            obs = model(to_params(u));
            for (const auto& t : targets) {
                auto it = obs.find(t.observable);
                if (it == obs.end() || !std::isfinite(it->second)) throw InvalidParams("missing observable");
                const double rel = (it->second - t.target) / t.target;
                sum += t.weight * rel * rel;
            }
        } catch (const Error&) {
            sum = kPenalty;
        }
        if (best_seen_u.empty() || sum < best_seen) {
            best_seen = sum;
            best_seen_u = u;
            best_obs = std::move(obs);
        }
        return sum;
    };

    // Grid scan in unit coordinates.
    int per_dim = std::max(2, options.grid_points);
    while (per_dim > 2 && std::pow(per_dim, static_cast<double>(n)) > 0.5 * options.max_evaluations) --per_dim;
    std::vector<int> idx(n, 0);
    std::vector<double> best_u(n, 0.5);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        std::vector<double> u(n);
        for (std::size_t i = 0; i < n; ++i) u[i] = static_cast<double>(idx[i]) / (per_dim - 1);
        const double f = objective(u);
        if (f < best) {
            best = f;
            best_u = u;
        }
        std::size_t d = 0;
        while (d < n && ++idx[d] == per_dim) idx[d++] = 0;
        if (d == n) break;
    }

    const int remaining = options.max_evaluations - evaluations;
    if (remaining > 0) {
        const std::vector<double> step(n, 0.5 / (per_dim - 1));
        auto clamped = [&](const std::vector<double>& u) {
            std::vector<double> c(u);
            for (double& v : c) v = std::clamp(v, 0.0, 1.0);
            return objective(c);
        };
        nelder_mead_minimize(clamped, best_u, step, remaining, 1e-14);
    }
    best = best_seen;
    best_u = best_seen_u;

    CalibrationResult result;
    const auto x = to_params(best_u);
    for (std::size_t i = 0; i < n; ++i) result.params.emplace_back(free[i].name, x[i]);
    result.evaluations = evaluations;
    result.objective = best;
    const auto& obs = best_obs;
    result.within_tolerance = true;
    for (const auto& t : targets) {
        TargetResidual r;
        r.name = t.name;
        r.target = t.target;
        r.tolerance = t.tolerance;
        auto it = obs.find(t.observable);
        r.observed = it == obs.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
        r.relative_error = (r.observed - t.target) / t.target;
        r.within = std::abs(r.relative_error) <= t.tolerance;
        result.within_tolerance = result.within_tolerance && r.within;
        result.residuals.push_back(r);
    }
    if (options.strict && !result.within_tolerance) {
        throw CalibrationFailed("targets not met within tolerance\n" + describe(result));
    }
    return result;
}

std::string describe(const CalibrationResult& result) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(6);
    for (const auto& [name, value] : result.params) os << "  param " << name << " = " << value << "\n";
    for (const auto& r : result.residuals) {
        os << "  target " << r.name << ": observed " << r.observed << ", wanted " << r.target
           << ", error " << 100.0 * r.relative_error << " % (tolerance " << 100.0 * r.tolerance << " %)"
           << (r.within ? "" : "  MISS") << "\n";
    }
    os << "  objective " << result.objective << " after " << result.evaluations << " evaluations\n";
    return os.str();
}

HarvesterParams apply_harvester_params(HarvesterParams base, std::span<const FreeParameter> free,
                                       const std::vector<double>& x) {
    if (x.size() != free.size()) throw InvalidParams("parameter vector size mismatch");
    std::optional<double> k2;
    for (std::size_t i = 0; i < free.size(); ++i) {
        const auto& name = free[i].name;
        if (name == "theta") base.theta = x[i];
        else if (name == "m_eff") base.m_eff = x[i];
        else if (name == "c_par") base.c_par = x[i];
        else if (name == "zeta") base.zeta = x[i];
        else if (name == "k2") k2 = x[i];
        else throw InvalidParams("unknown harvester free parameter " + name);
    }
    if (k2) base.theta = std::sqrt(*k2 * base.stiffness() * base.port_capacitance());
    base.validate();
    return base;
}

std::map<std::string, double> harvester_observables(const HarvesterParams& params,
                                                    const std::vector<std::string>& names,
                                                    const DiodeParams& rectifier,
                                                    const SolverOptions& solver) {
    std::map<std::string, double> out;
    const auto [f_lo, f_hi] = peak_search_band(params);
    std::vector<double> charge_accels;
    for (const auto& name : names) {
        if (name == "peak_power_1Mohm_0.2g") {
            const double f = peak_power_frequency(params, 1e6, f_lo, f_hi);
            out[name] = steady_state_response(params, Excitation{0.2, f, 1.0}, 1e6).avg_power;
        } else if (name == "peak_separation") {
            out[name] = peak_power_frequency(params, 100e6, f_lo, f_hi) -
                        peak_power_frequency(params, 1e3, f_lo, f_hi);
        } else if (name == "r_opt") {
            out[name] = find_optimal_load(params, Excitation{1.0, params.f0, 1.0}, 1e3, 1e9).r_load;
        } else if (name == "charge_vmax_2g") {
            charge_accels.push_back(2.0);
        } else if (name == "charge_pinst_1g") {
            charge_accels.push_back(1.0);
        } else {
            throw InvalidParams("unknown harvester observable " + name);
        }
    }
    const auto curves = parallel_map<ChargeCurve>(charge_accels.size(), [&](std::size_t i) {
        return charge_run(params, rectifier, charge_accels[i], params.f0, kStorageCapacitance, solver, 30.0);
    });
    for (std::size_t i = 0; i < charge_accels.size(); ++i) {
        if (charge_accels[i] == 2.0) out["charge_vmax_2g"] = curves[i].v_max;
        else out["charge_pinst_1g"] = curves[i].p_inst_max;
    }
    return out;
}

std::map<std::string, double> vm_observables(const DiodeParams& diode, double probe_load,
                                             const std::vector<std::string>& names) {
    std::vector<double> amps;
    for (const auto& name : names) {
        if (name == "vm_factor_low") amps.push_back(kVmLowInput);
        else if (name == "vm_factor_high") amps.push_back(kVmHighInput);
        else throw InvalidParams("unknown multiplier observable " + name);
    }
    std::sort(amps.begin(), amps.end());
    amps.erase(std::unique(amps.begin(), amps.end()), amps.end());
    VmOptions opts;
    opts.probe_load = probe_load;
    opts.max_duration = 1.6;
    const auto table = vm_transfer_curve(diode, 6, 40e-12, amps, opts);
    const auto factor = table.column("factor");
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < amps.size(); ++i) {
        out[amps[i] == kVmLowInput ? "vm_factor_low" : "vm_factor_high"] = factor[i];
    }
    return out;
}

std::vector<std::string> calibration_recipe_names() { return {"fem", "experimental", "lowvt"}; }

CalibrationRecipe calibration_recipe(const std::string& preset) {
    CalibrationRecipe r;
    r.preset = preset;
    const HarvesterParams start{.m_eff = 1e-6, .f0 = 1577.5, .zeta = 0.00145, .theta = 0.0,
                                .cp = 40e-12, .c_par = 0.0};
    if (preset == "fem") {
        r.kind = "harvester";
        r.base_harvester = start;
        r.stages.push_back({
            {{"k2", 1e-4, 0.05, true}, {"m_eff", 1e-8, 1e-4, true}},
            {{"fem_power", "peak_power_1Mohm_0.2g", 11e-9, "W", 1.0, 0.05},
             {"two_peak_gap", "peak_separation", 4.0, "Hz", 1.0, 0.05}},
        });
    } else if (preset == "experimental") {
        r.kind = "harvester";
        r.base_harvester = start;
        r.base_harvester.f0 = 1495.0;
        r.base_harvester.m_eff = 7e-7;
        // Coupling first (the load optimum does not depend on the mass at
        // fixed k_eff^2), then the mass against the charging numbers.
        r.stages.push_back({{{"k2", 1e-4, 0.2, true}},
                            {{"matched_load", "r_opt", 430e3, "ohm", 1.0, 0.01}}});
        r.stages.push_back({{{"m_eff", 1e-7, 3e-6, true}},
                            {{"charge_2g", "charge_vmax_2g", 2.0, "V", 1.0, 0.2},
                             {"charge_power_1g", "charge_pinst_1g", 300e-9, "W", 1.0, 0.2}}});
    } else if (preset == "lowvt") {
        r.kind = "diode";
        r.base_diode = low_threshold_diode();
        r.stages.push_back({
            {{"i_sat", 1e-13, 1e-7, true}, {"ideality", 1.0, 2.5, false}, {"probe_load", 1e8, 1e11, true}},
            {{"factor_high", "vm_factor_high", 5.5, "1", 1.0, 0.25},
             {"factor_low", "vm_factor_low", 3.0, "1", 1.0, 0.25}},
        });
    } else {
        throw InvalidParams("no calibration recipe for preset '" + preset + "'");
    }
    return r;
}

RecipeOutcome run_calibration_recipe(const CalibrationRecipe& recipe, const CalibrationOptions& options) {
    RecipeOutcome out;
    out.recipe = recipe;
    out.harvester = recipe.base_harvester;
    out.diode = recipe.base_diode;
    out.probe_load = recipe.base_probe_load;
    out.within_tolerance = true;
    for (const auto& stage : recipe.stages) {
        std::vector<std::string> observables;
        for (const auto& t : stage.targets) observables.push_back(t.observable);
        CalibrationResult fit;
        if (recipe.kind == "harvester") {
            // k2 stays fixed when it is not free in this stage.
            const double k2_before = effective_coupling(out.harvester);
            const auto base = out.harvester;
            const bool k2_free = std::any_of(stage.free.begin(), stage.free.end(),
                                             [](const FreeParameter& p) { return p.name == "k2"; });
            auto build = [&](const std::vector<double>& x) {
                auto p = apply_harvester_params(base, stage.free, x);
                if (!k2_free) p.theta = std::sqrt(k2_before * p.stiffness() * p.port_capacitance());
                return p;
            };
            fit = calibrate(stage.free, stage.targets,
                            [&](const std::vector<double>& x) {
                                return harvester_observables(build(x), observables);
                            },
                            options);
            std::vector<double> x;
            for (const auto& [name, value] : fit.params) x.push_back(value);
            out.harvester = build(x);
        } else {
            auto build = [&](const std::vector<double>& x) {
                DiodeParams d = out.diode;
                double probe = out.probe_load;
                for (std::size_t i = 0; i < stage.free.size(); ++i) {
                    const auto& name = stage.free[i].name;
                    if (name == "i_sat") d.i_sat = x[i];
                    else if (name == "ideality") d.ideality = x[i];
                    else if (name == "probe_load") probe = x[i];
                    else throw InvalidParams("unknown diode free parameter " + name);
                }
                return std::pair{d, probe};
            };
            fit = calibrate(stage.free, stage.targets,
                            [&](const std::vector<double>& x) {
                                const auto [d, probe] = build(x);
                                return vm_observables(d, probe, observables);
                            },
                            options);
            std::vector<double> x;
            for (const auto& [name, value] : fit.params) x.push_back(value);
            std::tie(out.diode, out.probe_load) = build(x);
        }
        out.within_tolerance = out.within_tolerance && fit.within_tolerance;
        out.stages.push_back(std::move(fit));
    }
    return out;
}

}  // namespace vibeharvest
