#include "vibeharvest/transient.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "vibeharvest/errors.hpp"
#include "vibeharvest/units.hpp"

namespace vibeharvest {

// =============================================================================
// Options and model
// =============================================================================

void SolverOptions::validate() const {
    if (!(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max)) {
        throw InvalidParams("solver options need 0 < dt_min <= dt_init <= dt_max");
    }
    if (!(local_error_tol > 0.0) || !(steady_state_tol > 0.0)) {
        throw InvalidParams("solver tolerances must be > 0");
    }
    if (samples_per_cycle < 40) throw InvalidParams("samples_per_cycle must be >= 40");
}

SystemModel SystemModel::from_topology(const HarvesterParams& params, const Topology& topology,
                                       MechanicalState initial) {
    params.validate();
    SystemModel model{params, build_topology(topology, params.port_capacitance()), initial};
    model.validate();
    return model;
}

void SystemModel::validate() const {
    harvester.validate();
    netlist.validate();
    if (!std::isfinite(initial.x) || !std::isfinite(initial.x_dot)) {
        throw InvalidParams("initial mechanical state must be finite");
    }
}

double VoltageSource::at(double t) const {
    return offset + amplitude * std::sin(angular(frequency_hz) * t);
}

std::vector<double> Trace::storage_voltage() const {
    if (storage_node <= 0) return {};
    return node(storage_node);
}

// =============================================================================
// Simulator
// =============================================================================

Simulator::Simulator(const SystemModel& model, const Excitation& exc, const SolverOptions& options)
    : mechanical_(true),
      params_(model.harvester),
      exc_(exc),
      options_(options),
      solver_(model.netlist) {
    model.validate();
    exc.validate();
    m_ = params_.m_eff;
    k_ = params_.stiffness();
    c_ = params_.damping_coefficient();
    theta_ = params_.theta;
    accel_ = exc.acceleration_amplitude();
    omega_ = angular(exc.frequency_hz);
    period_ = exc.period();
    state_.x = model.initial.x;
    state_.u = model.initial.x_dot;
    init_common();
}

Simulator::Simulator(const Netlist& net, const VoltageSource& source, const SolverOptions& options)
    : mechanical_(false), source_(source), options_(options), solver_(net) {
    if (!(source.frequency_hz > 0.0)) throw InvalidParams("source frequency must be > 0");
    period_ = 1.0 / source.frequency_hz;
    init_common();
}

void Simulator::init_common() {
    options_.validate();
    const Netlist& net = solver_.netlist();
    sample_dt_ = period_ / options_.samples_per_cycle;
    h_ = std::min({options_.dt_init, options_.dt_max, sample_dt_});
    state_.t = 0.0;
    state_.circuit = initial_circuit_state(net);
    peak_.assign(static_cast<std::size_t>(net.node_count()) + 2, 0.0);

    trace_.period = period_;
    trace_.samples_per_cycle = options_.samples_per_cycle;
    trace_.storage_node = net.storage_capacitance() > 0.0 ? net.output_node() : 0;
    trace_.node_voltages.assign(static_cast<std::size_t>(net.node_count()), {});
    record(state_);
    next_sample_ = 1;
}

void Simulator::fill_stored(const State& s, EnergyLedger& e) const {
    e.e_kinetic = 0.5 * m_ * s.u * s.u;
    e.e_spring = 0.5 * k_ * s.x * s.x;
    double caps = 0.0;
    for (const auto& b : solver_.netlist().branches()) {
        if (b.kind != BranchKind::capacitor) continue;
        const double v = s.circuit.node_voltages[static_cast<std::size_t>(b.node_a)] -
                         s.circuit.node_voltages[static_cast<std::size_t>(b.node_b)];
        caps += 0.5 * b.value * v * v;
    }
    e.e_caps = caps;
}

void Simulator::record(const State& s) {
    trace_.time.push_back(s.t);
    trace_.x.push_back(s.x);
    trace_.x_dot.push_back(s.u);
    for (std::size_t n = 0; n < trace_.node_voltages.size(); ++n) {
        trace_.node_voltages[n].push_back(s.circuit.node_voltages[n + 1]);
    }
    EnergyLedger e = ledger_;
    fill_stored(s, e);
    trace_.energy.push_back(e);
}

void Simulator::step(const State& from, double h, bool startup, State& to, EnergyLedger& flows) {
    const Netlist& net = solver_.netlist();
    const auto port_node = static_cast<std::size_t>(net.port_node());
    const double t1 = from.t + h;
    const Integration method = startup ? Integration::backward_euler : Integration::trapezoidal;

    PortDrive port;
    double alpha = 0.0, beta = 0.0, f0 = 0.0, f1 = 0.0;
    if (mechanical_) {
        // Trapezoidal mechanics reduced to u1 = alpha + beta * v_port(t1).
        f0 = -m_ * accel_ * std::sin(omega_ * from.t);
        f1 = -m_ * accel_ * std::sin(omega_ * t1);
        const double v0 = from.circuit.node_voltages[port_node];
        const double denom = m_ + 0.5 * h * c_ + 0.25 * k_ * h * h;
        alpha = (m_ * from.u + 0.5 * h * (f0 + f1 - c_ * from.u - 2.0 * k_ * from.x -
                                           0.5 * k_ * h * from.u - theta_ * v0)) /
                denom;
        beta = -0.5 * h * theta_ / denom;
        port = startup ? PortDrive::current_source(0.5 * theta_ * (from.u + alpha), -0.5 * theta_ * beta)
                       : PortDrive::current_source(theta_ * alpha, -theta_ * beta);
    } else {
        port = PortDrive::voltage_source(source_.at(t1));
    }

    solver_.solve(from.circuit, port, h, method, to.circuit);
    to.t = t1;

    flows = EnergyLedger{};
    if (mechanical_) {
        to.u = alpha + beta * to.circuit.node_voltages[port_node];
        to.x = from.x + 0.5 * h * (from.u + to.u);
        const double u_mid = 0.5 * (from.u + to.u);
        flows.work_in = h * u_mid * 0.5 * (f0 + f1);
        flows.diss_mech = h * c_ * u_mid * u_mid;
    } else {
        to.x = 0.0;
        to.u = 0.0;
        const PortDrive previous = PortDrive::voltage_source(source_.at(from.t));
        const double i1 = solver_.port_current(to.circuit, port);
        const double i_avg = startup ? i1 : 0.5 * (solver_.port_current(from.circuit, previous) + i1);
        const double v_mid = 0.5 * (from.circuit.node_voltages[port_node] + to.circuit.node_voltages[port_node]);
        flows.work_in = h * v_mid * i_avg;
    }

    // Midpoint voltage times average current: with KCL at both ends this
    // closes the ledger exactly for the trapezoidal rule.
    const auto& branches = net.branches();
    for (const auto& b : branches) {
        if (b.kind != BranchKind::resistor && b.kind != BranchKind::diode) continue;
        const auto a = static_cast<std::size_t>(b.node_a);
        const auto c = static_cast<std::size_t>(b.node_b);
        const double v0 = from.circuit.node_voltages[a] - from.circuit.node_voltages[c];
        const double v1 = to.circuit.node_voltages[a] - to.circuit.node_voltages[c];
        double i0, i1;
        if (b.kind == BranchKind::resistor) {
            i0 = v0 / b.value;
            i1 = v1 / b.value;
        } else {
            i0 = diode_current(b.diode, v0);
            i1 = diode_current(b.diode, v1);
        }
        const double i_avg = startup ? i1 : 0.5 * (i0 + i1);
        const double p = h * 0.5 * (v0 + v1) * i_avg;
        if (b.kind == BranchKind::resistor) {
            flows.diss_resistors += p;
        } else {
            flows.diss_diodes += p;
        }
    }
}

double Simulator::error_norm(const State& fine, const State& coarse) const {
    constexpr double kFloorX = 1e-18, kFloorU = 1e-15, kFloorV = 1e-12;
    const double tol = options_.local_error_tol;
    auto term = [&](double a, double b, double peak, double floor) {
        const double scale = std::max({std::abs(a), peak, floor});
        return std::abs(a - b) / 3.0 / (tol * scale);
    };
    double err = 0.0;
    if (mechanical_) {
        err = std::max(err, term(fine.x, coarse.x, peak_[0], kFloorX));
        err = std::max(err, term(fine.u, coarse.u, peak_[1], kFloorU));
    }
    const auto& vf = fine.circuit.node_voltages;
    const auto& vc = coarse.circuit.node_voltages;
    for (std::size_t n = 1; n < vf.size(); ++n) {
        err = std::max(err, term(vf[n], vc[n], peak_[n + 1], kFloorV));
    }
    return err;
}

void Simulator::advance_to(double t_end) {
    const long last_sample = static_cast<long>(std::ceil(t_end / sample_dt_ - 1e-9));
    EnergyLedger flows_a, flows_b, flows_full;

    while (next_sample_ <= last_sample) {
        const double target = static_cast<double>(next_sample_) * sample_dt_;

        if (!started_) {
            const double h0 = std::max(options_.dt_min, 1e-3 * h_);
            step(state_, h0, true, half2_, flows_a);
            state_ = half2_;
            ledger_.work_in += flows_a.work_in;
            ledger_.diss_mech += flows_a.diss_mech;
            ledger_.diss_resistors += flows_a.diss_resistors;
            ledger_.diss_diodes += flows_a.diss_diodes;
            started_ = true;
            continue;
        }

        const double remaining = target - state_.t;
        double h = std::min({h_, options_.dt_max, remaining});
        const bool truncated = h < h_;
        const bool landing = h >= remaining * (1.0 - 1e-12);

        double err;
        try {
            step(state_, h, false, full_, flows_full);
            step(state_, 0.5 * h, false, half_, flows_a);
            step(half_, 0.5 * h, false, half2_, flows_b);
            err = error_norm(half2_, full_);
        } catch (const NewtonDivergence&) {
            h_ = 0.5 * h;
            ++rejected_;
            if (h_ < options_.dt_min) {
                throw SimulationStalled("Newton failed at the minimum step", state_.t);
            }
            continue;
        }

        const double factor = err > 0.0 ? 0.9 * std::pow(err, -1.0 / 3.0) : 2.0;
        if (err <= 1.0) {
            state_ = half2_;
            if (landing) state_.t = target;
            ledger_.work_in += flows_a.work_in + flows_b.work_in;
            ledger_.diss_mech += flows_a.diss_mech + flows_b.diss_mech;
            ledger_.diss_resistors += flows_a.diss_resistors + flows_b.diss_resistors;
            ledger_.diss_diodes += flows_a.diss_diodes + flows_b.diss_diodes;
            peak_[0] = std::max(peak_[0], std::abs(state_.x));
            peak_[1] = std::max(peak_[1], std::abs(state_.u));
            for (std::size_t n = 1; n < state_.circuit.node_voltages.size(); ++n) {
                peak_[n + 1] = std::max(peak_[n + 1], std::abs(state_.circuit.node_voltages[n]));
            }
            if (!truncated) h_ = std::clamp(h * std::min(2.0, factor), options_.dt_min, options_.dt_max);
            ++accepted_;
            if (landing) {
                record(state_);
                ++next_sample_;
            }
        } else {
            ++rejected_;
            h_ = h * std::max(0.2, factor);
            if (h_ < options_.dt_min) {
                throw SimulationStalled("local error above tolerance at the minimum step", state_.t);
            }
        }
    }
}

Trace simulate(const SystemModel& model, const Excitation& exc, const SolverOptions& options) {
    Simulator sim(model, exc, options);
    sim.advance_to(exc.duration_s);
    energy_audit(sim.trace());
    return sim.take_trace();
}

Trace simulate_circuit(const Netlist& net, const VoltageSource& source, double duration,
                       const SolverOptions& options) {
    if (!(duration > 0.0)) throw InvalidParams("duration must be > 0");
    Simulator sim(net, source, options);
    sim.advance_to(duration);
    energy_audit(sim.trace());
    return sim.take_trace();
}

// =============================================================================
// Post-processing
// =============================================================================

namespace {

struct CycleSignal {
    double mean, rms, amplitude, ptp;
};

CycleSignal cycle_signal(const std::vector<double>& v, std::size_t begin, int samples) {
    double sum = 0.0, sq = 0.0, lo = v[begin], hi = v[begin];
    std::complex<double> fundamental = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double value = v[begin + static_cast<std::size_t>(i)];
        sum += value;
        sq += value * value;
        lo = std::min(lo, value);
        hi = std::max(hi, value);
        const double phase = kTwoPi * i / samples;
        fundamental += value * std::complex<double>(std::cos(phase), -std::sin(phase));
    }
    return {sum / samples, std::sqrt(sq / samples), 2.0 * std::abs(fundamental) / samples, hi - lo};
}

}  // namespace

SteadyStateMetrics detect_steady_state(const Trace& trace, const Excitation& exc, double tol) {
    const int spc = trace.samples_per_cycle;
    if (spc <= 0 || trace.size() < 2) throw InsufficientData("trace is empty");
    if (std::abs(trace.period - exc.period()) > 1e-9 * exc.period()) {
        throw InvalidParams("trace period does not match the excitation");
    }
    const int cycles = static_cast<int>((trace.size() - 1) / static_cast<std::size_t>(spc));
    if (cycles < 10) throw InsufficientData("steady-state detection needs at least 10 cycles");

    // Signals checked for settling: x and every node voltage.
    std::vector<const std::vector<double>*> signals{&trace.x};
    for (const auto& v : trace.node_voltages) signals.push_back(&v);

    std::vector<std::vector<CycleSignal>> per_cycle(signals.size());
    for (std::size_t s = 0; s < signals.size(); ++s) {
        per_cycle[s].reserve(static_cast<std::size_t>(cycles));
        for (int c = 0; c < cycles; ++c) {
            per_cycle[s].push_back(cycle_signal(*signals[s], static_cast<std::size_t>(c * spc), spc));
        }
    }
    std::vector<double> floor(signals.size());
    for (std::size_t s = 0; s < signals.size(); ++s) {
        double peak = 0.0;
        for (const auto& cs : per_cycle[s]) peak = std::max(peak, cs.rms);
        floor[s] = 1e-12 * peak;
    }
    auto pair_settled = [&](int c) {
        for (std::size_t s = 0; s < signals.size(); ++s) {
            const double a = per_cycle[s][static_cast<std::size_t>(c)].rms;
            const double b = per_cycle[s][static_cast<std::size_t>(c) + 1].rms;
            if (std::abs(b - a) > tol * std::max(a, b) + floor[s]) return false;
        }
        return true;
    };

    int first = cycles - 1;
    while (first > 0 && pair_settled(first - 1)) --first;
    if (first >= cycles - 1) {
        throw NotSettled("per-cycle RMS still changing at the end of the trace");
    }

    SteadyStateMetrics m;
    m.first_cycle = first;
    m.t_start = first * trace.period;
    m.cycles_averaged = cycles - first;
    const double n = m.cycles_averaged;
    m.nodes.resize(trace.node_voltages.size());
    for (int c = first; c < cycles; ++c) {
        const auto cx = per_cycle[0][static_cast<std::size_t>(c)];
        m.x_amplitude += cx.amplitude / n;
        m.x_dot_amplitude += cycle_signal(trace.x_dot, static_cast<std::size_t>(c * spc), spc).amplitude / n;
        for (std::size_t k = 0; k < m.nodes.size(); ++k) {
            const auto cs = per_cycle[k + 1][static_cast<std::size_t>(c)];
            m.nodes[k].mean += cs.mean / n;
            m.nodes[k].rms += cs.rms / n;
            m.nodes[k].amplitude += cs.amplitude / n;
            m.nodes[k].peak_to_peak += cs.ptp / n;
        }
    }
    const auto& e0 = trace.energy[static_cast<std::size_t>(first * spc)];
    const auto& e1 = trace.energy[static_cast<std::size_t>(cycles * spc)];
    const double span = (cycles - first) * trace.period;
    m.power_in = (e1.work_in - e0.work_in) / span;
    m.power_mech = (e1.diss_mech - e0.diss_mech) / span;
    m.power_resistors = (e1.diss_resistors - e0.diss_resistors) / span;
    m.power_diodes = (e1.diss_diodes - e0.diss_diodes) / span;
    m.energy_resistors_per_cycle = (e1.diss_resistors - e0.diss_resistors) / n;
    return m;
}

EnergyAudit energy_audit(const Trace& trace) {
    if (trace.energy.empty()) throw InsufficientData("trace has no energy ledger");
    EnergyAudit audit;
    audit.initial = trace.energy.front();
    audit.final = trace.energy.back();
    const auto& a = audit.initial;
    const auto& b = audit.final;
    const double delta_stored = b.stored() - a.stored();
    const double work = b.work_in - a.work_in;
    const double dissipated = b.dissipated() - a.dissipated();
    audit.residual = std::abs(work - (delta_stored + dissipated));
    audit.bound = 1e-3 * std::max({std::abs(work), dissipated, a.stored()});
    if (!std::isfinite(audit.residual) || audit.residual > audit.bound) {
        throw EnergyImbalance("energy residual " + std::to_string(audit.residual) +
                              " J exceeds bound " + std::to_string(audit.bound) + " J");
    }
    return audit;
}

PowerSeries instantaneous_charge_power(std::span<const double> time, std::span<const double> voltage,
                                       double capacitance, double window_s) {
    if (time.size() != voltage.size()) throw InvalidParams("time and voltage lengths differ");
    if (time.size() < 3) throw InsufficientData("instantaneous power needs at least 3 samples");
    if (!(capacitance > 0.0)) throw InvalidParams("capacitance must be > 0");
    if (!(window_s > 0.0)) throw InvalidParams("smoothing window must be > 0");
    for (std::size_t i = 1; i < time.size(); ++i) {
        if (!(time[i] > time[i - 1])) throw InvalidParams("time must be strictly increasing");
    }

    auto interp = [&](double t) {
        const auto it = std::upper_bound(time.begin(), time.end(), t);
        if (it == time.begin()) return voltage.front();
        if (it == time.end()) return voltage.back();
        const auto i = static_cast<std::size_t>(it - time.begin());
        const double w = (t - time[i - 1]) / (time[i] - time[i - 1]);
        return voltage[i - 1] + w * (voltage[i] - voltage[i - 1]);
    };

    // samples closer than half a window to either end are dropped
    const double half = 0.5 * std::min(window_s, 0.5 * (time.back() - time.front()));
    PowerSeries out;
    const std::size_t n = time.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double t = time[i];
        if (t - half < time.front() || t + half > time.back()) continue;
        const double v_hi = interp(t + half);
        const double v_lo = interp(t - half);
        out.time.push_back(t);
        out.power.push_back(0.5 * capacitance * (v_hi * v_hi - v_lo * v_lo) / (2.0 * half));
    }
    if (out.time.empty()) throw InsufficientData("no sample has a full smoothing window");
    return out;
}

ChargeCurve charge_storage(const SystemModel& model, const Excitation& exc,
                           const SolverOptions& options, const ChargeOptions& charge) {
    const double c_store = model.netlist.storage_capacitance();
    if (!(c_store > 0.0)) throw InvalidTopology("charge_storage needs a capacitor load");
    if (!(charge.t_max > 0.0) || charge.plateau_cycles < 1) throw InvalidParams("invalid charge options");

    Simulator sim(model, exc, options);
    const int node = model.netlist.output_node();
    const double window = charge.plateau_cycles * exc.period();
    bool plateau = false;
    while (sim.time() < charge.t_max * (1.0 - 1e-12)) {
        sim.advance_to(std::min(sim.time() + window, charge.t_max));
        const auto& v = sim.trace().node(node);
        const double now = v.back();
        if (charge.v_target && now >= *charge.v_target) break;
        const auto back = static_cast<std::size_t>(charge.plateau_cycles) *
                          static_cast<std::size_t>(options.samples_per_cycle);
        if (v.size() > back) {
            const double before = v[v.size() - 1 - back];
            if (std::abs(now - before) <= charge.plateau_rel * std::abs(now)) {
                plateau = true;
                break;
            }
        }
    }
    energy_audit(sim.trace());

    ChargeCurve curve;
    curve.trace = sim.take_trace();
    curve.plateau_reached = plateau;
    const auto& v = curve.trace.node(node);
    curve.v_max = *std::max_element(v.begin(), v.end());
    curve.power = instantaneous_charge_power(curve.trace.time, v, c_store,
                                             charge.smoothing_cycles * exc.period());
    curve.p_inst_max = 0.0;
    for (double p : curve.power.power) curve.p_inst_max = std::max(curve.p_inst_max, p);

    const auto& vp = curve.trace.node(model.netlist.port_node());
    const auto spc = static_cast<std::size_t>(curve.trace.samples_per_cycle);
    for (std::size_t begin = 0; begin + spc <= vp.size(); begin += spc) {
        const auto [lo, hi] = std::minmax_element(vp.begin() + static_cast<long>(begin),
                                                  vp.begin() + static_cast<long>(begin + spc));
        curve.input_vpp_max = std::max(curve.input_vpp_max, *hi - *lo);
    }
    return curve;
}

}  // namespace vibeharvest
