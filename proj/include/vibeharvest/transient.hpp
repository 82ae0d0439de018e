#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vibeharvest/circuit.hpp"
#include "vibeharvest/harvester.hpp"

namespace vibeharvest {

struct SolverOptions {
    double dt_init = 1e-7;          // s
    double dt_min = 1e-14;          // s
    double dt_max = 1e-4;           // s; also capped by the sample interval
    double local_error_tol = 1e-6;  // relative, per step (step doubling)
    double steady_state_tol = 1e-5; // relative RMS change between cycles
    int samples_per_cycle = 40;

    void validate() const;
};

struct MechanicalState {
    double x = 0.0;      // m, relative to the frame
    double x_dot = 0.0;  // m/s
};

/// Generator plus the conditioning netlist attached to its port.
struct SystemModel {
    HarvesterParams harvester;
    Netlist netlist;
    MechanicalState initial{};

    /// Builds the netlist with cp + c_par as the port capacitance.
    static SystemModel from_topology(const HarvesterParams& params, const Topology& topology,
                                     MechanicalState initial = {});

    void validate() const;
};

/// Energy tallies, J. The first four are stored energies at the sample
/// instant; the rest accumulate from t = 0.
struct EnergyLedger {
    double e_kinetic = 0.0;
    double e_spring = 0.0;
    double e_caps = 0.0;
    double work_in = 0.0;
    double diss_mech = 0.0;
    double diss_resistors = 0.0;
    double diss_diodes = 0.0;

    double stored() const { return e_kinetic + e_spring + e_caps; }
    double dissipated() const { return diss_mech + diss_resistors + diss_diodes; }
};

/// Uniformly sampled run record: samples_per_cycle points per drive period.
struct Trace {
    double period = 0.0;
    int samples_per_cycle = 0;
    int storage_node = 0;  // 0 when the output node has no storage capacitor
    std::vector<double> time;
    std::vector<double> x;
    std::vector<double> x_dot;
    std::vector<std::vector<double>> node_voltages;  // [node - 1][sample]
    std::vector<EnergyLedger> energy;

    std::size_t size() const { return time.size(); }
    int node_count() const { return static_cast<int>(node_voltages.size()); }
    const std::vector<double>& node(int n) const { return node_voltages.at(static_cast<std::size_t>(n - 1)); }
    /// Voltage of the storage node, or empty when there is none.
    std::vector<double> storage_voltage() const;
};

/// v(t) = offset + amplitude sin(2 pi f t), applied directly at the port.
struct VoltageSource {
    double amplitude = 0.0;
    double frequency_hz = 1.0;
    double offset = 0.0;

    double at(double t) const;
};

/// Stateful integrator. Each step is a trapezoidal step of the coupled
/// mechanical + nodal system; the first step is a short backward-Euler step
/// that makes capacitor currents consistent with the initial node voltages.
class Simulator {
public:
    Simulator(const SystemModel& model, const Excitation& exc, const SolverOptions& options = {});
    Simulator(const Netlist& net, const VoltageSource& source, const SolverOptions& options = {});

    /// Integrates up to t_end (rounded to the sample grid). Throws
    /// SimulationStalled when the step falls below dt_min.
    void advance_to(double t_end);

    double time() const { return state_.t; }
    const Trace& trace() const { return trace_; }
    Trace take_trace() { return std::move(trace_); }
    const EnergyLedger& ledger() const { return ledger_; }
    long accepted_steps() const { return accepted_; }
    long rejected_steps() const { return rejected_; }

private:
    struct State {
        double t = 0.0;
        double x = 0.0;
        double u = 0.0;
        CircuitState circuit;
    };

    void init_common();
    void step(const State& from, double h, bool startup, State& to, EnergyLedger& flows);
    double error_norm(const State& fine, const State& coarse) const;
    void record(const State& s);
    void fill_stored(const State& s, EnergyLedger& e) const;

    bool mechanical_ = true;
    HarvesterParams params_{};
    Excitation exc_{};
    VoltageSource source_{};
    SolverOptions options_{};
    NodalSolver solver_;
    double period_ = 0.0;
    double sample_dt_ = 0.0;
    long next_sample_ = 0;
    double h_ = 0.0;
    bool started_ = false;
    State state_;
    State full_, half_, half2_;
    EnergyLedger ledger_{};
    std::vector<double> peak_;
    Trace trace_;
    long accepted_ = 0;
    long rejected_ = 0;
    // cached mechanical constants
    double k_ = 0.0, c_ = 0.0, m_ = 0.0, theta_ = 0.0, accel_ = 0.0, omega_ = 0.0;
};

/// Runs for exc.duration_s and audits the energy ledger (EnergyImbalance on failure).
Trace simulate(const SystemModel& model, const Excitation& exc, const SolverOptions& options = {});

/// Circuit-only run driven by a voltage source at the port.
Trace simulate_circuit(const Netlist& net, const VoltageSource& source, double duration,
                       const SolverOptions& options = {});

struct NodeCycleStats {
    double mean = 0.0;
    double rms = 0.0;
    double amplitude = 0.0;     // fundamental component
    double peak_to_peak = 0.0;
};

struct SteadyStateMetrics {
    double t_start = 0.0;
    int first_cycle = 0;
    int cycles_averaged = 0;
    std::vector<NodeCycleStats> nodes;  // [node - 1]
    double x_amplitude = 0.0;
    double x_dot_amplitude = 0.0;
    double power_in = 0.0;         // W, averaged over the settled window
    double power_mech = 0.0;
    double power_resistors = 0.0;
    double power_diodes = 0.0;
    double energy_resistors_per_cycle = 0.0;  // J

    const NodeCycleStats& node(int n) const { return nodes.at(static_cast<std::size_t>(n - 1)); }
};

/// Earliest cycle after which the per-cycle RMS of x and of every node voltage
/// changes by less than `tol` (relative) between consecutive cycles, and the
/// cycle-averaged metrics from there to the end. Throws NotSettled or
/// InsufficientData (fewer than 10 cycles).
SteadyStateMetrics detect_steady_state(const Trace& trace, const Excitation& exc, double tol);

struct EnergyAudit {
    EnergyLedger initial;
    EnergyLedger final;
    double residual = 0.0;
    double bound = 0.0;
};

/// Residual |work_in - (delta stored + dissipated)|; throws EnergyImbalance
/// when it exceeds 1e-3 of max(work_in, dissipated, initial stored energy).
EnergyAudit energy_audit(const Trace& trace);

struct PowerSeries {
    std::vector<double> time;
    std::vector<double> power;
};

/// p(t) = d(C V^2 / 2)/dt by a centred difference over `window_s`, or half
/// the record length if that is shorter. Samples within half a window of
/// either end are omitted. Throws
/// InsufficientData for fewer than 3 samples.
PowerSeries instantaneous_charge_power(std::span<const double> time, std::span<const double> voltage,
                                       double capacitance, double window_s);

struct ChargeOptions {
    double t_max = 30.0;                  // s
    std::optional<double> v_target;       // stop once reached
    double plateau_rel = 1e-3;            // relative change allowed over the plateau window
    int plateau_cycles = 100;
    int smoothing_cycles = 10;            // instantaneous power window
};

struct ChargeCurve {
    Trace trace;
    PowerSeries power;
    double v_max = 0.0;
    double p_inst_max = 0.0;
    double input_vpp_max = 0.0;  // largest per-cycle peak-to-peak at the port
    bool plateau_reached = false;
};

/// Charges the capacitor load until plateau, v_target, or t_max.
ChargeCurve charge_storage(const SystemModel& model, const Excitation& exc,
                           const SolverOptions& options = {}, const ChargeOptions& charge = {});

}  // namespace vibeharvest
