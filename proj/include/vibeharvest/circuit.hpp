#pragma once

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

namespace vibeharvest {

// =============================================================================
// Diode model
// =============================================================================

/// Shockley diode. Series resistance is realised by the netlist builder as an
/// extra resistor and internal node.
struct DiodeParams {
    double i_sat = 1e-14;        // A
    double ideality = 1.0;
    double v_thermal = 0.02585;  // V
    double r_series = 0.0;       // ohm

    void validate() const;
    double n_vt() const { return ideality * v_thermal; }
    bool operator==(const DiodeParams&) const = default;
};

/// HP 5082-2835 Schottky, datasheet-typical SPICE values.
DiodeParams schottky_hp5082_2835();
/// Default behavioral stand-in for the low-threshold (DTMOS) ASIC diodes.
DiodeParams low_threshold_diode();
/// Near-zero-drop diode used for the ideal-multiplier bounds.
DiodeParams near_ideal_diode();

/// i = i_sat (exp(v / (n vt)) - 1). Above an exponent of 80 the curve
/// continues along its tangent, keeping it finite, continuous and increasing.
double diode_current(const DiodeParams& d, double v);
/// di/dv of diode_current.
double diode_conductance(const DiodeParams& d, double v);

// =============================================================================
// Topologies
// =============================================================================

struct OpenLoad {
    bool operator==(const OpenLoad&) const = default;
};
struct ResistorLoad {
    double r = 0.0;
    bool operator==(const ResistorLoad&) const = default;
};
struct CapacitorLoad {
    double c = 0.0;
    double v_init = 0.0;
    bool operator==(const CapacitorLoad&) const = default;
};
using LoadSpec = std::variant<OpenLoad, ResistorLoad, CapacitorLoad>;

struct ResistiveLoad {
    double r = 0.0;
    bool operator==(const ResistiveLoad&) const = default;
};

/// Series capacitor c_r, clamp diode to ground, peak-detector diode into a
/// reservoir capacitor c_r, load across the reservoir.
struct DoublerRectifier {
    double c_r = 6.8e-9;
    DiodeParams diode = schottky_hp5082_2835();
    LoadSpec load = ResistorLoad{10e6};
    bool operator==(const DoublerRectifier&) const = default;
};

/// Conventional Villard (Cockcroft-Walton) ladder: `stages` pump capacitors in
/// series from the input, `stages` smoothing capacitors in series from ground,
/// 2 * stages diodes zig-zagging between the two columns.
struct Villard {
    int stages = 6;
    double c_stage = 40e-12;
    DiodeParams diode = low_threshold_diode();
    LoadSpec load = OpenLoad{};
    bool operator==(const Villard&) const = default;
};

using Topology = std::variant<ResistiveLoad, DoublerRectifier, Villard>;

void validate_topology(const Topology& topology);

// =============================================================================
// Netlist
// =============================================================================

enum class BranchKind { port, capacitor, resistor, diode };

const char* to_string(BranchKind kind);

/// One two-terminal element. Current is counted from node_a to node_b through
/// the element (anode to cathode for diodes). Node 0 is ground.
struct Branch {
    BranchKind kind = BranchKind::resistor;
    int node_a = 0;
    int node_b = 0;
    double value = 0.0;   // capacitance (F) or resistance (ohm)
    double v_init = 0.0;  // initial capacitor voltage v_a - v_b
    DiodeParams diode{};
};

class Netlist {
public:
    /// Adds a node and returns its index (1-based; 0 is ground).
    int add_node();
    int node_count() const { return node_count_; }

    void add_port(int node);
    void add_capacitor(int a, int b, double capacitance, double v_init = 0.0);
    void add_resistor(int a, int b, double resistance);
    /// Adds a diode; a positive r_series inserts an internal node and resistor.
    void add_diode(int anode, int cathode, const DiodeParams& diode);

    void set_output(int node, double storage_capacitance = 0.0);

    const std::vector<Branch>& branches() const { return branches_; }
    int port_node() const;
    int output_node() const { return output_node_; }
    /// Capacitance of the storage capacitor on the output node (0 if none).
    double storage_capacitance() const { return storage_capacitance_; }
    bool has_diodes() const;

    /// Checks exactly one port, node indices in range, and that every node
    /// reaches ground through non-capacitor branches. Throws InvalidTopology.
    void validate() const;

    /// One branch per line: `kind nodeA nodeB params...`.
    std::string dump() const;

    bool operator==(const Netlist&) const;

private:
    void check_node(int node) const;

    int node_count_ = 0;
    int output_node_ = 0;
    double storage_capacitance_ = 0.0;
    std::vector<Branch> branches_;
};

/// Node 1 is the transducer port. Villard stage s (1-based) uses node 2s for
/// the pump column and 2s+1 for the smoothing column; the output is node
/// 2N+1. Diode series resistances add internal nodes after those.
/// `port_capacitance` > 0 adds a capacitor from the port to ground.
Netlist build_topology(const Topology& topology, double port_capacitance = 0.0);

/// max(0, 2 N (v_amp - v_drop)).
double ideal_multiplier_output(int stages, double v_amp, double v_drop);

// =============================================================================
// Nodal step solver
// =============================================================================

enum class Integration { trapezoidal, backward_euler };

struct CircuitState {
    std::vector<double> node_voltages;       // index 0 is ground
    std::vector<double> capacitor_currents;  // per branch; zero for non-capacitors
};

/// Initial state: capacitor initial voltages applied to capacitors that
/// connect a node to ground, everything else at 0 V.
CircuitState initial_circuit_state(const Netlist& net);

/// Port condition for one step. Either the port voltage is prescribed, or a
/// current `current - conductance * v_port` is injected into the port node.
struct PortDrive {
    bool prescribed = false;
    double voltage = 0.0;
    double current = 0.0;
    double conductance = 0.0;

    static PortDrive voltage_source(double v) { return {true, v, 0.0, 0.0}; }
    static PortDrive current_source(double i, double g = 0.0) { return {false, 0.0, i, g}; }
};

struct NewtonTolerances {
    double voltage = 1e-9;  // V
    double current = 1e-12; // A
    int max_iterations = 100;
};

struct NodalStepResult {
    CircuitState state;
    std::vector<double> branch_currents;  // a -> b through each branch at the new point
    double port_current = 0.0;            // current delivered into the port node
    int iterations = 0;
};

/// Reusable Newton solver for one netlist; holds scratch buffers so repeated
/// steps do not allocate.
class NodalSolver {
public:
    explicit NodalSolver(const Netlist& net, NewtonTolerances tol = {});

    /// Advances `prev` by dt with capacitor companion models. Writes the new
    /// state into `next`. Throws NewtonDivergence after max_iterations.
    int solve(const CircuitState& prev, const PortDrive& port, double dt, Integration method,
              CircuitState& next);

    /// Current a -> b through branch k at `state` (for ports: the injected current).
    double branch_current(std::size_t k, const CircuitState& state, const PortDrive& port) const;

    /// Current supplied into the port node by the port element at `state`.
    double port_current(const CircuitState& state, const PortDrive& port) const;

    const Netlist& netlist() const { return net_; }

private:
    void assemble(const CircuitState& prev, const PortDrive& port, double dt, Integration method,
                  const std::vector<double>& v);
    double limit_step(const std::vector<double>& v) const;

    Netlist net_;
    NewtonTolerances tol_;
    int port_node_ = 0;
    std::vector<int> unknown_of_node_;
    int unknowns_ = 0;
    Eigen::MatrixXd jacobian_;
    Eigen::VectorXd residual_;
    Eigen::VectorXd magnitude_;
    Eigen::VectorXd delta_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

/// One-shot convenience wrapper around NodalSolver::solve.
NodalStepResult solve_nodal_step(const Netlist& net, const CircuitState& prev,
                                 const PortDrive& port, double dt,
                                 Integration method = Integration::trapezoidal);

}  // namespace vibeharvest
