#include "vibeharvest/circuit.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <queue>

#include "vibeharvest/errors.hpp"

namespace vibeharvest {
namespace {

constexpr double kExponentClamp = 80.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kRoundoffUlps = 64.0;

std::string fmt_g(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 9);
    (void)ec;
    return std::string(buf, ptr);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidTopology(what);
}

void validate_load(const LoadSpec& load) {
    if (const auto* r = std::get_if<ResistorLoad>(&load)) require(r->r > 0.0, "load resistance must be > 0");
    if (const auto* c = std::get_if<CapacitorLoad>(&load)) require(c->c > 0.0, "load capacitance must be > 0");
}

void attach_load(Netlist& net, int node, const LoadSpec& load) {
    std::visit(
        [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ResistorLoad>) {
                net.add_resistor(node, 0, l.r);
                net.set_output(node);
            } else if constexpr (std::is_same_v<T, CapacitorLoad>) {
                net.add_capacitor(node, 0, l.c, l.v_init);
                net.set_output(node, l.c);
            } else {
                net.set_output(node);
            }
        },
        load);
}

// Villard ladder; stages == 1 is the voltage doubler.
void build_ladder(Netlist& net, int port, int stages, double c_stage, const DiodeParams& diode,
                  const LoadSpec& load) {
    // Reserve the documented node numbers before any internal diode nodes.
    std::vector<int> pump(static_cast<std::size_t>(stages) + 1, 0);
    std::vector<int> smooth(static_cast<std::size_t>(stages) + 1, 0);
    for (int s = 1; s <= stages; ++s) {
        pump[static_cast<std::size_t>(s)] = net.add_node();
        smooth[static_cast<std::size_t>(s)] = net.add_node();
    }
    for (int s = 1; s <= stages; ++s) {
        const auto i = static_cast<std::size_t>(s);
        const int pump_prev = s == 1 ? port : pump[i - 1];
        const int smooth_prev = s == 1 ? 0 : smooth[i - 1];
        net.add_capacitor(pump_prev, pump[i], c_stage);
        net.add_capacitor(smooth[i], smooth_prev, c_stage);
        net.add_diode(smooth_prev, pump[i], diode);
        net.add_diode(pump[i], smooth[i], diode);
    }
    attach_load(net, smooth[static_cast<std::size_t>(stages)], load);
}

bool same_branch(const Branch& a, const Branch& b) {
    return a.kind == b.kind && a.node_a == b.node_a && a.node_b == b.node_b && a.value == b.value &&
           a.v_init == b.v_init && a.diode == b.diode;
}

}  // namespace

// -----------------------------------------------------------------------------
// Diode
// -----------------------------------------------------------------------------

void DiodeParams::validate() const {
    if (!(i_sat > 0.0)) throw InvalidTopology("diode i_sat must be > 0");
    if (!(ideality >= 1.0 && ideality <= 2.5)) throw InvalidTopology("diode ideality must lie in [1, 2.5]");
    if (!(v_thermal > 0.0)) throw InvalidTopology("diode v_thermal must be > 0");
    if (!(r_series >= 0.0)) throw InvalidTopology("diode r_series must be >= 0");
}

DiodeParams schottky_hp5082_2835() { return {.i_sat = 22e-9, .ideality = 1.08}; }
DiodeParams low_threshold_diode() { return {.i_sat = 1e-6, .ideality = 1.2}; }
DiodeParams near_ideal_diode() { return {.i_sat = 1e-12, .ideality = 1.0, .v_thermal = 1e-3}; }

double diode_current(const DiodeParams& d, double v) {
    const double arg = v / d.n_vt();
    if (arg <= kExponentClamp) return d.i_sat * std::expm1(arg);
    const double e = std::exp(kExponentClamp);
    return d.i_sat * (e * (1.0 + (arg - kExponentClamp)) - 1.0);
}

double diode_conductance(const DiodeParams& d, double v) {
    const double arg = std::min(v / d.n_vt(), kExponentClamp);
    return d.i_sat * std::exp(arg) / d.n_vt();
}

// -----------------------------------------------------------------------------
// Topology
// -----------------------------------------------------------------------------

void validate_topology(const Topology& topology) {
    std::visit(
        [](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, ResistiveLoad>) {
                require(t.r > 0.0, "load resistance must be > 0");
            } else if constexpr (std::is_same_v<T, DoublerRectifier>) {
                require(t.c_r > 0.0, "doubler capacitance must be > 0");
                t.diode.validate();
                validate_load(t.load);
            } else {
                require(t.stages >= 1, "Villard multiplier needs at least one stage");
                require(t.c_stage > 0.0, "stage capacitance must be > 0");
                t.diode.validate();
                validate_load(t.load);
            }
        },
        topology);
}

Netlist build_topology(const Topology& topology, double port_capacitance) {
    validate_topology(topology);
    require(port_capacitance >= 0.0, "port capacitance must be >= 0");
    Netlist net;
    const int port = net.add_node();
    net.add_port(port);
    if (port_capacitance > 0.0) net.add_capacitor(port, 0, port_capacitance);
    std::visit(
        [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, ResistiveLoad>) {
                net.add_resistor(port, 0, t.r);
                net.set_output(port);
            } else if constexpr (std::is_same_v<T, DoublerRectifier>) {
                build_ladder(net, port, 1, t.c_r, t.diode, t.load);
            } else {
                build_ladder(net, port, t.stages, t.c_stage, t.diode, t.load);
            }
        },
        topology);
    net.validate();
    return net;
}

double ideal_multiplier_output(int stages, double v_amp, double v_drop) {
    return std::max(0.0, 2.0 * stages * (v_amp - v_drop));
}

// -----------------------------------------------------------------------------
// Netlist
// -----------------------------------------------------------------------------

const char* to_string(BranchKind kind) {
    switch (kind) {
        case BranchKind::port: return "port";
        case BranchKind::capacitor: return "capacitor";
        case BranchKind::resistor: return "resistor";
        case BranchKind::diode: return "diode";
    }
    return "?";
}

int Netlist::add_node() { return ++node_count_; }

void Netlist::check_node(int node) const {
    require(node >= 0 && node <= node_count_, "node index out of range: " + std::to_string(node));
}

void Netlist::add_port(int node) {
    check_node(node);
    require(node != 0, "port cannot sit on ground");
    branches_.push_back({.kind = BranchKind::port, .node_a = node, .node_b = 0});
}

void Netlist::add_capacitor(int a, int b, double capacitance, double v_init) {
    check_node(a);
    check_node(b);
    require(a != b, "capacitor terminals must differ");
    require(capacitance > 0.0, "capacitance must be > 0");
    require(v_init == 0.0 || b == 0, "initial voltage only supported on grounded capacitors");
    branches_.push_back(
        {.kind = BranchKind::capacitor, .node_a = a, .node_b = b, .value = capacitance, .v_init = v_init});
}

void Netlist::add_resistor(int a, int b, double resistance) {
    check_node(a);
    check_node(b);
    require(a != b, "resistor terminals must differ");
    require(resistance > 0.0, "resistance must be > 0");
    branches_.push_back({.kind = BranchKind::resistor, .node_a = a, .node_b = b, .value = resistance});
}

void Netlist::add_diode(int anode, int cathode, const DiodeParams& diode) {
    check_node(anode);
    check_node(cathode);
    require(anode != cathode, "diode terminals must differ");
    diode.validate();
    int junction_anode = anode;
    if (diode.r_series > 0.0) {
        junction_anode = add_node();
        add_resistor(anode, junction_anode, diode.r_series);
    }
    DiodeParams junction = diode;
    junction.r_series = 0.0;
    branches_.push_back(
        {.kind = BranchKind::diode, .node_a = junction_anode, .node_b = cathode, .diode = junction});
}

void Netlist::set_output(int node, double storage_capacitance) {
    check_node(node);
    output_node_ = node;
    storage_capacitance_ = storage_capacitance;
}

int Netlist::port_node() const {
    for (const auto& b : branches_) {
        if (b.kind == BranchKind::port) return b.node_a;
    }
    return 0;
}

bool Netlist::has_diodes() const {
    return std::any_of(branches_.begin(), branches_.end(),
                       [](const Branch& b) { return b.kind == BranchKind::diode; });
}

void Netlist::validate() const {
    const auto ports = std::count_if(branches_.begin(), branches_.end(),
                                     [](const Branch& b) { return b.kind == BranchKind::port; });
    require(ports == 1, "netlist needs exactly one port, found " + std::to_string(ports));

    std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(node_count_) + 1);
    for (const auto& b : branches_) {
        check_node(b.node_a);
        check_node(b.node_b);
        if (b.kind == BranchKind::capacitor) continue;
        adjacency[static_cast<std::size_t>(b.node_a)].push_back(b.node_b);
        adjacency[static_cast<std::size_t>(b.node_b)].push_back(b.node_a);
    }
    std::vector<bool> seen(adjacency.size(), false);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = true;
    while (!frontier.empty()) {
        const int n = frontier.front();
        frontier.pop();
        for (int m : adjacency[static_cast<std::size_t>(n)]) {
            if (!seen[static_cast<std::size_t>(m)]) {
                seen[static_cast<std::size_t>(m)] = true;
                frontier.push(m);
            }
        }
    }
    for (int n = 1; n <= node_count_; ++n) {
        require(seen[static_cast<std::size_t>(n)],
                "node " + std::to_string(n) + " has no DC path to ground");
    }
}

std::string Netlist::dump() const {
    std::string out;
    for (const auto& b : branches_) {
        out += to_string(b.kind);
        out += ' ' + std::to_string(b.node_a) + ' ' + std::to_string(b.node_b);
        switch (b.kind) {
            case BranchKind::port: break;
            case BranchKind::capacitor:
                out += " C=" + fmt_g(b.value) + " v0=" + fmt_g(b.v_init);
                break;
            case BranchKind::resistor: out += " R=" + fmt_g(b.value); break;
            case BranchKind::diode:
                out += " Is=" + fmt_g(b.diode.i_sat) + " n=" + fmt_g(b.diode.ideality) +
                       " Vt=" + fmt_g(b.diode.v_thermal);
                break;
        }
        out += '\n';
    }
    return out;
}

bool Netlist::operator==(const Netlist& other) const {
    if (node_count_ != other.node_count_ || output_node_ != other.output_node_ ||
        storage_capacitance_ != other.storage_capacitance_ ||
        branches_.size() != other.branches_.size()) {
        return false;
    }
    return std::equal(branches_.begin(), branches_.end(), other.branches_.begin(), same_branch);
}

// -----------------------------------------------------------------------------
// Nodal solver
// -----------------------------------------------------------------------------

CircuitState initial_circuit_state(const Netlist& net) {
    CircuitState state;
    state.node_voltages.assign(static_cast<std::size_t>(net.node_count()) + 1, 0.0);
    state.capacitor_currents.assign(net.branches().size(), 0.0);
    for (const auto& b : net.branches()) {
        if (b.kind == BranchKind::capacitor && b.v_init != 0.0) {
            state.node_voltages[static_cast<std::size_t>(b.node_a)] = b.v_init;
        }
    }
    return state;
}

NodalSolver::NodalSolver(const Netlist& net, NewtonTolerances tol) : net_(net), tol_(tol) {
    net_.validate();
    port_node_ = net_.port_node();
    unknown_of_node_.assign(static_cast<std::size_t>(net_.node_count()) + 1, -1);
    unknowns_ = 0;
    for (int n = 1; n <= net_.node_count(); ++n) unknown_of_node_[static_cast<std::size_t>(n)] = unknowns_++;
    jacobian_.resize(unknowns_, unknowns_);
    residual_.resize(unknowns_);
    magnitude_.resize(unknowns_);
    delta_.resize(unknowns_);
}

void NodalSolver::assemble(const CircuitState& prev, const PortDrive& port, double dt,
                           Integration method, const std::vector<double>& v) {
    jacobian_.setZero();
    residual_.setZero();
    magnitude_.setZero();
    const bool trap = method == Integration::trapezoidal;

    auto stamp = [&](int a, int b, double current, double conductance) {
        const int ia = unknown_of_node_[static_cast<std::size_t>(a)];
        const int ib = unknown_of_node_[static_cast<std::size_t>(b)];
        if (ia >= 0) {
            residual_[ia] += current;
            magnitude_[ia] += std::abs(current);
            jacobian_(ia, ia) += conductance;
        }
        if (ib >= 0) {
            residual_[ib] -= current;
            magnitude_[ib] += std::abs(current);
            jacobian_(ib, ib) += conductance;
        }
        if (ia >= 0 && ib >= 0) {
            jacobian_(ia, ib) -= conductance;
            jacobian_(ib, ia) -= conductance;
        }
    };

    const auto& branches = net_.branches();
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& b = branches[k];
        const double vab = v[static_cast<std::size_t>(b.node_a)] - v[static_cast<std::size_t>(b.node_b)];
        switch (b.kind) {
            case BranchKind::capacitor: {
                const double vab0 = prev.node_voltages[static_cast<std::size_t>(b.node_a)] -
                                    prev.node_voltages[static_cast<std::size_t>(b.node_b)];
                const double geq = (trap ? 2.0 : 1.0) * b.value / dt;
                const double history = geq * vab0 + (trap ? prev.capacitor_currents[k] : 0.0);
                stamp(b.node_a, b.node_b, geq * vab - history, geq);
                // Cancellation inside the companion model sets the roundoff floor.
                const int ia = unknown_of_node_[static_cast<std::size_t>(b.node_a)];
                const int ib = unknown_of_node_[static_cast<std::size_t>(b.node_b)];
                if (ia >= 0) magnitude_[ia] += std::abs(history) + std::abs(geq * vab);
                if (ib >= 0) magnitude_[ib] += std::abs(history) + std::abs(geq * vab);
                break;
            }
            case BranchKind::resistor: stamp(b.node_a, b.node_b, vab / b.value, 1.0 / b.value); break;
            case BranchKind::diode:
                stamp(b.node_a, b.node_b, diode_current(b.diode, vab), diode_conductance(b.diode, vab));
                break;
            case BranchKind::port:
                if (!port.prescribed) {
                    // Injected current enters node_a: leaving current is its negative.
                    const double injected = port.current - port.conductance * vab;
                    stamp(b.node_a, b.node_b, -injected, port.conductance);
                }
                break;
        }
    }
}

// SPICE-style junction limiting, folded into one global damping factor.
double NodalSolver::limit_step(const std::vector<double>& v) const {
    double lambda = 1.0;
    for (const auto& b : net_.branches()) {
        if (b.kind != BranchKind::diode) continue;
        auto delta_of = [&](int node) {
            const int i = unknown_of_node_[static_cast<std::size_t>(node)];
            return i >= 0 ? delta_[i] : 0.0;
        };
        const double v_old = v[static_cast<std::size_t>(b.node_a)] - v[static_cast<std::size_t>(b.node_b)];
        const double step = delta_of(b.node_a) - delta_of(b.node_b);
        const double v_new = v_old + step;
        const double nvt = b.diode.n_vt();
        const double v_crit = nvt * std::log(nvt / (std::sqrt(2.0) * b.diode.i_sat));
        if (v_new <= v_crit || std::abs(step) <= 2.0 * nvt) continue;
        double v_lim;
        if (v_old > 0.0) {
            const double arg = 1.0 + step / nvt;
            v_lim = arg > 0.0 ? v_old + nvt * std::log(arg) : v_crit;
        } else {
            v_lim = nvt * std::log(v_new / nvt);
        }
        const double allowed = (v_lim - v_old) / step;
        if (allowed > 0.0 && allowed < lambda) lambda = allowed;
    }
    return lambda;
}

int NodalSolver::solve(const CircuitState& prev, const PortDrive& port, double dt,
                       Integration method, CircuitState& next) {
    auto& v = next.node_voltages;
    v = prev.node_voltages;
    v[0] = 0.0;
    if (port.prescribed) {
        // The port node stays in the unknown set; its row is replaced by v_p = V.
        v[static_cast<std::size_t>(port_node_)] = port.voltage;
    }
    const int port_row = unknown_of_node_[static_cast<std::size_t>(port_node_)];

    for (int iter = 1; iter <= tol_.max_iterations; ++iter) {
        assemble(prev, port, dt, method, v);
        if (port.prescribed) {
            jacobian_.row(port_row).setZero();
            jacobian_(port_row, port_row) = 1.0;
            residual_[port_row] = v[static_cast<std::size_t>(port_node_)] - port.voltage;
        }
        // Nodal current tolerance plus the floating-point floor of the summed terms.
        bool residual_ok = true;
        for (int i = 0; i < unknowns_; ++i) {
            const double allowed = (port.prescribed && i == port_row) ? tol_.voltage
                                   : tol_.current + kRoundoffUlps * kEps * magnitude_[i];
            if (std::abs(residual_[i]) > allowed) residual_ok = false;
        }
        lu_.compute(jacobian_);
        delta_ = lu_.solve(-residual_);
        const double lambda = limit_step(v);
        double max_step = 0.0;
        for (int n = 1; n <= net_.node_count(); ++n) {
            const double dv = lambda * delta_[unknown_of_node_[static_cast<std::size_t>(n)]];
            v[static_cast<std::size_t>(n)] += dv;
            max_step = std::max(max_step, std::abs(dv));
        }
        if (!std::isfinite(max_step)) break;
        if (lambda == 1.0 && max_step < tol_.voltage && residual_ok) {
            // Companion currents at the converged point.
            const bool trap = method == Integration::trapezoidal;
            const auto& branches = net_.branches();
            next.capacitor_currents.resize(branches.size());
            for (std::size_t k = 0; k < branches.size(); ++k) {
                const auto& b = branches[k];
                if (b.kind != BranchKind::capacitor) {
                    next.capacitor_currents[k] = 0.0;
                    continue;
                }
                const double vab = v[static_cast<std::size_t>(b.node_a)] - v[static_cast<std::size_t>(b.node_b)];
                const double vab0 = prev.node_voltages[static_cast<std::size_t>(b.node_a)] -
                                    prev.node_voltages[static_cast<std::size_t>(b.node_b)];
                const double geq = (trap ? 2.0 : 1.0) * b.value / dt;
                next.capacitor_currents[k] = geq * (vab - vab0) - (trap ? prev.capacitor_currents[k] : 0.0);
            }
            return iter;
        }
    }
    throw NewtonDivergence("Newton iteration did not converge in " +
                           std::to_string(tol_.max_iterations) + " iterations");
}

double NodalSolver::branch_current(std::size_t k, const CircuitState& state,
                                   const PortDrive& port) const {
    const auto& b = net_.branches()[k];
    const double vab = state.node_voltages[static_cast<std::size_t>(b.node_a)] -
                       state.node_voltages[static_cast<std::size_t>(b.node_b)];
    switch (b.kind) {
        case BranchKind::capacitor: return state.capacitor_currents[k];
        case BranchKind::resistor: return vab / b.value;
        case BranchKind::diode: return diode_current(b.diode, vab);
        case BranchKind::port: return -port_current(state, port);
    }
    return 0.0;
}

double NodalSolver::port_current(const CircuitState& state, const PortDrive& port) const {
    if (!port.prescribed) {
        return port.current - port.conductance * state.node_voltages[static_cast<std::size_t>(port_node_)];
    }
    // KCL at the port node: the source supplies whatever the other branches draw.
    double leaving = 0.0;
    const auto& branches = net_.branches();
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& b = branches[k];
        if (b.kind == BranchKind::port) continue;
        if (b.node_a == port_node_) leaving += branch_current(k, state, port);
        if (b.node_b == port_node_) leaving -= branch_current(k, state, port);
    }
    return leaving;
}

NodalStepResult solve_nodal_step(const Netlist& net, const CircuitState& prev,
                                 const PortDrive& port, double dt, Integration method) {
    if (!(dt > 0.0)) throw InvalidParams("dt must be > 0");
    NodalSolver solver(net);
    NodalStepResult result;
    result.iterations = solver.solve(prev, port, dt, method, result.state);
    result.branch_currents.resize(net.branches().size());
    for (std::size_t k = 0; k < net.branches().size(); ++k) {
        result.branch_currents[k] = solver.branch_current(k, result.state, port);
    }
    result.port_current = solver.port_current(result.state, port);
    return result;
}

}  // namespace vibeharvest
