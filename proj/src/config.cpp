#include "vibeharvest/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <type_traits>
#include <variant>

#include "vibeharvest/errors.hpp"
#include "vibeharvest/experiments.hpp"
#include "vibeharvest/units.hpp"

namespace vibeharvest {
namespace {

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

class Reader {
public:
    explicit Reader(const IniSection& s) : s_(s) {}

    void only(std::initializer_list<std::string_view> allowed) const {
        for (const auto& e : s_.entries) {
            if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end()) {
                throw ConfigError("unknown key '" + e.key + "' in [" + s_.name + "]", e.line);
            }
        }
    }

    bool has(std::string_view key) const { return s_.find(key) != nullptr; }

    const IniEntry& entry(std::string_view key) const {
        const auto* e = s_.find(key);
        if (e == nullptr) {
            throw ConfigError("missing required key '" + std::string(key) + "' in [" + s_.name + "]", s_.line);
        }
        return *e;
    }

    double quantity(std::string_view key, std::string_view dimension) const {
        const auto& e = entry(key);
        try {
            return parse_quantity_as(e.value, dimension);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("key '" + e.key + "': " + ex.what(), e.line);
        }
    }

    double quantity_or(std::string_view key, std::string_view dimension, double fallback) const {
        return has(key) ? quantity(key, dimension) : fallback;
    }

    int integer(std::string_view key) const {
        const auto& e = entry(key);
        int v = 0;
        const auto* first = e.value.data();
        const auto* last = first + e.value.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr != last) throw ConfigError("key '" + e.key + "' must be an integer", e.line);
        return v;
    }

    const std::string& word(std::string_view key) const { return entry(key).value; }

    int line() const { return s_.line; }

private:
    const IniSection& s_;
};

HarvesterParams harvester_from_section(const IniSection& s, const PresetCatalog& catalog,
                                       std::optional<std::string>& preset_name) {
    const Reader r(s);
    r.only({"preset", "m_eff", "f0", "zeta", "theta", "cp", "c_par"});
    const bool has_inline = std::any_of(s.entries.begin(), s.entries.end(),
                                        [](const IniEntry& e) { return e.key != "preset"; });
    HarvesterParams p;
    if (r.has("preset")) {
        if (has_inline) throw ConfigError("[harvester] takes either preset or inline parameters, not both", s.line);
        const auto& e = r.entry("preset");
        try {
            p = catalog.harvester(e.value);
        } catch (const PresetError& ex) {
            throw ConfigError(ex.what(), e.line);
        }
        preset_name = e.value;
        return p;
    }
    if (!has_inline) throw ConfigError("[harvester] is empty", s.line);
    p.m_eff = r.quantity("m_eff", "mass");
    p.f0 = r.quantity("f0", "frequency");
    p.zeta = r.quantity("zeta", "dimensionless");
    p.theta = r.quantity("theta", "coupling");
    p.cp = r.quantity("cp", "capacitance");
    p.c_par = r.quantity_or("c_par", "capacitance", 0.0);
    try {
        p.validate();
    } catch (const InvalidParams& ex) {
        throw ConfigError(ex.what(), s.line);
    }
    return p;
}

DiodeParams diode_from_section(const Reader& r, const PresetCatalog& catalog, const std::string& fallback) {
    DiodeParams d;
    const std::string name = r.has("diode") ? r.word("diode") : fallback;
    if (name != "inline") {
        try {
            d = catalog.diode(name).diode;
        } catch (const PresetError& ex) {
            throw ConfigError(ex.what(), r.has("diode") ? r.entry("diode").line : r.line());
        }
    } else {
        d = DiodeParams{};
    }
    d.i_sat = r.quantity_or("diode_i_sat", "current", d.i_sat);
    d.ideality = r.quantity_or("diode_ideality", "dimensionless", d.ideality);
    d.v_thermal = r.quantity_or("diode_v_thermal", "voltage", d.v_thermal);
    d.r_series = r.quantity_or("diode_r_series", "resistance", d.r_series);
    return d;
}

LoadSpec load_from_section(const Reader& r, LoadSpec fallback) {
    if (!r.has("load")) {
        if (r.has("load_r") || r.has("load_c") || r.has("load_v_init")) {
            throw ConfigError("load_r/load_c/load_v_init need 'load'", r.line());
        }
        return fallback;
    }
    const auto& kind = r.word("load");
    auto forbid = [&](std::string_view key) {
        if (r.has(key)) throw ConfigError("key '" + std::string(key) + "' does not apply to load = " + kind, r.entry(key).line);
    };
    if (kind == "open") {
        forbid("load_r");
        forbid("load_c");
        forbid("load_v_init");
        return OpenLoad{};
    }
    if (kind == "resistor") {
        forbid("load_c");
        forbid("load_v_init");
        return ResistorLoad{r.quantity("load_r", "resistance")};
    }
    if (kind == "capacitor") {
        forbid("load_r");
        return CapacitorLoad{r.quantity("load_c", "capacitance"), r.quantity_or("load_v_init", "voltage", 0.0)};
    }
    throw ConfigError("load must be open, resistor or capacitor", r.entry("load").line);
}

Topology topology_from_section(const IniSection& s, const PresetCatalog& catalog) {
    const Reader r(s);
    r.only({"kind", "r", "c_r", "stages", "c_stage", "diode", "diode_i_sat", "diode_ideality",
            "diode_v_thermal", "diode_r_series", "load", "load_r", "load_c", "load_v_init"});
    if (s.entries.empty()) throw ConfigError("[topology] is empty", s.line);
    const auto& kind = r.word("kind");
    auto forbid = [&](std::initializer_list<std::string_view> keys) {
        for (auto key : keys) {
            if (r.has(key)) {
                throw ConfigError("key '" + std::string(key) + "' does not apply to kind = " + kind, r.entry(key).line);
            }
        }
    };
    Topology t;
    if (kind == "resistive") {
        forbid({"c_r", "stages", "c_stage", "diode", "diode_i_sat", "diode_ideality", "diode_v_thermal",
                "diode_r_series", "load", "load_r", "load_c", "load_v_init"});
        t = ResistiveLoad{r.quantity("r", "resistance")};
    } else if (kind == "doubler") {
        forbid({"r", "stages", "c_stage"});
        DoublerRectifier d;
        d.c_r = r.quantity_or("c_r", "capacitance", d.c_r);
        d.diode = diode_from_section(r, catalog, "schottky");
        d.load = load_from_section(r, d.load);
        t = d;
    } else if (kind == "villard") {
        forbid({"r", "c_r"});
        Villard v;
        if (r.has("stages")) v.stages = r.integer("stages");
        v.c_stage = r.quantity_or("c_stage", "capacitance", v.c_stage);
        v.diode = diode_from_section(r, catalog, "lowvt");
        v.load = load_from_section(r, v.load);
        t = v;
    } else {
        throw ConfigError("kind must be resistive, doubler or villard", r.entry("kind").line);
    }
    try {
        validate_topology(t);
    } catch (const Error& ex) {
        throw ConfigError(ex.what(), s.line);
    }
    return t;
}

Excitation excitation_from_section(const IniSection& s) {
    const Reader r(s);
    r.only({"amplitude", "frequency", "duration"});
    if (s.entries.empty()) throw ConfigError("[excitation] is empty", s.line);
    Excitation e;
    // A value written in g is taken as is, so g-valued configs round-trip exactly.
    const auto& amp = r.entry("amplitude");
    const double si = r.quantity("amplitude", "acceleration");
    e.amplitude_g = si / kStandardGravity;
    if (amp.value.size() > 1 && amp.value.back() == 'g') {
        std::string_view number(amp.value);
        number.remove_suffix(1);
        while (!number.empty() && number.back() == ' ') number.remove_suffix(1);
        e.amplitude_g = parse_quantity_as(number, "acceleration");
    }
    e.frequency_hz = r.quantity("frequency", "frequency");
    e.duration_s = r.quantity_or("duration", "time", 1.0);
    try {
        e.validate();
    } catch (const InvalidParams& ex) {
        throw ConfigError(ex.what(), s.line);
    }
    return e;
}

SolverOptions solver_from_section(const IniSection& s) {
    const Reader r(s);
    r.only({"dt_init", "dt_min", "dt_max", "local_error_tol", "steady_state_tol", "samples_per_cycle"});
    SolverOptions o;
    o.dt_init = r.quantity_or("dt_init", "time", o.dt_init);
    o.dt_min = r.quantity_or("dt_min", "time", o.dt_min);
    o.dt_max = r.quantity_or("dt_max", "time", o.dt_max);
    o.local_error_tol = r.quantity_or("local_error_tol", "dimensionless", o.local_error_tol);
    o.steady_state_tol = r.quantity_or("steady_state_tol", "dimensionless", o.steady_state_tol);
    if (r.has("samples_per_cycle")) o.samples_per_cycle = r.integer("samples_per_cycle");
    try {
        o.validate();
    } catch (const Error& ex) {
        throw ConfigError(ex.what(), s.line);
    }
    return o;
}

std::string diode_lines(const DiodeParams& d) {
    return "diode = inline\ndiode_i_sat = " + shortest(d.i_sat) + "\ndiode_ideality = " + shortest(d.ideality) +
           "\ndiode_v_thermal = " + shortest(d.v_thermal) + "\ndiode_r_series = " + shortest(d.r_series) + "\n";
}

std::string load_lines(const LoadSpec& load) {
    return std::visit(
        [](const auto& l) -> std::string {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, OpenLoad>) {
                return "load = open\n";
            } else if constexpr (std::is_same_v<L, ResistorLoad>) {
                return "load = resistor\nload_r = " + shortest(l.r) + "\n";
            } else {
                return "load = capacitor\nload_c = " + shortest(l.c) + "\nload_v_init = " + shortest(l.v_init) + "\n";
            }
        },
        load);
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
    auto same_solver = [](const SolverOptions& a, const SolverOptions& b) {
        return a.dt_init == b.dt_init && a.dt_min == b.dt_min && a.dt_max == b.dt_max &&
               a.local_error_tol == b.local_error_tol && a.steady_state_tol == b.steady_state_tol &&
               a.samples_per_cycle == b.samples_per_cycle;
    };
    auto same_exc = [](const std::optional<Excitation>& a, const std::optional<Excitation>& b) {
        if (a.has_value() != b.has_value()) return false;
        if (!a) return true;
        return a->amplitude_g == b->amplitude_g && a->frequency_hz == b->frequency_hz &&
               a->duration_s == b->duration_s;
    };
    return harvester_preset == o.harvester_preset && harvester == o.harvester && topology == o.topology &&
           same_exc(excitation, o.excitation) && same_solver(solver, o.solver) && experiment == o.experiment &&
           output_dir == o.output_dir;
}

const std::vector<std::string>& experiment_keys() { return experiment_override_keys(); }

RunConfig interpret_config(const IniDocument& doc, const PresetCatalog& catalog) {
    RunConfig c;
    for (const auto& s : doc.sections) {
        if (s.name == "harvester") {
            c.harvester = harvester_from_section(s, catalog, c.harvester_preset);
        } else if (s.name == "topology") {
            c.topology = topology_from_section(s, catalog);
        } else if (s.name == "excitation") {
            c.excitation = excitation_from_section(s);
        } else if (s.name == "solver") {
            c.solver = solver_from_section(s);
        } else if (s.name == "output") {
            const Reader r(s);
            r.only({"dir"});
            if (r.has("dir")) c.output_dir = r.word("dir");
            if (c.output_dir.empty()) throw ConfigError("output dir is empty", s.line);
        } else if (s.name == "experiment") {
            const auto& keys = experiment_keys();
            for (const auto& e : s.entries) {
                if (std::find(keys.begin(), keys.end(), e.key) == keys.end()) {
                    throw ConfigError("unknown key '" + e.key + "' in [experiment]", e.line);
                }
                if (e.value.empty()) throw ConfigError("key '" + e.key + "' has no value", e.line);
                c.experiment[e.key] = e.value;
            }
        } else {
            throw ConfigError("unknown section [" + s.name + "]", s.line);
        }
    }
    return c;
}

RunConfig parse_config(std::string_view text, const PresetCatalog& catalog) {
    return interpret_config(parse_ini(text), catalog);
}

std::string serialize_config(const RunConfig& c) {
    std::string out;
    if (c.harvester) {
        out += "[harvester]\n";
        if (c.harvester_preset) {
            out += "preset = " + *c.harvester_preset + "\n";
        } else {
            const auto& p = *c.harvester;
            out += "m_eff = " + shortest(p.m_eff) + "\nf0 = " + shortest(p.f0) + "\nzeta = " + shortest(p.zeta) +
                   "\ntheta = " + shortest(p.theta) + "\ncp = " + shortest(p.cp) + "\nc_par = " + shortest(p.c_par) + "\n";
        }
        out += "\n";
    }
    if (c.topology) {
        out += "[topology]\n";
        std::visit(
            [&](const auto& t) {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, ResistiveLoad>) {
                    out += "kind = resistive\nr = " + shortest(t.r) + "\n";
                } else if constexpr (std::is_same_v<T, DoublerRectifier>) {
                    out += "kind = doubler\nc_r = " + shortest(t.c_r) + "\n" + diode_lines(t.diode) + load_lines(t.load);
                } else {
                    out += "kind = villard\nstages = " + std::to_string(t.stages) + "\nc_stage = " +
                           shortest(t.c_stage) + "\n" + diode_lines(t.diode) + load_lines(t.load);
                }
            },
            *c.topology);
        out += "\n";
    }
    if (c.excitation) {
        out += "[excitation]\namplitude = " + shortest(c.excitation->amplitude_g) + "g\nfrequency = " +
               shortest(c.excitation->frequency_hz) + "\nduration = " + shortest(c.excitation->duration_s) + "\n\n";
    }
    const auto& s = c.solver;
    out += "[solver]\ndt_init = " + shortest(s.dt_init) + "\ndt_min = " + shortest(s.dt_min) + "\ndt_max = " +
           shortest(s.dt_max) + "\nlocal_error_tol = " + shortest(s.local_error_tol) + "\nsteady_state_tol = " +
           shortest(s.steady_state_tol) + "\nsamples_per_cycle = " + std::to_string(s.samples_per_cycle) + "\n\n";
    if (!c.experiment.empty()) {
        out += "[experiment]\n";
        for (const auto& [k, v] : c.experiment) out += k + " = " + v + "\n";
        out += "\n";
    }
    out += "[output]\ndir = " + c.output_dir + "\n";
    return out;
}

void apply_override(IniDocument& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq || dot == 0 || dot + 1 == eq) {
        throw ConfigError("override must look like section.key=value: '" + std::string(assignment) + "'", 0);
    }
    auto trim = [](std::string_view s) {
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
        return std::string(s);
    };
    const auto section = trim(assignment.substr(0, dot));
    const auto key = trim(assignment.substr(dot + 1, eq - dot - 1));
    const auto value = trim(assignment.substr(eq + 1));
    if (section == "harvester") {
        // A preset and inline values exclude each other; an override of one
        // kind replaces the other.
        auto& s = doc.get_or_add(section);
        auto& entries = s.entries;
        if (key == "preset") {
            entries.clear();
        } else {
            entries.erase(std::remove_if(entries.begin(), entries.end(),
                                         [](const IniEntry& e) { return e.key == "preset"; }),
                          entries.end());
        }
    }
    doc.set(section, key, value);
}

}  // namespace vibeharvest
