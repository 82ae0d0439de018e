#include "vibeharvest/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "vibeharvest/config.hpp"
#include "vibeharvest/errors.hpp"
#include "vibeharvest/experiments.hpp"
#include "vibeharvest/io.hpp"
#include "vibeharvest/optimize.hpp"
#include "vibeharvest/plot.hpp"
#include "vibeharvest/presets.hpp"
#include "vibeharvest/units.hpp"

namespace vibeharvest {
namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string preset;
    std::string out;
    std::vector<std::string> sets;
    bool allow_miss = false;
    std::string figure;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error("usage", msg) {}
};

std::string num(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(9);
    os << v;
    return os.str();
}

std::string read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path, 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Session {
public:
    Session(const Options& opt, std::ostream& out)
        : opt_(opt), out_(out), catalog_(PresetCatalog::from_environment()) {}

    // Config document with --set applied; `preset_as_harvester` maps --preset
    // onto [harvester] preset.
    RunConfig load(bool preset_as_harvester, const std::vector<std::string>& skip_prefixes = {}) {
        IniDocument doc = opt_.config.empty() ? IniDocument{} : parse_ini(read_config_file(opt_.config));
        if (preset_as_harvester && !opt_.preset.empty()) apply_override(doc, "harvester.preset=" + opt_.preset);
        for (const auto& s : opt_.sets) {
            bool skip = false;
            for (const auto& p : skip_prefixes) skip = skip || s.starts_with(p);
            if (!skip) apply_override(doc, s);
        }
        auto cfg = interpret_config(doc, catalog_);
        out_dir_ = opt_.out.empty() ? fs::path(cfg.output_dir) : fs::path(opt_.out);
        return cfg;
    }

    const PresetCatalog& catalog() const { return catalog_; }

    void emit(const std::string& stem, const std::string& csv, const std::string& svg,
              const std::vector<std::pair<std::string, std::string>>& meta) {
        write_text_file(out_dir_ / (stem + ".csv"), csv);
        write_text_file(out_dir_ / (stem + ".svg"), svg);
        write_text_file(out_dir_ / (stem + ".meta.txt"), format_meta(meta));
        out_ << "wrote " << (out_dir_ / (stem + ".csv")).string() << ", .svg, .meta.txt\n";
    }

    fs::path out_dir() const { return out_dir_; }
    std::ostream& out() { return out_; }
    const Options& options() const { return opt_; }

private:
    const Options& opt_;
    std::ostream& out_;
    PresetCatalog catalog_;
    fs::path out_dir_ = ".";
};

template <typename T>
const T& require(const std::optional<T>& v, const char* section) {
    if (!v) throw ConfigError(std::string("missing [") + section + "] section", 0);
    return *v;
}

std::vector<std::pair<std::string, std::string>> config_meta(const RunConfig& cfg, const PresetCatalog& catalog) {
    std::vector<std::pair<std::string, std::string>> meta;
    if (cfg.harvester_preset) {
        meta.emplace_back("preset", *cfg.harvester_preset);
        meta.emplace_back("preset_hash", catalog.hash(*cfg.harvester_preset));
    }
    std::istringstream lines(serialize_config(cfg));
    std::string line;
    std::string section;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        meta.emplace_back(section + "." + line.substr(0, eq), line.substr(eq + 3));
    }
    return meta;
}

int run_simulate(Session& s) {
    const auto cfg = s.load(true);
    const auto& params = require(cfg.harvester, "harvester");
    const auto& topology = require(cfg.topology, "topology");
    const auto& exc = require(cfg.excitation, "excitation");
    const auto model = SystemModel::from_topology(params, topology);
    const auto trace = simulate(model, exc, cfg.solver);
    const auto audit = energy_audit(trace);
    auto meta = config_meta(cfg, s.catalog());
    meta.emplace_back("samples", std::to_string(trace.size()));
    meta.emplace_back("energy_residual_J", num(audit.residual));
    meta.emplace_back("energy_bound_J", num(audit.bound));
    meta.emplace_back("work_in_J", num(audit.final.work_in));
    s.out() << "samples " << trace.size() << ", work in " << num(audit.final.work_in) << " J, residual "
            << num(audit.residual) << " J\n";
    try {
        const auto m = detect_steady_state(trace, exc, cfg.solver.steady_state_tol);
        const int out_node = model.netlist.output_node();
        meta.emplace_back("steady_state_t_start_s", num(m.t_start));
        meta.emplace_back("steady_output_mean_V", num(m.node(out_node).mean));
        meta.emplace_back("steady_output_amplitude_V", num(m.node(out_node).amplitude));
        meta.emplace_back("steady_power_resistors_W", num(m.power_resistors));
        s.out() << "steady from " << num(m.t_start) << " s: output amplitude " << num(m.node(out_node).amplitude)
                << " V, mean " << num(m.node(out_node).mean) << " V, resistor power " << num(m.power_resistors)
                << " W\n";
    } catch (const NotSettled&) {
        meta.emplace_back("steady_state", "not settled");
        s.out() << "not settled within the run\n";
    } catch (const InsufficientData&) {
        meta.emplace_back("steady_state", "run shorter than 10 cycles");
    }
    const double c_store = model.netlist.storage_capacitance();
    s.emit("simulate", trace_to_csv(trace, c_store, 10.0 * exc.period()),
           render_svg(trace, {.title = "Simulated voltage", .x_label = "time (s)", .y_label = "voltage (V)"}),
           meta);
    return 0;
}

int run_sweep_load(Session& s) {
    const auto cfg = s.load(true);
    const auto& params = require(cfg.harvester, "harvester");
    const auto& exc = require(cfg.excitation, "excitation");
    ExperimentSetup setup;
    setup.harvester = params;
    setup.overrides = cfg.experiment;
    setup.overrides["acceleration"] = num(exc.amplitude_g) + "g";
    setup.overrides["frequency"] = num(exc.frequency_hz);
    const auto res = run_experiment("fig3", setup);
    auto meta = config_meta(cfg, s.catalog());
    for (const auto& [k, v] : res.summary) meta.emplace_back(k, num(v));
    s.out() << "optimal load " << num(res.summary.at("r_opt_ohm")) << " ohm, power "
            << num(res.summary.at("peak_power_W")) << " W\n";
    s.emit("sweep-load", sweep_to_csv(res.tables[0].data), render_svg(res.plot, res.plot_spec), meta);
    return 0;
}

int run_charge(Session& s) {
    auto cfg = s.load(true);
    const auto& params = require(cfg.harvester, "harvester");
    const auto& exc = require(cfg.excitation, "excitation");
    if (!cfg.topology) {
        DoublerRectifier d;
        d.diode = s.catalog().diode("schottky").diode;
        d.load = CapacitorLoad{1e-6, 0.0};
        cfg.topology = d;
    }
    const auto model = SystemModel::from_topology(params, *cfg.topology);
    if (!(model.netlist.storage_capacitance() > 0.0)) {
        throw ConfigError("charge needs a rectifier topology with load = capacitor", 0);
    }
    ChargeOptions copt;
    auto knob = [&](const char* key, std::string_view dim, double fallback) {
        auto it = cfg.experiment.find(key);
        if (it == cfg.experiment.end()) return fallback;
        try {
            return parse_quantity_as(it->second, dim);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("experiment.") + key + ": " + e.what(), 0);
        }
    };
    copt.t_max = knob("t_max", "time", copt.t_max);
    if (cfg.experiment.contains("v_target")) copt.v_target = knob("v_target", "voltage", 0.0);
    const auto curve = charge_storage(model, exc, cfg.solver, copt);
    auto meta = config_meta(cfg, s.catalog());
    meta.emplace_back("v_max_V", num(curve.v_max));
    meta.emplace_back("p_inst_max_W", num(curve.p_inst_max));
    meta.emplace_back("input_vpp_max_V", num(curve.input_vpp_max));
    meta.emplace_back("plateau_reached", curve.plateau_reached ? "yes" : "no");
    meta.emplace_back("t_end_s", num(curve.trace.time.back()));
    s.out() << "v_max " << num(curve.v_max) << " V, peak charging power " << num(curve.p_inst_max) << " W, "
            << (curve.plateau_reached ? "plateau reached" : "no plateau") << " at " << num(curve.trace.time.back())
            << " s\n";
    s.emit("charge",
           trace_to_csv(curve.trace, model.netlist.storage_capacitance(), copt.smoothing_cycles * exc.period()),
           render_svg(curve.trace, {.title = "Storage voltage", .x_label = "time (s)", .y_label = "voltage (V)"}),
           meta);
    return 0;
}

int run_vm_curve(Session& s) {
    const auto cfg = s.load(false);
    ExperimentSetup setup;
    setup.overrides = cfg.experiment;
    std::vector<std::pair<std::string, std::string>> meta;
    if (cfg.topology && std::holds_alternative<Villard>(*cfg.topology)) {
        const auto& v = std::get<Villard>(*cfg.topology);
        setup.vm_diode = v.diode;
        setup.vm_probe_load = std::holds_alternative<ResistorLoad>(v.load) ? std::get<ResistorLoad>(v.load).r : 0.0;
        if (std::holds_alternative<CapacitorLoad>(v.load)) throw ConfigError("vm-curve takes an open or resistor load", 0);
        setup.overrides.try_emplace("stages", std::to_string(v.stages));
        setup.overrides.try_emplace("c_stage", num(v.c_stage));
    } else if (cfg.topology) {
        throw ConfigError("vm-curve needs kind = villard", 0);
    } else {
        const std::string name = s.options().preset.empty() ? "lowvt" : s.options().preset;
        const auto preset = s.catalog().diode(name);
        setup.vm_diode = preset.diode;
        setup.vm_probe_load = preset.probe_load;
        meta.emplace_back("diode_preset", name);
        meta.emplace_back("diode_preset_hash", s.catalog().hash(name));
    }
    if (cfg.excitation) setup.overrides.try_emplace("frequency", num(cfg.excitation->frequency_hz));
    setup.solver = cfg.solver;
    const auto res = run_experiment("fig9", setup);
    for (const auto& kv : config_meta(cfg, s.catalog())) meta.push_back(kv);
    for (const auto& kv : res.metadata) meta.push_back(kv);
    for (const auto& [k, v] : res.summary) meta.emplace_back(k, num(v));
    s.out() << "factor at 1 V " << num(res.summary.at("factor_high")) << ", at 0.1 V "
            << num(res.summary.at("factor_low")) << "\n";
    s.emit("vm-curve", sweep_to_csv(res.tables[0].data), render_svg(res.plot, res.plot_spec), meta);
    return 0;
}

int run_calibrate(Session& s) {
    const auto& opt = s.options();
    if (opt.preset.empty()) throw UsageError("calibrate needs --preset <fem|experimental|lowvt>");
    auto recipe = calibration_recipe(opt.preset);
    for (const auto& set : opt.sets) {
        const auto eq = set.find('=');
        if (eq == std::string::npos) throw UsageError("--set needs key=value: " + set);
        const auto key = set.substr(0, eq);
        const auto value = set.substr(eq + 1);
        if (key.starts_with("target.")) {
            const auto name = key.substr(7);
            bool found = false;
            for (auto& stage : recipe.stages) {
                for (auto& t : stage.targets) {
                    if (t.name == name) {
                        try {
                            t.target = parse_quantity(value);
                        } catch (const std::invalid_argument& e) {
                            throw ConfigError(key + ": " + e.what(), 0);
                        }
                        found = true;
                    }
                }
            }
            if (!found) throw ConfigError("no calibration target named " + name, 0);
        } else if (key.starts_with("bounds.")) {
            const auto name = key.substr(7);
            const auto colon = value.find(':');
            if (colon == std::string::npos) throw ConfigError(key + " must be lo:hi", 0);
            bool found = false;
            for (auto& stage : recipe.stages) {
                for (auto& p : stage.free) {
                    if (p.name == name) {
                        try {
                            p.lo = parse_quantity(value.substr(0, colon));
                            p.hi = parse_quantity(value.substr(colon + 1));
                        } catch (const std::invalid_argument& e) {
                            throw ConfigError(key + ": " + e.what(), 0);
                        }
                        found = true;
                    }
                }
            }
            if (!found) throw ConfigError("no free parameter named " + name, 0);
        } else {
            throw ConfigError("calibrate accepts --set target.<name>=v or bounds.<param>=lo:hi", 0);
        }
    }
    s.load(false, {"target.", "bounds."});

    CalibrationOptions copt;
    copt.strict = !opt.allow_miss;
    if (recipe.preset == "experimental") copt.max_evaluations = 30;
    if (recipe.preset == "lowvt") copt.max_evaluations = 80;
    const auto outcome = run_calibration_recipe(recipe, copt);

    std::vector<std::string> comments{"Calibrated preset '" + recipe.preset + "' written by `vibeharvest calibrate`."};
    for (std::size_t k = 0; k < outcome.stages.size(); ++k) {
        comments.push_back("stage " + std::to_string(k + 1) + ":");
        std::istringstream lines(describe(outcome.stages[k]));
        std::string line;
        while (std::getline(lines, line)) comments.push_back(line);
        s.out() << "stage " << k + 1 << "\n" << describe(outcome.stages[k]);
    }
    if (!outcome.within_tolerance) comments.push_back("Some targets are outside tolerance (--allow-miss).");
    std::string text;
    if (recipe.kind == "harvester") {
        comments.push_back("k_eff^2 = " + num(effective_coupling(outcome.harvester)));
        text = format_harvester_preset(outcome.harvester, comments);
    } else {
        text = format_diode_preset({outcome.diode, outcome.probe_load}, comments);
    }
    const auto path = s.out_dir() / (recipe.preset + ".ini");
    write_text_file(path, text);
    s.out() << "wrote " << path.string() << "\n";
    return 0;
}

int run_reproduce(Session& s) {
    const auto& opt = s.options();
    const std::string fig = opt.figure;
    auto cfg = s.load(true);
    ExperimentSetup setup;
    if (!cfg.harvester) {
        const std::string preset = fig == "fig3" ? "fem" : "experimental";
        cfg.harvester = s.catalog().harvester(preset);
        cfg.harvester_preset = preset;
    }
    setup.preset_name = cfg.harvester_preset.value_or("inline");
    setup.harvester = *cfg.harvester;
    setup.rectifier_diode = s.catalog().diode("schottky").diode;
    const auto vm = s.catalog().diode("lowvt");
    setup.vm_diode = vm.diode;
    setup.vm_probe_load = vm.probe_load;
    setup.solver = cfg.solver;
    setup.overrides = cfg.experiment;
    const auto res = run_experiment(fig, setup);

    auto meta = config_meta(cfg, s.catalog());
    meta.insert(meta.begin(), {"experiment", fig});
    meta.emplace_back("schottky_hash", s.catalog().hash("schottky"));
    meta.emplace_back("lowvt_hash", s.catalog().hash("lowvt"));
    for (const auto& kv : res.metadata) meta.push_back(kv);
    for (const auto& [k, v] : res.summary) {
        meta.emplace_back(k, num(v));
        s.out() << k << " = " << num(v) << "\n";
    }
    s.emit(fig, sweep_to_csv(res.tables[0].data), render_svg(res.plot, res.plot_spec), meta);
    return 0;
}

int run_presets_list(Session& s) {
    for (const auto& p : s.catalog().list()) {
        s.out() << p.name << "\t" << p.kind << "\t" << p.path.string() << "\n";
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Piezoelectric vibration energy harvester simulator", "vibeharvest"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--config", opt.config, "Experiment INI file");
    app.add_option("--preset", opt.preset, "Preset name");
    app.add_option("--out", opt.out, "Output directory");
    app.add_option("--set", opt.sets, "Override section.key=value (repeatable)");
    app.add_flag("--allow-miss", opt.allow_miss, "calibrate: write the best fit even when targets miss");

    auto* simulate_cmd = app.add_subcommand("simulate", "Transient run of a configured system")->fallthrough();
    auto* sweep_cmd = app.add_subcommand("sweep-load", "Steady-state resistive load sweep")->fallthrough();
    auto* charge_cmd = app.add_subcommand("charge", "Charge a storage capacitor")->fallthrough();
    auto* vm_cmd = app.add_subcommand("vm-curve", "Voltage multiplier transfer curve")->fallthrough();
    auto* cal_cmd = app.add_subcommand("calibrate", "Fit a preset to its targets")->fallthrough();
    auto* repro_cmd = app.add_subcommand("reproduce", "Run a figure-level experiment")->fallthrough();
    repro_cmd->add_option("figure", opt.figure, "fig3, fig6, fig7, fig8 or fig9")->required();
    auto* presets_cmd = app.add_subcommand("presets", "Preset utilities");
    auto* list_cmd = presets_cmd->add_subcommand("list", "List available presets");
    presets_cmd->require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << "\n";
        return 2;
    }

    Session session(opt, out);
    try {
        if (simulate_cmd->parsed()) return run_simulate(session);
        if (sweep_cmd->parsed()) return run_sweep_load(session);
        if (charge_cmd->parsed()) return run_charge(session);
        if (vm_cmd->parsed()) return run_vm_curve(session);
        if (cal_cmd->parsed()) return run_calibrate(session);
        if (repro_cmd->parsed()) return run_reproduce(session);
        if (list_cmd->parsed()) return run_presets_list(session);
        err << "error[usage]: no subcommand\n";
        return 2;
    } catch (const UsageError& e) {
        err << "error[usage]: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error[" << e.code() << "]: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error[" << e.code() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("vibeharvest");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace vibeharvest
