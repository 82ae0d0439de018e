#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vibeharvest/circuit.hpp"
#include "vibeharvest/harvester.hpp"
#include "vibeharvest/plot.hpp"
#include "vibeharvest/sweep.hpp"
#include "vibeharvest/transient.hpp"

namespace vibeharvest {

// =============================================================================
// Voltage multiplier transfer curve
// =============================================================================

struct VmOptions {
    double frequency_hz = 1495.0;
    double probe_load = 0.0;  // ohm across the output; 0 leaves it unloaded
    SolverOptions solver{.local_error_tol = 1e-5};
    double settle_tol = 1e-5;
    double min_duration = 0.2;  // s; doubled until settled
    double max_duration = 3.2;  // s
};

/// Columns: v_out_V, factor, settled (1 or 0). When a point has not settled
/// by max_duration the mean over the last 10 cycles is reported.
SweepResult vm_transfer_curve(const DiodeParams& diode, int stages, double c_stage,
                              std::span<const double> amplitudes, const VmOptions& options = {});

// =============================================================================
// Figure-level experiments
// =============================================================================

struct ExperimentSetup {
    std::string preset_name;
    HarvesterParams harvester;
    DiodeParams rectifier_diode = schottky_hp5082_2835();
    DiodeParams vm_diode = low_threshold_diode();
    double vm_probe_load = 0.0;  // ohm
    SolverOptions solver{};
    /// Experiment knobs, values with unit suffixes (e.g. "acceleration" -> "1.2g").
    std::map<std::string, std::string> overrides;
};

struct ExperimentTable {
    std::string name;
    SweepResult data;
};

struct ExperimentResult {
    std::string name;
    std::vector<ExperimentTable> tables;  // the first one is the figure's table
    std::map<std::string, double> summary;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<PlotSeries> plot;
    PlotSpec plot_spec;
};

/// Override keys understood by the experiments (see docs/config.md).
const std::vector<std::string>& experiment_override_keys();

/// Names accepted by run_experiment, in order.
std::vector<std::string> experiment_names();

/// fig3: load sweep at 0.2 g. fig6: open circuit, matched direct load and
/// doubler + 10 Mohm. fig7: charging curves. fig8: charging metrics versus
/// acceleration. fig9: multiplier transfer curve. Throws UnknownExperiment.
ExperimentResult run_experiment(const std::string& name, const ExperimentSetup& setup);

// =============================================================================
// Calibration
// =============================================================================

struct FreeParameter {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    bool log_scale = true;
};

struct CalibrationTarget {
    std::string name;
    std::string observable;
    double target = 0.0;
    std::string unit;
    double weight = 1.0;
    double tolerance = 0.1;  // relative
};

struct CalibrationOptions {
    int grid_points = 5;         // per free parameter
    int max_evaluations = 200;   // grid plus simplex
    bool strict = true;          // throw CalibrationFailed when a target misses
};

struct TargetResidual {
    std::string name;
    double observed = 0.0;
    double target = 0.0;
    double relative_error = 0.0;
    double tolerance = 0.0;
    bool within = false;
};

struct CalibrationResult {
    std::vector<std::pair<std::string, double>> params;
    std::vector<TargetResidual> residuals;
    double objective = 0.0;
    int evaluations = 0;
    bool within_tolerance = false;

    double param(const std::string& name) const;
};

/// Observable values keyed by observable name for a parameter vector ordered
/// like the free parameters.
using ObservableModel = std::function<std::map<std::string, double>(const std::vector<double>&)>;

/// Minimizes sum(weight ((obs - target) / target)^2) by a grid scan over the
/// bounds followed by Nelder-Mead, never leaving the bounds.
CalibrationResult calibrate(std::span<const FreeParameter> free, std::span<const CalibrationTarget> targets,
                            const ObservableModel& model, const CalibrationOptions& options = {});

std::string describe(const CalibrationResult& result);

/// Observables understood by harvester_observables.
///   peak_power_1Mohm_0.2g  W at the peak-power frequency for 1 Mohm
///   peak_separation        Hz between the 100 Mohm and 1 kohm peaks
///   r_opt                  ohm, optimal load at f0
///   charge_vmax_2g         V on 1 uF through the doubler at 2 g, f0
///   charge_pinst_1g        W peak charging power at 1 g, f0
std::map<std::string, double> harvester_observables(const HarvesterParams& params,
                                                    const std::vector<std::string>& names,
                                                    const DiodeParams& rectifier = schottky_hp5082_2835(),
                                                    const SolverOptions& solver = {});

/// Harvester free parameters: theta, k2 (sets theta from k_eff^2), m_eff,
/// c_par, zeta. k2 is applied after m_eff and c_par.
HarvesterParams apply_harvester_params(HarvesterParams base, std::span<const FreeParameter> free,
                                       const std::vector<double>& x);

/// Observables of the low-threshold multiplier: vm_factor_high (1 V input),
/// vm_factor_low (0.1 V input), 6 stages of 40 pF at 1495 Hz.
std::map<std::string, double> vm_observables(const DiodeParams& diode, double probe_load,
                                             const std::vector<std::string>& names);

struct CalibrationStage {
    std::vector<FreeParameter> free;
    std::vector<CalibrationTarget> targets;
};

/// Built-in fitting recipe for a preset: "fem", "experimental" or "lowvt".
struct CalibrationRecipe {
    std::string preset;
    std::string kind;  // "harvester" or "diode"
    HarvesterParams base_harvester{};
    DiodeParams base_diode{};
    double base_probe_load = 0.0;
    std::vector<CalibrationStage> stages;
};

std::vector<std::string> calibration_recipe_names();
CalibrationRecipe calibration_recipe(const std::string& preset);

struct RecipeOutcome {
    CalibrationRecipe recipe;
    HarvesterParams harvester{};
    DiodeParams diode{};
    double probe_load = 0.0;
    std::vector<CalibrationResult> stages;
    bool within_tolerance = false;
};

/// Runs each stage in order, feeding fitted values into the next stage.
RecipeOutcome run_calibration_recipe(const CalibrationRecipe& recipe, const CalibrationOptions& options);

}  // namespace vibeharvest
