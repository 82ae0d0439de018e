#pragma once

#include <stdexcept>
#include <string>

namespace vibeharvest {

/// Base of every domain error. `code()` is the machine-readable tag the CLI
/// prints as `error[<code>]`.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define VIBEHARVEST_DEFINE_ERROR(Name, tag)                                    \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(tag, message) {}     \
    }

VIBEHARVEST_DEFINE_ERROR(InvalidParams, "invalid_params");
VIBEHARVEST_DEFINE_ERROR(InvalidGeometry, "invalid_geometry");
VIBEHARVEST_DEFINE_ERROR(InvalidDamping, "invalid_damping");
VIBEHARVEST_DEFINE_ERROR(InvalidSweep, "invalid_sweep");
VIBEHARVEST_DEFINE_ERROR(SearchFailed, "search_failed");
VIBEHARVEST_DEFINE_ERROR(InvalidTopology, "invalid_topology");
VIBEHARVEST_DEFINE_ERROR(NewtonDivergence, "newton_divergence");
VIBEHARVEST_DEFINE_ERROR(InsufficientData, "insufficient_data");
VIBEHARVEST_DEFINE_ERROR(NotSettled, "not_settled");
VIBEHARVEST_DEFINE_ERROR(EnergyImbalance, "energy_imbalance");
VIBEHARVEST_DEFINE_ERROR(UnknownExperiment, "unknown_experiment");
VIBEHARVEST_DEFINE_ERROR(CalibrationFailed, "calibration_failed");
VIBEHARVEST_DEFINE_ERROR(PlotError, "plot_error");
VIBEHARVEST_DEFINE_ERROR(PresetError, "preset_error");

#undef VIBEHARVEST_DEFINE_ERROR

/// Integration could not proceed even at the minimum step.
class SimulationStalled : public Error {
public:
    SimulationStalled(const std::string& message, double time_reached)
        : Error("simulation_stalled", message), time_reached_(time_reached) {}

    double time_reached() const noexcept { return time_reached_; }

private:
    double time_reached_;
};

/// Configuration problem; carries the 1-based line number (0 when the
/// problem is not tied to a line, e.g. a missing key).
class ConfigError : public Error {
public:
    ConfigError(const std::string& message, int line)
        : Error("config_error",
                line > 0 ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace vibeharvest
