#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "vibeharvest/circuit.hpp"
#include "vibeharvest/harvester.hpp"
#include "vibeharvest/ini.hpp"
#include "vibeharvest/presets.hpp"
#include "vibeharvest/transient.hpp"

namespace vibeharvest {

/// Parsed experiment file. Every section is optional; the subcommand decides
/// which ones it needs.
struct RunConfig {
    std::optional<std::string> harvester_preset;  // set when [harvester] names a preset
    std::optional<HarvesterParams> harvester;     // resolved params (preset or inline)
    std::optional<Topology> topology;
    std::optional<Excitation> excitation;
    SolverOptions solver{};
    std::map<std::string, std::string> experiment;  // raw [experiment] knobs
    std::string output_dir = ".";

    bool operator==(const RunConfig&) const;
};

/// Knobs accepted in the [experiment] section.
const std::vector<std::string>& experiment_keys();

/// Grammar: see docs/config.md. Throws ConfigError (with line) for unknown
/// sections or keys, bad units, missing required keys; unknown presets are
/// reported the same way.
RunConfig parse_config(std::string_view text, const PresetCatalog& catalog);
RunConfig interpret_config(const IniDocument& doc, const PresetCatalog& catalog);

/// Canonical INI text: SI values with shortest round-trip formatting, inline
/// diode parameters, the harvester preset by name when one was used.
std::string serialize_config(const RunConfig& config);

/// Applies `section.key=value`; throws ConfigError when malformed.
void apply_override(IniDocument& doc, std::string_view assignment);

}  // namespace vibeharvest
