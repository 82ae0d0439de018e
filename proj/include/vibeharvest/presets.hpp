#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vibeharvest/circuit.hpp"
#include "vibeharvest/harvester.hpp"

namespace vibeharvest {

struct DiodePreset {
    DiodeParams diode;
    double probe_load = 0.0;  // ohm; measurement load used with the multiplier
};

struct PresetInfo {
    std::string name;
    std::string kind;  // "harvester" or "diode"
    std::filesystem::path path;
};

/// Preset files are `<name>.ini` in the search directories. Harvester presets
/// hold one [harvester] section with keys m_eff_kg, f0_hz, zeta,
/// theta_n_per_v, cp_f, c_par_f. Diode presets hold a [diode] section
/// (i_sat_a, ideality, v_thermal_v, r_series_ohm) and optionally a
/// [multiplier] section with probe_load_ohm.
class PresetCatalog {
public:
    explicit PresetCatalog(std::vector<std::filesystem::path> dirs);
    /// VIBEHARVEST_PRESET_DIR when set, otherwise the directory compiled in.
    static PresetCatalog from_environment();
    static std::filesystem::path default_directory();

    const std::vector<std::filesystem::path>& directories() const { return dirs_; }
    std::vector<PresetInfo> list() const;
    /// First match across the search directories; throws PresetError.
    std::filesystem::path locate(const std::string& name) const;
    bool contains(const std::string& name) const;

    HarvesterParams harvester(const std::string& name) const;
    DiodePreset diode(const std::string& name) const;
    /// 64-bit FNV-1a of the preset file bytes, as 16 hex digits.
    std::string hash(const std::string& name) const;

private:
    std::vector<std::filesystem::path> dirs_;
};

HarvesterParams parse_harvester_preset(const std::string& text, const std::string& origin = "preset");
DiodePreset parse_diode_preset(const std::string& text, const std::string& origin = "preset");

/// Preset text; each comment line is emitted as `# <line>` above the section.
std::string format_harvester_preset(const HarvesterParams& params, const std::vector<std::string>& comments);
std::string format_diode_preset(const DiodePreset& preset, const std::vector<std::string>& comments);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace vibeharvest
