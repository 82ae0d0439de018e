#include "vibeharvest/presets.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "vibeharvest/errors.hpp"
#include "vibeharvest/ini.hpp"
#include "vibeharvest/units.hpp"

#ifndef VIBEHARVEST_PRESET_DIR_DEFAULT
#define VIBEHARVEST_PRESET_DIR_DEFAULT "presets"
#endif

namespace vibeharvest {
namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PresetError("cannot read preset file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

IniDocument parse_preset_ini(const std::string& text, const std::string& origin) {
    try {
        return parse_ini(text);
    } catch (const ConfigError& e) {
        throw PresetError(origin + ": " + e.what());
    }
}

class SectionReader {
public:
    SectionReader(const IniSection& section, std::string origin) : s_(section), origin_(std::move(origin)) {}

    void only(std::initializer_list<std::string_view> allowed) const {
        for (const auto& e : s_.entries) {
            if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end()) {
                fail(e.line, "unknown key '" + e.key + "' in [" + s_.name + "]");
            }
        }
    }

    double number(std::string_view key) const {
        const auto* e = s_.find(key);
        if (e == nullptr) fail(s_.line, "missing key '" + std::string(key) + "' in [" + s_.name + "]");
        return parse(*e);
    }

    std::optional<double> maybe(std::string_view key) const {
        const auto* e = s_.find(key);
        if (e == nullptr) return std::nullopt;
        return parse(*e);
    }

private:
    double parse(const IniEntry& e) const {
        try {
            return parse_quantity(e.value);
        } catch (const std::invalid_argument& ex) {
            fail(e.line, "key '" + e.key + "': " + ex.what());
        }
    }

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw PresetError(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

    const IniSection& s_;
    std::string origin_;
};

void reject_other_sections(const IniDocument& doc, std::initializer_list<std::string_view> allowed,
                           const std::string& origin) {
    for (const auto& s : doc.sections) {
        if (std::find(allowed.begin(), allowed.end(), s.name) == allowed.end()) {
            throw PresetError(origin + ":" + std::to_string(s.line) + ": unexpected section [" + s.name + "]");
        }
    }
}

std::string comment_block(const std::vector<std::string>& comments) {
    std::string out;
    for (const auto& c : comments) out += c.empty() ? "#\n" : "# " + c + "\n";
    return out;
}

}  // namespace

PresetCatalog::PresetCatalog(std::vector<std::filesystem::path> dirs) : dirs_(std::move(dirs)) {}

std::filesystem::path PresetCatalog::default_directory() { return VIBEHARVEST_PRESET_DIR_DEFAULT; }

PresetCatalog PresetCatalog::from_environment() {
    if (const char* env = std::getenv("VIBEHARVEST_PRESET_DIR"); env != nullptr && *env != '\0') {
        return PresetCatalog({std::filesystem::path(env)});
    }
    return PresetCatalog({default_directory()});
}

std::vector<PresetInfo> PresetCatalog::list() const {
    std::vector<PresetInfo> out;
    std::set<std::string> seen;
    for (const auto& dir : dirs_) {
        std::error_code ec;
        if (!std::filesystem::is_directory(dir, ec)) continue;
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
            if (entry.is_regular_file() && entry.path().extension() == ".ini") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const auto name = f.stem().string();
            if (!seen.insert(name).second) continue;
            const auto doc = parse_preset_ini(read_file(f), f.string());
            const std::string kind = doc.find("harvester") != nullptr ? "harvester"
                                     : doc.find("diode") != nullptr   ? "diode"
                                                                      : "unknown";
            out.push_back({name, kind, f});
        }
    }
    return out;
}

std::filesystem::path PresetCatalog::locate(const std::string& name) const {
    if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos) {
        throw PresetError("invalid preset name '" + name + "'");
    }
    for (const auto& dir : dirs_) {
        const auto candidate = dir / (name + ".ini");
        std::error_code ec;
        if (std::filesystem::is_regular_file(candidate, ec)) return candidate;
    }
    std::string where;
    for (const auto& dir : dirs_) where += (where.empty() ? "" : ", ") + dir.string();
    throw PresetError("preset '" + name + "' not found in " + (where.empty() ? "<no directories>" : where));
}

bool PresetCatalog::contains(const std::string& name) const {
    try {
        locate(name);
        return true;
    } catch (const PresetError&) {
        return false;
    }
}

HarvesterParams PresetCatalog::harvester(const std::string& name) const {
    const auto path = locate(name);
    return parse_harvester_preset(read_file(path), path.string());
}

DiodePreset PresetCatalog::diode(const std::string& name) const {
    const auto path = locate(name);
    return parse_diode_preset(read_file(path), path.string());
}

std::string PresetCatalog::hash(const std::string& name) const { return fnv1a_hex(read_file(locate(name))); }

HarvesterParams parse_harvester_preset(const std::string& text, const std::string& origin) {
    const auto doc = parse_preset_ini(text, origin);
    reject_other_sections(doc, {"harvester"}, origin);
    const auto* section = doc.find("harvester");
    if (section == nullptr) throw PresetError(origin + ": missing [harvester] section");
    const SectionReader r(*section, origin);
    r.only({"m_eff_kg", "f0_hz", "zeta", "theta_n_per_v", "cp_f", "c_par_f"});
    HarvesterParams p{
        .m_eff = r.number("m_eff_kg"),
        .f0 = r.number("f0_hz"),
        .zeta = r.number("zeta"),
        .theta = r.number("theta_n_per_v"),
        .cp = r.number("cp_f"),
        .c_par = r.number("c_par_f"),
    };
    try {
        p.validate();
    } catch (const InvalidParams& e) {
        throw PresetError(origin + ": " + e.what());
    }
    return p;
}

DiodePreset parse_diode_preset(const std::string& text, const std::string& origin) {
    const auto doc = parse_preset_ini(text, origin);
    reject_other_sections(doc, {"diode", "multiplier"}, origin);
    const auto* section = doc.find("diode");
    if (section == nullptr) throw PresetError(origin + ": missing [diode] section");
    const SectionReader r(*section, origin);
    r.only({"i_sat_a", "ideality", "v_thermal_v", "r_series_ohm"});
    DiodePreset preset;
    preset.diode.i_sat = r.number("i_sat_a");
    preset.diode.ideality = r.number("ideality");
    preset.diode.v_thermal = r.maybe("v_thermal_v").value_or(0.02585);
    preset.diode.r_series = r.maybe("r_series_ohm").value_or(0.0);
    if (const auto* m = doc.find("multiplier")) {
        const SectionReader mr(*m, origin);
        mr.only({"probe_load_ohm"});
        preset.probe_load = mr.maybe("probe_load_ohm").value_or(0.0);
        if (preset.probe_load < 0.0) throw PresetError(origin + ": probe_load_ohm must be >= 0");
    }
    try {
        preset.diode.validate();
    } catch (const Error& e) {
        throw PresetError(origin + ": " + e.what());
    }
    return preset;
}

std::string format_harvester_preset(const HarvesterParams& p, const std::vector<std::string>& comments) {
    std::string out = comment_block(comments);
    out += "[harvester]\n";
    out += "m_eff_kg = " + shortest(p.m_eff) + "\n";
    out += "f0_hz = " + shortest(p.f0) + "\n";
    out += "zeta = " + shortest(p.zeta) + "\n";
    out += "theta_n_per_v = " + shortest(p.theta) + "\n";
    out += "cp_f = " + shortest(p.cp) + "\n";
    out += "c_par_f = " + shortest(p.c_par) + "\n";
    return out;
}

std::string format_diode_preset(const DiodePreset& preset, const std::vector<std::string>& comments) {
    std::string out = comment_block(comments);
    out += "[diode]\n";
    out += "i_sat_a = " + shortest(preset.diode.i_sat) + "\n";
    out += "ideality = " + shortest(preset.diode.ideality) + "\n";
    out += "v_thermal_v = " + shortest(preset.diode.v_thermal) + "\n";
    out += "r_series_ohm = " + shortest(preset.diode.r_series) + "\n";
    if (preset.probe_load > 0.0) {
        out += "\n[multiplier]\nprobe_load_ohm = " + shortest(preset.probe_load) + "\n";
    }
    return out;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static constexpr char kHex[] = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = kHex[h & 0xF];
        h >>= 4;
    }
    return std::string(buf, 16);
}

}  // namespace vibeharvest
