#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vibeharvest {

struct IniEntry {
    std::string key;
    std::string value;
    int line = 0;
};

struct IniSection {
    std::string name;
    int line = 0;
    std::vector<IniEntry> entries;

    const IniEntry* find(std::string_view key) const;
};

/// Raw `[section]` / `key = value` document. `#` and `;` start comments (whole
/// line, or after whitespace following a value). Keys before the first
/// section header, malformed lines, repeated sections and repeated keys
/// raise ConfigError with the offending line.
struct IniDocument {
    std::vector<IniSection> sections;

    const IniSection* find(std::string_view name) const;
    IniSection& get_or_add(const std::string& name);
    /// Sets `key` in `section`, replacing an existing value.
    void set(const std::string& section, const std::string& key, const std::string& value);
};

IniDocument parse_ini(std::string_view text);

}  // namespace vibeharvest
