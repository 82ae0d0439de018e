#include "vibeharvest/ini.hpp"

#include <algorithm>
#include <cctype>

#include "vibeharvest/errors.hpp"

namespace vibeharvest {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view strip_comment(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((s[i] == '#' || s[i] == ';') && (i == 0 || std::isspace(static_cast<unsigned char>(s[i - 1])))) {
            return s.substr(0, i);
        }
    }
    return s;
}

bool valid_name(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
    });
}

}  // namespace

const IniEntry* IniSection::find(std::string_view key) const {
    for (const auto& e : entries) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

const IniSection* IniDocument::find(std::string_view name) const {
    for (const auto& s : sections) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

IniSection& IniDocument::get_or_add(const std::string& name) {
    for (auto& s : sections) {
        if (s.name == name) return s;
    }
    sections.push_back({name, 0, {}});
    return sections.back();
}

void IniDocument::set(const std::string& section, const std::string& key, const std::string& value) {
    auto& s = get_or_add(section);
    for (auto& e : s.entries) {
        if (e.key == key) {
            e.value = value;
            return;
        }
    }
    s.entries.push_back({key, value, 0});
}

IniDocument parse_ini(std::string_view text) {
    IniDocument doc;
    IniSection* current = nullptr;
    int line_no = 0;
    std::size_t pos = 0;
    if (text.starts_with("\xEF\xBB\xBF")) pos = 3;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("malformed section header", line_no);
            const auto name = trim(line.substr(1, line.size() - 2));
            if (!valid_name(name)) throw ConfigError("malformed section name", line_no);
            if (doc.find(name) != nullptr) {
                throw ConfigError("section [" + std::string(name) + "] repeated", line_no);
            }
            doc.sections.push_back({std::string(name), line_no, {}});
            current = &doc.sections.back();
        } else {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
            const auto key = trim(line.substr(0, eq));
            const auto value = trim(line.substr(eq + 1));
            if (!valid_name(key)) throw ConfigError("malformed key", line_no);
            if (current == nullptr) throw ConfigError("key '" + std::string(key) + "' outside any section", line_no);
            if (current->find(key) != nullptr) {
                throw ConfigError("key '" + std::string(key) + "' repeated", line_no);
            }
            current->entries.push_back({std::string(key), std::string(value), line_no});
        }
        if (end == text.size()) break;
    }
    return doc;
}

}  // namespace vibeharvest
