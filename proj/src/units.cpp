#include "vibeharvest/units.hpp"

#include <array>
#include <charconv>
#include <stdexcept>
#include <string>

namespace vibeharvest {
namespace {

struct UnitSuffix {
    std::string_view suffix;
    double scale;
    std::string_view dimension;
};

constexpr std::array<UnitSuffix, 35> kSuffixes{{
    {"g", kStandardGravity, "acceleration"},
    {"mps2", 1.0, "acceleration"},
    {"Hz", 1.0, "frequency"},
    {"kHz", 1e3, "frequency"},
    {"MHz", 1e6, "frequency"},
    {"pF", 1e-12, "capacitance"},
    {"nF", 1e-9, "capacitance"},
    {"uF", 1e-6, "capacitance"},
    {"F", 1.0, "capacitance"},
    {"ohm", 1.0, "resistance"},
    {"kohm", 1e3, "resistance"},
    {"Mohm", 1e6, "resistance"},
    {"Gohm", 1e9, "resistance"},
    {"mV", 1e-3, "voltage"},
    {"V", 1.0, "voltage"},
    {"um", 1e-6, "length"},
    {"mm", 1e-3, "length"},
    {"m", 1.0, "length"},
    {"s", 1.0, "time"},
    {"ms", 1e-3, "time"},
    {"us", 1e-6, "time"},
    {"ns", 1e-9, "time"},
    {"kg", 1.0, "mass"},
    {"mg", 1e-6, "mass"},
    {"A", 1.0, "current"},
    {"mA", 1e-3, "current"},
    {"uA", 1e-6, "current"},
    {"nA", 1e-9, "current"},
    {"pA", 1e-12, "current"},
    {"NperV", 1.0, "coupling"},
    {"W", 1.0, "power"},
    {"mW", 1e-3, "power"},
    {"uW", 1e-6, "power"},
    {"nW", 1e-9, "power"},
    {"pW", 1e-12, "power"},
}};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

struct Parsed {
    double value;
    std::string_view suffix;
};

Parsed split_number(std::string_view text) {
    text = trim(text);
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{}) {
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    }
    return {value, trim(std::string_view(ptr, static_cast<std::size_t>(last - ptr)))};
}

const UnitSuffix* find_suffix(std::string_view suffix) {
    for (const auto& s : kSuffixes) {
        if (s.suffix == suffix) return &s;
    }
    return nullptr;
}

}  // namespace

double parse_quantity(std::string_view text) {
    auto [value, suffix] = split_number(text);
    if (suffix.empty()) return value;
    const auto* unit = find_suffix(suffix);
    if (unit == nullptr) {
        throw std::invalid_argument("unknown unit '" + std::string(suffix) + "'");
    }
    return value * unit->scale;
}

double parse_quantity_as(std::string_view text, std::string_view dimension) {
    auto [value, suffix] = split_number(text);
    if (suffix.empty()) return value;
    const auto* unit = find_suffix(suffix);
    if (unit == nullptr) {
        throw std::invalid_argument("unknown unit '" + std::string(suffix) + "'");
    }
    if (unit->dimension != dimension) {
        throw std::invalid_argument("unit '" + std::string(suffix) + "' is not a " +
                                    std::string(dimension) + " unit");
    }
    return value * unit->scale;
}

}  // namespace vibeharvest
