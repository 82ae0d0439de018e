#pragma once

#include <numbers>
#include <string_view>

namespace vibeharvest {

inline constexpr double kStandardGravity = 9.80665;  // m/s^2 per "g"
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double angular(double frequency_hz) { return kTwoPi * frequency_hz; }

/// Parses a number with an optional unit suffix and returns the SI value.
/// Accepted suffixes: g, mps2, Hz, kHz, MHz, pF, nF, uF, F, ohm, kohm, Mohm, Gohm,
/// mV, V, um, mm, m, s, ms, us, ns, kg, mg, A, mA, uA, nA, pA, NperV, W, mW,
/// uW, nW, pW.
/// Throws std::invalid_argument for malformed numbers or unknown suffixes.
double parse_quantity(std::string_view text);

/// Same as parse_quantity but the suffix, when present, must be one of the
/// units convertible to `dimension` ("resistance", "capacitance", ...).
double parse_quantity_as(std::string_view text, std::string_view dimension);

}  // namespace vibeharvest
