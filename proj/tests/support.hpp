#pragma once

#include <cmath>
#include <complex>

#include "vibeharvest/harvester.hpp"
#include "vibeharvest/presets.hpp"

namespace testing {

inline vibeharvest::PresetCatalog catalog() {
    return vibeharvest::PresetCatalog({VIBEHARVEST_TEST_PRESET_DIR});
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Cramer's rule on the 2x2 phasor system; written independently of the library.
inline std::complex<double> phasor_voltage(const vibeharvest::HarvesterParams& p, double f, double accel,
                                           double r) {
    using C = std::complex<double>;
    const double w = 2.0 * 3.14159265358979323846 * f;
    const double w0 = 2.0 * 3.14159265358979323846 * p.f0;
    const double k = p.m_eff * w0 * w0;
    const double c = 2.0 * p.zeta * std::sqrt(k * p.m_eff);
    const C a11(k - p.m_eff * w * w, w * c);
    const C a12(p.theta, 0.0);
    const C a21(0.0, -w * p.theta);
    const C a22(1.0 / r, w * (p.cp + p.c_par));
    const C b1(-p.m_eff * accel, 0.0);
    return -a21 * b1 / (a11 * a22 - a12 * a21);
}

}  // namespace testing
