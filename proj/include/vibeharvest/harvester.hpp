#pragma once

#include <complex>
#include <span>
#include <vector>

#include "vibeharvest/sweep.hpp"

namespace vibeharvest {

// =============================================================================
// Geometry and material data
// =============================================================================

/// Cantilever with a rigid seismic mass at its free end. The piezoelectric
/// layer covers the whole beam top surface. All lengths in metres.
struct Geometry {
    double beam_length = 0.0;
    double beam_width = 0.0;
    double beam_thickness = 0.0;   // top silicon layer
    double piezo_thickness = 0.0;
    double mass_length = 0.0;      // along the beam axis
    double mass_width = 0.0;
    double mass_thickness = 0.0;   // wafer thickness

    void validate() const;
};

struct MaterialSet {
    double silicon_density = 0.0;
    double silicon_youngs_modulus = 0.0;
    double piezo_density = 0.0;
    double piezo_youngs_modulus = 0.0;
    double piezo_e31 = 0.0;  // magnitude of the transverse coefficient, C/m^2
    double piezo_rel_permittivity = 0.0;

    void validate() const;
};

/// 800x800 um mass, 400x800 um beam, 1 um AlN. Wafer (500 um) and top
/// silicon (10 um) thicknesses are assumptions; the device description does
/// not state them.
Geometry reference_geometry();

/// Single-crystal silicon and sputtered AlN handbook values.
MaterialSet silicon_aln_materials();

// =============================================================================
// Lumped electromechanical model
// =============================================================================

/// One-mode lumped generator:
///   m x'' + c x' + k x + theta v = -m a_base(t)
///   theta x' = (cp + c_par) v' + i_load
struct HarvesterParams {
    double m_eff = 0.0;   // kg
    double f0 = 0.0;      // Hz, short-circuit natural frequency
    double zeta = 0.0;    // mechanical damping ratio
    double theta = 0.0;   // N/V
    double cp = 0.0;      // F, clamped capacitance
    double c_par = 0.0;   // F, parasitic capacitance in parallel with cp

    void validate() const;

    double omega0() const;
    double stiffness() const;            // k = m (2 pi f0)^2
    double damping_coefficient() const;  // c = 2 zeta sqrt(k m)
    double port_capacitance() const { return cp + c_par; }

    bool operator==(const HarvesterParams&) const = default;
};

/// Sinusoidal base acceleration a(t) = amplitude_g * g * sin(2 pi f t).
struct Excitation {
    double amplitude_g = 0.0;
    double frequency_hz = 0.0;
    double duration_s = 1.0;

    void validate() const;
    double acceleration_amplitude() const;  // m/s^2
    double period() const { return 1.0 / frequency_hz; }
};

struct SteadyStateResult {
    double disp_amplitude = 0.0;     // m
    double voltage_amplitude = 0.0;  // V across the load
    double avg_power = 0.0;          // W
    double phase = 0.0;              // rad, of the voltage phasor relative to the drive
};

struct QualityComponent {
    double q_factor = 0.0;
    double energy_fraction = 0.0;
};

struct LoadOptimum {
    double r_load = 0.0;  // ohm
    double power = 0.0;   // W
};

double natural_frequency(const HarvesterParams& params);

/// Reduces geometry + materials to lumped parameters: Euler-Bernoulli composite
/// beam, rigid proof mass loaded at its centre, uniform-width electrode.
HarvesterParams derive_params_from_geometry(const Geometry& geom, const MaterialSet& mat);

/// zeta = sum(fraction_i / (2 Q_i)).
double damping_ratio_from_q(std::span<const QualityComponent> components);

/// Complex (displacement, voltage) phasors for a load admittance y_load in
/// parallel with the port capacitance. Base acceleration phasor is real.
struct Phasors {
    std::complex<double> displacement;
    std::complex<double> voltage;
};
Phasors solve_phasors(const HarvesterParams& params, double frequency_hz,
                      double accel_amplitude, std::complex<double> y_load);

SteadyStateResult steady_state_response(const HarvesterParams& params, const Excitation& exc,
                                        double r_load);

/// Open-circuit voltage amplitude at the excitation frequency.
double open_circuit_voltage(const HarvesterParams& params, const Excitation& exc);

/// Evaluates steady_state_response at each load. Columns: power_W,
/// voltage_amplitude_V, disp_amplitude_m.
SweepResult sweep_load(const HarvesterParams& params, const Excitation& exc,
                       std::span<const double> r_grid);

/// Log-grid scan over [r_lo, r_hi] and golden-section refinement.
LoadOptimum find_optimal_load(const HarvesterParams& params, const Excitation& exc, double r_lo,
                              double r_hi);

/// Frequency of maximum load power at fixed r_load. Throws SearchFailed when
/// the maximum sits on a search bound. With theta == 0 the load sees nothing,
/// so this returns the displacement peak instead (independent of r_load).
double peak_power_frequency(const HarvesterParams& params, double r_load, double f_lo,
                            double f_hi);

/// k_eff^2 = theta^2 / (k (cp + c_par)).
double effective_coupling(const HarvesterParams& params);

}  // namespace vibeharvest
