#include "vibeharvest/harvester.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vibeharvest/errors.hpp"
#include "vibeharvest/optimize.hpp"
#include "vibeharvest/units.hpp"

namespace vibeharvest {
namespace {

using cplx = std::complex<double>;

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw InvalidGeometry(std::string(name) + " must be strictly positive");
    }
}

// Rayleigh participation of a uniform cantilever's own mass at its tip.
constexpr double kBeamMassParticipation = 33.0 / 140.0;
constexpr double kDefaultZeta = 0.00145;

}  // namespace

void Geometry::validate() const {
    require_positive(beam_length, "beam_length");
    require_positive(beam_width, "beam_width");
    require_positive(beam_thickness, "beam_thickness");
    require_positive(piezo_thickness, "piezo_thickness");
    require_positive(mass_length, "mass_length");
    require_positive(mass_width, "mass_width");
    require_positive(mass_thickness, "mass_thickness");
    if (piezo_thickness > 10.0 * beam_thickness) {
        throw InvalidGeometry("piezo_thickness exceeds 10x beam_thickness");
    }
}

void MaterialSet::validate() const {
    const double values[] = {silicon_density, silicon_youngs_modulus, piezo_density,
                             piezo_youngs_modulus, piezo_e31, piezo_rel_permittivity};
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InvalidGeometry("material constants must be strictly positive");
        }
    }
}

Geometry reference_geometry() {
    return Geometry{
        .beam_length = 400e-6,
        .beam_width = 800e-6,
        .beam_thickness = 10e-6,
        .piezo_thickness = 1e-6,
        .mass_length = 800e-6,
        .mass_width = 800e-6,
        .mass_thickness = 500e-6,
    };
}

MaterialSet silicon_aln_materials() {
    return MaterialSet{
        .silicon_density = 2330.0,
        .silicon_youngs_modulus = 169e9,
        .piezo_density = 3260.0,
        .piezo_youngs_modulus = 345e9,
        .piezo_e31 = 1.05,
        .piezo_rel_permittivity = 10.5,
    };
}

void HarvesterParams::validate() const {
    auto fail = [](const std::string& what) { throw InvalidParams(what); };
    if (!(m_eff > 0.0)) fail("m_eff must be > 0");
    if (!(f0 > 0.0)) fail("f0 must be > 0");
    if (!(zeta > 0.0 && zeta < 1.0)) fail("zeta must lie in (0, 1)");
    if (!(theta >= 0.0)) fail("theta must be >= 0");
    if (!(cp > 0.0)) fail("cp must be > 0");
    if (!(c_par >= 0.0)) fail("c_par must be >= 0");
    for (double v : {m_eff, f0, zeta, theta, cp, c_par}) {
        if (!std::isfinite(v)) fail("harvester parameters must be finite");
    }
}

double HarvesterParams::omega0() const { return angular(f0); }
double HarvesterParams::stiffness() const { return m_eff * omega0() * omega0(); }
double HarvesterParams::damping_coefficient() const {
    return 2.0 * zeta * std::sqrt(stiffness() * m_eff);
}

void Excitation::validate() const {
    if (!(amplitude_g >= 0.0) || !std::isfinite(amplitude_g)) {
        throw InvalidParams("excitation amplitude must be >= 0");
    }
    if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz)) {
        throw InvalidParams("excitation frequency must be > 0");
    }
    if (!(duration_s > 0.0)) throw InvalidParams("excitation duration must be > 0");
}

double Excitation::acceleration_amplitude() const { return amplitude_g * kStandardGravity; }

double natural_frequency(const HarvesterParams& params) {
    params.validate();
    return params.f0;
}

HarvesterParams derive_params_from_geometry(const Geometry& geom, const MaterialSet& mat) {
    geom.validate();
    mat.validate();

    const double w = geom.beam_width;
    const double length = geom.beam_length;
    const double ts = geom.beam_thickness;
    const double tp = geom.piezo_thickness;

    // Composite section: silicon on [0, ts], piezo on [ts, ts + tp].
    const double ea_si = mat.silicon_youngs_modulus * ts;
    const double ea_p = mat.piezo_youngs_modulus * tp;
    const double z_si = 0.5 * ts;
    const double z_p = ts + 0.5 * tp;
    const double z_neutral = (ea_si * z_si + ea_p * z_p) / (ea_si + ea_p);
    const double ei = w * (mat.silicon_youngs_modulus *
                               (ts * ts * ts / 12.0 + ts * (z_si - z_neutral) * (z_si - z_neutral)) +
                           mat.piezo_youngs_modulus *
                               (tp * tp * tp / 12.0 + tp * (z_p - z_neutral) * (z_p - z_neutral)));

    // Point load at the proof-mass centre, a distance d past the beam tip.
    const double d = 0.5 * geom.mass_length;
    const double compliance_shape = length * length * length / 3.0 + d * length * length +
                                    d * d * length;  // deflection = F * shape / EI
    const double k = ei / compliance_shape;

    const double mass_block = mat.silicon_density * geom.mass_length * geom.mass_width *
                              geom.mass_thickness;
    const double beam_mass = w * length * (mat.silicon_density * ts + mat.piezo_density * tp);
    const double m_eff = mass_block + kBeamMassParticipation * beam_mass;

    const double cp = kVacuumPermittivity * mat.piezo_rel_permittivity * length * w / tp;

    // Electrode charge per unit proof-mass deflection: integrate e31 * strain at
    // the piezo mid-plane along the beam for the point-load curvature profile.
    const double lever = z_p - z_neutral;
    const double curvature_integral = length * (0.5 * length + d);  // int (L + d - x) dx
    const double theta = mat.piezo_e31 * w * lever * curvature_integral / compliance_shape;

    HarvesterParams params{
        .m_eff = m_eff,
        .f0 = std::sqrt(k / m_eff) / kTwoPi,
        .zeta = kDefaultZeta,
        .theta = theta,
        .cp = cp,
        .c_par = 0.0,
    };
    params.validate();
    return params;
}

double damping_ratio_from_q(std::span<const QualityComponent> components) {
    double zeta = 0.0;
    double fraction_sum = 0.0;
    for (const auto& c : components) {
        if (!(c.q_factor > 0.0)) throw InvalidDamping("quality factors must be > 0");
        if (!(c.energy_fraction >= 0.0)) throw InvalidDamping("energy fractions must be >= 0");
        fraction_sum += c.energy_fraction;
        zeta += c.energy_fraction / (2.0 * c.q_factor);
    }
    if (fraction_sum > 1.0 + 1e-12) throw InvalidDamping("energy fractions sum above 1");
    return zeta;
}

Phasors solve_phasors(const HarvesterParams& params, double frequency_hz,
                      double accel_amplitude, cplx y_load) {
    const double w = angular(frequency_hz);
    const double m = params.m_eff;
    const cplx z_mech(params.stiffness() - m * w * w, w * params.damping_coefficient());
    const cplx y_elec = cplx(0.0, w * params.port_capacitance()) + y_load;
    const cplx jw_theta(0.0, w * params.theta);
    const cplx force = -m * accel_amplitude;
    const cplx x = force / (z_mech + jw_theta * params.theta / y_elec);
    const cplx v = jw_theta * x / y_elec;
    return {x, v};
}

SteadyStateResult steady_state_response(const HarvesterParams& params, const Excitation& exc,
                                        double r_load) {
    params.validate();
    exc.validate();
    if (!(r_load > 0.0)) throw InvalidParams("r_load must be > 0");
    const auto [x, v] =
        solve_phasors(params, exc.frequency_hz, exc.acceleration_amplitude(), 1.0 / r_load);
    const double v_amp = std::abs(v);
    return {
        .disp_amplitude = std::abs(x),
        .voltage_amplitude = v_amp,
        .avg_power = v_amp * v_amp / (2.0 * r_load),
        .phase = v_amp > 0.0 ? std::arg(v) : 0.0,
    };
}

double open_circuit_voltage(const HarvesterParams& params, const Excitation& exc) {
    params.validate();
    exc.validate();
    return std::abs(solve_phasors(params, exc.frequency_hz, exc.acceleration_amplitude(), 0.0).voltage);
}

SweepResult sweep_load(const HarvesterParams& params, const Excitation& exc,
                       std::span<const double> r_grid) {
    if (r_grid.empty()) throw InvalidSweep("load grid is empty");
    SweepResult result("r_load", "ohm",
                       {{"power_W", "W"}, {"voltage_amplitude_V", "V"}, {"disp_amplitude_m", "m"}});
    for (double r : r_grid) {
        if (!(r > 0.0)) throw InvalidSweep("load values must be > 0");
        const auto ss = steady_state_response(params, exc, r);
        result.add_row(r, {ss.avg_power, ss.voltage_amplitude, ss.disp_amplitude});
    }
    return result;
}

LoadOptimum find_optimal_load(const HarvesterParams& params, const Excitation& exc, double r_lo,
                              double r_hi) {
    if (!(r_lo > 0.0) || !(r_hi > r_lo)) throw InvalidSweep("load bounds must satisfy 0 < lo < hi");
    params.validate();
    exc.validate();
    auto power = [&](double r) {
        const double v = std::abs(solve_phasors(params, exc.frequency_hz, 1.0, 1.0 / r).voltage);
        return v * v / (2.0 * r);
    };
    const int points = std::clamp(static_cast<int>(std::ceil(30.0 * std::log10(r_hi / r_lo))) + 1,
                                  31, 1001);
    const auto best = grid_then_golden_maximize(
        power, r_lo, r_hi, {.grid_points = points, .log_scale = true, .rel_tol = 1e-6});
    const double a = exc.acceleration_amplitude();
    return {best.x, best.value * a * a};
}

double peak_power_frequency(const HarvesterParams& params, double r_load, double f_lo,
                            double f_hi) {
    params.validate();
    if (!(r_load > 0.0)) throw InvalidParams("r_load must be > 0");
    if (!(f_lo > 0.0) || !(f_hi > f_lo)) throw SearchFailed("frequency bounds must satisfy 0 < lo < hi");
    auto power = [&](double f) {
        const auto ph = solve_phasors(params, f, 1.0, 1.0 / r_load);
        // no coupling, no power: fall back to the mechanical resonance
        if (params.theta == 0.0) return std::abs(ph.displacement);
        const double v = std::abs(ph.voltage);
        return v * v / (2.0 * r_load);
    };
    // Resolve the half-power bandwidth (~ zeta f0) with several grid points.
    const double bandwidth = params.zeta * params.f0;
    const int points = std::clamp(static_cast<int>(std::ceil(8.0 * (f_hi - f_lo) / bandwidth)) + 1,
                                  401, 200001);
    return grid_then_golden_maximize(power, f_lo, f_hi,
                                     {.grid_points = points,
                                      .log_scale = false,
                                      .rel_tol = 1e-6,
                                      .require_interior = true})
        .x;
}

double effective_coupling(const HarvesterParams& params) {
    params.validate();
    return params.theta * params.theta / (params.stiffness() * params.port_capacitance());
}

}  // namespace vibeharvest
