#pragma once

// Second-order (a.c.) Zeeman shifts of hyperfine levels from a weak field
// B_osc cos(Omega t) and the stray-field sensing chain built on them.
//
// For level i, with nu_ij = E_i - E_j and f = Omega / 2 pi (all in Hz):
//
//   dE_i = sum_{j != i} |<j| mu_B B_osc (e . K) |i>|^2 / 4
//                       * [1 / (nu_ij - f) + 1 / (nu_ij + f)],
//   K = g_J J + g_I I.
//
// Both counter-rotating denominators are kept. Because the eigenstates have
// definite m_F, the sigma+, sigma- and pi parts of e couple to disjoint sets
// of levels and their contributions add without cross terms.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "qfield/error.hpp"
#include "qfield/hyperfine.hpp"
#include "qfield/units.hpp"
#include "qfield/vec3.hpp"

namespace qfield {

/// Intensity fractions of the oscillating field relative to the static field
/// axis: sigma+ drives Delta m_F = +1, sigma- drives -1, pi drives 0.
struct Polarisation {
  double sigma_plus = 0.0;
  double sigma_minus = 0.0;
  double pi = 0.0;

  /// Complex polarisation vector given in the frame where B0 is along z.
  static Polarisation from_vector(std::complex<double> ex, std::complex<double> ey,
                                  std::complex<double> ez) {
    const std::complex<double> i{0.0, 1.0};
    const double total = std::norm(ex) + std::norm(ey) + std::norm(ez);
    if (!(total > 0.0)) throw NonPositiveInput("polarisation vector is zero");
    return {std::norm(ex - i * ey) / (2 * total), std::norm(ex + i * ey) / (2 * total),
            std::norm(ez) / total};
  }

  /// Linear polarisation along `direction`, with the static field along
  /// `b0_direction` (both in the same, arbitrary frame).
  static Polarisation linear(const Vec3& direction, const Vec3& b0_direction) {
    const double c = dot(normalized(direction), normalized(b0_direction));
    const double parallel = c * c;
    return {0.5 * (1.0 - parallel), 0.5 * (1.0 - parallel), parallel};
  }

  /// Uniform average over linear polarisations lying in the plane with the
  /// given normal. `samples` >= 3 makes the average exact.
  static Polarisation in_plane_average(const Vec3& plane_normal, const Vec3& b0_direction,
                                       int samples = 360) {
    const Vec3 n = normalized(plane_normal);
    Vec3 seed = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 e1 = normalized(seed - n * dot(seed, n));
    const Vec3 e2{n.y * e1.z - n.z * e1.y, n.z * e1.x - n.x * e1.z, n.x * e1.y - n.y * e1.x};
    Polarisation avg;
    for (int k = 0; k < samples; ++k) {
      const double phi = constants::two_pi * k / samples;
      const auto p = linear(e1 * std::cos(phi) + e2 * std::sin(phi), b0_direction);
      avg.sigma_plus += p.sigma_plus / samples;
      avg.sigma_minus += p.sigma_minus / samples;
      avg.pi += p.pi / samples;
    }
    return avg;
  }
};

struct OscillatingField {
  double amplitude = 0.0;          // T, zero-to-peak
  double angular_frequency = 0.0;  // rad/s
  Polarisation polarisation;

  void validate() const {
    if (!(amplitude >= 0.0)) throw NonPositiveInput("oscillating-field amplitude must be >= 0");
    if (!(angular_frequency >= 0.0)) throw NonPositiveInput("oscillating-field frequency must be >= 0");
  }
};

struct AcZeemanOptions {
  double guard_band = 1e4;  // Hz, minimum |nu_ij -+ f| for a coupled pair
};

enum class Channel { sigma_plus, sigma_minus, pi };

namespace detail {

/// <j| K_c |i> for every level j, where K_+- = (g_J J_+- + g_I I_+-)/sqrt(2)
/// and K_pi = g_J J_z + g_I I_z.
inline std::vector<double> channel_elements(const HyperfineSystem& sys, const Eigensystem& es,
                                            std::size_t i, Channel c) {
  const auto basis = product_basis(sys);
  const std::size_t n = basis.size();
  const std::size_t nj = sys.electronic_dim();
  const double I = sys.nuclear_spin, J = sys.electronic_spin;
  std::vector<double> kv(n, 0.0);  // K_c |i> in the product basis
  for (std::size_t r = 0; r < n; ++r) {
    const double amp = es.vectors(r, i);
    if (amp == 0.0) continue;
    const auto [mI, mJ] = basis[r];
    switch (c) {
      case Channel::pi:
        kv[r] += amp * (sys.electronic_g * mJ + sys.nuclear_g * mI);
        break;
      case Channel::sigma_plus:
        if (mJ < J - 0.5) kv[r + 1] += amp * sys.electronic_g * ladder_up(J, mJ) / std::sqrt(2.0);
        if (mI < I - 0.5) kv[r + nj] += amp * sys.nuclear_g * ladder_up(I, mI) / std::sqrt(2.0);
        break;
      case Channel::sigma_minus:
        if (mJ > -J + 0.5) kv[r - 1] += amp * sys.electronic_g * ladder_up(J, mJ - 1) / std::sqrt(2.0);
        if (mI > -I + 0.5) kv[r - nj] += amp * sys.nuclear_g * ladder_up(I, mI - 1) / std::sqrt(2.0);
        break;
    }
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += es.vectors(r, j) * kv[r];
    out[j] = s;
  }
  return out;
}

}  // namespace detail

/// Shift of one level for a unit-weight channel and amplitude `amplitude`.
inline double channel_level_shift(const HyperfineSystem& sys, const Eigensystem& es, std::size_t i,
                                  Channel c, double amplitude, double frequency_hz,
                                  const AcZeemanOptions& opt = {}) {
  const auto elements = detail::channel_elements(sys, es, i, c);
  const double scale = sys.bohr_magneton * amplitude;
  double shift = 0.0;
  for (std::size_t j = 0; j < elements.size(); ++j) {
    if (j == i) continue;
    const double v2 = elements[j] * elements[j];
    if (v2 < 1e-24) continue;
    const double nu = es.energies[i] - es.energies[j];
    if (std::abs(nu - frequency_hz) < opt.guard_band || std::abs(nu + frequency_hz) < opt.guard_band)
      throw ResonantDenominator("drive at " + std::to_string(frequency_hz) +
                                " Hz is within the guard band of a coupled transition at " +
                                std::to_string(std::abs(nu)) + " Hz");
    shift += scale * scale * v2 / 4.0 * (1.0 / (nu - frequency_hz) + 1.0 / (nu + frequency_hz));
  }
  return shift;
}

inline double ac_level_shift(const HyperfineSystem& sys, const Eigensystem& es, const StateLabel& level,
                             const OscillatingField& field, const AcZeemanOptions& opt = {}) {
  field.validate();
  const std::size_t i = es.index_of(level);
  const double f = field.angular_frequency / constants::two_pi;
  const auto& p = field.polarisation;
  double shift = 0.0;
  if (p.sigma_plus > 0.0)
    shift += p.sigma_plus * channel_level_shift(sys, es, i, Channel::sigma_plus, field.amplitude, f, opt);
  if (p.sigma_minus > 0.0)
    shift += p.sigma_minus * channel_level_shift(sys, es, i, Channel::sigma_minus, field.amplitude, f, opt);
  if (p.pi > 0.0) shift += p.pi * channel_level_shift(sys, es, i, Channel::pi, field.amplitude, f, opt);
  return shift;
}

inline double ac_level_shift(const HyperfineSystem& sys, double b0, const StateLabel& level,
                             const OscillatingField& field, const AcZeemanOptions& opt = {}) {
  return ac_level_shift(sys, eigensystem(sys, b0), level, field, opt);
}

/// Differential a.c. Zeeman shift of a transition per unit B_osc^2, Hz/T^2.
/// Signed: negative means the transition frequency decreases.
inline double transition_ac_sensitivity(const HyperfineSystem& sys, double b0, const TransitionLabels& t,
                                        double angular_frequency, const Polarisation& polarisation,
                                        const AcZeemanOptions& opt = {}) {
  const auto es = eigensystem(sys, b0);
  const OscillatingField unit{1.0, angular_frequency, polarisation};
  return ac_level_shift(sys, es, t.upper, unit, opt) - ac_level_shift(sys, es, t.lower, unit, opt);
}

/// Stray-field sensing run on the clock transition (spin echo with the RF
/// amplitude lowered by delta_u_rf during the second free evolution).
struct SensingRun {
  double u_rf = 79.5;                // V, zero-to-peak
  double delta_u_rf = 0.0;           // V
  double pulse_spacing = 0.0;        // T_P, s
  double ramp_duration = 80e-6;      // s
  double b0_angle_to_trap_z = 30.0 * constants::pi / 180.0;  // rad
  double quadratic_sensitivity = 0.0;  // Hz/T^2, magnitude
  double inferred_bosc = 0.0;        // T

  static constexpr double max_ramp_duration = 80e-6;
  static constexpr double max_pulse_spacing = 1.2;

  void validate() const {
    if (!(u_rf > 0.0)) throw NonPositiveInput("U_RF must be positive");
    if (delta_u_rf < 0.0 || delta_u_rf > u_rf) throw RangeError("need 0 <= dU_RF <= U_RF");
    if (ramp_duration < 0.0 || ramp_duration > max_ramp_duration)
      throw RangeError("ramp duration must lie in [0, 80 us]");
    if (pulse_spacing < 0.0 || pulse_spacing > max_pulse_spacing)
      throw RangeError("T_P must lie in [0, 1.2 s]");
  }
};

/// Static field direction in the trap frame: in the x-z plane, `angle` from z.
inline Vec3 b0_direction_in_trap(double angle) { return {std::sin(angle), 0.0, std::cos(angle)}; }

/// B_osc at U_RF from the fitted quadratic slope (Hz/V^2) of the differential
/// shift, assuming B_osc proportional to U_RF.
inline double infer_bosc(double slope_hz_per_v2, double u_rf, double s_hz_per_t2) {
  if (!(s_hz_per_t2 > 0.0)) throw NonPositiveInput("quadratic sensitivity must be positive");
  if (!(u_rf > 0.0)) throw NonPositiveInput("U_RF must be positive");
  if (slope_hz_per_v2 < 0.0) throw NonPositiveInput("quadratic slope must be non-negative");
  return u_rf * std::sqrt(slope_hz_per_v2 / s_hz_per_t2);
}

/// Shift difference between U_RF and U_RF - dU_RF, Hz.
inline double differential_shift_vs_du(double bosc_at_urf, double u_rf, double delta_u, double s_hz_per_t2) {
  if (!(u_rf > 0.0)) throw NonPositiveInput("U_RF must be positive");
  if (delta_u < 0.0 || delta_u > u_rf) throw RangeError("need 0 <= dU_RF <= U_RF");
  const double remaining = 1.0 - delta_u / u_rf;
  return s_hz_per_t2 * bosc_at_urf * bosc_at_urf * (1.0 - remaining * remaining);
}

/// B_osc(y) = B_ref + k sqrt(y) for a displacement y >= 0.
inline double spatial_sqrt_model(double y, double coefficient, double b_ref) {
  if (y < 0.0) throw NegativeDisplacement("displacement must be >= 0");
  return b_ref + coefficient * std::sqrt(y);
}

/// Linear frequency slope along y implied by the square-root law with
/// B_ref = 0: d/dy [s (k sqrt(y))^2] = s k^2. Hz/m.
inline double spatial_shift_slope(double s_hz_per_t2, double coefficient) {
  return s_hz_per_t2 * coefficient * coefficient;
}

}  // namespace qfield
