#pragma once

// Ground-state hyperfine Zeeman structure of an ion with electronic spin J and
// nuclear spin I in a static field B along z:
//
//   H / h = A I.J + mu_B (g_J J_z + g_I I_z) B
//
// with g_I expressed in Bohr magnetons and signed so that this Zeeman term is
// the energy (for 25Mg+, mu_I < 0 gives g_I > 0). Energies are in Hz.
//
// F and m_F labels are adiabatic tags: each level inherits the F of the
// zero-field manifold it connects to when B is ramped up from 0.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qfield/error.hpp"
#include "qfield/linalg.hpp"
#include "qfield/units.hpp"

namespace qfield {

struct HyperfineSystem {
  double nuclear_spin = 2.5;
  double electronic_spin = 0.5;
  double hyperfine_constant = 0.0;  // A, Hz
  double electronic_g = 2.0;        // g_J
  double nuclear_g = 0.0;           // g_I, Bohr-magneton units
  double bohr_magneton = constants::bohr_magneton_hz_per_t;  // Hz/T

  std::size_t nuclear_dim() const { return static_cast<std::size_t>(std::lround(2 * nuclear_spin + 1)); }
  std::size_t electronic_dim() const { return static_cast<std::size_t>(std::lround(2 * electronic_spin + 1)); }
  std::size_t dimension() const { return nuclear_dim() * electronic_dim(); }

  void validate() const {
    auto half_integer = [](double s) {
      return s >= 0.0 && std::abs(2 * s - std::round(2 * s)) < 1e-12;
    };
    if (!half_integer(nuclear_spin)) throw ConfigError("nuclear spin must be a non-negative half-integer");
    if (!half_integer(electronic_spin) || electronic_spin <= 0.0)
      throw ConfigError("electronic spin must be a positive half-integer");
    if (!(bohr_magneton > 0.0)) throw ConfigError("Bohr magneton must be positive");
  }

  /// 25Mg+ 2S1/2. A from rf-optical double resonance (-596.254376 MHz),
  /// g_I from mu_I = -0.85545 mu_N, g_J tuned near the free-electron value.
  static HyperfineSystem magnesium25() {
    HyperfineSystem s;
    s.nuclear_spin = 2.5;
    s.electronic_spin = 0.5;
    s.hyperfine_constant = -596.254376e6;
    s.electronic_g = 2.00227;
    s.nuclear_g = g_i_from_nuclear(-0.85545 / 2.5);
    return s;
  }

  /// Converts a nuclear g-factor mu_I / (I mu_N) to the Bohr-magneton
  /// convention used in the Hamiltonian.
  static double g_i_from_nuclear(double g_nuclear) {
    return -g_nuclear * constants::electron_proton_mass_ratio;
  }
};

struct StateLabel {
  double F = 0.0;
  double mF = 0.0;
  auto operator<=>(const StateLabel&) const = default;
};

inline std::string to_string(const StateLabel& s) {
  auto fmt = [](double v) {
    const long twice = std::lround(2 * v);
    return twice % 2 == 0 ? std::to_string(twice / 2) : std::to_string(twice) + "/2";
  };
  return "|" + fmt(s.F) + "," + fmt(s.mF) + ">";
}

struct ProductState {
  double mI = 0.0;
  double mJ = 0.0;
  double mF() const { return mI + mJ; }
};

/// |m_I, m_J> basis, index = iI * (2J+1) + iJ with m ascending.
inline std::vector<ProductState> product_basis(const HyperfineSystem& sys) {
  std::vector<ProductState> basis;
  basis.reserve(sys.dimension());
  for (std::size_t i = 0; i < sys.nuclear_dim(); ++i)
    for (std::size_t j = 0; j < sys.electronic_dim(); ++j)
      basis.push_back({-sys.nuclear_spin + static_cast<double>(i),
                       -sys.electronic_spin + static_cast<double>(j)});
  return basis;
}

/// <j, m+1 | J_+ | j, m>
inline double ladder_up(double j, double m) {
  const double v = j * (j + 1) - m * (m + 1);
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

inline Matrix build_hamiltonian(const HyperfineSystem& sys, double field) {
  sys.validate();
  const auto basis = product_basis(sys);
  const std::size_t n = basis.size();
  const std::size_t nj = sys.electronic_dim();
  const double a = sys.hyperfine_constant;
  const double I = sys.nuclear_spin, J = sys.electronic_spin;
  Matrix h(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [mI, mJ] = basis[k];
    h(k, k) = a * mI * mJ + sys.bohr_magneton * field * (sys.electronic_g * mJ + sys.nuclear_g * mI);
    // (A/2) I_- J_+ : |mI, mJ> -> |mI-1, mJ+1>
    if (mI > -I + 0.5 && mJ < J - 0.5) {
      const std::size_t t = k - nj + 1;
      const double v = 0.5 * a * ladder_up(I, mI - 1) * ladder_up(J, mJ);
      h(t, k) = v;
      h(k, t) = v;
    }
  }
  return h;
}

/// Indices of the product basis grouped by m_F (ascending).
inline std::vector<std::pair<double, std::vector<std::size_t>>> mf_blocks(const HyperfineSystem& sys) {
  const auto basis = product_basis(sys);
  std::vector<std::pair<double, std::vector<std::size_t>>> blocks;
  const double mmax = sys.nuclear_spin + sys.electronic_spin;
  for (double mF = -mmax; mF <= mmax + 1e-9; mF += 1.0) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < basis.size(); ++k)
      if (std::abs(basis[k].mF() - mF) < 1e-9) idx.push_back(k);
    if (!idx.empty()) blocks.emplace_back(mF, std::move(idx));
  }
  return blocks;
}

struct Eigensystem {
  double field = 0.0;
  std::vector<double> energies;    // Hz; grouped by m_F, ascending within a block
  Matrix vectors;                  // column k: level k in the product basis
  std::vector<StateLabel> labels;  // label of level k

  std::size_t index_of(const StateLabel& s) const {
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (std::abs(labels[k].F - s.F) < 1e-9 && std::abs(labels[k].mF - s.mF) < 1e-9) return k;
    throw UnknownLevel("no level " + to_string(s));
  }
  double energy(const StateLabel& s) const { return energies[index_of(s)]; }
  std::vector<double> vector(std::size_t k) const {
    std::vector<double> v(vectors.rows());
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = vectors(r, k);
    return v;
  }
};

struct LabelTracking {
  double step = 1e-4;             // T, continuity step from B = 0
  double min_overlap_sq = 0.6;    // below this the match is ambiguous
};

namespace detail {

inline Matrix sub_block(const Matrix& h, const std::vector<std::size_t>& idx) {
  Matrix b(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) b(i, j) = h(idx[i], idx[j]);
  return b;
}

inline double zero_field_energy(const HyperfineSystem& s, double F) {
  const double I = s.nuclear_spin, J = s.electronic_spin;
  return 0.5 * s.hyperfine_constant * (F * (F + 1) - I * (I + 1) - J * (J + 1));
}

}  // namespace detail

/// Diagonalises H(B) block by block (Jacobi) and labels the levels by
/// following each eigenvector continuously from B = 0.
inline Eigensystem eigensystem(const HyperfineSystem& sys, double field,
                               const LabelTracking& tracking = {}) {
  if (!(field >= 0.0)) throw RangeError("field strength must be non-negative");
  const auto blocks = mf_blocks(sys);
  const double I = sys.nuclear_spin, J = sys.electronic_spin;
  const std::size_t n = sys.dimension();

  Eigensystem es;
  es.field = field;
  es.energies.reserve(n);
  es.vectors = Matrix(n, n);
  es.labels.reserve(n);

  const long steps = std::max(1L, static_cast<long>(std::ceil(field / tracking.step - 1e-9)));
  for (const auto& [mF, idx] : blocks) {
    const std::size_t m = idx.size();
    // Zero-field F values compatible with this m_F, ordered by energy.
    std::vector<double> fs;
    for (double F = std::abs(I - J); F <= I + J + 1e-9; F += 1.0)
      if (F + 1e-9 >= std::abs(mF)) fs.push_back(F);
    std::sort(fs.begin(), fs.end(), [&](double a, double b) {
      return detail::zero_field_energy(sys, a) < detail::zero_field_energy(sys, b);
    });
    for (std::size_t k = 0; k + 1 < fs.size(); ++k) {
      const double gap = std::abs(detail::zero_field_energy(sys, fs[k + 1]) -
                                  detail::zero_field_energy(sys, fs[k]));
      if (gap <= 1e-9 * std::max(1.0, std::abs(sys.hyperfine_constant)))
        throw DegenerateLabeling("zero-field F manifolds are degenerate");
    }

    auto decomposition = jacobi_eigen(detail::sub_block(build_hamiltonian(sys, 0.0), idx));
    std::vector<double> label_f = fs;  // label of column k in `decomposition`
    for (long s = 1; s <= steps && field > 0.0; ++s) {
      const double b = field * static_cast<double>(s) / static_cast<double>(steps);
      auto next = jacobi_eigen(detail::sub_block(build_hamiltonian(sys, b), idx));
      std::vector<double> next_f(m);
      std::vector<bool> taken(m, false);
      for (std::size_t c = 0; c < m; ++c) {
        std::size_t best = m;
        double best_ov = -1.0;
        for (std::size_t p = 0; p < m; ++p) {
          double ov = 0.0;
          for (std::size_t r = 0; r < m; ++r) ov += next.vectors(r, c) * decomposition.vectors(r, p);
          if (ov * ov > best_ov) best_ov = ov * ov, best = p;
        }
        if (best_ov < tracking.min_overlap_sq || taken[best])
          throw DegenerateLabeling("levels with m_F = " + std::to_string(mF) +
                                   " cannot be followed near B = " + std::to_string(b) + " T");
        taken[best] = true;
        next_f[c] = label_f[best];
      }
      decomposition = std::move(next);
      label_f = std::move(next_f);
    }
    for (std::size_t c = 0; c < m; ++c) {
      const std::size_t level = es.energies.size();
      es.energies.push_back(decomposition.values[c]);
      for (std::size_t r = 0; r < m; ++r) es.vectors(idx[r], level) = decomposition.vectors(r, c);
      es.labels.push_back({label_f[c], mF});
    }
  }
  return es;
}

enum class BreitRabiBranch { upper_f, lower_f };  // F = I + 1/2 or I - 1/2

/// Closed-form Breit-Rabi energy of a J = 1/2 level, Hz.
inline double breit_rabi_oracle(const HyperfineSystem& sys, double field, double mF,
                                BreitRabiBranch branch) {
  if (std::abs(sys.electronic_spin - 0.5) > 1e-12)
    throw NotApplicable("Breit-Rabi formula needs J = 1/2");
  const double I = sys.nuclear_spin;
  const double mu_b = sys.bohr_magneton * field;
  if (std::abs(std::abs(mF) - (I + 0.5)) < 1e-9) {
    if (branch != BreitRabiBranch::upper_f)
      throw UnknownLevel("stretch states only exist on the F = I + 1/2 branch");
    const double sign = mF > 0 ? 1.0 : -1.0;
    return 0.5 * sys.hyperfine_constant * I + sign * mu_b * (0.5 * sys.electronic_g + sys.nuclear_g * I);
  }
  if (std::abs(mF) > I + 0.5) throw UnknownLevel("|m_F| exceeds I + 1/2");
  const double dE = sys.hyperfine_constant * (I + 0.5);
  const double x = (sys.electronic_g - sys.nuclear_g) * mu_b / dE;
  const double root = std::sqrt(1.0 + 4.0 * mF * x / (2 * I + 1) + x * x);
  const double sign = branch == BreitRabiBranch::upper_f ? 1.0 : -1.0;
  return -dE / (2 * (2 * I + 1)) + sys.nuclear_g * mu_b * mF + sign * 0.5 * dE * root;
}

enum class TransitionTag { MW0, MW1, MW2, RF0 };

inline constexpr TransitionTag all_transition_tags[] = {TransitionTag::MW0, TransitionTag::MW1,
                                                        TransitionTag::MW2, TransitionTag::RF0};

inline std::string_view to_string(TransitionTag t) {
  switch (t) {
    case TransitionTag::MW0: return "MW0";
    case TransitionTag::MW1: return "MW1";
    case TransitionTag::MW2: return "MW2";
    case TransitionTag::RF0: return "RF0";
  }
  return "?";
}

inline std::optional<TransitionTag> parse_transition_tag(std::string_view s) {
  for (auto t : all_transition_tags)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

/// frequency = E(upper) - E(lower)
struct TransitionLabels {
  StateLabel lower;
  StateLabel upper;
};

/// Probed 25Mg+ transitions (F = 3 lies below F = 2 because A < 0).
inline TransitionLabels labels_for(TransitionTag t) {
  switch (t) {
    case TransitionTag::MW0: return {{3, 3}, {2, 2}};
    case TransitionTag::MW1: return {{3, 1}, {2, 2}};
    case TransitionTag::MW2: return {{3, 1}, {2, 0}};
    case TransitionTag::RF0: return {{2, 2}, {2, 1}};
  }
  return {};
}

inline double transition_frequency(const Eigensystem& es, const TransitionLabels& t) {
  return es.energy(t.upper) - es.energy(t.lower);
}

inline double transition_frequency(const HyperfineSystem& sys, double field,
                                   const TransitionLabels& t) {
  return transition_frequency(eigensystem(sys, field), t);
}

/// dE/dB of level k by Hellmann-Feynman: <k| mu_B (g_J J_z + g_I I_z) |k>, Hz/T.
inline double level_sensitivity(const HyperfineSystem& sys, const Eigensystem& es, std::size_t k) {
  const auto basis = product_basis(sys);
  double s = 0.0;
  for (std::size_t r = 0; r < basis.size(); ++r) {
    const double c = es.vectors(r, k);
    s += c * c * (sys.electronic_g * basis[r].mJ + sys.nuclear_g * basis[r].mI);
  }
  return sys.bohr_magneton * s;
}

/// d(nu)/dB, Hz/T.
inline double field_sensitivity(const HyperfineSystem& sys, double field, const TransitionLabels& t) {
  const auto es = eigensystem(sys, field);
  return level_sensitivity(sys, es, es.index_of(t.upper)) -
         level_sensitivity(sys, es, es.index_of(t.lower));
}

/// d^2(nu)/dB^2, Hz/T^2, from Richardson-extrapolated second differences.
inline double curvature(const HyperfineSystem& sys, double field, const TransitionLabels& t,
                        double step = 2e-5) {
  const double f0 = transition_frequency(sys, field, t);
  auto second_difference = [&](double h) {
    const double lo = std::max(0.0, field - h);
    const double hi = lo + 2 * h;
    const double mid = lo + h;
    const double fm = mid == field ? f0 : transition_frequency(sys, mid, t);
    return (transition_frequency(sys, hi, t) - 2 * fm + transition_frequency(sys, lo, t)) / (h * h);
  };
  return (4.0 * second_difference(0.5 * step) - second_difference(step)) / 3.0;
}

struct ClockFieldSearch {
  double half_width = 5e-4;       // T, bracket around the guess
  int scan_intervals = 20;
  double sensitivity_tol = 1e3;   // Hz/T (= 1 Hz/mT)
  int max_iterations = 200;
};

/// Field where d(nu)/dB = 0 near `guess`. Finds the sign change closest to
/// the guess on a uniform scan, then refines it by bisection.
inline double find_clock_field(const HyperfineSystem& sys, const TransitionLabels& t, double guess,
                               const ClockFieldSearch& opt = {}) {
  const double lo0 = std::max(0.0, guess - opt.half_width);
  const double hi0 = guess + opt.half_width;
  auto sens = [&](double b) { return field_sensitivity(sys, b, t); };
  std::optional<std::pair<double, double>> bracket;
  double best_distance = 0.0;
  double prev_b = lo0, prev_s = sens(lo0);
  for (int k = 1; k <= opt.scan_intervals; ++k) {
    const double b = lo0 + (hi0 - lo0) * k / opt.scan_intervals;
    const double s = sens(b);
    if ((prev_s <= 0.0) != (s <= 0.0)) {
      const double distance = std::abs(0.5 * (prev_b + b) - guess);
      if (!bracket || distance < best_distance) {
        bracket = {prev_b, b};
        best_distance = distance;
      }
    }
    prev_b = b;
    prev_s = s;
  }
  if (!bracket) throw NoRootInBracket("sensitivity keeps its sign on the bracket");
  auto [lo, hi] = *bracket;
  double s_lo = sens(lo);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s_mid = sens(mid);
    if (std::abs(s_mid) < opt.sensitivity_tol && hi - lo < 1e-9) return mid;
    if ((s_mid <= 0.0) == (s_lo <= 0.0)) {
      lo = mid;
      s_lo = s_mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-15) return 0.5 * (lo + hi);
  }
  throw NonConvergent("clock-field bisection did not converge");
}

struct DetuningPoint {
  double field_offset = 0.0;    // T, relative to the centre field
  double frequency_offset = 0.0;  // Hz, relative to nu(centre)
};

/// nu(B_c + dB) - nu(B_c) on `points` evenly spaced offsets in [-half_range, half_range].
inline std::vector<DetuningPoint> detuning_curve(const HyperfineSystem& sys, const TransitionLabels& t,
                                                 double center_field, double half_range, int points) {
  if (points < 2 || !(half_range > 0.0)) throw RangeError("detuning curve needs >= 2 points and a positive range");
  if (center_field - half_range < 0.0) throw RangeError("detuning curve reaches negative fields");
  const double f0 = transition_frequency(sys, center_field, t);
  std::vector<DetuningPoint> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    const double db = -half_range + 2.0 * half_range * k / (points - 1);
    out.push_back({db, transition_frequency(sys, center_field + db, t) - f0});
  }
  return out;
}

struct TransitionSpec {
  TransitionTag tag = TransitionTag::MW0;
  TransitionLabels labels;
  double frequency = 0.0;          // Hz
  double sensitivity = 0.0;        // Hz/T
  double curvature = 0.0;          // Hz/T^2
  double coupling_strength = 0.0;  // Hz, Rabi frequency / 2 pi

  double quadratic_coefficient() const { return 0.5 * curvature; }
};

inline TransitionSpec make_transition(const HyperfineSystem& sys, double field, TransitionTag tag,
                                      double coupling_strength) {
  TransitionSpec t;
  t.tag = tag;
  t.labels = labels_for(tag);
  t.frequency = transition_frequency(sys, field, t.labels);
  if (!(t.frequency > 0.0))
    throw RangeError(std::string(to_string(tag)) + " frequency is not positive at this field");
  t.sensitivity = field_sensitivity(sys, field, t.labels);
  t.curvature = curvature(sys, field, t.labels);
  t.coupling_strength = coupling_strength;
  return t;
}

/// Spatial variation of a clock frequency, (1/2) nu'' |grad B|^2, in Hz/m^2.
inline double quadratic_spatial_variation(double curvature_hz_per_t2, double gradient_t_per_m) {
  return 0.5 * curvature_hz_per_t2 * gradient_t_per_m * gradient_t_per_m;
}

}  // namespace qfield
