#pragma once

// Two-level pulse-sequence simulation under magnetic-field noise, and the
// shim-coil stabilisation loop.
//
// Conventions
//   * State (c_g, c_e); g is the prepared state and the one detected.
//   * Rotating-frame Hamiltonian H = (1/2)[Delta s_z + Omega_R (cos phi s_x +
//     sin phi s_y)], Delta = 2 pi (nu_atom - nu_drive).
//   * Field noise dB(t) acts during waits only; it shifts the transition by
//     nu' dB + (1/2) nu'' dB^2. Pulses see the deterministic detuning only.
//   * Detection and transfer pulses are ideal; shots are Bernoulli samples.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qfield/ac_zeeman.hpp"
#include "qfield/analysis.hpp"
#include "qfield/error.hpp"
#include "qfield/hyperfine.hpp"
#include "qfield/linalg.hpp"
#include "qfield/units.hpp"

namespace qfield {

// ---------------------------------------------------------------------------
// Noise

enum class NoiseKind {
  quasi_static,        // one Gaussian draw per shot, rms in T
  ornstein_uhlenbeck,  // stationary OU, rms in T, correlation_time in s
  drift_ramp,          // deterministic dB = drift_rate * t
  random_walk,         // Wiener process, rms in T per sqrt(s)
};

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::quasi_static: return "quasi_static";
    case NoiseKind::ornstein_uhlenbeck: return "ornstein_uhlenbeck";
    case NoiseKind::drift_ramp: return "drift_ramp";
    case NoiseKind::random_walk: return "random_walk";
  }
  return "?";
}

struct NoiseComponent {
  NoiseKind kind = NoiseKind::quasi_static;
  double rms = 0.0;
  double correlation_time = 0.0;
  double drift_rate = 0.0;  // T/s
};

struct NoiseModel {
  std::vector<NoiseComponent> components;  // more than one = composite
  /// Frequency-white dephasing, rad/s; contrast factor exp(-rate * T).
  double white_dephasing_rate = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    for (const auto& c : components) {
      if (c.rms < 0.0) throw RangeError("noise rms must be >= 0");
      if (c.kind == NoiseKind::ornstein_uhlenbeck && !(c.correlation_time > 0.0))
        throw RangeError("OU noise needs a positive correlation time");
    }
    if (white_dephasing_rate < 0.0) throw RangeError("white dephasing rate must be >= 0");
  }

  /// Sum of stationary variances (quasi-static and OU parts), T^2.
  double stationary_variance() const {
    double v = 0.0;
    for (const auto& c : components)
      if (c.kind == NoiseKind::quasi_static || c.kind == NoiseKind::ornstein_uhlenbeck) v += c.rms * c.rms;
    return v;
  }
};

/// Upper bound on dephasing by leakage of the preparation lasers, Hz
/// (2 pi x 0.08 Hz); kept in the budget but not simulated.
inline constexpr double laser_leakage_bound_hz = 0.08;
/// Current-supply contribution to the clock-transition decoherence, Hz.
inline constexpr double current_supply_floor_hz = 0.002;

/// One realisation of the field noise. Time starts at 0 at construction.
class FieldNoise {
public:
  struct Integrals {
    double first = 0.0;        // int dB dt, T s
    double second = 0.0;       // int dB^2 dt, T^2 s
    double white_phase = 0.0;  // rad
  };

  FieldNoise(const NoiseModel& model, std::mt19937_64& rng) : model_(&model), rng_(&rng) {
    for (const auto& c : model.components) {
      double state = 0.0;
      if (c.kind == NoiseKind::quasi_static || c.kind == NoiseKind::ornstein_uhlenbeck)
        state = c.rms * gauss();
      states_.push_back(state);
    }
  }

  double value() const { return value_at(states_, time_); }
  double time() const { return time_; }

  /// Moves the process forward without accumulating phase.
  void advance(double duration) {
    if (duration <= 0.0) return;
    const int n = substeps(duration);
    for (int k = 0; k < n; ++k) step(duration / n);
  }

  /// Integrals over [t, t + duration] (Simpson on a fine path), then advances.
  Integrals integrate(double duration) {
    Integrals out;
    if (duration <= 0.0) return out;
    const int n = substeps(duration);
    const double h = duration / n;
    for (int k = 0; k < n; ++k) {
      const double b0 = value();
      step(0.5 * h);
      const double bm = value();
      step(0.5 * h);
      const double b1 = value();
      out.first += h / 6.0 * (b0 + 4.0 * bm + b1);
      out.second += h / 6.0 * (b0 * b0 + 4.0 * bm * bm + b1 * b1);
    }
    if (model_->white_dephasing_rate > 0.0)
      out.white_phase = std::sqrt(2.0 * model_->white_dephasing_rate * duration) * gauss();
    return out;
  }

private:
  double gauss() { return normal_(*rng_); }

  double value_at(const std::vector<double>& states, double t) const {
    double b = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto& c = model_->components[i];
      b += c.kind == NoiseKind::drift_ramp ? c.drift_rate * t : states[i];
    }
    return b;
  }

  int substeps(double duration) const {
    double dt_max = duration;
    for (const auto& c : model_->components)
      if (c.kind == NoiseKind::ornstein_uhlenbeck && c.rms > 0.0) dt_max = std::min(dt_max, c.correlation_time / 8.0);
    if (has_random_walk()) dt_max = std::min(dt_max, duration / 64.0);
    return static_cast<int>(std::min(1e6, std::ceil(duration / dt_max - 1e-12)));
  }

  bool has_random_walk() const {
    for (const auto& c : model_->components)
      if (c.kind == NoiseKind::random_walk && c.rms > 0.0) return true;
    return false;
  }

  void step(double dt) {
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const auto& c = model_->components[i];
      if (c.kind == NoiseKind::ornstein_uhlenbeck && c.rms > 0.0) {
        const double decay = std::exp(-dt / c.correlation_time);
        states_[i] = states_[i] * decay + c.rms * std::sqrt(1.0 - decay * decay) * gauss();
      } else if (c.kind == NoiseKind::random_walk && c.rms > 0.0) {
        states_[i] += c.rms * std::sqrt(dt) * gauss();
      }
    }
    time_ += dt;
  }

  const NoiseModel* model_;
  std::mt19937_64* rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<double> states_;
  double time_ = 0.0;
};

// ---------------------------------------------------------------------------
// Sequences

struct Pulse {
  double area = 0.0;       // rad
  double phase = 0.0;      // rad
  double rabi_rate = 0.0;  // rad/s
  double duration() const { return area / rabi_rate; }
};

struct Wait {
  double duration = 0.0;  // s
};

/// Bookkeeping marker, e.g. where an RF ramp starts.
struct Marker {
  std::string label;
};

using Segment = std::variant<Pulse, Wait, Marker>;

struct PulseSequence {
  std::vector<Segment> segments;
  int shot_count = 1;

  static constexpr double max_duration = 1.5;  // s

  double duration() const {
    double t = 0.0;
    for (const auto& s : segments) {
      if (const auto* p = std::get_if<Pulse>(&s)) t += p->duration();
      if (const auto* w = std::get_if<Wait>(&s)) t += w->duration;
    }
    return t;
  }

  void validate() const {
    if (shot_count < 1) throw InvalidSequence("shot count must be >= 1");
    for (const auto& s : segments) {
      if (const auto* p = std::get_if<Pulse>(&s)) {
        if (p->area < 0.0) throw InvalidSequence("pulse area must be >= 0");
        if (!(p->rabi_rate > 0.0)) throw InvalidSequence("pulse Rabi rate must be positive");
      }
      if (const auto* w = std::get_if<Wait>(&s))
        if (w->duration < 0.0) throw InvalidSequence("wait duration must be >= 0");
    }
    if (duration() > max_duration + 1e-12) throw InvalidSequence("sequence longer than 1.5 s");
  }

  /// pi/2 - T - pi/2(phase).
  static PulseSequence ramsey(double wait, double phase, double rabi_rate, int shots = 1) {
    return {{Pulse{constants::pi / 2, 0.0, rabi_rate}, Wait{wait},
             Pulse{constants::pi / 2, phase, rabi_rate}},
            shots};
  }

  /// pi/2 - T_P - pi - T_P - pi/2(phase), all pulses in phase for phase = 0.
  static PulseSequence spin_echo(double pulse_spacing, double phase, double rabi_rate, int shots = 1) {
    return {{Pulse{constants::pi / 2, 0.0, rabi_rate}, Wait{pulse_spacing},
             Pulse{constants::pi, 0.0, rabi_rate}, Marker{"second window"}, Wait{pulse_spacing},
             Pulse{constants::pi / 2, phase, rabi_rate}},
            shots};
  }
};

using TwoLevelState = std::array<std::complex<double>, 2>;

/// exp(-i angle/2 n.sigma) applied to `psi`; n need not be normalised.
inline void rotate(TwoLevelState& psi, double angle, double nx, double ny, double nz) {
  const double len = std::sqrt(nx * nx + ny * ny + nz * nz);
  if (len == 0.0 || angle == 0.0) return;
  nx /= len, ny /= len, nz /= len;
  const double c = std::cos(0.5 * angle), s = std::sin(0.5 * angle);
  const std::complex<double> i{0.0, 1.0};
  const std::complex<double> g = psi[0], e = psi[1];
  psi[0] = c * g - i * s * (nz * g + std::complex<double>(nx, -ny) * e);
  psi[1] = c * e - i * s * (std::complex<double>(nx, ny) * g - nz * e);
}

/// Deterministic detuning of the drive in Hz as a function of the time since
/// the sequence started; empty means zero.
using DetuningFn = std::function<double(double)>;

namespace detail {

inline double integrate_detuning(const DetuningFn& fn, double t0, double duration) {
  if (!fn || duration <= 0.0) return 0.0;
  static const QuadratureRule rule = gauss_legendre(8);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k)
    s += rule.weights[k] * fn(t0 + 0.5 * duration * (1.0 + rule.nodes[k]));
  return 0.5 * duration * s;
}

}  // namespace detail

struct ShotOutcome {
  double probability = 0.0;  // of the prepared state
  double norm = 1.0;         // |psi|^2 at the end
  double net_phase = 0.0;    // sum of signed wait phases, rad (sign flips after each pi pulse)
};

/// Propagates one shot through `seq` with one noise realisation.
inline ShotOutcome run_shot(const PulseSequence& seq, const TransitionSpec& transition,
                            FieldNoise& noise, const DetuningFn& detuning = {}) {
  TwoLevelState psi{1.0, 0.0};
  ShotOutcome out;
  double t = 0.0;
  double sign = 1.0;
  for (const auto& seg : seq.segments) {
    if (const auto* p = std::get_if<Pulse>(&seg)) {
      const double dur = p->duration();
      const double delta = detuning ? constants::two_pi * detuning(t + 0.5 * dur) : 0.0;
      const double omega = std::hypot(p->rabi_rate, delta);
      rotate(psi, omega * dur, p->rabi_rate * std::cos(p->phase), p->rabi_rate * std::sin(p->phase), delta);
      noise.advance(dur);
      t += dur;
      if (std::abs(std::remainder(p->area, constants::two_pi) - constants::pi) < 1e-12 ||
          std::abs(std::remainder(p->area, constants::two_pi) + constants::pi) < 1e-12)
        sign = -sign;
    } else if (const auto* w = std::get_if<Wait>(&seg)) {
      const auto in = noise.integrate(w->duration);
      const double phase = constants::two_pi * (transition.sensitivity * in.first +
                                                0.5 * transition.curvature * in.second +
                                                detail::integrate_detuning(detuning, t, w->duration)) +
                           in.white_phase;
      rotate(psi, phase, 0.0, 0.0, 1.0);
      out.net_phase += sign * phase;
      t += w->duration;
    }
  }
  out.probability = std::norm(psi[0]);
  out.norm = std::norm(psi[0]) + std::norm(psi[1]);
  return out;
}

/// Ideal (pre-detection) probability of the prepared state for each of the
/// sequence's shots; the noise realisations come from `noise.seed`.
inline std::vector<double> evolve_sequence(const PulseSequence& seq, const TransitionSpec& transition,
                                           const NoiseModel& noise, const DetuningFn& detuning = {}) {
  seq.validate();
  noise.validate();
  std::mt19937_64 rng(noise.seed);
  std::vector<double> p;
  p.reserve(static_cast<std::size_t>(seq.shot_count));
  for (int k = 0; k < seq.shot_count; ++k) {
    FieldNoise realisation(noise, rng);
    p.push_back(run_shot(seq, transition, realisation, detuning).probability);
  }
  return p;
}

/// Rabi rate (rad/s) from a coupling strength given as Omega_R / 2 pi.
inline double rabi_rate_of(const TransitionSpec& t) { return constants::two_pi * t.coupling_strength; }

struct RabiPoint {
  double detuning = 0.0;     // Hz
  double probability = 0.0;  // transferred population
};

/// Single-pulse transfer probability versus drive detuning (noise free).
inline std::vector<RabiPoint> rabi_scan(const TransitionSpec& transition, std::span<const double> detunings_hz,
                                        double area = constants::pi) {
  const double rate = rabi_rate_of(transition);
  if (!(rate > 0.0)) throw InvalidSequence("transition has no coupling strength");
  std::vector<RabiPoint> out;
  const NoiseModel quiet;
  for (double d : detunings_hz) {
    std::mt19937_64 rng(0);
    FieldNoise none(quiet, rng);
    const PulseSequence seq{{Pulse{area, 0.0, rate}}, 1};
    const auto shot = run_shot(seq, transition, none, [d](double) { return d; });
    out.push_back({d, 1.0 - shot.probability});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ramsey coherence scans

struct CoherenceResult {
  std::vector<double> ramsey_times;  // s
  std::vector<double> contrast;
  std::vector<double> contrast_err;
  double tau = 0.0;        // s
  double tau_err = 0.0;
  double gamma = 0.0;      // rad/s, 2 pi / tau
  double gamma_err = 0.0;
  double initial_contrast = 0.0;
  FitResult decay_fit;
};

struct ScanOptions {
  int shots = 200;          // N_exp per phase point
  int phase_points = 96;
  bool float_baseline = true;
  std::uint64_t seed = 1;
};

namespace detail {

struct PhaseScan {
  std::vector<double> phases, p, sigma;
};

inline PhaseScan phase_scan(const std::function<PulseSequence(double)>& make_sequence,
                            const TransitionSpec& transition, const NoiseModel& noise,
                            const DetuningFn& detuning, const ScanOptions& opt, std::mt19937_64& rng) {
  PhaseScan scan;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < opt.phase_points; ++k) {
    const double phase = constants::two_pi * k / opt.phase_points;
    const PulseSequence seq = make_sequence(phase);
    seq.validate();
    std::size_t bright = 0;
    for (int s = 0; s < opt.shots; ++s) {
      FieldNoise realisation(noise, rng);
      const double p = run_shot(seq, transition, realisation, detuning).probability;
      if (unit(rng) < p) ++bright;
    }
    scan.phases.push_back(phase);
    scan.p.push_back(static_cast<double>(bright) / opt.shots);
    scan.sigma.push_back(binomial_sem(bright, static_cast<std::size_t>(opt.shots)));
  }
  return scan;
}

/// Sinusoid fit of a phase scan. Counts-based weights correlate with the
/// noise and bias the contrast upwards, so the fit is repeated with
/// binomial errors taken from the fitted fringe.
inline FitResult fit_fringe(const PhaseScan& scan, const ScanOptions& opt) {
  const SinusoidFitOptions fo{opt.float_baseline, 0.5};
  FitResult fit = fit_sinusoid(scan.phases, scan.p, scan.sigma, fo);
  const double n = opt.shots;
  for (int pass = 0; pass < 2; ++pass) {
    const double c0 = opt.float_baseline ? fit.value("baseline") : fo.fixed_baseline;
    const double amp = 0.5 * fit.value("contrast"), phi0 = fit.value("phase");
    std::vector<double> sigma;
    for (double phase : scan.phases) {
      const double model = std::clamp(c0 - amp * std::cos(phase - phi0), 0.0, 1.0);
      const double pt = (model * n + 0.5) / (n + 1.0);
      sigma.push_back(std::sqrt(pt * (1.0 - pt) / n));
    }
    fit = fit_sinusoid(scan.phases, scan.p, sigma, fo);
  }
  return fit;
}

}  // namespace detail

/// Phase-scanned Ramsey fringes at each T, sinusoid fits for the contrast,
/// then an exponential fit of contrast versus T.
inline CoherenceResult ramsey_contrast_scan(const TransitionSpec& transition, const NoiseModel& noise,
                                            std::span<const double> ramsey_times, const ScanOptions& opt = {}) {
  noise.validate();
  if (ramsey_times.empty()) throw RangeError("empty Ramsey time grid");
  for (std::size_t i = 1; i < ramsey_times.size(); ++i)
    if (!(ramsey_times[i] > ramsey_times[i - 1])) throw RangeError("Ramsey times must ascend");
  if (opt.shots < 1) throw InvalidSequence("N_exp must be >= 1");
  const double rate = rabi_rate_of(transition);
  std::mt19937_64 rng(opt.seed);
  CoherenceResult res;
  for (double t : ramsey_times) {
    const auto scan = detail::phase_scan(
        [&](double phase) { return PulseSequence::ramsey(t, phase, rate); }, transition, noise, {}, opt, rng);
    const auto fit = detail::fit_fringe(scan, opt);
    res.ramsey_times.push_back(t);
    res.contrast.push_back(fit.value("contrast"));
    res.contrast_err.push_back(fit.sigma("contrast"));
  }
  res.decay_fit = fit_exp_decay(res.ramsey_times, res.contrast, res.contrast_err);
  res.tau = res.decay_fit.value("tau");
  res.tau_err = res.decay_fit.sigma("tau");
  res.initial_contrast = res.decay_fit.value("amplitude");
  res.gamma = constants::two_pi / res.tau;
  res.gamma_err = constants::two_pi * res.tau_err / (res.tau * res.tau);
  return res;
}

/// Noise-averaged Ramsey contrast for purely quasi-static Gaussian noise of
/// rms `sigma` (closed-form characteristic function), times exp(-rate T).
inline double quasi_static_contrast(const TransitionSpec& t, double sigma, double ramsey_time,
                                    double white_rate = 0.0) {
  const double alpha = constants::two_pi * t.sensitivity * ramsey_time;
  const double beta = constants::pi * t.curvature * ramsey_time;
  const double s2 = sigma * sigma;
  const double q = 1.0 + 4.0 * beta * beta * s2 * s2;
  return std::pow(q, -0.25) * std::exp(-alpha * alpha * s2 / (2.0 * q)) * std::exp(-white_rate * ramsey_time);
}

/// T where the quasi-static contrast first falls to 1/e.
inline double quasi_static_coherence_time(const TransitionSpec& t, double sigma, double white_rate = 0.0) {
  double hi = 1e-12;
  while (quasi_static_contrast(t, sigma, hi, white_rate) > std::exp(-1.0)) {
    hi *= 2.0;
    if (hi > 1e9) throw NonConvergent("contrast never decays to 1/e");
  }
  double lo = 0.5 * hi;
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (quasi_static_contrast(t, sigma, mid, white_rate) > std::exp(-1.0) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Evenly spaced grid span/points, 2 span/points, ..., span with span =
/// min(span_factor * tau_estimate, max_time).
inline std::vector<double> coherence_time_grid(double tau_estimate, int points, double span_factor = 1.5,
                                               double max_time = 1.4) {
  if (points < 2) throw RangeError("need at least two Ramsey times");
  const double span = std::min(span_factor * tau_estimate, max_time);
  std::vector<double> grid;
  for (int k = 1; k <= points; ++k) grid.push_back(span * k / points);
  return grid;
}

/// Contrast uncertainty a phase scan with `opt` reports for fringes of
/// contrast `c` around 1/2.
inline double expected_contrast_sigma(double c, const ScanOptions& opt) {
  std::vector<double> phases, p, sigma;
  const double n = opt.shots;
  for (int k = 0; k < opt.phase_points; ++k) {
    const double phase = constants::two_pi * k / opt.phase_points;
    const double prob = std::clamp(0.5 * (1.0 - c * std::cos(phase)), 0.0, 1.0);
    const double pt = (prob * n + 0.5) / (n + 1.0);
    phases.push_back(phase);
    p.push_back(prob);
    sigma.push_back(std::sqrt(pt * (1.0 - pt) / n));
  }
  return fit_sinusoid(phases, p, sigma, {opt.float_baseline, 0.5}).sigma("contrast");
}

/// Exponential-fit decay time of the noiseless quasi-static contrast on
/// `grid`, weighted as a scan with `opt` would weight it.
inline double fitted_quasi_static_tau(const TransitionSpec& t, double sigma, std::span<const double> grid,
                                      double white_rate = 0.0, const ScanOptions& opt = {}) {
  std::vector<double> c, e;
  for (double tt : grid) {
    c.push_back(quasi_static_contrast(t, sigma, tt, white_rate));
    e.push_back(expected_contrast_sigma(c.back(), opt));
  }
  return fit_exp_decay(grid, c, e).value("tau");
}

/// Quasi-static rms that makes the exponential fit on `grid` give
/// `target_tau` (bisection in log sigma).
inline double calibrate_quasi_static_rms(const TransitionSpec& t, double target_tau, std::span<const double> grid,
                                         double white_rate = 0.0, const ScanOptions& opt = {}) {
  double lo = 1e-12, hi = 1e-2;
  auto tau_of = [&](double s) { return fitted_quasi_static_tau(t, s, grid, white_rate, opt); };
  if (tau_of(hi) > target_tau || tau_of(lo) < target_tau)
    throw NoRootInBracket("target coherence time not reachable by quasi-static noise");
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (tau_of(mid) > target_tau ? lo : hi) = mid;
    if (hi / lo - 1.0 < 1e-9) break;
  }
  return std::sqrt(lo * hi);
}

// ---------------------------------------------------------------------------
// Spin-echo a.c. Zeeman sensing

struct EchoScanResult {
  std::vector<double> pulse_spacings;  // T_P, s
  std::vector<double> phase;           // accumulated, unwrapped, rad
  std::vector<double> phase_err;
  double slope = 0.0;      // rad/s
  double slope_err = 0.0;
  double shift_hz = 0.0;   // slope / 2 pi
};

/// Unwraps a phase sequence so successive values differ by less than pi.
inline std::vector<double> unwrap_phase(std::span<const double> wrapped) {
  std::vector<double> out(wrapped.begin(), wrapped.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    double d = out[i] - out[i - 1];
    d = std::remainder(d, constants::two_pi);
    out[i] = out[i - 1] + d;
  }
  return out;
}

/// Spin echo with the differential a.c. Zeeman shift switched on in the second
/// free evolution (after the RF ramp, before the ramp back). The fringe phase
/// is fitted at each T_P, unwrapped, and a line through phase(T_P) gives the
/// shift.
inline EchoScanResult spin_echo_acz_scan(const TransitionSpec& transition, const SensingRun& run,
                                         double bosc_at_urf, std::span<const double> pulse_spacings,
                                         const NoiseModel& noise, const ScanOptions& opt = {}) {
  if (pulse_spacings.size() < 2) throw RangeError("need at least two T_P values");
  const double shift = differential_shift_vs_du(bosc_at_urf, run.u_rf, run.delta_u_rf, run.quadratic_sensitivity);
  const double rate = rabi_rate_of(transition);
  const double pi2 = constants::pi / (2.0 * rate), pi1 = constants::pi / rate;
  std::mt19937_64 rng(opt.seed);
  EchoScanResult res;
  std::vector<double> wrapped;
  for (double tp : pulse_spacings) {
    SensingRun r = run;
    r.pulse_spacing = tp;
    r.validate();
    if (tp < 2.0 * run.ramp_duration) throw RangeError("T_P shorter than the RF ramps");
    const double on = pi2 + tp + pi1 + run.ramp_duration;
    const double off = pi2 + tp + pi1 + tp - run.ramp_duration;
    const DetuningFn det = [=](double t) { return (t >= on && t < off) ? shift : 0.0; };
    // The step edges fall inside a wait; split it there so the quadrature
    // sees smooth pieces.
    auto make = [&](double phase) {
      PulseSequence s;
      s.segments = {Pulse{constants::pi / 2, 0.0, rate}, Wait{tp}, Pulse{constants::pi, 0.0, rate},
                    Wait{run.ramp_duration}, Marker{"ramp done"}, Wait{tp - 2.0 * run.ramp_duration},
                    Marker{"ramp back"}, Wait{run.ramp_duration}, Pulse{constants::pi / 2, phase, rate}};
      return s;
    };
    const auto scan = detail::phase_scan(make, transition, noise, det, opt, rng);
    const auto fit = detail::fit_fringe(scan, opt);
    res.pulse_spacings.push_back(tp);
    wrapped.push_back(std::remainder(fit.value("phase") - constants::pi, constants::two_pi));
    res.phase_err.push_back(fit.sigma("phase"));
  }
  res.phase = unwrap_phase(wrapped);
  const auto line = fit_line(res.pulse_spacings, res.phase, res.phase_err);
  res.slope = line.value("slope");
  res.slope_err = line.sigma("slope");
  res.shift_hz = res.slope / constants::two_pi;
  return res;
}

// ---------------------------------------------------------------------------
// Field stabilisation

struct ControllerConfig {
  bool closed_loop = true;
  double interval = 300.0;              // s between corrections
  double target_field = 10.9584e-3;     // T
  double calibration = 0.26e-3;         // T/A, longitudinal shim pair
  double current_resolution = 3e-6;     // A
  double max_current = 0.1;             // A
  double initial_current = 0.0;         // A
  double probe_sensitivity = -21.764e9; // Hz/T of the probe transition
  double probe_uncertainty = 500.0;     // Hz, bound of the frequency-measurement error
  double sample_interval = 10.0;        // s
  double duration = 8.0 * 3600.0;       // s
  std::uint64_t seed = 1;

  /// Deadband equals the field-measurement uncertainty.
  double deadband() const { return probe_uncertainty / std::abs(probe_sensitivity); }
};

struct StabilizationSample {
  double time = 0.0;            // s
  double true_field = 0.0;      // T
  double measured_field = 0.0;  // T, last probe reading (NaN before the first)
  double shim_current = 0.0;    // A
  double relative_deviation = 0.0;
};

struct StabilizationTrace {
  std::vector<StabilizationSample> samples;
  int corrections = 0;
  double rms_relative_deviation = 0.0;
  double max_relative_deviation = 0.0;

  /// |B(t0 + window) - B(t0)| / B_target, largest over t0 (sampled).
  double max_change_within(double window) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t j = i + 1; j < samples.size() && samples[j].time - samples[i].time <= window + 1e-9; ++j)
        worst = std::max(worst, std::abs(samples[j].relative_deviation - samples[i].relative_deviation));
    return worst;
  }
};

/// Drift of |B| (from `drift`) plus shim field, probed every `interval` via
/// the probe-transition frequency with an error uniform in
/// +-probe_uncertainty; a proportional step cancels the full measured error
/// when it exceeds the deadband. Currents are quantised to the supply
/// resolution.
inline StabilizationTrace stabilization_loop(const NoiseModel& drift, const ControllerConfig& cfg) {
  drift.validate();
  if (!(cfg.interval > 0.0) || !(cfg.sample_interval > 0.0) || !(cfg.duration > 0.0))
    throw RangeError("stabilisation times must be positive");
  if (!(cfg.calibration > 0.0) || !(cfg.current_resolution > 0.0))
    throw RangeError("coil calibration and resolution must be positive");
  if (std::abs(cfg.initial_current) > cfg.max_current) throw ActuatorSaturation("initial current beyond the supply limit");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  NoiseModel process = drift;
  FieldNoise field_drift(process, rng);
  auto quantise = [&](double i) { return std::round(i / cfg.current_resolution) * cfg.current_resolution; };

  StabilizationTrace trace;
  double current = quantise(cfg.initial_current);
  const double base = cfg.target_field - cfg.calibration * current;
  double measured = std::nan("");
  double next_check = cfg.interval;
  const auto n = static_cast<long>(std::floor(cfg.duration / cfg.sample_interval + 1e-9));
  double sum_sq = 0.0;
  for (long k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * cfg.sample_interval;
    if (k > 0) field_drift.advance(cfg.sample_interval);
    auto true_field = [&] { return base + field_drift.value() + cfg.calibration * current; };
    if (cfg.closed_loop && t + 1e-9 >= next_check) {
      next_check += cfg.interval;
      const double probe = cfg.probe_sensitivity * (true_field() - cfg.target_field) + cfg.probe_uncertainty * unit(rng);
      measured = cfg.target_field + probe / cfg.probe_sensitivity;
      const double error = measured - cfg.target_field;
      if (std::abs(error) > cfg.deadband()) {
        const double next = quantise(current - error / cfg.calibration);
        if (std::abs(next) > cfg.max_current)
          throw ActuatorSaturation("shim current " + std::to_string(next) + " A beyond the supply limit");
        if (next != current) ++trace.corrections;
        current = next;
      }
    }
    const double b = true_field();
    const double rel = (b - cfg.target_field) / cfg.target_field;
    trace.samples.push_back({t, b, measured, current, rel});
    sum_sq += rel * rel;
    trace.max_relative_deviation = std::max(trace.max_relative_deviation, std::abs(rel));
  }
  trace.rms_relative_deviation = std::sqrt(sum_sq / static_cast<double>(trace.samples.size()));
  return trace;
}

/// Open-loop drift of `relative_rate` per hour at field `b0`.
inline NoiseModel linear_drift(double b0, double relative_per_hour, std::uint64_t seed = 1) {
  NoiseModel m;
  m.components.push_back({NoiseKind::drift_ramp, 0.0, 0.0, relative_per_hour * b0 / 3600.0});
  m.seed = seed;
  return m;
}

}  // namespace qfield
