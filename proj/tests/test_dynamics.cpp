#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qfield/dynamics.hpp"

using namespace qfield;

namespace {

const HyperfineSystem mg = HyperfineSystem::magnesium25();
constexpr double b_op = 10.9584e-3;

TransitionSpec transition(TransitionTag tag, double coupling = 28.5e3) { return make_transition(mg, b_op, tag, coupling); }

NoiseModel quasi_static(double rms, std::uint64_t seed = 1) {
  NoiseModel m;
  m.components.push_back({NoiseKind::quasi_static, rms, 0.0, 0.0});
  m.seed = seed;
  return m;
}

double rabi_closed_form(double rabi_hz, double detuning_hz, double duration) {
  const double w = constants::two_pi * std::hypot(rabi_hz, detuning_hz);
  return rabi_hz * rabi_hz / (rabi_hz * rabi_hz + detuning_hz * detuning_hz) * std::pow(std::sin(0.5 * w * duration), 2);
}

}  // namespace

TEST(TwoLevel, RandomSequencesPreserveNorm) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto t = transition(TransitionTag::MW1, 38.3e3);
  NoiseModel noise = quasi_static(1e-7);
  noise.components.push_back({NoiseKind::ornstein_uhlenbeck, 2e-8, 1e-3, 0.0});
  noise.white_dephasing_rate = 5.0;
  for (int trial = 0; trial < 50; ++trial) {
    PulseSequence seq;
    for (int k = 0; k < 6; ++k) {
      seq.segments.push_back(Pulse{constants::two_pi * u(rng), constants::two_pi * u(rng), 1e5 * (0.5 + u(rng))});
      seq.segments.push_back(Wait{1e-4 * u(rng)});
    }
    std::mt19937_64 shot_rng(trial);
    FieldNoise f(noise, shot_rng);
    const auto out = run_shot(seq, t, f, [](double tt) { return 1e3 * std::sin(1e4 * tt); });
    EXPECT_NEAR(out.norm, 1.0, 1e-12);
    EXPECT_GE(out.probability, 0.0);
    EXPECT_LE(out.probability, 1.0);
  }
}

TEST(Rabi, OnResonancePiPulseTransfersFully) {
  const auto t = transition(TransitionTag::MW0, 161e3);
  const std::vector<double> zero{0.0};
  EXPECT_NEAR(rabi_scan(t, zero)[0].probability, 1.0, 1e-12);
  // pi time of the MW0 drive
  const Pulse pi_pulse{constants::pi, 0.0, rabi_rate_of(t)};
  EXPECT_NEAR(pi_pulse.duration(), 3.1e-6, 0.05e-6);
}

TEST(Rabi, MatchesClosedFormLineshape) {
  const auto t = transition(TransitionTag::MW2, 28.5e3);
  std::vector<double> det;
  for (int k = -20; k <= 20; ++k) det.push_back(5e3 * k);
  det.push_back(28.5e3);
  const auto scan = rabi_scan(t, det);
  const double dur = 0.5 / 28.5e3;
  for (const auto& p : scan) EXPECT_NEAR(p.probability, rabi_closed_form(28.5e3, p.detuning, dur), 1e-12);
  // Detuning equal to the Rabi frequency: sin^2(pi/sqrt 2)/2.
  EXPECT_NEAR(scan.back().probability, 0.5 * std::pow(std::sin(constants::pi / std::sqrt(2.0)), 2), 1e-12);
  EXPECT_NEAR(scan.back().probability, 0.3165, 1e-4);
}

TEST(Ramsey, NoiselessFringe) {
  const auto t = transition(TransitionTag::MW2);
  for (double phase : {0.0, 0.4, 1.7, 3.14159, 5.0}) {
    const auto p = evolve_sequence(PulseSequence::ramsey(0.5, phase, rabi_rate_of(t)), t, NoiseModel{});
    ASSERT_EQ(p.size(), 1u);
    EXPECT_NEAR(p[0], 0.5 * (1.0 - std::cos(phase)), 1e-12);
  }
}

TEST(SpinEcho, RefocusesConstantOffsets) {
  const auto t = transition(TransitionTag::MW1, 38.3e3);
  const auto seq = PulseSequence::spin_echo(2e-3, 0.0, rabi_rate_of(t));
  const auto noise = quasi_static(3e-7, 5);
  std::mt19937_64 rng(noise.seed);
  for (int shot = 0; shot < 100; ++shot) {
    FieldNoise f(noise, rng);
    const auto out = run_shot(seq, t, f, [](double) { return 1234.5; });
    EXPECT_EQ(out.net_phase, 0.0);
  }
  // With noise acting only between the pulses, the echo returns every shot.
  for (double p : evolve_sequence(PulseSequence{seq.segments, 50}, t, noise)) EXPECT_NEAR(p, 1.0, 1e-12);
}

TEST(PulseSequence, Validation) {
  EXPECT_THROW(PulseSequence::ramsey(1.6, 0.0, 1e5).validate(), InvalidSequence);
  EXPECT_THROW((PulseSequence{{Wait{-1.0}}, 1}).validate(), InvalidSequence);
  EXPECT_THROW((PulseSequence{{Pulse{1.0, 0.0, 0.0}}, 1}).validate(), InvalidSequence);
  EXPECT_THROW((PulseSequence{{Wait{0.1}}, 0}).validate(), InvalidSequence);
  EXPECT_NO_THROW(PulseSequence::spin_echo(0.7, 0.0, 1e5).validate());
}

TEST(Determinism, SameSeedSameShots) {
  const auto t = transition(TransitionTag::MW1, 38.3e3);
  NoiseModel n = quasi_static(1e-8, 99);
  n.components.push_back({NoiseKind::ornstein_uhlenbeck, 1e-8, 1e-4, 0.0});
  const auto seq = PulseSequence::ramsey(1e-4, 0.3, rabi_rate_of(t), 20);
  const auto a = evolve_sequence(seq, t, n), b = evolve_sequence(seq, t, n);
  EXPECT_EQ(a, b);
  n.seed = 100;
  EXPECT_NE(a, evolve_sequence(seq, t, n));
}

TEST(FieldNoise, OrnsteinUhlenbeckStatistics) {
  NoiseModel n;
  n.components.push_back({NoiseKind::ornstein_uhlenbeck, 1.0, 1.0, 0.0});
  std::mt19937_64 rng(4);
  const int paths = 4000;
  double v0 = 0, v1 = 0, c01 = 0;
  for (int i = 0; i < paths; ++i) {
    FieldNoise f(n, rng);
    const double a = f.value();
    f.advance(1.0);
    const double b = f.value();
    v0 += a * a, v1 += b * b, c01 += a * b;
  }
  EXPECT_NEAR(v0 / paths, 1.0, 0.1);
  EXPECT_NEAR(v1 / paths, 1.0, 0.1);
  EXPECT_NEAR(c01 / paths, std::exp(-1.0), 0.06);
}

TEST(FieldNoise, DriftRampIntegralsAreExact) {
  NoiseModel n;
  n.components.push_back({NoiseKind::drift_ramp, 0.0, 0.0, 2.0});
  std::mt19937_64 rng(1);
  FieldNoise f(n, rng);
  const auto in = f.integrate(3.0);
  EXPECT_NEAR(in.first, 9.0, 1e-12);          // int 2t dt
  EXPECT_NEAR(in.second, 4.0 * 9.0, 1e-12);   // int 4t^2 dt
  EXPECT_NEAR(f.value(), 6.0, 1e-12);
}

TEST(QuasiStatic, ClosedFormContrastMatchesMonteCarlo) {
  const auto t = transition(TransitionTag::MW2);
  const double sigma = 5e-7, T = 1.2;
  const auto noise = quasi_static(sigma, 3);
  std::mt19937_64 rng(3);
  std::complex<double> acc = 0.0;
  const int n = 40000;
  for (int k = 0; k < n; ++k) {
    FieldNoise f(noise, rng);
    const auto in = f.integrate(T);
    acc += std::polar(1.0, constants::two_pi * (t.sensitivity * in.first + 0.5 * t.curvature * in.second));
  }
  EXPECT_NEAR(std::abs(acc) / n, quasi_static_contrast(t, sigma, T), 4.0 / std::sqrt(n));
}

TEST(RamseyScan, NoNoiseKeepsFullContrast) {
  const auto t = transition(TransitionTag::MW1, 38.3e3);
  const std::vector<double> grid{1e-4, 2e-4, 3e-4, 4e-4};
  ScanOptions opt;
  opt.phase_points = 24;
  const auto r = ramsey_contrast_scan(t, NoiseModel{}, grid, opt);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(r.contrast[i], 1.0, 3.0 * r.contrast_err[i] + 1e-3);
  const std::vector<double> descending{2e-4, 1e-4};
  EXPECT_THROW(ramsey_contrast_scan(t, NoiseModel{}, descending, opt), RangeError);
}

TEST(RamseyScan, DecayRateScalesWithSensitivity) {
  const double sigma = 2e-7;
  const auto noise = quasi_static(sigma, 21);
  std::vector<double> ratio, err;
  for (auto tag : {TransitionTag::MW0, TransitionTag::MW1, TransitionTag::RF0}) {
    const auto t = transition(tag);
    const auto grid = coherence_time_grid(quasi_static_coherence_time(t, sigma), 8);
    ScanOptions opt;
    opt.phase_points = 48;
    opt.seed = 5 + static_cast<int>(tag);
    const auto r = ramsey_contrast_scan(t, noise, grid, opt);
    ratio.push_back(r.gamma / std::abs(t.sensitivity));
    err.push_back(r.gamma_err / std::abs(t.sensitivity));
  }
  for (std::size_t i = 0; i < ratio.size(); ++i)
    for (std::size_t j = i + 1; j < ratio.size(); ++j)
      EXPECT_LE(std::abs(ratio[i] - ratio[j]), 2.0 * std::hypot(err[i], err[j])) << i << " vs " << j;
}

TEST(Calibration, FittedTauHitsTarget) {
  const auto t = transition(TransitionTag::MW2);
  const auto grid = coherence_time_grid(1e30, 8, 1.5, 1.4);
  const double rms = calibrate_quasi_static_rms(t, 6.6, grid, 0.002);
  EXPECT_NEAR(fitted_quasi_static_tau(t, rms, grid, 0.002), 6.6, 1e-6);
  EXPECT_THROW(calibrate_quasi_static_rms(t, 1e9, grid, 0.002), NoRootInBracket);
}

TEST(EchoScan, UnwrapsSyntheticRamp) {
  std::vector<double> wrapped, truth;
  for (int k = 0; k < 40; ++k) {
    truth.push_back(0.9 * k - 2.0);
    wrapped.push_back(std::remainder(truth.back(), constants::two_pi));
  }
  const auto u = unwrap_phase(wrapped);
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(u[k] - u[0], truth[k] - truth[0], 1e-12);
}

TEST(EchoScan, RecoversDifferentialShift) {
  const auto t = transition(TransitionTag::MW2);
  SensingRun run;
  run.delta_u_rf = 10.0;
  run.quadratic_sensitivity = 4.783e12;
  const double bosc = 5.239e-6;
  std::vector<double> tps;
  for (int k = 1; k <= 10; ++k) tps.push_back(2e-3 * k);
  ScanOptions opt;
  opt.phase_points = 32;
  const auto r = spin_echo_acz_scan(t, run, bosc, tps, NoiseModel{}, opt);
  const double expected = differential_shift_vs_du(bosc, run.u_rf, run.delta_u_rf, run.quadratic_sensitivity);
  EXPECT_NEAR(r.shift_hz, expected, 3.0 * r.slope_err / constants::two_pi);
  run.delta_u_rf = 0.0;
  const auto zero = spin_echo_acz_scan(t, run, bosc, tps, NoiseModel{}, opt);
  EXPECT_NEAR(zero.shift_hz, 0.0, 3.0 * zero.slope_err / constants::two_pi);
  tps.front() = 1e-4;  // shorter than the two RF ramps
  EXPECT_THROW(spin_echo_acz_scan(t, run, bosc, tps, NoiseModel{}, opt), RangeError);
}

TEST(Stabilization, OpenLoopDriftRate) {
  ControllerConfig c;
  c.closed_loop = false;
  const auto trace = stabilization_loop(linear_drift(c.target_field, 1e-4), c);
  EXPECT_NEAR(trace.max_change_within(3600.0), 1e-4, 1e-9);
  EXPECT_EQ(trace.corrections, 0);
}

TEST(Stabilization, ClosedLoopHoldsFieldWithQuantisedSteps) {
  ControllerConfig c;
  c.interval = 300.0;
  const auto trace = stabilization_loop(linear_drift(c.target_field, 1e-4), c);
  EXPECT_LE(trace.rms_relative_deviation, 2e-5);
  EXPECT_LE(trace.max_relative_deviation, 2e-5);
  EXPECT_GT(trace.corrections, 0);
  for (const auto& s : trace.samples) {
    const double steps = s.shim_current / c.current_resolution;
    EXPECT_NEAR(steps, std::round(steps), 1e-6);
  }
}

TEST(Stabilization, QuiescentWithoutDrift) {
  ControllerConfig c;
  const auto trace = stabilization_loop(NoiseModel{}, c);
  EXPECT_EQ(trace.corrections, 0);
  for (const auto& s : trace.samples) EXPECT_EQ(s.shim_current, 0.0);
}

TEST(Stabilization, SaturatesBeyondSupplyLimit) {
  ControllerConfig c;
  // 0.1 A x 0.26 mT/A = 26 uT is about 2.4e-3 relative.
  EXPECT_THROW(stabilization_loop(linear_drift(c.target_field, 1e-2), c), ActuatorSaturation);
}
