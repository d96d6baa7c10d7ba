#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qfield/hyperfine.hpp"

using namespace qfield;

namespace {

const HyperfineSystem mg = HyperfineSystem::magnesium25();
constexpr double b_op = 10.9584e-3;

BreitRabiBranch branch_of(const StateLabel& s) {
  return s.F > mg.nuclear_spin ? BreitRabiBranch::upper_f : BreitRabiBranch::lower_f;
}

// Second derivative from non-degenerate perturbation theory:
// E_i'' = 2 sum_j |<j|dH/dB|i>|^2 / (E_i - E_j).
double perturbative_curvature(const Eigensystem& es, std::size_t i) {
  const auto basis = product_basis(mg);
  const std::size_t n = basis.size();
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    double v = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto [mI, mJ] = basis[r];
      v += es.vectors(r, j) * es.vectors(r, i) * mg.bohr_magneton * (mg.electronic_g * mJ + mg.nuclear_g * mI);
    }
    if (v * v > 0.0) s += 2.0 * v * v / (es.energies[i] - es.energies[j]);
  }
  return s;
}

}  // namespace

TEST(Hamiltonian, SymmetricAndTraceless) {
  const Matrix h = build_hamiltonian(mg, b_op);
  ASSERT_EQ(h.rows(), 12u);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(h(i, j), h(j, i));
  EXPECT_NEAR(h.trace(), 0.0, 1e-6);
}

TEST(Eigensystem, ZeroFieldGivesHyperfineManifolds) {
  const auto es = eigensystem(mg, 0.0);
  for (std::size_t k = 0; k < es.energies.size(); ++k) {
    const double F = es.labels[k].F;
    const double expected = 0.5 * mg.hyperfine_constant * (F * (F + 1) - 2.5 * 3.5 - 0.75);
    EXPECT_NEAR(es.energies[k], expected, 1e-6);
  }
  // F = 3 lies below F = 2 for A < 0, splitting 3A.
  EXPECT_NEAR(es.energy({2, 0}) - es.energy({3, 0}), -3.0 * mg.hyperfine_constant, 1e-6);
}

TEST(Eigensystem, MatchesBreitRabiForRandomFields) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 20e-3);
  for (int n = 0; n < 100; ++n) {
    const double b = u(rng);
    const auto es = eigensystem(mg, b);
    ASSERT_EQ(es.energies.size(), 12u);
    for (std::size_t k = 0; k < 12; ++k) {
      const double oracle = breit_rabi_oracle(mg, b, es.labels[k].mF, branch_of(es.labels[k]));
      EXPECT_LT(std::abs(es.energies[k] - oracle), 1e-9 * std::abs(oracle)) << b << " " << to_string(es.labels[k]);
    }
  }
}

TEST(Eigensystem, LabelsAreUniqueAndComplete) {
  const auto es = eigensystem(mg, 15e-3);
  std::vector<StateLabel> labels = es.labels;
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(std::adjacent_find(labels.begin(), labels.end()), labels.end());
  EXPECT_EQ(std::count_if(labels.begin(), labels.end(), [](auto& s) { return s.F == 3; }), 7);
  EXPECT_THROW(es.index_of({4, 0}), UnknownLevel);
}

TEST(Eigensystem, ErrorCases) {
  EXPECT_THROW(eigensystem(mg, -1e-3), RangeError);
  HyperfineSystem degenerate = mg;
  degenerate.hyperfine_constant = 0.0;
  EXPECT_THROW(eigensystem(degenerate, 1e-3), DegenerateLabeling);
  HyperfineSystem j1 = mg;
  j1.electronic_spin = 1.5;
  EXPECT_THROW(breit_rabi_oracle(j1, 1e-3, 0.0, BreitRabiBranch::upper_f), NotApplicable);
}

TEST(Transitions, TableOneFrequenciesAndSensitivities) {
  struct Row {
    TransitionTag tag;
    double freq, sens;
  };
  const Row rows[] = {{TransitionTag::MW0, 1541.066e6, -21.764e9},
                      {TransitionTag::MW1, 1655.815e6, -10.116e9},
                      {TransitionTag::MW2, 1762.97381160e6, 0.0},
                      {TransitionTag::RF0, 55.260e6, 5.381e9}};
  for (const auto& r : rows) {
    const auto t = make_transition(mg, b_op, r.tag, 1.0);
    EXPECT_NEAR(t.frequency, r.freq, 5e3) << to_string(r.tag);
    if (r.sens != 0.0) {
      EXPECT_NEAR(t.sensitivity, r.sens, 0.005 * std::abs(r.sens)) << to_string(r.tag);
    } else {
      EXPECT_LT(std::abs(t.sensitivity), 0.1e9 * 1e-3);  // |0(1) x 1e-4 MHz/mT|
    }
  }
}

TEST(Transitions, SensitivityMatchesFiniteDifference) {
  for (auto tag : all_transition_tags) {
    const auto l = labels_for(tag);
    const double h = 1e-7;
    const double fd = (transition_frequency(mg, b_op + h, l) - transition_frequency(mg, b_op - h, l)) / (2 * h);
    EXPECT_NEAR(field_sensitivity(mg, b_op, l), fd, 1e-6 * std::abs(fd) + 2.0) << to_string(tag);
  }
}

TEST(Transitions, CurvatureMatchesPerturbationTheory) {
  const auto es = eigensystem(mg, b_op);
  for (auto tag : all_transition_tags) {
    const auto l = labels_for(tag);
    const double oracle = perturbative_curvature(es, es.index_of(l.upper)) -
                          perturbative_curvature(es, es.index_of(l.lower));
    EXPECT_NEAR(curvature(mg, b_op, l), oracle, 1e-6 * std::abs(oracle)) << to_string(tag);
  }
}

TEST(Transitions, ClockQuadraticCoefficient) {
  const auto t = make_transition(mg, b_op, TransitionTag::MW2, 28.5e3);
  // 217 kHz/mT^2 = 2.17e11 Hz/T^2
  EXPECT_NEAR(t.quadratic_coefficient(), 2.17e11, 0.02 * 2.17e11);
}

TEST(Transitions, StretchStateIsLinearInField) {
  // |F=3, m_F=3> is a pure product state; its energy has no curvature.
  const auto es = eigensystem(mg, b_op);
  EXPECT_NEAR(perturbative_curvature(es, es.index_of({3, 3})), 0.0, 1e-3);
  const double h = 1e-4;
  const double e0 = eigensystem(mg, b_op).energy({3, 3});
  const double ep = eigensystem(mg, b_op + h).energy({3, 3});
  const double em = eigensystem(mg, b_op - h).energy({3, 3});
  EXPECT_NEAR((ep + em - 2 * e0) / (h * h), 0.0, 1e4);
}

TEST(ClockField, FindsMw2RootAndRejectsEmptyBracket) {
  const double b = find_clock_field(mg, labels_for(TransitionTag::MW2), b_op);
  EXPECT_NEAR(b, 10.958e-3, 0.02e-3);
  EXPECT_LT(std::abs(field_sensitivity(mg, b, labels_for(TransitionTag::MW2))), 1e3);
  EXPECT_THROW(find_clock_field(mg, labels_for(TransitionTag::MW0), b_op), NoRootInBracket);
}

TEST(DetuningCurve, ParabolicAroundClockField) {
  const auto l = labels_for(TransitionTag::MW2);
  const double bc = find_clock_field(mg, l, b_op);
  const auto curve = detuning_curve(mg, l, bc, 20e-6, 5);
  ASSERT_EQ(curve.size(), 5u);
  const double c = curvature(mg, bc, l);
  for (const auto& p : curve)
    EXPECT_NEAR(p.frequency_offset, 0.5 * c * p.field_offset * p.field_offset, 1e-3 + 1e-4 * std::abs(p.frequency_offset));
  EXPECT_THROW(detuning_curve(mg, l, 1e-6, 1e-5, 3), RangeError);
}

TEST(Transitions, SpatialVariationFromGradient) {
  const auto t = make_transition(mg, b_op, TransitionTag::MW2, 28.5e3);
  const double v = quadratic_spatial_variation(t.curvature, 11e-9 / 1e-6);  // Hz/m^2
  EXPECT_LE(v * 1e-12, 26e-6 * 1.01);  // Hz/um^2
}

TEST(TransitionTags, ParseRoundTrip) {
  for (auto tag : all_transition_tags) EXPECT_EQ(parse_transition_tag(to_string(tag)), tag);
  EXPECT_FALSE(parse_transition_tag("MW9"));
}
