#pragma once

// Weighted least-squares fits used by the experiment-shaped outputs.
//
// Uncertainties are 1 sigma from the inverse curvature matrix (J^T W J)^-1
// with absolute weights 1/sigma^2; they are not rescaled by the reduced
// chi-square. `rss` is the weighted residual sum of squares (chi-square).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfield/error.hpp"
#include "qfield/linalg.hpp"
#include "qfield/units.hpp"

namespace qfield {

struct FitParameter {
  std::string name;
  double value = 0.0;
  double sigma = 0.0;
};

struct FitResult {
  std::vector<FitParameter> parameters;
  double rss = 0.0;
  bool converged = false;
  int iterations = 0;

  const FitParameter& operator[](std::string_view name) const {
    for (const auto& p : parameters)
      if (p.name == name) return p;
    throw FitFailure("no fit parameter named '" + std::string(name) + "'");
  }
  double value(std::string_view name) const { return (*this)[name].value; }
  double sigma(std::string_view name) const { return (*this)[name].sigma; }
};

namespace detail {

inline void check_inputs(std::span<const double> x, std::span<const double> y,
                         std::span<const double> sigma, std::size_t min_points) {
  if (x.size() != y.size() || x.size() != sigma.size())
    throw FitFailure("x, y and sigma must have the same length");
  if (x.size() < min_points)
    throw FitFailure("need at least " + std::to_string(min_points) + " points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i])) throw FitFailure("sigma must be positive and finite");
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw FitFailure("non-finite data");
  }
}

struct LinearSolution {
  std::vector<double> params;
  Matrix covariance;
  double chi2 = 0.0;
};

/// Weighted linear least squares for y ~ sum_k p_k f_k(x).
inline LinearSolution weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                                          std::span<const double> sigma,
                                          const std::vector<std::function<double(double)>>& basis) {
  const std::size_t m = basis.size();
  Matrix normal(m, m);
  std::vector<double> rhs(m, 0.0);
  std::vector<double> row(m);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 1.0 / (sigma[i] * sigma[i]);
    for (std::size_t k = 0; k < m; ++k) row[k] = basis[k](x[i]);
    for (std::size_t a = 0; a < m; ++a) {
      rhs[a] += w * row[a] * y[i];
      for (std::size_t b = 0; b < m; ++b) normal(a, b) += w * row[a] * row[b];
    }
  }
  auto inv = spd_inverse(normal);
  if (!inv) throw FitFailure("singular normal equations");
  LinearSolution sol;
  sol.params.assign(m, 0.0);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) sol.params[a] += (*inv)(a, b) * rhs[b];
  sol.covariance = *inv;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double model = 0.0;
    for (std::size_t k = 0; k < m; ++k) model += sol.params[k] * basis[k](x[i]);
    const double r = (y[i] - model) / sigma[i];
    sol.chi2 += r * r;
  }
  return sol;
}

struct LmOutcome {
  std::vector<double> params;
  Matrix covariance;
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) for a model with analytic
/// gradient. `model(x, p, grad)` returns f(x; p) and fills df/dp.
inline LmOutcome levenberg_marquardt(
    std::span<const double> x, std::span<const double> y, std::span<const double> sigma,
    std::vector<double> p,
    const std::function<double(double, const std::vector<double>&, std::vector<double>&)>& model,
    int max_iterations = 500) {
  const std::size_t m = p.size();
  std::vector<double> grad(m);
  auto chi2_of = [&](const std::vector<double>& q) {
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = (y[i] - model(x[i], q, grad)) / sigma[i];
      c += r * r;
    }
    return c;
  };
  auto normal_equations = [&](const std::vector<double>& q, Matrix& a, std::vector<double>& g) {
    a = Matrix(m, m);
    g.assign(m, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = 1.0 / (sigma[i] * sigma[i]);
      const double r = y[i] - model(x[i], q, grad);
      for (std::size_t k = 0; k < m; ++k) {
        g[k] += w * grad[k] * r;
        for (std::size_t l = 0; l < m; ++l) a(k, l) += w * grad[k] * grad[l];
      }
    }
  };

  LmOutcome out;
  double lambda = 1e-3;
  double chi2 = chi2_of(p);
  Matrix a;
  std::vector<double> g;
  int it = 0;
  for (; it < max_iterations; ++it) {
    normal_equations(p, a, g);
    bool improved = false;
    double step_size = 0.0;
    for (int tries = 0; tries < 40 && !improved; ++tries) {
      Matrix damped = a;
      for (std::size_t k = 0; k < m; ++k) damped(k, k) *= 1.0 + lambda;
      auto inv = spd_inverse(damped);
      if (!inv) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> trial = p;
      step_size = 0.0;
      double scale = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        double d = 0.0;
        for (std::size_t l = 0; l < m; ++l) d += (*inv)(k, l) * g[l];
        trial[k] += d;
        step_size = std::max(step_size, std::abs(d));
        scale = std::max(scale, std::abs(p[k]));
      }
      step_size /= std::max(scale, 1e-300);
      const double trial_chi2 = chi2_of(trial);
      if (trial_chi2 <= chi2) {
        improved = true;
        const double drop = chi2 - trial_chi2;
        p = std::move(trial);
        chi2 = trial_chi2;
        lambda = std::max(lambda * 0.1, 1e-12);
        if (step_size < 1e-14 || drop <= 1e-15 * std::max(chi2, 1e-300)) {
          out.converged = true;
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) {
      // No downhill step at any damping: already at the minimum.
      out.converged = true;
    }
    if (out.converged) break;
  }
  normal_equations(p, a, g);
  auto cov = spd_inverse(a);
  if (!cov) throw FitFailure("singular curvature matrix at the solution");
  out.params = std::move(p);
  out.covariance = *cov;
  out.chi2 = chi2;
  out.iterations = it + 1;
  return out;
}

inline double safe_sqrt(double v) { return v > 0.0 ? std::sqrt(v) : 0.0; }

}  // namespace detail

struct SinusoidFitOptions {
  bool float_baseline = true;
  double fixed_baseline = 0.5;
};

/// P(phi) = c0 - (C/2) cos(phi - phi0) at unit angular frequency in phi.
/// The model is linear in (c0, C/2 cos phi0, C/2 sin phi0), so the weighted
/// least-squares optimum is obtained directly (the discrete-Fourier estimate
/// on a uniform grid) with no iteration.
inline FitResult fit_sinusoid(std::span<const double> phase, std::span<const double> p,
                              std::span<const double> sigma, const SinusoidFitOptions& opt = {}) {
  detail::check_inputs(phase, p, sigma, 5);
  const auto [lo, hi] = std::minmax_element(phase.begin(), phase.end());
  if (!(*hi - *lo > constants::pi)) throw FitFailure("phase points must span more than pi");

  std::vector<std::function<double(double)>> basis{
      [](double x) { return -std::cos(x); }, [](double x) { return -std::sin(x); }};
  std::vector<double> target(p.begin(), p.end());
  if (opt.float_baseline) {
    basis.insert(basis.begin(), [](double) { return 1.0; });
  } else {
    for (auto& v : target) v -= opt.fixed_baseline;
  }
  const auto sol = detail::weighted_linear_fit(phase, target, sigma, basis);
  const std::size_t off = opt.float_baseline ? 1 : 0;
  const double a = sol.params[off], b = sol.params[off + 1];
  const double va = sol.covariance(off, off), vb = sol.covariance(off + 1, off + 1);
  const double cab = sol.covariance(off, off + 1);
  const double r = std::hypot(a, b);

  double sigma_c = 0.0, sigma_phi = constants::pi;
  if (r > 0.0) {
    sigma_c = 2.0 * detail::safe_sqrt((a * a * va + b * b * vb + 2 * a * b * cab) / (r * r));
    sigma_phi = detail::safe_sqrt((b * b * va + a * a * vb - 2 * a * b * cab) / (r * r * r * r));
  } else {
    sigma_c = 2.0 * detail::safe_sqrt(0.5 * (va + vb));
  }

  FitResult res;
  res.parameters.push_back({"contrast", 2.0 * r, sigma_c});
  res.parameters.push_back({"phase", r > 0.0 ? std::atan2(b, a) : 0.0, sigma_phi});
  if (opt.float_baseline) {
    res.parameters.push_back({"baseline", sol.params[0], detail::safe_sqrt(sol.covariance(0, 0))});
  } else {
    res.parameters.push_back({"baseline", opt.fixed_baseline, 0.0});
  }
  res.rss = sol.chi2;
  res.iterations = 1;
  // Contrast outside [0, 1 + 3 sigma] means the data are not a fringe.
  res.converged = 2.0 * r <= 1.0 + 3.0 * sigma_c;
  return res;
}

/// C(T) = C0 exp(-T / tau). Seeded from a weighted log-linear fit, refined
/// by Levenberg-Marquardt; tau is the 1/e duration.
inline FitResult fit_exp_decay(std::span<const double> t, std::span<const double> c,
                               std::span<const double> sigma) {
  detail::check_inputs(t, c, sigma, 4);
  std::vector<double> tp, lc, ls;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (c[i] > 0.0) {
      tp.push_back(t[i]);
      lc.push_back(std::log(c[i]));
      ls.push_back(sigma[i] / c[i]);
    }
  }
  if (tp.size() < 2) throw FitFailure("need at least two positive contrasts to seed the fit");
  const auto seed = detail::weighted_linear_fit(
      tp, lc, ls, {[](double) { return 1.0; }, [](double x) { return -x; }});
  if (!(seed.params[1] > 0.0)) throw FitFailure("contrast does not decay");
  std::vector<double> p0{std::exp(seed.params[0]), 1.0 / seed.params[1]};

  const auto lm = detail::levenberg_marquardt(
      t, c, sigma, p0, [](double x, const std::vector<double>& p, std::vector<double>& g) {
        const double e = std::exp(-x / p[1]);
        g[0] = e;
        g[1] = p[0] * e * x / (p[1] * p[1]);
        return p[0] * e;
      });
  if (!(lm.params[1] > 0.0)) throw FitFailure("fitted decay time is not positive");
  FitResult res;
  res.parameters.push_back({"amplitude", lm.params[0], detail::safe_sqrt(lm.covariance(0, 0))});
  res.parameters.push_back({"tau", lm.params[1], detail::safe_sqrt(lm.covariance(1, 1))});
  res.rss = lm.chi2;
  res.converged = lm.converged;
  res.iterations = lm.iterations;
  return res;
}

/// y = a x^2, or y = a x^2 + c with `with_offset`.
inline FitResult fit_quadratic_origin(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> sigma, bool with_offset = false) {
  detail::check_inputs(x, y, sigma, 3);
  std::vector<std::function<double(double)>> basis{[](double v) { return v * v; }};
  if (with_offset) basis.push_back([](double) { return 1.0; });
  const auto sol = detail::weighted_linear_fit(x, y, sigma, basis);
  FitResult res;
  res.parameters.push_back({"a", sol.params[0], detail::safe_sqrt(sol.covariance(0, 0))});
  if (with_offset)
    res.parameters.push_back({"offset", sol.params[1], detail::safe_sqrt(sol.covariance(1, 1))});
  res.rss = sol.chi2;
  res.converged = true;
  res.iterations = 1;
  return res;
}

/// B(y) = B0 + k sqrt(y) for displacements y >= 0.
inline FitResult fit_sqrt_law(std::span<const double> y, std::span<const double> b,
                              std::span<const double> sigma) {
  detail::check_inputs(y, b, sigma, 3);
  for (double v : y)
    if (v < 0.0) throw FitFailure("displacements must be >= 0");
  const auto sol = detail::weighted_linear_fit(
      y, b, sigma, {[](double v) { return std::sqrt(v); }, [](double) { return 1.0; }});
  FitResult res;
  res.parameters.push_back({"coefficient", sol.params[0], detail::safe_sqrt(sol.covariance(0, 0))});
  res.parameters.push_back({"offset", sol.params[1], detail::safe_sqrt(sol.covariance(1, 1))});
  res.rss = sol.chi2;
  res.converged = true;
  res.iterations = 1;
  return res;
}

/// y = slope x + intercept.
inline FitResult fit_line(std::span<const double> x, std::span<const double> y,
                          std::span<const double> sigma) {
  detail::check_inputs(x, y, sigma, 2);
  const auto sol = detail::weighted_linear_fit(
      x, y, sigma, {[](double v) { return v; }, [](double) { return 1.0; }});
  FitResult res;
  res.parameters.push_back({"slope", sol.params[0], detail::safe_sqrt(sol.covariance(0, 0))});
  res.parameters.push_back({"intercept", sol.params[1], detail::safe_sqrt(sol.covariance(1, 1))});
  res.rss = sol.chi2;
  res.converged = true;
  res.iterations = 1;
  return res;
}

/// Standard error of a binomial fraction k/n, with the estimate pulled
/// half a count from 0 and 1 so all-bright or all-dark points keep weight.
inline double binomial_sem(std::size_t k, std::size_t n) {
  const double p = (static_cast<double>(k) + 0.5) / (static_cast<double>(n) + 1.0);
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace qfield
