#pragma once

// Command-line front end. Results go to `out` (CSV or JSON), the resolved
// configuration and fit summaries to `err`.
//
// Exit codes: 0 ok, 2 configuration or usage error, 3 numerical failure.

#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qfield/qfield.hpp"

namespace qfield::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_numerical = 3;

namespace detail {

inline std::string g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void csv_row(std::ostream& out, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) out << ',';
    out << g12(v);
    first = false;
  }
  out << '\n';
}

/// Parses a flag value, naming the flag in the error.
inline double flag_quantity(const std::string& flag, const std::string& text, Dimension dim) {
  try {
    return parse_quantity(text, dim);
  } catch (const ConfigError& e) {
    throw ConfigError(flag + ": " + e.what());
  }
}

inline TransitionTag flag_transition(const std::string& text) {
  const auto t = parse_transition_tag(text);
  if (!t) throw ConfigError("--transition: expected MW0, MW1, MW2 or RF0, got '" + text + "'");
  return *t;
}

/// s at the operating point, magnitude in Hz/T^2.
inline double clock_ac_sensitivity(const Config& c) {
  const auto sys = c.atom.system();
  return std::abs(transition_ac_sensitivity(sys, c.operating.field, labels_for(TransitionTag::MW2),
                                            constants::two_pi * c.operating.rf_frequency,
                                            c.operating.polarisation()));
}

}  // namespace detail

/// Runs the CLI; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantisation-field toolkit: magnet fields, hyperfine transitions, a.c. Zeeman sensing and "
               "coherence simulations."};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON configuration file (defaults built in)");
  app.add_option("--seed", seed, "Override simulation.seed");

  // field-map
  auto* fm = app.add_subcommand("field-map", "Field samples of the magnet assembly (CSV)");
  std::string fm_axis = "z", fm_range, fm_step;
  fm->add_option("--axis", fm_axis, "z (on axis) or 3d (cubic grid)")->check(CLI::IsMember({"z", "3d"}));
  fm->add_option("--range", fm_range, "Half range, e.g. 5mm")->required();
  fm->add_option("--step", fm_step, "Sample spacing (default 0.1mm on axis, 1mm in 3d)");

  // dsv
  auto* dsv = app.add_subcommand("dsv", "Diameter of the spherical volume within a relative tolerance (JSON)");
  double dsv_tol = 1e-6;
  std::string dsv_ball = "2mm";
  dsv->add_option("--tolerance", dsv_tol, "Relative |B| tolerance");
  dsv->add_option("--gradient-ball", dsv_ball, "Radius for the gradient bound");

  // transitions
  auto* tr = app.add_subcommand("transitions", "Transition frequencies and field derivatives (CSV)");
  std::string tr_b;
  tr->add_option("--B", tr_b, "Field, e.g. 10.9584mT (default operating.field)");

  // clock-field
  auto* cf = app.add_subcommand("clock-field", "Field where a transition is first-order insensitive (JSON)");
  std::string cf_tag = "MW2", cf_guess;
  cf->add_option("--transition", cf_tag, "MW0, MW1, MW2 or RF0");
  cf->add_option("--guess", cf_guess, "Search centre (default operating.field)");

  // sense-acz
  auto* sa = app.add_subcommand("sense-acz", "a.c. Zeeman sensing curves (CSV)");
  std::string sa_figure = "shift", sa_du_step = "5V", sa_dy_max = "20um", sa_dy_step = "1um";
  sa->add_option("--curve", sa_figure, "shift (dU_V,dshift_Hz) or spatial (dy_m,Bosc_T)")
      ->check(CLI::IsMember({"shift", "spatial"}));
  sa->add_option("--du-step", sa_du_step, "Voltage step for the shift curve");
  sa->add_option("--dy-max", sa_dy_max, "Largest displacement for the spatial curve");
  sa->add_option("--dy-step", sa_dy_step, "Displacement step for the spatial curve");

  // ramsey-sim
  auto* rs = app.add_subcommand("ramsey-sim", "Ramsey contrast versus free-evolution time (CSV)");
  std::string rs_tag = "MW2", rs_b;
  std::optional<int> rs_shots;
  rs->add_option("--transition", rs_tag, "MW0, MW1, MW2 or RF0");
  rs->add_option("--B", rs_b, "Field (default operating.field)");
  rs->add_option("--shots", rs_shots, "Shots per phase point");
  rs->add_option("--seed", seed, "Override simulation.seed");

  // echo-sim
  auto* es = app.add_subcommand("echo-sim", "Spin-echo phase versus pulse spacing with the RF lowered (CSV)");
  std::string es_du, es_tp_max, es_tp_step;
  es->add_option("--delta-u", es_du, "RF amplitude reduction, e.g. 10V");
  es->add_option("--tp-max", es_tp_max, "Largest pulse spacing");
  es->add_option("--tp-step", es_tp_step, "Pulse-spacing step");
  es->add_option("--seed", seed, "Override simulation.seed");

  // stabilize-sim
  auto* ss = app.add_subcommand("stabilize-sim", "Shim-coil field stabilisation against drift (CSV)");
  std::string ss_interval, ss_duration;
  bool ss_open = false;
  ss->add_option("--interval", ss_interval, "Correction interval, e.g. 5min");
  ss->add_option("--duration", ss_duration, "Simulated time, e.g. 8h");
  ss->add_flag("--open-loop", ss_open, "Disable corrections");
  ss->add_option("--seed", seed, "Override simulation.seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  }

  try {
    Config c = config_path.empty() ? config_from_json(nlohmann::json::object()) : load_config(config_path);
    if (seed) c.simulation.seed = *seed;
    if (rs_shots) c.simulation.shots = *rs_shots;
    if (!es_du.empty()) c.simulation.echo_delta_u = detail::flag_quantity("--delta-u", es_du, Dimension::voltage);
    if (!es_tp_max.empty()) c.simulation.echo_tp_max = detail::flag_quantity("--tp-max", es_tp_max, Dimension::time);
    if (!es_tp_step.empty())
      c.simulation.echo_tp_step = detail::flag_quantity("--tp-step", es_tp_step, Dimension::time);
    if (!ss_interval.empty())
      c.stabilization.interval = detail::flag_quantity("--interval", ss_interval, Dimension::time);
    if (!ss_duration.empty())
      c.stabilization.duration = detail::flag_quantity("--duration", ss_duration, Dimension::time);
    c.validate();
    err << "config: " << config_to_json(c).dump() << '\n';

    const auto sys = c.atom.system();
    using detail::csv_row;

    if (*fm) {
      const double range = detail::flag_quantity("--range", fm_range, Dimension::length);
      if (!(range > 0.0)) throw ConfigError("--range: must be positive");
      const std::string step_text = fm_step.empty() ? (fm_axis == "z" ? "0.1mm" : "1mm") : fm_step;
      const double step = detail::flag_quantity("--step", step_text, Dimension::length);
      if (!(step > 0.0)) throw ConfigError("--step: must be positive");
      const auto a = c.magnet.assembly();
      if (fm_axis == "z") {
        out << "z_m,Bz_T\n";
        for (const auto& s : axial_field_map(a, range, step)) csv_row(out, {s.position.z, s.field.z});
      } else {
        out << "x_m,y_m,z_m,Bx_T,By_T,Bz_T\n";
        for (const auto& s : field_map_3d(a, range, step))
          csv_row(out, {s.position.x, s.position.y, s.position.z, s.field.x, s.field.y, s.field.z});
      }
    } else if (*dsv) {
      const double ball = detail::flag_quantity("--gradient-ball", dsv_ball, Dimension::length);
      if (!(dsv_tol > 0.0)) throw ConfigError("--tolerance: must be positive");
      const auto a = c.magnet.assembly();
      const auto rep = homogeneity_dsv(a, dsv_tol);
      nlohmann::ordered_json j;
      j["tolerance"] = rep.tolerance;
      j["d_dsv_m"] = rep.d_dsv;
      j["center_field_T"] = rep.center_field;
      j["max_gradient_in_dsv_T_per_m"] = rep.max_gradient;
      j["tuning_slope_T_per_m"] = tuning_slope(a);
      j["gradient_ball_m"] = ball;
      j["gradient_bound_T_per_m"] = gradient_bound(a, ball);
      out << j.dump(2) << '\n';
    } else if (*tr) {
      const double b = tr_b.empty() ? c.operating.field : detail::flag_quantity("--B", tr_b, Dimension::field);
      out << "tag,freq_Hz,sens_Hz_per_T,curv_Hz_per_T2\n";
      for (auto tag : all_transition_tags) {
        const auto t = make_transition(sys, b, tag, c.operating.coupling_for(tag));
        out << to_string(tag) << ',' << detail::g12(t.frequency) << ',' << detail::g12(t.sensitivity) << ','
            << detail::g12(t.curvature) << '\n';
      }
    } else if (*cf) {
      const auto tag = detail::flag_transition(cf_tag);
      const double guess =
          cf_guess.empty() ? c.operating.field : detail::flag_quantity("--guess", cf_guess, Dimension::field);
      const double b = find_clock_field(sys, labels_for(tag), guess);
      const auto t = make_transition(sys, b, tag, c.operating.coupling_for(tag));
      nlohmann::ordered_json j;
      j["transition"] = std::string(to_string(tag));
      j["field_T"] = b;
      j["frequency_Hz"] = t.frequency;
      j["curvature_Hz_per_T2"] = t.curvature;
      out << j.dump(2) << '\n';
    } else if (*sa) {
      const double s = detail::clock_ac_sensitivity(c);
      const double bosc = infer_bosc(c.operating.shift_slope, c.operating.u_rf, s);
      nlohmann::ordered_json summary;
      summary["quadratic_sensitivity_Hz_per_T2"] = s;
      summary["inferred_bosc_T"] = bosc;
      summary["spatial_slope_Hz_per_m"] = spatial_shift_slope(s, c.operating.sqrt_coefficient);
      err << "summary: " << summary.dump() << '\n';
      if (sa_figure == "shift") {
        const double step = detail::flag_quantity("--du-step", sa_du_step, Dimension::voltage);
        if (!(step > 0.0)) throw ConfigError("--du-step: must be positive");
        out << "dU_V,dshift_Hz\n";
        const auto n = static_cast<long>(std::floor(c.operating.u_rf / step + 1e-9));
        for (long k = 0; k <= n; ++k) {
          const double du = static_cast<double>(k) * step;
          csv_row(out, {du, differential_shift_vs_du(bosc, c.operating.u_rf, du, s)});
        }
      } else {
        const double dy_max = detail::flag_quantity("--dy-max", sa_dy_max, Dimension::length);
        const double dy_step = detail::flag_quantity("--dy-step", sa_dy_step, Dimension::length);
        if (!(dy_max > 0.0) || !(dy_step > 0.0)) throw ConfigError("--dy-max/--dy-step: must be positive");
        out << "dy_m,Bosc_T\n";
        const auto n = static_cast<long>(std::floor(dy_max / dy_step + 1e-9));
        for (long k = 0; k <= n; ++k) {
          const double dy = static_cast<double>(k) * dy_step;
          csv_row(out, {dy, spatial_sqrt_model(dy, c.operating.sqrt_coefficient, bosc)});
        }
      }
    } else if (*rs) {
      const auto tag = detail::flag_transition(rs_tag);
      const double b = rs_b.empty() ? c.operating.field : detail::flag_quantity("--B", rs_b, Dimension::field);
      const double qs = resolved_quasi_static_rms(c);
      const auto t = configured_transition(c, tag, b);
      const auto grid = ramsey_grid(c, t, qs);
      const auto res = ramsey_contrast_scan(t, noise_model(c, qs), grid, scan_options(c));
      nlohmann::ordered_json summary;
      summary["transition"] = std::string(to_string(tag));
      summary["quasi_static_rms_T"] = qs;
      summary["tau_s"] = res.tau;
      summary["tau_sigma_s"] = res.tau_err;
      summary["gamma_rad_per_s"] = res.gamma;
      summary["initial_contrast"] = res.initial_contrast;
      summary["rss"] = res.decay_fit.rss;
      err << "summary: " << summary.dump() << '\n';
      out << "T_s,contrast,contrast_err\n";
      for (std::size_t i = 0; i < grid.size(); ++i) csv_row(out, {grid[i], res.contrast[i], res.contrast_err[i]});
    } else if (*es) {
      const double s = detail::clock_ac_sensitivity(c);
      SensingRun run;
      run.u_rf = c.operating.u_rf;
      run.delta_u_rf = c.simulation.echo_delta_u;
      run.ramp_duration = c.operating.ramp_duration;
      run.b0_angle_to_trap_z = c.operating.b0_angle;
      run.quadratic_sensitivity = s;
      run.inferred_bosc = infer_bosc(c.operating.shift_slope, c.operating.u_rf, s);
      run.validate();
      std::vector<double> tps;
      const auto n = static_cast<long>(std::floor(c.simulation.echo_tp_max / c.simulation.echo_tp_step + 1e-9));
      for (long k = 1; k <= n; ++k) tps.push_back(static_cast<double>(k) * c.simulation.echo_tp_step);
      const double qs = resolved_quasi_static_rms(c);
      const auto t = configured_transition(c, TransitionTag::MW2, c.operating.field);
      const auto res = spin_echo_acz_scan(t, run, run.inferred_bosc, tps, noise_model(c, qs), scan_options(c));
      nlohmann::ordered_json summary;
      summary["shift_Hz"] = res.shift_hz;
      summary["shift_sigma_Hz"] = res.slope_err / constants::two_pi;
      summary["expected_shift_Hz"] = differential_shift_vs_du(run.inferred_bosc, run.u_rf, run.delta_u_rf, s);
      err << "summary: " << summary.dump() << '\n';
      out << "T_P_s,phase_rad,phase_err_rad\n";
      for (std::size_t i = 0; i < tps.size(); ++i) csv_row(out, {tps[i], res.phase[i], res.phase_err[i]});
    } else if (*ss) {
      auto k = controller_config(c);
      k.closed_loop = !ss_open;
      const auto drift = linear_drift(c.operating.field, c.stabilization.drift_per_hour, c.simulation.seed);
      const auto trace = stabilization_loop(drift, k);
      nlohmann::ordered_json summary;
      summary["closed_loop"] = k.closed_loop;
      summary["interval_s"] = k.interval;
      summary["corrections"] = trace.corrections;
      summary["rms_relative_deviation"] = trace.rms_relative_deviation;
      summary["max_relative_deviation"] = trace.max_relative_deviation;
      err << "summary: " << summary.dump() << '\n';
      out << "t_s,relB_dev,shim_A\n";
      for (const auto& s : trace.samples) csv_row(out, {s.time, s.relative_deviation, s.shim_current});
    }
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_numerical;
  }
}

}  // namespace qfield::cli
