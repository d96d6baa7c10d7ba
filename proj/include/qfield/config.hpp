#pragma once

// JSON run configuration. Physical values are strings with explicit unit
// suffixes ("29 mm", "-596.254376 MHz"); unknown keys are rejected; omitted
// keys keep the defaults below (the 25Mg+ setup).

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "qfield/ac_zeeman.hpp"
#include "qfield/dynamics.hpp"
#include "qfield/error.hpp"
#include "qfield/hyperfine.hpp"
#include "qfield/magnetics.hpp"
#include "qfield/units.hpp"

namespace qfield {

struct MagnetConfig {
  double inner_radius = 29e-3;
  double outer_radius = 51e-3;
  double thickness = 4e-3;
  double remanence = 1.17;
  int rings_per_stack = 3;
  double face_distance = 223e-3;
  double temperature_coefficient = -1.2e-3;

  MagnetAssembly assembly() const {
    RingMagnet r;
    r.inner_radius = inner_radius;
    r.outer_radius = outer_radius;
    r.thickness = thickness;
    r.remanence = remanence;
    return make_symmetric_assembly(r, rings_per_stack, face_distance, temperature_coefficient);
  }
};

struct CoilConfig {
  double longitudinal = 0.26e-3;  // T/A
  double vertical = 1.3e-3;
  double horizontal = 0.24e-3;
  double current_resolution = 3e-6;  // A
  double max_current = 0.1;          // A
};

struct AtomConfig {
  double nuclear_spin = 2.5;
  double hyperfine_constant = -596.254376e6;
  double electronic_g = 2.00227;
  /// "bohr_magneton": g_I enters as mu_B g_I I_z B.
  /// "nuclear_magneton": g_I = mu_I / (I mu_N), converted with m_e/m_p.
  std::string nuclear_g_convention = "nuclear_magneton";
  double nuclear_g = -0.85545 / 2.5;
  double bohr_magneton = constants::bohr_magneton_hz_per_t;

  HyperfineSystem system() const {
    HyperfineSystem s;
    s.nuclear_spin = nuclear_spin;
    s.electronic_spin = 0.5;
    s.hyperfine_constant = hyperfine_constant;
    s.electronic_g = electronic_g;
    s.nuclear_g = nuclear_g_convention == "bohr_magneton" ? nuclear_g : HyperfineSystem::g_i_from_nuclear(nuclear_g);
    s.bohr_magneton = bohr_magneton;
    s.validate();
    return s;
  }
};

struct OperatingConfig {
  double field = 10.9584e-3;          // T
  double u_rf = 79.5;                 // V
  double rf_frequency = 57.3e6;       // Hz
  double b0_angle = 30.0 * constants::pi / 180.0;
  double ramp_duration = 80e-6;       // s
  /// "in_plane" (average over the trap x-y plane) or "x", "y", "z".
  std::string rf_polarisation = "in_plane";
  std::map<std::string, double> coupling{{"MW0", 161e3}, {"MW1", 38.3e3}, {"MW2", 28.5e3}, {"RF0", 286.0}};
  double shift_slope = 20.77e-3;      // Hz/V^2
  double sqrt_coefficient = 0.262e-3; // T/m^1/2

  Polarisation polarisation() const {
    const Vec3 b0 = b0_direction_in_trap(b0_angle);
    if (rf_polarisation == "in_plane") return Polarisation::in_plane_average({0, 0, 1}, b0);
    if (rf_polarisation == "x") return Polarisation::linear({1, 0, 0}, b0);
    if (rf_polarisation == "y") return Polarisation::linear({0, 1, 0}, b0);
    if (rf_polarisation == "z") return Polarisation::linear({0, 0, 1}, b0);
    throw ConfigError("operating.rf_polarisation must be in_plane, x, y or z");
  }

  double coupling_for(TransitionTag t) const { return coupling.at(std::string(to_string(t))); }
};

struct NoiseConfig {
  /// Negative means: calibrate so that MW2 gives target_mw2_tau.
  double quasi_static_rms = -1.0;
  double target_mw2_tau = 6.6;    // s
  double ou_rms = 20e-9;          // T
  double ou_correlation_time = 10e-3;
  bool white_dephasing = true;
  double white_floor = 0.002;     // Hz, Gamma / 2 pi of the supply floor
};

struct StabilizationConfig {
  double drift_per_hour = 1e-4;   // relative
  double interval = 300.0;        // s
  double probe_uncertainty = 500.0;     // Hz
  double sample_interval = 10.0;  // s
  double duration = 8 * 3600.0;   // s
};

struct SimulationConfig {
  std::uint64_t seed = 1;
  int shots = 200;
  int phase_points = 96;
  int t_points = 8;
  double max_ramsey_time = 1.4;   // s
  double echo_delta_u = 10.0;     // V
  double echo_tp_step = 2e-3;     // s
  double echo_tp_max = 0.1;       // s
};

struct Config {
  MagnetConfig magnet;
  CoilConfig coils;
  AtomConfig atom;
  OperatingConfig operating;
  NoiseConfig noise;
  StabilizationConfig stabilization;
  SimulationConfig simulation;

  void validate() const {
    magnet.assembly();
    atom.system();
    operating.polarisation();
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(coils.longitudinal, "coils.longitudinal");
    positive(coils.vertical, "coils.vertical");
    positive(coils.horizontal, "coils.horizontal");
    positive(coils.current_resolution, "coils.current_resolution");
    positive(coils.max_current, "coils.max_current");
    positive(operating.field, "operating.field");
    positive(operating.u_rf, "operating.u_rf");
    positive(operating.rf_frequency, "operating.rf_frequency");
    positive(noise.target_mw2_tau, "noise.target_mw2_tau");
    positive(noise.ou_correlation_time, "noise.ou_correlation_time");
    positive(stabilization.interval, "stabilization.interval");
    positive(stabilization.sample_interval, "stabilization.sample_interval");
    positive(stabilization.duration, "stabilization.duration");
    positive(simulation.max_ramsey_time, "simulation.max_ramsey_time");
    positive(simulation.echo_tp_step, "simulation.echo_tp_step");
    positive(simulation.echo_tp_max, "simulation.echo_tp_max");
    if (operating.ramp_duration < 0.0 || operating.ramp_duration > SensingRun::max_ramp_duration)
      throw ConfigError("operating.ramp_duration must lie in [0, 80 us]");
    for (auto tag : all_transition_tags) {
      const auto it = operating.coupling.find(std::string(to_string(tag)));
      if (it == operating.coupling.end()) throw ConfigError("operating.coupling lacks " + std::string(to_string(tag)));
      positive(it->second, "operating.coupling");
    }
    if (noise.ou_rms < 0.0 || noise.white_floor < 0.0 || stabilization.probe_uncertainty < 0.0)
      throw ConfigError("noise amplitudes must be >= 0");
    if (simulation.shots < 1 || simulation.phase_points < 5 || simulation.t_points < 2)
      throw ConfigError("simulation needs shots >= 1, phase_points >= 5, t_points >= 2");
  }
};

namespace detail {

/// Walks one JSON object, converting members and remembering which keys were
/// consumed so the rest can be reported as unknown.
class Section {
public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
  }

  void quantity(const char* key, Dimension dim, double& out) {
    if (const auto* v = take(key)) {
      if (v->is_string()) {
        out = parse_quantity(v->get<std::string>(), dim);
      } else if (v->is_number() && dim == Dimension::dimensionless) {
        out = v->get<double>();
      } else {
        throw ConfigError(where(key) + " needs a string with a " + std::string(dimension_name(dim)) + " unit");
      }
    }
  }

  void number(const char* key, double& out) { quantity(key, Dimension::dimensionless, out); }

  template <class Int>
  void integer(const char* key, Int& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = v->get<Int>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const auto* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void text(const char* key, std::string& out) {
    if (const auto* v = take(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  const nlohmann::json* child(const char* key) { return take(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + where(it.key().c_str()) + "'");
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
  const nlohmann::json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string fmt(double v, std::string_view unit = {}) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return unit.empty() ? std::string(buf) : std::string(buf) + " " + std::string(unit);
}

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
  Config c;
  detail::Section root(j, "");
  if (const auto* m = root.child("magnet")) {
    detail::Section s(*m, "magnet");
    s.quantity("inner_radius", Dimension::length, c.magnet.inner_radius);
    s.quantity("outer_radius", Dimension::length, c.magnet.outer_radius);
    s.quantity("thickness", Dimension::length, c.magnet.thickness);
    s.quantity("remanence", Dimension::field, c.magnet.remanence);
    s.integer("rings_per_stack", c.magnet.rings_per_stack);
    s.quantity("face_distance", Dimension::length, c.magnet.face_distance);
    s.quantity("temperature_coefficient", Dimension::per_kelvin, c.magnet.temperature_coefficient);
    s.finish();
  }
  if (const auto* m = root.child("coils")) {
    detail::Section s(*m, "coils");
    s.quantity("longitudinal", Dimension::field_per_current, c.coils.longitudinal);
    s.quantity("vertical", Dimension::field_per_current, c.coils.vertical);
    s.quantity("horizontal", Dimension::field_per_current, c.coils.horizontal);
    s.quantity("current_resolution", Dimension::current, c.coils.current_resolution);
    s.quantity("max_current", Dimension::current, c.coils.max_current);
    s.finish();
  }
  if (const auto* m = root.child("atom")) {
    detail::Section s(*m, "atom");
    s.number("nuclear_spin", c.atom.nuclear_spin);
    s.quantity("hyperfine_constant", Dimension::frequency, c.atom.hyperfine_constant);
    s.number("electronic_g", c.atom.electronic_g);
    s.text("nuclear_g_convention", c.atom.nuclear_g_convention);
    s.number("nuclear_g", c.atom.nuclear_g);
    s.quantity("bohr_magneton", Dimension::frequency_per_field, c.atom.bohr_magneton);
    s.finish();
    if (c.atom.nuclear_g_convention != "bohr_magneton" && c.atom.nuclear_g_convention != "nuclear_magneton")
      throw ConfigError("atom.nuclear_g_convention must be bohr_magneton or nuclear_magneton");
  }
  if (const auto* m = root.child("operating")) {
    detail::Section s(*m, "operating");
    s.quantity("field", Dimension::field, c.operating.field);
    s.quantity("u_rf", Dimension::voltage, c.operating.u_rf);
    s.quantity("rf_frequency", Dimension::frequency, c.operating.rf_frequency);
    s.quantity("b0_angle", Dimension::angle, c.operating.b0_angle);
    s.quantity("ramp_duration", Dimension::time, c.operating.ramp_duration);
    s.text("rf_polarisation", c.operating.rf_polarisation);
    if (const auto* cp = s.child("coupling")) {
      detail::Section cs(*cp, "operating.coupling");
      for (auto tag : all_transition_tags) {
        const std::string name(to_string(tag));
        cs.quantity(name.c_str(), Dimension::frequency, c.operating.coupling[name]);
      }
      cs.finish();
    }
    s.quantity("shift_slope", Dimension::frequency_per_voltage_sq, c.operating.shift_slope);
    s.quantity("sqrt_coefficient", Dimension::field_per_sqrt_length, c.operating.sqrt_coefficient);
    s.finish();
  }
  if (const auto* m = root.child("noise")) {
    detail::Section s(*m, "noise");
    if (const auto* v = s.child("quasi_static_rms")) {
      if (v->is_string() && v->get<std::string>() == "auto") {
        c.noise.quasi_static_rms = -1.0;
      } else if (v->is_string()) {
        c.noise.quasi_static_rms = parse_quantity(v->get<std::string>(), Dimension::field);
      } else {
        throw ConfigError("noise.quasi_static_rms must be \"auto\" or a field");
      }
    }
    s.quantity("target_mw2_tau", Dimension::time, c.noise.target_mw2_tau);
    s.quantity("ou_rms", Dimension::field, c.noise.ou_rms);
    s.quantity("ou_correlation_time", Dimension::time, c.noise.ou_correlation_time);
    s.boolean("white_dephasing", c.noise.white_dephasing);
    s.quantity("white_floor", Dimension::frequency, c.noise.white_floor);
    s.finish();
  }
  if (const auto* m = root.child("stabilization")) {
    detail::Section s(*m, "stabilization");
    s.number("drift_per_hour", c.stabilization.drift_per_hour);
    s.quantity("interval", Dimension::time, c.stabilization.interval);
    s.quantity("probe_uncertainty", Dimension::frequency, c.stabilization.probe_uncertainty);
    s.quantity("sample_interval", Dimension::time, c.stabilization.sample_interval);
    s.quantity("duration", Dimension::time, c.stabilization.duration);
    s.finish();
  }
  if (const auto* m = root.child("simulation")) {
    detail::Section s(*m, "simulation");
    s.integer("seed", c.simulation.seed);
    s.integer("shots", c.simulation.shots);
    s.integer("phase_points", c.simulation.phase_points);
    s.integer("t_points", c.simulation.t_points);
    s.quantity("max_ramsey_time", Dimension::time, c.simulation.max_ramsey_time);
    s.quantity("echo_delta_u", Dimension::voltage, c.simulation.echo_delta_u);
    s.quantity("echo_tp_step", Dimension::time, c.simulation.echo_tp_step);
    s.quantity("echo_tp_max", Dimension::time, c.simulation.echo_tp_max);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed JSON in '") + path + "': " + e.what());
  }
  return config_from_json(j);
}

/// Fully resolved configuration in SI, same schema as the input.
inline nlohmann::json config_to_json(const Config& c) {
  using detail::fmt;
  nlohmann::json j;
  j["magnet"] = {{"inner_radius", fmt(c.magnet.inner_radius, "m")},
                 {"outer_radius", fmt(c.magnet.outer_radius, "m")},
                 {"thickness", fmt(c.magnet.thickness, "m")},
                 {"remanence", fmt(c.magnet.remanence, "T")},
                 {"rings_per_stack", c.magnet.rings_per_stack},
                 {"face_distance", fmt(c.magnet.face_distance, "m")},
                 {"temperature_coefficient", fmt(c.magnet.temperature_coefficient, "1/K")}};
  j["coils"] = {{"longitudinal", fmt(c.coils.longitudinal, "T/A")},
                {"vertical", fmt(c.coils.vertical, "T/A")},
                {"horizontal", fmt(c.coils.horizontal, "T/A")},
                {"current_resolution", fmt(c.coils.current_resolution, "A")},
                {"max_current", fmt(c.coils.max_current, "A")}};
  j["atom"] = {{"nuclear_spin", c.atom.nuclear_spin},
               {"hyperfine_constant", fmt(c.atom.hyperfine_constant, "Hz")},
               {"electronic_g", c.atom.electronic_g},
               {"nuclear_g_convention", c.atom.nuclear_g_convention},
               {"nuclear_g", c.atom.nuclear_g},
               {"bohr_magneton", fmt(c.atom.bohr_magneton, "Hz/T")}};
  nlohmann::json coupling;
  for (const auto& [k, v] : c.operating.coupling) coupling[k] = fmt(v, "Hz");
  j["operating"] = {{"field", fmt(c.operating.field, "T")},
                    {"u_rf", fmt(c.operating.u_rf, "V")},
                    {"rf_frequency", fmt(c.operating.rf_frequency, "Hz")},
                    {"b0_angle", fmt(c.operating.b0_angle, "rad")},
                    {"ramp_duration", fmt(c.operating.ramp_duration, "s")},
                    {"rf_polarisation", c.operating.rf_polarisation},
                    {"coupling", coupling},
                    {"shift_slope", fmt(c.operating.shift_slope, "Hz/V^2")},
                    {"sqrt_coefficient", fmt(c.operating.sqrt_coefficient, "T/m^1/2")}};
  j["noise"] = {{"quasi_static_rms", c.noise.quasi_static_rms < 0.0 ? std::string("auto")
                                                                    : fmt(c.noise.quasi_static_rms, "T")},
                {"target_mw2_tau", fmt(c.noise.target_mw2_tau, "s")},
                {"ou_rms", fmt(c.noise.ou_rms, "T")},
                {"ou_correlation_time", fmt(c.noise.ou_correlation_time, "s")},
                {"white_dephasing", c.noise.white_dephasing},
                {"white_floor", fmt(c.noise.white_floor, "Hz")}};
  j["stabilization"] = {{"drift_per_hour", c.stabilization.drift_per_hour},
                        {"interval", fmt(c.stabilization.interval, "s")},
                        {"probe_uncertainty", fmt(c.stabilization.probe_uncertainty, "Hz")},
                        {"sample_interval", fmt(c.stabilization.sample_interval, "s")},
                        {"duration", fmt(c.stabilization.duration, "s")}};
  j["simulation"] = {{"seed", c.simulation.seed},
                     {"shots", c.simulation.shots},
                     {"phase_points", c.simulation.phase_points},
                     {"t_points", c.simulation.t_points},
                     {"max_ramsey_time", fmt(c.simulation.max_ramsey_time, "s")},
                     {"echo_delta_u", fmt(c.simulation.echo_delta_u, "V")},
                     {"echo_tp_step", fmt(c.simulation.echo_tp_step, "s")},
                     {"echo_tp_max", fmt(c.simulation.echo_tp_max, "s")}};
  return j;
}

// ---------------------------------------------------------------------------
// Derived run objects

inline TransitionSpec configured_transition(const Config& c, TransitionTag tag, double field) {
  return make_transition(c.atom.system(), field, tag, c.operating.coupling_for(tag));
}

/// White dephasing rate (1/s) with the Gamma = 2 pi / tau convention: the
/// floor Gamma / 2 pi is the contrast decay rate.
inline double white_rate(const Config& c) { return c.noise.white_dephasing ? c.noise.white_floor : 0.0; }

/// Ramsey time grid for a transition: spans 1.5 x the quasi-static 1/e time,
/// capped by the longest allowed sequence.
inline std::vector<double> ramsey_grid(const Config& c, const TransitionSpec& t, double qs_rms) {
  const double sigma = std::sqrt(qs_rms * qs_rms + c.noise.ou_rms * c.noise.ou_rms);
  const double tau = quasi_static_coherence_time(t, sigma, white_rate(c));
  return coherence_time_grid(tau, c.simulation.t_points, 1.5, c.simulation.max_ramsey_time);
}

inline ScanOptions scan_options(const Config& c) {
  ScanOptions o;
  o.shots = c.simulation.shots;
  o.phase_points = c.simulation.phase_points;
  o.seed = c.simulation.seed;
  return o;
}

/// Quasi-static rms: configured, or calibrated on the MW2 grid at the MW2
/// clock field so the exponential fit yields the target coherence time.
inline double resolved_quasi_static_rms(const Config& c) {
  if (c.noise.quasi_static_rms >= 0.0) return c.noise.quasi_static_rms;
  const auto mw2 = configured_transition(c, TransitionTag::MW2, c.operating.field);
  const auto grid = coherence_time_grid(1e30, c.simulation.t_points, 1.5, c.simulation.max_ramsey_time);
  return calibrate_quasi_static_rms(mw2, c.noise.target_mw2_tau, grid, white_rate(c), scan_options(c));
}

inline NoiseModel noise_model(const Config& c, double qs_rms) {
  NoiseModel m;
  m.components.push_back({NoiseKind::quasi_static, qs_rms, 0.0, 0.0});
  if (c.noise.ou_rms > 0.0)
    m.components.push_back({NoiseKind::ornstein_uhlenbeck, c.noise.ou_rms, c.noise.ou_correlation_time, 0.0});
  m.white_dephasing_rate = white_rate(c);
  m.seed = c.simulation.seed;
  return m;
}

inline ControllerConfig controller_config(const Config& c) {
  ControllerConfig k;
  k.interval = c.stabilization.interval;
  k.target_field = c.operating.field;
  k.calibration = c.coils.longitudinal;
  k.current_resolution = c.coils.current_resolution;
  k.max_current = c.coils.max_current;
  k.probe_sensitivity = configured_transition(c, TransitionTag::MW0, c.operating.field).sensitivity;
  k.probe_uncertainty = c.stabilization.probe_uncertainty;
  k.sample_interval = c.stabilization.sample_interval;
  k.duration = c.stabilization.duration;
  k.seed = c.simulation.seed;
  return k;
}

}  // namespace qfield
