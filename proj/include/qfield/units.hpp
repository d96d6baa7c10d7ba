#pragma once

// Physical constants (SI) and strict parsing of quantities written with an
// explicit unit suffix, e.g. "58 mm", "10.9584 mT", "57.3 MHz".

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "qfield/error.hpp"

namespace qfield {

namespace constants {
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
/// Vacuum permeability, T m / A.
inline constexpr double mu0 = 1.25663706212e-6;
/// Bohr magneton divided by Planck's constant, Hz / T (CODATA 2018).
inline constexpr double bohr_magneton_hz_per_t = 1.39962449361e10;
/// Electron to proton mass ratio, converts nuclear to Bohr magnetons.
inline constexpr double electron_proton_mass_ratio = 1.0 / 1836.15267343;
}  // namespace constants

enum class Dimension {
  dimensionless,
  length,
  field,
  frequency,
  time,
  current,
  voltage,
  angle,
  per_kelvin,
  field_per_current,
  frequency_per_field,
  frequency_per_field_sq,
  frequency_per_voltage_sq,
  field_per_sqrt_length,
};

inline std::string_view dimension_name(Dimension d) {
  switch (d) {
    case Dimension::dimensionless: return "dimensionless";
    case Dimension::length: return "length";
    case Dimension::field: return "magnetic field";
    case Dimension::frequency: return "frequency";
    case Dimension::time: return "time";
    case Dimension::current: return "current";
    case Dimension::voltage: return "voltage";
    case Dimension::angle: return "angle";
    case Dimension::per_kelvin: return "per-kelvin coefficient";
    case Dimension::field_per_current: return "field per current";
    case Dimension::frequency_per_field: return "frequency per field";
    case Dimension::frequency_per_field_sq: return "frequency per field squared";
    case Dimension::frequency_per_voltage_sq: return "frequency per voltage squared";
    case Dimension::field_per_sqrt_length: return "field per square-root length";
  }
  return "?";
}

namespace detail {

struct UnitEntry {
  std::string_view symbol;
  Dimension dim;
  double scale;
};

inline constexpr std::array<UnitEntry, 44> unit_table{{
    {"m", Dimension::length, 1.0},
    {"mm", Dimension::length, 1e-3},
    {"um", Dimension::length, 1e-6},
    {"µm", Dimension::length, 1e-6},
    {"nm", Dimension::length, 1e-9},
    {"T", Dimension::field, 1.0},
    {"mT", Dimension::field, 1e-3},
    {"uT", Dimension::field, 1e-6},
    {"µT", Dimension::field, 1e-6},
    {"nT", Dimension::field, 1e-9},
    {"Hz", Dimension::frequency, 1.0},
    {"mHz", Dimension::frequency, 1e-3},
    {"kHz", Dimension::frequency, 1e3},
    {"MHz", Dimension::frequency, 1e6},
    {"GHz", Dimension::frequency, 1e9},
    {"s", Dimension::time, 1.0},
    {"ms", Dimension::time, 1e-3},
    {"us", Dimension::time, 1e-6},
    {"µs", Dimension::time, 1e-6},
    {"min", Dimension::time, 60.0},
    {"h", Dimension::time, 3600.0},
    {"A", Dimension::current, 1.0},
    {"mA", Dimension::current, 1e-3},
    {"uA", Dimension::current, 1e-6},
    {"V", Dimension::voltage, 1.0},
    {"mV", Dimension::voltage, 1e-3},
    {"rad", Dimension::angle, 1.0},
    {"deg", Dimension::angle, constants::pi / 180.0},
    {"1/K", Dimension::per_kelvin, 1.0},
    {"T/A", Dimension::field_per_current, 1.0},
    {"mT/A", Dimension::field_per_current, 1e-3},
    {"uT/A", Dimension::field_per_current, 1e-6},
    {"ns", Dimension::time, 1e-9},
    {"Hz/T", Dimension::frequency_per_field, 1.0},
    {"MHz/T", Dimension::frequency_per_field, 1e6},
    {"GHz/T", Dimension::frequency_per_field, 1e9},
    {"MHz/mT", Dimension::frequency_per_field, 1e9},
    {"Hz/T^2", Dimension::frequency_per_field_sq, 1.0},
    {"kHz/mT^2", Dimension::frequency_per_field_sq, 1e9},
    {"Hz/uT^2", Dimension::frequency_per_field_sq, 1e12},
    {"Hz/V^2", Dimension::frequency_per_voltage_sq, 1.0},
    {"mHz/V^2", Dimension::frequency_per_voltage_sq, 1e-3},
    {"T/m^1/2", Dimension::field_per_sqrt_length, 1.0},
    {"uT/um^1/2", Dimension::field_per_sqrt_length, 1e-3},
}};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Parses "<number> <unit>" into SI. The unit must belong to `dim`; a bare
/// number is only accepted for dimensionless quantities.
inline double parse_quantity(std::string_view text, Dimension dim) {
  const std::string_view s = detail::trim(text);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || end == s.data()) {
    throw ConfigError("cannot parse a number from '" + std::string(text) + "'");
  }
  if (!std::isfinite(value)) {
    throw ConfigError("non-finite value '" + std::string(text) + "'");
  }
  const std::string_view unit =
      detail::trim(s.substr(static_cast<std::size_t>(end - s.data())));
  if (unit.empty()) {
    if (dim == Dimension::dimensionless) return value;
    throw ConfigError("missing unit in '" + std::string(text) + "' (expected " +
                      std::string(dimension_name(dim)) + ")");
  }
  for (const auto& e : detail::unit_table) {
    if (e.symbol == unit) {
      if (e.dim != dim) {
        throw ConfigError("unit '" + std::string(unit) + "' is a " +
                          std::string(dimension_name(e.dim)) + ", expected " +
                          std::string(dimension_name(dim)));
      }
      return value * e.scale;
    }
  }
  throw ConfigError("unknown unit '" + std::string(unit) + "' in '" +
                    std::string(text) + "'");
}

}  // namespace qfield
