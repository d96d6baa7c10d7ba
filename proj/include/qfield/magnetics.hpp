#pragma once

// Static fields of the permanent ring-magnet assembly and the shim coils.
//
// Frame: the assembly symmetry axis is z, the assembly centre is the origin.
// Each ring occupies axial_offset <= z <= axial_offset + thickness.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qfield/error.hpp"
#include "qfield/linalg.hpp"
#include "qfield/units.hpp"
#include "qfield/vec3.hpp"

namespace qfield {

struct RingMagnet {
  double inner_radius = 0.0;  // m
  double outer_radius = 0.0;  // m
  double thickness = 0.0;     // m
  double remanence = 0.0;     // T
  double axial_offset = 0.0;  // m, z of the lower face
  int magnetisation_sign = +1;

  void validate() const {
    if (!(inner_radius > 0.0 && inner_radius < outer_radius))
      throw InvalidGeometry("ring needs 0 < inner_radius < outer_radius");
    if (!(thickness > 0.0)) throw InvalidGeometry("ring thickness must be positive");
    if (!(remanence > 0.0)) throw InvalidGeometry("ring remanence must be positive");
    if (magnetisation_sign != 1 && magnetisation_sign != -1)
      throw InvalidGeometry("magnetisation_sign must be +1 or -1");
  }

  bool contains(const Vec3& r) const {
    const double rho = std::hypot(r.x, r.y);
    return rho >= inner_radius && rho <= outer_radius && r.z >= axial_offset &&
           r.z <= axial_offset + thickness;
  }
};

/// On-axis field of one axially magnetised ring (closed form for a uniformly
/// magnetised annulus). Continuous everywhere on the axis.
inline double axial_ring_field(double z, const RingMagnet& ring) {
  const double u = z - ring.axial_offset;
  const double v = u - ring.thickness;
  auto cylinder = [&](double radius) {
    return u / std::sqrt(radius * radius + u * u) - v / std::sqrt(radius * radius + v * v);
  };
  return ring.magnetisation_sign * 0.5 * ring.remanence *
         (cylinder(ring.outer_radius) - cylinder(ring.inner_radius));
}

struct MagnetAssembly {
  std::vector<RingMagnet> rings;
  double face_distance = 0.0;            // m, between the facing planes
  double temperature_coefficient = 0.0;  // 1/K, relative remanence change

  /// Two coaxial stacks of equal ring count mirrored about z = 0.
  void validate() const {
    if (rings.empty() || rings.size() % 2 != 0)
      throw InvalidGeometry("assembly needs two stacks with equal ring count");
    if (!(face_distance > 0.0)) throw InvalidGeometry("face_distance must be positive");
    std::size_t upper = 0;
    for (const auto& r : rings) {
      r.validate();
      if (r.axial_offset >= 0.0) ++upper;
    }
    if (2 * upper != rings.size())
      throw InvalidGeometry("stacks are not balanced about z = 0");
    for (const auto& r : rings) {
      const double mirror_offset = -(r.axial_offset + r.thickness);
      const bool found = std::any_of(rings.begin(), rings.end(), [&](const RingMagnet& o) {
        return std::abs(o.axial_offset - mirror_offset) < 1e-12 &&
               std::abs(o.thickness - r.thickness) < 1e-12 &&
               std::abs(o.inner_radius - r.inner_radius) < 1e-12 &&
               std::abs(o.outer_radius - r.outer_radius) < 1e-12;
      });
      if (!found) throw InvalidGeometry("ring has no mirror partner about z = 0");
    }
  }
};

/// Builds two stacks of `rings_per_stack` identical rings packed face to face,
/// both magnetised along +z, with `face_distance` between the inner faces.
inline MagnetAssembly make_symmetric_assembly(const RingMagnet& ring, int rings_per_stack,
                                              double face_distance,
                                              double temperature_coefficient = 0.0) {
  if (rings_per_stack < 1) throw InvalidGeometry("need at least one ring per stack");
  MagnetAssembly a;
  a.face_distance = face_distance;
  a.temperature_coefficient = temperature_coefficient;
  for (int k = 0; k < rings_per_stack; ++k) {
    RingMagnet upper = ring;
    upper.axial_offset = 0.5 * face_distance + k * ring.thickness;
    RingMagnet lower = ring;
    lower.axial_offset = -0.5 * face_distance - (k + 1) * ring.thickness;
    a.rings.push_back(lower);
    a.rings.push_back(upper);
  }
  std::sort(a.rings.begin(), a.rings.end(),
            [](const RingMagnet& l, const RingMagnet& r) { return l.axial_offset < r.axial_offset; });
  a.validate();
  return a;
}

/// Moves both stacks symmetrically so the facing planes are `d` apart.
inline MagnetAssembly with_face_distance(const MagnetAssembly& a, double d) {
  MagnetAssembly out = a;
  const double shift = 0.5 * (d - a.face_distance);
  for (auto& r : out.rings) r.axial_offset += (r.axial_offset >= 0.0 ? shift : -shift);
  out.face_distance = d;
  return out;
}

/// Remanence follows B_r(T0 + dT) = B_r(T0) (1 + alpha dT).
inline MagnetAssembly at_temperature_offset(const MagnetAssembly& a, double delta_kelvin) {
  MagnetAssembly out = a;
  for (auto& r : out.rings) r.remanence *= 1.0 + a.temperature_coefficient * delta_kelvin;
  return out;
}

inline double assembly_axial_field(double z, const MagnetAssembly& assembly) {
  double b = 0.0;
  for (const auto& ring : assembly.rings) b += axial_ring_field(z, ring);
  return b;
}

struct FieldQuadrature {
  std::size_t radial_nodes = 12;
  std::size_t azimuthal_nodes = 24;
  int max_refinements = 6;
  double relative_tolerance = 1e-13;
};

namespace detail {

// Field (B_rho, B_z) at cylindrical radius rho_p, height z_p of a uniformly
// charged annulus at height zf with surface density sigma (in units where
// mu0 * M = B_r, i.e. B = sigma/(4 pi) * integral).
inline void annulus_field(double rho_p, double z_p, double zf, double r_in, double r_out,
                          const QuadratureRule& radial, std::size_t n_phi, double& b_rho,
                          double& b_z) {
  const double dz = z_p - zf;
  const double half = 0.5 * (r_out - r_in);
  const double mid = 0.5 * (r_out + r_in);
  const double dphi = constants::two_pi / static_cast<double>(n_phi);
  double sum_rho = 0.0, sum_z = 0.0;
  for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
    const double rho = mid + half * radial.nodes[i];
    const double w = half * radial.weights[i] * rho * dphi;
    double s_rho = 0.0, s_z = 0.0;
    for (std::size_t k = 0; k < n_phi; ++k) {
      const double c = std::cos((static_cast<double>(k) + 0.5) * dphi);
      const double dx = rho_p - rho * c;
      const double d2 = dx * dx + rho * rho * (1.0 - c * c) + dz * dz;
      const double inv3 = 1.0 / (d2 * std::sqrt(d2));
      s_rho += dx * inv3;
      s_z += dz * inv3;
    }
    sum_rho += w * s_rho;
    sum_z += w * s_z;
  }
  b_rho = sum_rho / (4.0 * constants::pi);
  b_z = sum_z / (4.0 * constants::pi);
}

inline Vec3 assembly_field_fixed(const Vec3& r, const MagnetAssembly& assembly,
                                 const QuadratureRule& radial, std::size_t n_phi) {
  const double rho_p = std::hypot(r.x, r.y);
  double b_rho = 0.0, b_z = 0.0;
  for (const auto& ring : assembly.rings) {
    const double sigma = ring.magnetisation_sign * ring.remanence;
    for (const auto& [zf, q] : {std::pair{ring.axial_offset + ring.thickness, 1.0},
                                std::pair{ring.axial_offset, -1.0}}) {
      double fr = 0.0, fz = 0.0;
      annulus_field(rho_p, r.z, zf, ring.inner_radius, ring.outer_radius, radial, n_phi, fr, fz);
      b_rho += q * sigma * fr;
      b_z += q * sigma * fz;
    }
  }
  if (rho_p == 0.0) return {0.0, 0.0, b_z};
  return {b_rho * r.x / rho_p, b_rho * r.y / rho_p, b_z};
}

}  // namespace detail

/// Full 3-D field from equivalent magnetic surface charges on every annular
/// end face, integrated with Gauss-Legendre (radius) x periodic trapezoid
/// (azimuth). The node counts are doubled until two successive results agree
/// to `quad.relative_tolerance`.
inline Vec3 assembly_field_3d(const Vec3& r, const MagnetAssembly& assembly,
                              const FieldQuadrature& quad = {}) {
  for (const auto& ring : assembly.rings)
    if (ring.contains(r)) throw PositionInsideMagnet("query point lies inside a ring");
  std::size_t n_rad = quad.radial_nodes;
  std::size_t n_phi = quad.azimuthal_nodes;
  Vec3 prev = detail::assembly_field_fixed(r, assembly, gauss_legendre(n_rad), n_phi);
  for (int k = 0; k < quad.max_refinements; ++k) {
    n_rad *= 2;
    n_phi *= 2;
    const Vec3 next = detail::assembly_field_fixed(r, assembly, gauss_legendre(n_rad), n_phi);
    if (norm(next - prev) <= quad.relative_tolerance * norm(next)) return next;
    prev = next;
  }
  throw NonConvergent("surface-charge quadrature did not converge");
}

struct FieldSample {
  Vec3 position;  // m
  Vec3 field;     // T
};

/// On-axis samples z = -half_range, -half_range + step, ... <= +half_range.
inline std::vector<FieldSample> axial_field_map(const MagnetAssembly& a, double half_range,
                                                double step) {
  if (!(half_range > 0.0)) throw RangeError("field map range must be positive");
  if (!(step > 0.0)) throw RangeError("field map step must be positive");
  const auto n = static_cast<long>(std::floor(2.0 * half_range / step + 1e-9));
  std::vector<FieldSample> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) {
    const double z = -half_range + static_cast<double>(i) * step;
    out.push_back({{0.0, 0.0, z}, {0.0, 0.0, assembly_axial_field(z, a)}});
  }
  return out;
}

/// Cubic grid of 3-D samples with the same spacing rule on each axis.
inline std::vector<FieldSample> field_map_3d(const MagnetAssembly& a, double half_range,
                                             double step, const FieldQuadrature& quad = {}) {
  if (!(half_range > 0.0)) throw RangeError("field map range must be positive");
  if (!(step > 0.0)) throw RangeError("field map step must be positive");
  const auto n = static_cast<long>(std::floor(2.0 * half_range / step + 1e-9));
  std::vector<FieldSample> out;
  for (long i = 0; i <= n; ++i)
    for (long j = 0; j <= n; ++j)
      for (long k = 0; k <= n; ++k) {
        const Vec3 p{-half_range + static_cast<double>(i) * step,
                     -half_range + static_cast<double>(j) * step,
                     -half_range + static_cast<double>(k) * step};
        out.push_back({p, assembly_field_3d(p, a, quad)});
      }
  return out;
}

/// Fibonacci lattice of n unit vectors.
inline std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  const double golden = constants::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    pts.push_back({rho * std::cos(phi), rho * std::sin(phi), z});
  }
  return pts;
}

struct HomogeneityOptions {
  double search_bound = 10e-3;         // m, largest diameter considered
  double diameter_tolerance = 1e-6;    // m, bisection stop
  std::size_t surface_points = 64;     // initial Fibonacci density
  std::size_t interior_shells = 3;     // extra concentric shells inside
  int max_density_doublings = 4;
  double convergence_fraction = 0.05;  // accept when doubling moves d by less
  FieldQuadrature quadrature{};
};

struct HomogeneityReport {
  double d_dsv = 0.0;          // m
  double tolerance = 0.0;      // relative
  double center_field = 0.0;   // T
  double max_gradient = 0.0;   // T/m, within the d_dsv sphere
  std::size_t surface_points = 0;
};

/// Largest norm of grad |B| over a ball of radius `displacement_bound`
/// around the centre. The ball is sampled at the centre and on three
/// Fibonacci shells; gradients use central differences.
inline double gradient_bound(const MagnetAssembly& assembly, double displacement_bound,
                             const FieldQuadrature& quad = {}) {
  if (!(displacement_bound > 0.0)) throw RangeError("displacement bound must be positive");
  const double h = std::clamp(0.01 * displacement_bound, 1e-7, 10e-6);
  auto mag = [&](const Vec3& p) { return norm(assembly_field_3d(p, assembly, quad)); };
  auto grad_norm = [&](const Vec3& p) {
    const double gx = (mag(p + Vec3{h, 0, 0}) - mag(p - Vec3{h, 0, 0})) / (2 * h);
    const double gy = (mag(p + Vec3{0, h, 0}) - mag(p - Vec3{0, h, 0})) / (2 * h);
    const double gz = (mag(p + Vec3{0, 0, h}) - mag(p - Vec3{0, 0, h})) / (2 * h);
    return std::sqrt(gx * gx + gy * gy + gz * gz);
  };
  double worst = grad_norm({});
  const auto dirs = fibonacci_sphere(48);
  for (int s = 1; s <= 3; ++s) {
    const double rs = displacement_bound * s / 3.0;
    for (const auto& d : dirs) worst = std::max(worst, grad_norm(d * rs));
    // The poles are where the axial curvature is largest.
    worst = std::max({worst, grad_norm({0, 0, rs}), grad_norm({0, 0, -rs})});
  }
  return worst;
}

namespace detail {

inline double max_relative_deviation(const MagnetAssembly& a, double diameter, double b0,
                                     const std::vector<Vec3>& dirs, std::size_t shells,
                                     const FieldQuadrature& quad) {
  double worst = 0.0;
  const double radius = 0.5 * diameter;
  for (std::size_t s = 1; s <= shells + 1; ++s) {
    const double rs = radius * static_cast<double>(s) / static_cast<double>(shells + 1);
    for (const auto& d : dirs) {
      const double b = norm(assembly_field_3d(d * rs, a, quad));
      worst = std::max(worst, std::abs(b - b0) / b0);
    }
  }
  return worst;
}

inline double dsv_bisect(const MagnetAssembly& a, double tolerance, double b0,
                         std::size_t n_surface, const HomogeneityOptions& opt) {
  const auto dirs = fibonacci_sphere(n_surface);
  auto ok = [&](double d) {
    return max_relative_deviation(a, d, b0, dirs, opt.interior_shells, opt.quadrature) <=
           tolerance;
  };
  if (ok(opt.search_bound)) return opt.search_bound;
  double lo = 0.0, hi = opt.search_bound;
  while (hi - lo > opt.diameter_tolerance) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

/// Largest sphere about the centre on which the relative deviation of |B|
/// from |B(0)| stays within `tolerance`. The sphere and `interior_shells`
/// concentric shells are sampled on a Fibonacci lattice; the lattice density
/// is doubled until the diameter moves by less than `convergence_fraction`.
inline HomogeneityReport homogeneity_dsv(const MagnetAssembly& assembly, double tolerance,
                                         const HomogeneityOptions& opt = {}) {
  if (!(tolerance > 0.0)) throw RangeError("homogeneity tolerance must be positive");
  assembly.validate();
  HomogeneityReport rep;
  rep.tolerance = tolerance;
  rep.center_field = norm(assembly_field_3d({}, assembly, opt.quadrature));
  std::size_t n = opt.surface_points;
  double d = detail::dsv_bisect(assembly, tolerance, rep.center_field, n, opt);
  bool converged = false;
  for (int k = 0; k < opt.max_density_doublings; ++k) {
    n *= 2;
    const double d2 = detail::dsv_bisect(assembly, tolerance, rep.center_field, n, opt);
    const double change = std::abs(d2 - d);
    d = d2;
    if (change <= opt.convergence_fraction * std::max(d, opt.diameter_tolerance)) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NonConvergent("d_dsv still moves after density doublings");
  rep.d_dsv = d;
  rep.surface_points = n;
  rep.max_gradient = d > 0.0 ? gradient_bound(assembly, 0.5 * d, opt.quadrature) : 0.0;
  return rep;
}

/// d|B(0)|/d(face_distance), both stacks moved symmetrically. T/m.
inline double tuning_slope(const MagnetAssembly& assembly, double step = 1e-4) {
  const double d = assembly.face_distance;
  const double plus = std::abs(assembly_axial_field(0.0, with_face_distance(assembly, d + step)));
  const double minus = std::abs(assembly_axial_field(0.0, with_face_distance(assembly, d - step)));
  return (plus - minus) / (2.0 * step);
}

enum class CoilAxis { longitudinal, vertical, horizontal };

inline Vec3 axis_vector(CoilAxis axis) {
  switch (axis) {
    case CoilAxis::longitudinal: return {0, 0, 1};
    case CoilAxis::vertical: return {0, 1, 0};
    case CoilAxis::horizontal: return {1, 0, 0};
  }
  return {};
}

struct CoilPair {
  CoilAxis axis = CoilAxis::longitudinal;
  double calibration = 0.0;         // T/A
  double current = 0.0;             // A
  double current_resolution = 0.0;  // A
  double max_current = 0.0;         // A
};

/// Shim coils as ideal uniform fields: sum of axis * calibration * current.
inline Vec3 coil_field(std::span<const CoilPair> pairs) {
  Vec3 b;
  for (const auto& c : pairs) {
    if (!(c.calibration > 0.0)) throw InvalidGeometry("coil calibration must be positive");
    if (std::abs(c.current) > c.max_current)
      throw CurrentOutOfRange("|I| = " + std::to_string(std::abs(c.current)) +
                              " A exceeds " + std::to_string(c.max_current) + " A");
    b += axis_vector(c.axis) * (c.calibration * c.current);
  }
  return b;
}

}  // namespace qfield
