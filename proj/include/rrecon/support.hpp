#ifndef RRECON_SUPPORT_HPP
#define RRECON_SUPPORT_HPP

#include <cmath>
#include <cstddef>
#include <type_traits>
#include <variant>
#include <vector>

#include "rrecon/errors.hpp"
#include "rrecon/grid.hpp"

namespace rrecon {

/// Truncated cone: a disc of radius tip_radius at `tip`, widening along `axis`
/// (unit vector) with the given half opening angle, up to `height`.
struct Cone {
  Vec3 tip{0.0, 0.0, 0.0};
  Vec3 axis{1.0, 0.0, 0.0};
  double tip_radius = 1.0;
  double half_angle = 0.0;  // radians
  double height = 1.0;

  bool contains(const Vec3& p) const {
    const Vec3 d = p - tip;
    const double h = dot(d, axis);
    if (h < 0.0 || h > height) return false;
    const Vec3 radial = d - h * axis;
    const double r = tip_radius + h * std::tan(half_angle);
    return dot(radial, radial) <= r * r;
  }
};

/// Union of cylinders sharing one end point.
struct TubeSet {
  struct Tube {
    Vec3 direction{1.0, 0.0, 0.0};  // unit
    double length = 1.0;
  };
  Vec3 origin{0.0, 0.0, 0.0};
  double radius = 0.5;
  std::vector<Tube> tubes;

  bool contains(const Vec3& p) const {
    const Vec3 d = p - origin;
    for (const Tube& t : tubes) {
      const double s = dot(d, t.direction);
      if (s < 0.0 || s > t.length) continue;
      const Vec3 radial = d - s * t.direction;
      if (dot(radial, radial) <= radius * radius) return true;
    }
    return false;
  }
};

/// { p : normal . p <= offset }
struct HalfSpace {
  Vec3 normal{1.0, 0.0, 0.0};
  double offset = 0.0;

  bool contains(const Vec3& p) const { return dot(normal, p) <= offset; }
};

/// Axis-aligned box, closed on the low side and open on the high side.
struct Box {
  Vec3 lo{0.0, 0.0, 0.0};
  Vec3 hi{1.0, 1.0, 1.0};

  bool contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < lo[a] || p[a] >= hi[a]) return false;
    return true;
  }
};

/// Analytic support of a phantom. std::monostate marks "no analytic description".
using Support = std::variant<std::monostate, Cone, TubeSet, HalfSpace, Box>;

inline bool has_membership_test(const Support& s) { return !std::holds_alternative<std::monostate>(s); }

inline bool contains(const Support& s, const Vec3& p) {
  return std::visit(
      [&](const auto& shape) -> bool {
        if constexpr (std::is_same_v<std::decay_t<decltype(shape)>, std::monostate>) {
          throw ConfigError("support has no point-membership test");
        } else {
          return shape.contains(p);
        }
      },
      s);
}

/// Fraction of the s^3 regular subsample points of `voxel` that lie inside support + shift.
inline double coverage_fraction(const Support& support, const VoxelGrid& grid, std::size_t voxel,
                                const Vec3& shift, int subsamples) {
  if (subsamples < 1) throw ConfigError("subsample count must be >= 1");
  if (!has_membership_test(support)) throw ConfigError("support has no point-membership test");
  const Vec3 c = grid.center(voxel);
  const double inv = 1.0 / subsamples;
  std::size_t inside = 0;
  for (int k = 0; k < subsamples; ++k) {
    const double oz = ((k + 0.5) * inv - 0.5) * grid.spacing[2];
    for (int j = 0; j < subsamples; ++j) {
      const double oy = ((j + 0.5) * inv - 0.5) * grid.spacing[1];
      for (int i = 0; i < subsamples; ++i) {
        const double ox = ((i + 0.5) * inv - 0.5) * grid.spacing[0];
        // p in support + shift  <=>  p - shift in support
        const Vec3 p{c[0] + ox - shift[0], c[1] + oy - shift[1], c[2] + oz - shift[2]};
        if (contains(support, p)) ++inside;
      }
    }
  }
  const double total = static_cast<double>(subsamples) * subsamples * subsamples;
  return static_cast<double>(inside) / total;
}

/// value * coverage of every voxel.
inline std::vector<double> rasterize(const Support& support, const VoxelGrid& grid, const Vec3& shift,
                                     double value, int subsamples) {
  std::vector<double> out(grid.size());
  for (std::size_t v = 0; v < out.size(); ++v)
    out[v] = value * coverage_fraction(support, grid, v, shift, subsamples);
  return out;
}

}  // namespace rrecon

#endif  // RRECON_SUPPORT_HPP
