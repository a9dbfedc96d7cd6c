#ifndef RRECON_GRID_HPP
#define RRECON_GRID_HPP

#include <array>
#include <cstddef>

#include "rrecon/errors.hpp"

namespace rrecon {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

/// Regular voxel grid. Voxel (ix, iy, iz) has its center at origin + (ix, iy, iz) * spacing;
/// the linear index runs x fastest: ix + nx * (iy + ny * iz). Lengths are in mm.
struct VoxelGrid {
  std::array<std::size_t, 3> dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }

  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return ix + dims[0] * (iy + dims[1] * iz);
  }

  std::array<std::size_t, 3> coords(std::size_t linear) const {
    return {linear % dims[0], (linear / dims[0]) % dims[1], linear / (dims[0] * dims[1])};
  }

  Vec3 center(std::size_t linear) const {
    const auto c = coords(linear);
    return {origin[0] + static_cast<double>(c[0]) * spacing[0],
            origin[1] + static_cast<double>(c[1]) * spacing[1],
            origin[2] + static_cast<double>(c[2]) * spacing[2]};
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) throw ConfigError("voxel grid: every dimension must be >= 1");
      if (!(spacing[a] > 0.0)) throw ConfigError("voxel grid: every spacing must be > 0");
    }
  }

  bool operator==(const VoxelGrid&) const = default;
};

/// Grid of nx x ny x nz voxels centered on the coordinate origin.
inline VoxelGrid centered_grid(std::array<std::size_t, 3> dims, Vec3 spacing) {
  VoxelGrid g;
  g.dims = dims;
  g.spacing = spacing;
  g.validate();
  for (int a = 0; a < 3; ++a) g.origin[a] = -0.5 * static_cast<double>(dims[a] - 1) * spacing[a];
  return g;
}

}  // namespace rrecon

#endif  // RRECON_GRID_HPP
