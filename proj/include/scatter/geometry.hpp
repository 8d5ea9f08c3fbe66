#pragma once

#include <vector>

#include "scatter/matrix.hpp"

namespace scatter {

/// Regular voxelization of the cube [0, side_length]^3. Centers sit at cell
/// midpoints, ordered lexicographically with x fastest. All lengths are in
/// wavelengths, so k = 2*pi and k*h is the dimensionless grid parameter.
struct VoxelGrid {
  double side_length = 0.0;
  int n_per_side = 0;
  double h = 0.0;
  double k = kWavenumber;
  std::vector<Vec3> centers;

  int num_voxels() const { return static_cast<int>(centers.size()); }
  double kh() const { return k * h; }
  Vec3 domain_center() const {
    return Vec3::Constant(0.5 * side_length);
  }
};

inline VoxelGrid build_grid(double side_length, int n_per_side) {
  if (side_length <= 0.0) throw std::invalid_argument("build_grid: side_length must be > 0");
  if (n_per_side < 1) throw std::invalid_argument("build_grid: n_per_side must be >= 1");
  VoxelGrid grid;
  grid.side_length = side_length;
  grid.n_per_side = n_per_side;
  grid.h = side_length / n_per_side;
  grid.centers.reserve(static_cast<std::size_t>(n_per_side) * n_per_side * n_per_side);
  for (int iz = 0; iz < n_per_side; ++iz)
    for (int iy = 0; iy < n_per_side; ++iy)
      for (int ix = 0; ix < n_per_side; ++ix)
        grid.centers.emplace_back((ix + 0.5) * grid.h, (iy + 0.5) * grid.h, (iz + 0.5) * grid.h);
  return grid;
}

enum class Coverage { FullSphere, Hemisphere };

struct DirectionSet {
  std::vector<Vec3> directions;
  Coverage coverage = Coverage::FullSphere;

  int count() const { return static_cast<int>(directions.size()); }
};

/// Deterministic quasi-uniform directions via the Fibonacci spiral lattice.
/// Hemisphere coverage reflects negative-z points into the upper half.
inline DirectionSet sphere_directions(int count, Coverage coverage) {
  if (count < 1) throw std::invalid_argument("sphere_directions: count must be >= 1");
  DirectionSet set;
  set.coverage = coverage;
  set.directions.reserve(count);
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    if (coverage == Coverage::Hemisphere && z < 0.0) z = -z;
    set.directions.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return set;
}

}  // namespace scatter
