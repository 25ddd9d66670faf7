#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gmf/tensor.hpp"

namespace gmf {

// One LiDAR return in the ego frame (x forward, y left, z up), with raw
// reflectance and laser ring index.
struct LidarPoint {
  double x = 0, y = 0, z = 0;
  double r = 0;
  std::uint32_t ring = 0;
};

using PointCloud = std::vector<LidarPoint>;

// BEV discretization: rho pixels per meter over [x_min, x_max) x
// [y_min, y_max). Spans times rho must come out integral.
struct GridConfig {
  double rho = 4.0;
  double x_min = 0.0, x_max = 32.0;
  double y_min = -16.0, y_max = 16.0;

  std::size_t rows() const;  // along x (forward)
  std::size_t cols() const;  // along y (lateral)
  void validate() const;

  double cell_center_x(std::size_t u) const { return x_min + (static_cast<double>(u) + 0.5) / rho; }
  double cell_center_y(std::size_t v) const { return y_min + (static_cast<double>(v) + 0.5) / rho; }
};

constexpr std::size_t kPillarFeatureDim = 14;

// H x W x 14 feature grid. Channels 0-7 max-pooled point features
// [x, y, z, r, ring, dx, dy, dz], 8-9 reflectance mean/variance, 10-13
// eigenvalue shape descriptors [linearity, planarity, sphericity,
// anisotropy]. Empty pillars are all-zero.
struct PillarGrid {
  Tensor features;                      // rows x cols x 14
  std::vector<std::uint32_t> occupancy;  // rows x cols point counts
  GridConfig config;
  std::size_t dropped = 0;  // out-of-bounds (or non-finite) input points

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (auto c : occupancy) n += c > 0 ? 1 : 0;
    return n;
  }
};

// Per-pillar point index lists. Out-of-bounds points are counted, not kept.
struct PillarAssignment {
  std::size_t rows = 0, cols = 0;
  std::vector<std::vector<std::uint32_t>> cells;  // rows*cols lists
  std::size_t dropped = 0;
};

PillarAssignment assign(const PointCloud& points, const GridConfig& cfg);

// f1..f8: per-dimension max over [x, y, z, r, ring, dx, dy, dz] with offsets
// relative to the pillar center (dx, dy) and the mean height (dz).
std::array<double, 8> pooled_features(std::span<const LidarPoint> pts, double x_c, double y_c);

// f9 mean reflectance, f10 population variance (1/m).
std::array<double, 2> intensity_stats(std::span<const LidarPoint> pts);

// f11..f14 from the eigenvalues l1 >= l2 >= l3 of the population coordinate
// covariance: linearity, planarity, sphericity, anisotropy (each in [0, 1],
// first three summing to 1). Zeros when m < 3 or l1 <= 1e-12.
std::array<double, 4> shape_descriptors(std::span<const LidarPoint> pts);

// Eigenvalues of a symmetric 3x3 matrix (row-major upper triangle honored),
// descending, negatives clamped to zero. Cyclic Jacobi.
std::array<double, 3> sym3x3_eigenvalues(const std::array<double, 9>& m);

PillarGrid pillarize(const PointCloud& points, const GridConfig& cfg);

}  // namespace gmf
