#pragma once

#include "gmf/pillarizer.hpp"
#include "gmf/tensor.hpp"

namespace gmf {

// Ego-centric polar coordinates of every cell center: Euclidean distance and
// two-argument-arctangent bearing in (-pi, pi], with atan2(0, 0) = 0.
struct PolarGrid {
  Tensor d;      // rows x cols, meters
  Tensor theta;  // rows x cols, radians
  double d_max = 0;  // max cell-center distance over the grid
};

// Default ego position: rear-center of a forward-facing extent.
inline double default_ego_x(const GridConfig& cfg) { return cfg.x_min; }
inline double default_ego_y(const GridConfig& cfg) { return 0.5 * (cfg.y_min + cfg.y_max); }

PolarGrid polar_from_grid(const GridConfig& cfg, double ego_x, double ego_y);

inline PolarGrid polar_from_grid(const GridConfig& cfg) {
  return polar_from_grid(cfg, default_ego_x(cfg), default_ego_y(cfg));
}

// Interleaved sinusoidal position code. For k = 0 .. C/4-1:
//   channel 4k   = sin(d * wd_k)        wd_k = base_d^(-4k/C)
//   channel 4k+1 = cos(d * wd_k)
//   channel 4k+2 = sin(theta * s * wt_k)  wt_k = base_theta^(-4k/C)
//   channel 4k+3 = cos(theta * s * wt_k)
// with s = d_max / pi so angle and distance occupy comparable ranges.
struct BevPosEncoding {
  Tensor enc;  // rows x cols x C, values in [-1, 1]
  double base_d = 10000.0;
  double base_theta = 10000.0;
};

BevPosEncoding encode_bev_position(const PolarGrid& polar, std::size_t channels,
                                   double base_d = 10000.0, double base_theta = 10000.0);

}  // namespace gmf
