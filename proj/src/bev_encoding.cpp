#include "gmf/bev_encoding.hpp"

#include <cmath>

#include "gmf/ops.hpp"

namespace gmf {

PolarGrid polar_from_grid(const GridConfig& cfg, double ego_x, double ego_y) {
  cfg.validate();
  const std::size_t H = cfg.rows(), W = cfg.cols();
  PolarGrid pg;
  pg.d = Tensor(Shape{H, W});
  pg.theta = Tensor(Shape{H, W});
  for (std::size_t u = 0; u < H; ++u) {
    for (std::size_t v = 0; v < W; ++v) {
      const double dx = cfg.cell_center_x(u) - ego_x;
      const double dy = cfg.cell_center_y(v) - ego_y;
      const double d = std::hypot(dx, dy);
      double th = (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, dx);
      if (th == -M_PI) th = M_PI;
      pg.d[u * W + v] = d;
      pg.theta[u * W + v] = th;
      pg.d_max = std::max(pg.d_max, d);
    }
  }
  return pg;
}

BevPosEncoding encode_bev_position(const PolarGrid& polar, std::size_t channels, double base_d,
                                   double base_theta) {
  if (channels == 0 || channels % 4 != 0)
    throw ConfigError("positional encoding channel count must be a positive multiple of 4, got " +
                      std::to_string(channels));
  const std::size_t H = polar.d.dim(0), W = polar.d.dim(1);
  const double angle_scale = polar.d_max / M_PI;

  BevPosEncoding pe;
  pe.base_d = base_d;
  pe.base_theta = base_theta;
  pe.enc = Tensor(Shape{H, W, channels});
  const std::size_t bands = channels / 4;
  std::vector<double> wd(bands), wt(bands);
  for (std::size_t k = 0; k < bands; ++k) {
    const double frac = static_cast<double>(4 * k) / static_cast<double>(channels);
    wd[k] = std::pow(base_d, -frac);
    wt[k] = std::pow(base_theta, -frac);
  }
  for (std::size_t cell = 0; cell < H * W; ++cell) {
    const double d = polar.d[cell];
    // Wrap synthetic out-of-range bearings into (-pi, pi]; in-range values
    // pass through untouched.
    double th = polar.theta[cell];
    while (th > M_PI) th -= 2.0 * M_PI;
    while (th <= -M_PI) th += 2.0 * M_PI;
    double* e = pe.enc.data() + cell * channels;
    for (std::size_t k = 0; k < bands; ++k) {
      e[4 * k + 0] = std::sin(d * wd[k]);
      e[4 * k + 1] = std::cos(d * wd[k]);
      e[4 * k + 2] = std::sin(th * angle_scale * wt[k]);
      e[4 * k + 3] = std::cos(th * angle_scale * wt[k]);
    }
  }
  ensure_finite(pe.enc, "encode_bev_position");
  return pe;
}

}  // namespace gmf
