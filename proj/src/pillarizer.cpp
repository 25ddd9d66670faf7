#include "gmf/pillarizer.hpp"

#include <algorithm>
#include <cmath>

#include "gmf/ops.hpp"
#include "gmf/parallel.hpp"

namespace gmf {

namespace {

std::size_t span_cells(double lo, double hi, double rho, const char* axis) {
  const double span = (hi - lo) * rho;
  const double rounded = std::round(span);
  if (span <= 0 || std::abs(span - rounded) > 1e-9 || rounded < 1.0)
    throw ConfigError(std::string("grid ") + axis + " span times rho must be a positive integer, got " +
                      std::to_string(span));
  return static_cast<std::size_t>(rounded);
}

double pairwise(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace

std::size_t GridConfig::rows() const { return span_cells(x_min, x_max, rho, "x"); }
std::size_t GridConfig::cols() const { return span_cells(y_min, y_max, rho, "y"); }

void GridConfig::validate() const {
  if (!(rho > 0)) throw ConfigError("rho must be positive, got " + std::to_string(rho));
  if (!(x_min < x_max) || !(y_min < y_max))
    throw ConfigError("grid extents must be strictly ordered");
  (void)rows();
  (void)cols();
}

PillarAssignment assign(const PointCloud& points, const GridConfig& cfg) {
  cfg.validate();
  PillarAssignment out;
  out.rows = cfg.rows();
  out.cols = cfg.cols();
  out.cells.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const LidarPoint& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      ++out.dropped;
      continue;
    }
    const double fu = std::floor((p.x - cfg.x_min) * cfg.rho);
    const double fv = std::floor((p.y - cfg.y_min) * cfg.rho);
    if (fu < 0 || fv < 0 || fu >= static_cast<double>(out.rows) ||
        fv >= static_cast<double>(out.cols)) {
      ++out.dropped;
      continue;
    }
    out.cells[static_cast<std::size_t>(fu) * out.cols + static_cast<std::size_t>(fv)].push_back(
        static_cast<std::uint32_t>(i));
  }
  return out;
}

std::array<double, 8> pooled_features(std::span<const LidarPoint> pts, double x_c, double y_c) {
  std::vector<double> zs(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) zs[j] = pts[j].z;
  const double z_mean = pairwise(zs) / static_cast<double>(pts.size());

  std::array<double, 8> f;
  f.fill(-std::numeric_limits<double>::infinity());
  for (const LidarPoint& p : pts) {
    f[0] = std::max(f[0], p.x);
    f[1] = std::max(f[1], p.y);
    f[2] = std::max(f[2], p.z);
    f[3] = std::max(f[3], p.r);
    f[4] = std::max(f[4], static_cast<double>(p.ring));
    f[5] = std::max(f[5], p.x - x_c);
    f[6] = std::max(f[6], p.y - y_c);
    f[7] = std::max(f[7], p.z - z_mean);
  }
  return f;
}

std::array<double, 2> intensity_stats(std::span<const LidarPoint> pts) {
  const double m = static_cast<double>(pts.size());
  std::vector<double> buf(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) buf[j] = pts[j].r;
  const double mean = pairwise(buf) / m;
  for (std::size_t j = 0; j < pts.size(); ++j) buf[j] = (pts[j].r - mean) * (pts[j].r - mean);
  const double var = pairwise(buf) / m;
  return {mean, var};
}

std::array<double, 3> sym3x3_eigenvalues(const std::array<double, 9>& m) {
  double a[3][3] = {{m[0], m[1], m[2]}, {m[3], m[4], m[5]}, {m[6], m[7], m[8]}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if (std::sqrt(2.0 * off) < 1e-12) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // Rotate rows/columns p and q.
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::array<double, 3> eig = {a[0][0], a[1][1], a[2][2]};
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  for (double& e : eig) e = std::max(e, 0.0);
  return eig;
}

std::array<double, 4> shape_descriptors(std::span<const LidarPoint> pts) {
  if (pts.size() < 3) return {0, 0, 0, 0};
  const double m = static_cast<double>(pts.size());
  std::vector<double> buf(pts.size());
  double mean[3];
  for (int d = 0; d < 3; ++d) {
    for (std::size_t j = 0; j < pts.size(); ++j)
      buf[j] = d == 0 ? pts[j].x : (d == 1 ? pts[j].y : pts[j].z);
    mean[d] = pairwise(buf) / m;
  }
  double cov[3][3] = {};
  for (const LidarPoint& p : pts) {
    const double c[3] = {p.x - mean[0], p.y - mean[1], p.z - mean[2]};
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) cov[i][j] += c[i] * c[j];
  }
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      cov[i][j] /= m;
      cov[j][i] = cov[i][j];
    }
  const auto eig = sym3x3_eigenvalues(
      {cov[0][0], cov[0][1], cov[0][2], cov[1][0], cov[1][1], cov[1][2], cov[2][0], cov[2][1],
       cov[2][2]});
  const double l1 = eig[0], l2 = eig[1], l3 = eig[2];
  if (l1 <= 1e-12) return {0, 0, 0, 0};
  return {(l1 - l2) / l1, (l2 - l3) / l1, l3 / l1, (l1 - l3) / l1};
}

PillarGrid pillarize(const PointCloud& points, const GridConfig& cfg) {
  PillarAssignment asg = assign(points, cfg);
  PillarGrid grid;
  grid.config = cfg;
  grid.dropped = asg.dropped;
  grid.features = Tensor(Shape{asg.rows, asg.cols, kPillarFeatureDim});
  grid.occupancy.assign(asg.rows * asg.cols, 0);

  parallel_for(asg.rows * asg.cols, [&](std::size_t lo, std::size_t hi) {
    std::vector<LidarPoint> local;
    for (std::size_t cell = lo; cell < hi; ++cell) {
      const auto& idx = asg.cells[cell];
      grid.occupancy[cell] = static_cast<std::uint32_t>(idx.size());
      if (idx.empty()) continue;

      // Canonical in-pillar order: statistics become exactly
      // permutation-invariant, not just within rounding.
      local.clear();
      local.reserve(idx.size());
      for (std::uint32_t i : idx) local.push_back(points[i]);
      std::sort(local.begin(), local.end(), [](const LidarPoint& a, const LidarPoint& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        if (a.z != b.z) return a.z < b.z;
        if (a.r != b.r) return a.r < b.r;
        return a.ring < b.ring;
      });

      const std::size_t u = cell / asg.cols, v = cell % asg.cols;
      const auto pooled = pooled_features(local, cfg.cell_center_x(u), cfg.cell_center_y(v));
      const auto stats = intensity_stats(local);
      const auto shape = shape_descriptors(local);
      double* f = grid.features.data() + cell * kPillarFeatureDim;
      for (int k = 0; k < 8; ++k) f[k] = pooled[static_cast<std::size_t>(k)];
      f[8] = stats[0];
      f[9] = stats[1];
      for (int k = 0; k < 4; ++k) f[10 + k] = shape[static_cast<std::size_t>(k)];
    }
  });
  ensure_finite(grid.features, "pillarize");
  return grid;
}

}  // namespace gmf
