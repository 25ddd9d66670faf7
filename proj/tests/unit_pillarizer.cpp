#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gmf/parallel.hpp"
#include "gmf/pillarizer.hpp"
#include "gmf/rng.hpp"
#include "oracles.hpp"

using namespace gmf;

namespace {

PointCloud random_cloud(Rng& rng, std::size_t n, const GridConfig& cfg, double margin = 0.0) {
  PointCloud pc(n);
  for (auto& p : pc) {
    p.x = rng.uniform(cfg.x_min - margin, cfg.x_max + margin);
    p.y = rng.uniform(cfg.y_min - margin, cfg.y_max + margin);
    p.z = rng.uniform(-2.0, 4.0);
    p.r = rng.uniform(0.0, 255.0);
    p.ring = static_cast<std::uint32_t>(rng.uniform_index(64));
  }
  return pc;
}

PointCloud pillar_cloud(Rng& rng, std::size_t m, double x0, double y0, double spread = 0.1) {
  PointCloud pc(m);
  for (auto& p : pc) {
    p.x = x0 + rng.uniform(-spread, spread);
    p.y = y0 + rng.uniform(-spread, spread);
    p.z = rng.uniform(-1.0, 2.0);
    p.r = rng.uniform(0.0, 100.0);
    p.ring = static_cast<std::uint32_t>(rng.uniform_index(32));
  }
  return pc;
}

}  // namespace

TEST_SUITE("pillarizer") {

TEST_CASE("grid config derives dims and rejects bad configs") {
  GridConfig cfg;  // defaults: rho 4, 0..32 x -16..16
  CHECK(cfg.rows() == 128);
  CHECK(cfg.cols() == 128);

  GridConfig bad = cfg;
  bad.x_max = 32.1;  // 128.4 cells
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.rho = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.y_min = bad.y_max;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("assignment boundary rule is half-open") {
  GridConfig cfg{1.0, 0.0, 4.0, 0.0, 4.0};
  PointCloud pc;
  pc.push_back({0.0, 0.0, 0.0, 1.0, 0});   // lower corner -> pillar (0,0)
  pc.push_back({4.0, 1.0, 0.0, 1.0, 0});   // x at upper edge -> dropped
  pc.push_back({1.0, 4.0, 0.0, 1.0, 0});   // y at upper edge -> dropped
  pc.push_back({3.999, 3.999, 0.0, 1.0, 0});
  PillarAssignment a = assign(pc, cfg);
  CHECK(a.cells[0].size() == 1);
  CHECK(a.cells[0][0] == 0);
  CHECK(a.dropped == 2);
  CHECK(a.cells[3 * 4 + 3].size() == 1);
}

TEST_CASE("conservation: occupancy plus dropped equals input count") {
  Rng rng(42);
  GridConfig cfg;
  PointCloud pc = random_cloud(rng, 100000, cfg, 2.0);  // margin pushes some out of bounds
  PillarGrid grid = pillarize(pc, cfg);
  std::size_t occupied_total = std::accumulate(grid.occupancy.begin(), grid.occupancy.end(), 0ull);
  CHECK(occupied_total + grid.dropped == pc.size());
  CHECK(grid.dropped > 0);

  // In-extent cloud: everything lands.
  PointCloud inside = random_cloud(rng, 100000, cfg, 0.0);
  PillarGrid g2 = pillarize(inside, cfg);
  std::size_t total2 = std::accumulate(g2.occupancy.begin(), g2.occupancy.end(), 0ull);
  CHECK(total2 == inside.size());
  CHECK(g2.dropped == 0);
}

TEST_CASE("non-finite points are dropped and counted, not binned") {
  GridConfig cfg{1.0, 0.0, 4.0, 0.0, 4.0};
  PointCloud pc = {{1.0, 1.0, 0.0, 1.0, 0},
                   {std::numeric_limits<double>::quiet_NaN(), 1.0, 0.0, 1.0, 0},
                   {2.0, std::numeric_limits<double>::infinity(), 0.0, 1.0, 0}};
  PillarGrid grid = pillarize(pc, cfg);
  CHECK(grid.dropped == 2);
  CHECK(grid.occupied_count() == 1);
}

TEST_CASE("empty cloud gives an all-zero grid") {
  GridConfig cfg{2.0, 0.0, 4.0, -2.0, 2.0};
  PillarGrid grid = pillarize({}, cfg);
  CHECK(grid.features.shape() == Shape{8, 8, 14});
  for (std::size_t i = 0; i < grid.features.numel(); ++i) CHECK(grid.features[i] == 0.0);
  for (auto c : grid.occupancy) CHECK(c == 0);
}

TEST_CASE("pooled features: single point and two-point mean") {
  SUBCASE("single point has zero offsets") {
    PointCloud pc = {{1.3, 2.1, 0.7, 5.0, 3}};
    auto f = pooled_features(pc, 1.25, 2.25);
    CHECK(f[0] == 1.3);
    CHECK(f[4] == 3.0);
    CHECK(f[5] == doctest::Approx(0.05));
    CHECK(f[7] == 0.0);  // dz relative to its own mean
  }
  SUBCASE("two points with z = 1, 3") {
    PointCloud pc = {{0, 0, 1.0, 0, 0}, {0, 0, 3.0, 0, 0}};
    auto f = pooled_features(pc, 0, 0);
    CHECK(f[2] == 3.0);
    CHECK(f[7] == 1.0);  // z_mean = 2, max dz = 1
  }
  SUBCASE("random pillar matches a loop-max oracle exactly") {
    Rng rng(77);
    PointCloud pc = pillar_cloud(rng, 50, 1.0, 1.0);
    const double xc = 1.0, yc = 1.0;
    auto f = pooled_features(pc, xc, yc);
    double zm = 0;
    for (const auto& p : pc) zm += p.z;
    zm /= static_cast<double>(pc.size());
    double expect[8] = {-1e300, -1e300, -1e300, -1e300, -1e300, -1e300, -1e300, -1e300};
    for (const auto& p : pc) {
      expect[0] = std::max(expect[0], p.x);
      expect[1] = std::max(expect[1], p.y);
      expect[2] = std::max(expect[2], p.z);
      expect[3] = std::max(expect[3], p.r);
      expect[4] = std::max(expect[4], double(p.ring));
      expect[5] = std::max(expect[5], p.x - xc);
      expect[6] = std::max(expect[6], p.y - yc);
      expect[7] = std::max(expect[7], p.z - zm);
    }
    for (int k = 0; k < 7; ++k) CHECK(f[std::size_t(k)] == expect[k]);
    CHECK(f[7] == doctest::Approx(expect[7]).epsilon(1e-12));
  }
}

TEST_CASE("intensity stats") {
  SUBCASE("constant reflectance has zero variance") {
    PointCloud pc(5, LidarPoint{0, 0, 0, 7.5, 0});
    auto s = intensity_stats(pc);
    CHECK(s[0] == 7.5);
    CHECK(s[1] == 0.0);
  }
  SUBCASE("r = {0, 2} gives mean 1, population variance 1") {
    PointCloud pc = {{0, 0, 0, 0.0, 0}, {0, 0, 0, 2.0, 0}};
    auto s = intensity_stats(pc);
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 1.0);
  }
  SUBCASE("random pillar matches a two-pass oracle") {
    Rng rng(5);
    PointCloud pc = pillar_cloud(rng, 100, 0, 0);
    auto s = intensity_stats(pc);
    double mean = 0;
    for (const auto& p : pc) mean += p.r;
    mean /= 100.0;
    double var = 0;
    for (const auto& p : pc) var += (p.r - mean) * (p.r - mean);
    var /= 100.0;
    CHECK(oracles::rel_err(s[0], mean, 1e-12) < 1e-12);
    CHECK(oracles::rel_err(s[1], var, 1e-12) < 1e-12);
  }
}

TEST_CASE("shape descriptors") {
  SUBCASE("collinear points are pure linearity") {
    PointCloud pc;
    for (int i = 0; i < 12; ++i)
      pc.push_back({0.1 * i, 0.05 * i, -0.02 * i, 1.0, 0});  // exact line segment
    auto d = shape_descriptors(pc);
    CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d[1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(d[2] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(d[3] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("isotropic ball sample approaches pure sphericity") {
    Rng rng(99);
    PointCloud pc;
    while (pc.size() < 10000) {
      double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1), z = rng.uniform(-1, 1);
      if (x * x + y * y + z * z <= 1.0) pc.push_back({x, y, z, 1.0, 0});
    }
    auto d = shape_descriptors(pc);
    CHECK(std::abs(d[2] - 1.0) < 0.05);  // sphericity -> 1
    CHECK(d[3] < 0.05);                  // anisotropy -> 0
  }
  SUBCASE("descriptors separate poles, ground, and scatter") {
    Rng rng(404);
    // Vertical pole: tight in x/y, spread in z.
    PointCloud pole;
    for (int i = 0; i < 40; ++i)
      pole.push_back({rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), 0.05 * i, 20.0, 0});
    auto dp = shape_descriptors(pole);
    CHECK(dp[0] > 0.9);  // linearity

    // Ground patch: planar spread, little height variation.
    PointCloud ground;
    for (int i = 0; i < 60; ++i)
      ground.push_back({rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12),
                        rng.uniform(-0.002, 0.002), 5.0, 1});
    auto dg = shape_descriptors(ground);
    CHECK(dg[1] > 0.9);  // planarity
    CHECK(dg[3] > 0.9);  // still strongly anisotropic (flat, not volumetric)

    // Volumetric scatter.
    PointCloud blob;
    for (int i = 0; i < 200; ++i)
      blob.push_back({rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                      1.0, 2});
    auto db = shape_descriptors(blob);
    CHECK(db[2] > dp[2]);
    CHECK(db[2] > dg[2]);
    CHECK(db[3] < 0.4);  // low anisotropy for the blob
  }
  SUBCASE("degenerate pillars give zeros") {
    PointCloud two = {{0, 0, 0, 1, 0}, {1, 1, 1, 1, 0}};
    auto d = shape_descriptors(two);
    for (double v : d) CHECK(v == 0.0);
    PointCloud same(5, LidarPoint{1, 2, 3, 1, 0});
    auto d2 = shape_descriptors(same);
    for (double v : d2) CHECK(v == 0.0);
  }
  SUBCASE("descriptor simplex and ranges on random pillars") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
      PointCloud pc = pillar_cloud(rng, 3 + rng.uniform_index(40), 0, 0);
      auto d = shape_descriptors(pc);
      CHECK(std::abs(d[0] + d[1] + d[2] - 1.0) < 1e-10);
      for (double v : d) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("jacobi eigenvalues match the cubic-root oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    // Random symmetric PSD matrix from point scatter.
    PointCloud pc = pillar_cloud(rng, 20, 0, 0, 0.5);
    double mean[3] = {0, 0, 0};
    for (const auto& p : pc) {
      mean[0] += p.x;
      mean[1] += p.y;
      mean[2] += p.z;
    }
    for (double& m : mean) m /= static_cast<double>(pc.size());
    double cov[3][3] = {};
    for (const auto& p : pc) {
      const double c[3] = {p.x - mean[0], p.y - mean[1], p.z - mean[2]};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cov[i][j] += c[i] * c[j] / static_cast<double>(pc.size());
    }
    auto jacobi = sym3x3_eigenvalues({cov[0][0], cov[0][1], cov[0][2], cov[1][0], cov[1][1],
                                      cov[1][2], cov[2][0], cov[2][1], cov[2][2]});
    auto cubic = oracles::sym3x3_eigen_cubic(cov);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(jacobi[std::size_t(i)] - cubic[std::size_t(i)]) < 1e-8);
  }
}

TEST_CASE("pillarize: permutation invariance is bitwise") {
  Rng rng(2024);
  GridConfig cfg{2.0, 0.0, 8.0, -4.0, 4.0};
  PointCloud pc = random_cloud(rng, 5000, cfg);
  PillarGrid a = pillarize(pc, cfg);

  // Deterministic shuffle.
  PointCloud shuffled = pc;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
  PillarGrid b = pillarize(shuffled, cfg);

  REQUIRE(a.features.numel() == b.features.numel());
  for (std::size_t i = 0; i < a.features.numel(); ++i) REQUIRE(a.features[i] == b.features[i]);
}

TEST_CASE("pillarize: descriptor translation invariance") {
  Rng rng(31337);
  PointCloud pc = pillar_cloud(rng, 64, 1.2, 0.7, 0.2);
  auto base = shape_descriptors(pc);
  auto base_stats = intensity_stats(pc);
  PointCloud moved = pc;
  for (auto& p : moved) {
    p.x += 0.05;
    p.y -= 0.03;
    p.z += 1.7;
  }
  auto shifted = shape_descriptors(moved);
  auto shifted_stats = intensity_stats(moved);
  for (int k = 0; k < 4; ++k)
    CHECK(std::abs(base[std::size_t(k)] - shifted[std::size_t(k)]) < 1e-10);
  CHECK(std::abs(base_stats[1] - shifted_stats[1]) < 1e-10);
}

TEST_CASE("pillarize: thread count does not change the result") {
  Rng rng(55);
  GridConfig cfg{2.0, 0.0, 8.0, -4.0, 4.0};
  PointCloud pc = random_cloud(rng, 20000, cfg);
  set_num_threads(1);
  PillarGrid a = pillarize(pc, cfg);
  set_num_threads(4);
  PillarGrid b = pillarize(pc, cfg);
  set_num_threads(1);
  for (std::size_t i = 0; i < a.features.numel(); ++i) REQUIRE(a.features[i] == b.features[i]);
}

TEST_CASE("default config matches the 0.25 m / 128-cell setup") {
  GridConfig cfg;
  CHECK(cfg.rho == 4.0);  // 0.25 m resolution
  CHECK(cfg.rows() == 128);
  CHECK(cfg.cols() == 128);
  Rng rng(1);
  PointCloud pc = random_cloud(rng, 1000, cfg);
  PillarGrid g = pillarize(pc, cfg);
  CHECK(g.features.shape() == Shape{128, 128, 14});
}

}  // TEST_SUITE
