#include <cmath>

#include "doctest.h"
#include "gmf/bev_encoding.hpp"

using namespace gmf;

TEST_SUITE("bev-encoding") {

TEST_CASE("polar grid basics") {
  // 1 m cells over [0,8) x [-4,4); ego at rear center (0, 0).
  GridConfig cfg{1.0, 0.0, 8.0, -4.0, 4.0};
  PolarGrid pg = polar_from_grid(cfg);

  SUBCASE("3-4-5 triangle") {
    // Ego (0.5, -0.5); cell (3,7) center (3.5, 3.5): 3 m forward, 4 m left.
    PolarGrid p2 = polar_from_grid(cfg, 0.5, -0.5);
    CHECK(p2.d[3 * cfg.cols() + 7] == doctest::Approx(5.0).epsilon(1e-15));
  }

  SUBCASE("ego cell has d = 0 and theta = 0") {
    PolarGrid p3 = polar_from_grid(cfg, 0.5, 0.5);  // exactly cell (0,4) center
    CHECK(p3.d[0 * cfg.cols() + 4] == 0.0);
    CHECK(p3.theta[0 * cfg.cols() + 4] == 0.0);
  }

  SUBCASE("distances are lateral-mirror symmetric about the ego column") {
    const std::size_t H = cfg.rows(), W = cfg.cols();
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < W; ++v)
        CHECK(pg.d[u * W + v] == doctest::Approx(pg.d[u * W + (W - 1 - v)]).epsilon(1e-14));
  }

  SUBCASE("bearings lie in (-pi, pi]") {
    for (std::size_t i = 0; i < pg.theta.numel(); ++i) {
      CHECK(pg.theta[i] > -M_PI);
      CHECK(pg.theta[i] <= M_PI);
    }
  }
}

TEST_CASE("encoding channel structure") {
  GridConfig cfg{1.0, 0.0, 8.0, -4.0, 4.0};
  PolarGrid pg = polar_from_grid(cfg);
  const std::size_t C = 16;
  BevPosEncoding pe = encode_bev_position(pg, C);

  SUBCASE("all values in [-1, 1]") {
    for (std::size_t i = 0; i < pe.enc.numel(); ++i) {
      CHECK(pe.enc[i] >= -1.0);
      CHECK(pe.enc[i] <= 1.0);
    }
  }

  SUBCASE("sin^2 + cos^2 = 1 per pair") {
    for (std::size_t cell = 0; cell < cfg.rows() * cfg.cols(); ++cell)
      for (std::size_t pair = 0; pair < C / 2; ++pair) {
        const double s = pe.enc[cell * C + 2 * pair];
        const double c = pe.enc[cell * C + 2 * pair + 1];
        CHECK(std::abs(s * s + c * c - 1.0) < 1e-12);
      }
  }

  SUBCASE("d = 0 cell has sin 0 / cos 1 distance channels") {
    PolarGrid p3 = polar_from_grid(cfg, 0.5, 0.5);
    BevPosEncoding pe3 = encode_bev_position(p3, C);
    const std::size_t cell = 0 * cfg.cols() + 4;
    for (std::size_t k = 0; k < C / 4; ++k) {
      CHECK(pe3.enc[cell * C + 4 * k] == 0.0);
      CHECK(pe3.enc[cell * C + 4 * k + 1] == 1.0);
    }
  }

  SUBCASE("interleave: zeroing distances only changes channels 0,1 mod 4") {
    PolarGrid zeroed = pg;
    for (std::size_t i = 0; i < zeroed.d.numel(); ++i) zeroed.d[i] = 0.0;
    BevPosEncoding pez = encode_bev_position(zeroed, C);
    for (std::size_t cell = 0; cell < cfg.rows() * cfg.cols(); ++cell)
      for (std::size_t c = 0; c < C; ++c) {
        const bool distance_channel = (c % 4 == 0) || (c % 4 == 1);
        if (!distance_channel) CHECK(pez.enc[cell * C + c] == pe.enc[cell * C + c]);
      }
  }

  SUBCASE("theta and theta + 2pi encode to the same angle channels") {
    PolarGrid shifted = pg;
    for (std::size_t i = 0; i < shifted.theta.numel(); ++i) shifted.theta[i] += 2.0 * M_PI;
    BevPosEncoding a = encode_bev_position(pg, C);
    BevPosEncoding b = encode_bev_position(shifted, C);
    for (std::size_t i = 0; i < a.enc.numel(); ++i) CHECK(std::abs(a.enc[i] - b.enc[i]) < 1e-9);
  }

  SUBCASE("180-degree rotation about ego keeps distance channels") {
    // Rotating the grid 180 degrees about the ego maps cell centers to
    // mirrored positions with identical distance; compare d-channel values
    // under the induced permutation for a centered ego.
    GridConfig sym{1.0, -4.0, 4.0, -4.0, 4.0};
    PolarGrid ps = polar_from_grid(sym, 0.0, 0.0);
    BevPosEncoding pes = encode_bev_position(ps, C);
    const std::size_t H = sym.rows(), W = sym.cols();
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < W; ++v) {
        const std::size_t ru = H - 1 - u, rv = W - 1 - v;
        for (std::size_t k = 0; k < C / 4; ++k) {
          CHECK(pes.enc.at(u, v, 4 * k) == pes.enc.at(ru, rv, 4 * k));
          CHECK(pes.enc.at(u, v, 4 * k + 1) == pes.enc.at(ru, rv, 4 * k + 1));
        }
      }
  }
}

TEST_CASE("channel count must be a positive multiple of 4") {
  GridConfig cfg{1.0, 0.0, 4.0, -2.0, 2.0};
  PolarGrid pg = polar_from_grid(cfg);
  CHECK_THROWS_AS((void)encode_bev_position(pg, 6), ConfigError);
  CHECK_THROWS_AS((void)encode_bev_position(pg, 0), ConfigError);
  CHECK_NOTHROW((void)encode_bev_position(pg, 8));
}

}  // TEST_SUITE
