#include "gmf/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gmf/aware_ssm.hpp"
#include "gmf/bev_encoding.hpp"
#include "gmf/bev_ssm_block.hpp"
#include "gmf/pillarizer.hpp"
#include "gmf/rng.hpp"
#include "gmf/scan_serializer.hpp"

namespace gmf {

namespace {

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double max_rel_err(const Tensor& a, const Tensor& b, double floor) {
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

Tensor random_tensor(Rng& rng, Shape s, double lo, double hi) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor central_diff(const std::function<double()>& eval, Tensor& param, double step) {
  Tensor g(param.shape());
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double saved = param[i];
    param[i] = saved + step;
    const double fp = eval();
    param[i] = saved - step;
    const double fm = eval();
    param[i] = saved;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Closed-form eigenvalues of a symmetric 3x3 via the characteristic cubic.
std::array<double, 3> eigen_cubic(const double m[3][3]) {
  const double p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
  std::array<double, 3> eig;
  if (p1 < 1e-300) {
    eig = {m[0][0], m[1][1], m[2][2]};
  } else {
    const double q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    const double p2 = (m[0][0] - q) * (m[0][0] - q) + (m[1][1] - q) * (m[1][1] - q) +
                      (m[2][2] - q) * (m[2][2] - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    double b[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b[i][j] = (m[i][j] - (i == j ? q : 0.0)) / p;
    double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                  b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                  b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    double r = std::min(1.0, std::max(-1.0, detb / 2.0));
    const double phi = std::acos(r) / 3.0;
    eig[0] = q + 2.0 * p * std::cos(phi);
    eig[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    eig[1] = 3.0 * q - eig[0] - eig[2];
  }
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

SuiteResult suite_scan_oracle(std::uint64_t seed) {
  SuiteResult r{"scan-oracle-equivalence", true, "", seed};
  Rng rng(seed);
  double worst = 0;
  for (std::size_t L : {1u, 2u, 16u, 256u, 1024u}) {
    for (std::size_t D : {1u, 8u}) {
      for (int rep = 0; rep < 3; ++rep) {
        Tensor delta = random_tensor(rng, {L, D}, -4.0, 4.0);
        Tensor a = random_tensor(rng, {D}, -1.0, 1.0);
        Tensor gate = sigmoid(add(delta, a));
        Tensor drive = random_tensor(rng, {L, D}, -2.0, 2.0);
        worst = std::max(worst,
                         max_rel_err(scan_gated(gate, drive, 64), scan_sequential(gate, drive), 1e-9));
      }
    }
  }
  {
    const std::size_t L = 2048, D = 8;
    Tensor gate(Shape{L, D}, 1.0 / (1.0 + std::exp(8.0)));  // sigma(-8)
    Tensor drive = random_tensor(rng, {L, D}, -2.0, 2.0);
    worst = std::max(worst, max_rel_err(scan_gated(gate, drive, 64), scan_sequential(gate, drive), 1e-9));
  }
  std::ostringstream d;
  d << "max_rel_err=" << worst;
  r.detail = d.str();
  r.passed = worst <= 1e-5;
  return r;
}

SuiteResult suite_recurrence_identity(std::uint64_t seed) {
  SuiteResult r{"recurrence-identity", true, "", seed};
  const std::size_t L = 64;
  Tensor gate(Shape{L, 1}, 0.5);
  Tensor drive(Shape{L, 1}, 1.0);
  Tensor h = scan_gated(gate, drive, 16);
  double worst = 0;
  for (std::size_t t = 0; t < L; ++t) {
    const double expect = 2.0 * (1.0 - std::pow(0.5, static_cast<double>(t + 1)));
    worst = std::max(worst, std::abs(h[t] - expect));
  }
  std::ostringstream d;
  d << "max_abs_err=" << worst;
  r.detail = d.str();
  r.passed = worst <= 1e-10;
  return r;
}

SuiteResult suite_bijectivity(std::uint64_t seed) {
  SuiteResult r{"serialization-bijectivity", true, "", seed};
  Rng rng(seed);
  for (std::size_t rows = 1; rows <= 32 && r.passed; ++rows) {
    for (std::size_t cols = 1; cols <= 32 && r.passed; ++cols) {
      for (ScanOrder o : {raster_order(rows, cols), zigzag_order(rows, cols)}) {
        std::vector<std::uint32_t> sorted = o.perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i)
          if (sorted[i] != i) {
            r.passed = false;
            r.detail = "perm not a bijection at " + std::to_string(rows) + "x" + std::to_string(cols);
            break;
          }
        Tensor g = random_tensor(rng, {rows, cols, 2}, -1, 1);
        Tensor back = deserialize(serialize(g, o), o);
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (back[i] != g[i]) {
            r.passed = false;
            r.detail = "round trip not bitwise at " + std::to_string(rows) + "x" + std::to_string(cols);
            break;
          }
      }
    }
  }
  if (r.passed) r.detail = "all H,W <= 32, both patterns";
  return r;
}

SuiteResult suite_zigzag_adjacency(std::uint64_t seed) {
  SuiteResult r{"zigzag-adjacency", true, "", seed};
  for (std::size_t rows = 1; rows <= 40 && r.passed; rows += 3) {
    for (std::size_t cols = 1; cols <= 40 && r.passed; cols += 3) {
      ScanOrder o = zigzag_order(rows, cols);
      for (std::size_t t = 0; t + 1 < o.perm.size(); ++t) {
        const long dr = static_cast<long>(o.perm[t] / cols) - static_cast<long>(o.perm[t + 1] / cols);
        const long dc = static_cast<long>(o.perm[t] % cols) - static_cast<long>(o.perm[t + 1] % cols);
        if (std::labs(dr) + std::labs(dc) != 1) {
          r.passed = false;
          r.detail = "non-adjacent step at " + std::to_string(rows) + "x" + std::to_string(cols);
          break;
        }
      }
    }
  }
  if (r.passed) r.detail = "Manhattan distance 1 everywhere";
  return r;
}

SuiteResult suite_pillar_permutation(std::uint64_t seed) {
  SuiteResult r{"pillar-permutation-invariance", true, "", seed};
  Rng rng(seed);
  GridConfig cfg{2.0, 0.0, 8.0, -4.0, 4.0};
  PointCloud pc(3000);
  for (auto& p : pc) {
    p.x = rng.uniform(0.0, 8.0);
    p.y = rng.uniform(-4.0, 4.0);
    p.z = rng.uniform(-1.0, 2.0);
    p.r = rng.uniform(0.0, 100.0);
    p.ring = static_cast<std::uint32_t>(rng.uniform_index(32));
  }
  PillarGrid a = pillarize(pc, cfg);
  PointCloud shuffled = pc;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
  PillarGrid b = pillarize(shuffled, cfg);
  for (std::size_t i = 0; i < a.features.numel(); ++i)
    if (a.features[i] != b.features[i]) {
      r.passed = false;
      r.detail = "feature mismatch at flat index " + std::to_string(i);
      return r;
    }
  r.detail = "bitwise under shuffle";
  return r;
}

SuiteResult suite_descriptor_simplex(std::uint64_t seed) {
  SuiteResult r{"descriptor-simplex", true, "", seed};
  Rng rng(seed);
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 3 + rng.uniform_index(40);
    PointCloud pc(m);
    for (auto& p : pc) {
      p.x = rng.uniform(-0.2, 0.2);
      p.y = rng.uniform(-0.2, 0.2);
      p.z = rng.uniform(-1.0, 1.0);
      p.r = rng.uniform(0.0, 10.0);
    }
    const auto d = shape_descriptors(pc);
    worst = std::max(worst, std::abs(d[0] + d[1] + d[2] - 1.0));
    for (double v : d)
      if (v < 0.0 || v > 1.0 + 1e-12) {
        r.passed = false;
        r.detail = "descriptor out of [0,1]";
        return r;
      }
  }
  PointCloud line;
  for (int i = 0; i < 10; ++i) line.push_back({0.05 * i, 0.02 * i, 0.01 * i, 1.0, 0});
  if (shape_descriptors(line)[0] < 0.999) {
    r.passed = false;
    r.detail = "collinear pillar linearity below 0.999";
    return r;
  }
  std::ostringstream d;
  d << "max_simplex_dev=" << worst;
  r.detail = d.str();
  r.passed = worst <= 1e-10;
  return r;
}

SuiteResult suite_eigen_oracle(std::uint64_t seed) {
  SuiteResult r{"eigenvalue-oracle", true, "", seed};
  Rng rng(seed);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    double v[5][3];
    for (auto& row : v)
      for (double& x : row) x = rng.uniform(-1.0, 1.0);
    double cov[3][3] = {};
    for (auto& row : v)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cov[i][j] += row[i] * row[j] / 5.0;
    auto jac = sym3x3_eigenvalues({cov[0][0], cov[0][1], cov[0][2], cov[1][0], cov[1][1], cov[1][2],
                                   cov[2][0], cov[2][1], cov[2][2]});
    auto cub = eigen_cubic(cov);
    for (int i = 0; i < 3; ++i)
      worst = std::max(worst, std::abs(jac[std::size_t(i)] - cub[std::size_t(i)]));
  }
  std::ostringstream d;
  d << "max_abs_err=" << worst;
  r.detail = d.str();
  r.passed = worst <= 1e-8;
  return r;
}

SuiteResult suite_gradient_checks(std::uint64_t seed) {
  SuiteResult r{"gradient-checks", true, "", seed};
  Rng rng(seed);
  const std::size_t H = 8, W = 8, C = 8, D = 4;
  GridConfig cfg{1.0, 0.0, 8.0, -4.0, 4.0};
  BlockGeometry geo = make_block_geometry(cfg, C);
  BlockParams<Tensor> params = make_block_params(rng, C, D, geo.d_max, 16, true, 0.3);
  Tensor x = random_tensor(rng, {H, W, C}, -1.0, 1.0);

  Tape tape;
  auto lifted = lift_block_params<Var>(params, &tape);
  auto in_v = lift_block_geometry<Var>(geo, &tape);
  Var loss = sum_all(block_forward(tape.constant(x), in_v, geo, lifted));
  tape.backward(loss);

  auto in_d = lift_block_geometry<Tensor>(geo, nullptr);
  auto eval = [&]() { return sum_all(block_forward(x, in_d, geo, params))[0]; };

  struct Check {
    const char* name;
    Tensor* param;
    Tensor analytic;
  };
  std::vector<Check> checks = {
      {"lambda", &params.ssm_raster.decay.lambda_raw, tape.grad(lifted.ssm_raster.decay.lambda_raw)},
      {"dir-logits", &params.ssm_raster.transitions.raster_logits,
       tape.grad(lifted.ssm_raster.transitions.raster_logits)},
      {"gate-logits", &params.gate_logits, tape.grad(lifted.gate_logits)},
      {"fusion-w2", &params.fusion_w2, tape.grad(lifted.fusion_w2)},
  };
  double worst = 0;
  for (auto& c : checks) {
    Tensor fd = central_diff(eval, *c.param, 1e-5);
    const double err = max_rel_err(c.analytic, fd, 1e-5);
    worst = std::max(worst, err);
    if (err > 1e-4) {
      r.passed = false;
      r.detail = std::string(c.name) + " rel_err=" + std::to_string(err);
      return r;
    }
  }
  std::ostringstream d;
  d << "max_rel_err=" << worst;
  r.detail = d.str();
  return r;
}

SuiteResult suite_fusion_convexity(std::uint64_t seed) {
  SuiteResult r{"fusion-convexity", true, "", seed};
  Rng rng(seed);
  const std::size_t H = 8, W = 8, C = 8;
  GridConfig cfg{1.0, 0.0, 8.0, -4.0, 4.0};
  BlockGeometry geo = make_block_geometry(cfg, C);
  for (int trial = 0; trial < 10; ++trial) {
    BlockParams<Tensor> p = make_block_params(rng, C, 4, geo.d_max, 64, true, 0.8);
    Tensor b = random_tensor(rng, {H, W, C}, -3.0, 3.0);
    Tensor fused = adaptive_fuse({b, b, b, b}, p);
    if (max_rel_err(fused, b, 1e-9) > 1e-12) {
      r.passed = false;
      r.detail = "identical branches not reproduced";
      return r;
    }
    std::array<Tensor, 4> branches;
    for (auto& br : branches) br = random_tensor(rng, {H, W, C}, -3.0, 3.0);
    Tensor w = adaptive_fusion_weights(branches, p);
    double sum = 0;
    for (int i = 0; i < 4; ++i) {
      if (w[std::size_t(i)] <= 0.0) {
        r.passed = false;
        r.detail = "non-positive fusion weight";
        return r;
      }
      sum += w[std::size_t(i)];
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      r.passed = false;
      r.detail = "weights do not sum to 1";
      return r;
    }
  }
  r.detail = "simplex and convexity hold";
  return r;
}

SuiteResult suite_directional_init(std::uint64_t seed) {
  SuiteResult r{"directional-init-ordering", true, "", seed};
  Rng rng(seed);
  auto p = make_aware_ssm_params(rng, 8, 8, 10.0);
  Tensor w = softmax_lastdim(p.transitions.raster_logits);
  r.passed = w[0] > w[1] && w[1] > w[2];
  std::ostringstream d;
  d << "w_fw=" << w[0] << " w_lat=" << w[1] << " w_bw=" << w[2];
  r.detail = d.str();
  return r;
}

SuiteResult suite_pe_interleave(std::uint64_t seed) {
  SuiteResult r{"pe-interleave-and-range", true, "", seed};
  GridConfig cfg{1.0, 0.0, 16.0, -8.0, 8.0};
  PolarGrid pg = polar_from_grid(cfg);
  const std::size_t C = 16;
  BevPosEncoding pe = encode_bev_position(pg, C);
  for (std::size_t i = 0; i < pe.enc.numel(); ++i)
    if (pe.enc[i] < -1.0 || pe.enc[i] > 1.0) {
      r.passed = false;
      r.detail = "encoding value outside [-1, 1]";
      return r;
    }
  for (std::size_t cell = 0; cell < 16 * 16; ++cell)
    for (std::size_t pair = 0; pair < C / 2; ++pair) {
      const double s = pe.enc[cell * C + 2 * pair], c = pe.enc[cell * C + 2 * pair + 1];
      if (std::abs(s * s + c * c - 1.0) > 1e-12) {
        r.passed = false;
        r.detail = "sin^2+cos^2 deviates";
        return r;
      }
    }
  PolarGrid zeroed = pg;
  for (std::size_t i = 0; i < zeroed.d.numel(); ++i) zeroed.d[i] = 0.0;
  BevPosEncoding pez = encode_bev_position(zeroed, C);
  for (std::size_t cell = 0; cell < 16 * 16; ++cell)
    for (std::size_t c = 0; c < C; ++c) {
      const bool angle_channel = (c % 4 >= 2);
      if (angle_channel && pez.enc[cell * C + c] != pe.enc[cell * C + c]) {
        r.passed = false;
        r.detail = "zeroing distances leaked into angle channels";
        return r;
      }
    }
  r.detail = "range, pairs, interleave hold";
  return r;
}

}  // namespace

Tensor reference_decay(const Tensor& x, const Tensor& d, double lambda, double d_max) {
  DecayParams<Tensor> p{Tensor(Shape{1}, lambda_raw_for(lambda)), d_max};
  return distance_decay(x, d, p);
}

SuiteResult check_decay_law(const DecayFn& decay, std::uint64_t seed) {
  SuiteResult r{"decay-law", true, "", seed};
  Rng rng(seed);
  const std::size_t L = 64, C = 4;
  const double d_max = 25.0, lambda = 1.3;
  Tensor x = random_tensor(rng, {L, C}, -2.0, 2.0);

  Tensor zero_d(Shape{L}, 0.0);
  Tensor y0 = decay(x, zero_d, lambda, d_max);
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (y0[i] != x[i]) {
      r.passed = false;
      r.detail = "decay(0) is not exactly 1";
      return r;
    }

  Tensor far(Shape{L}, d_max);
  Tensor y1 = decay(x, far, lambda, d_max);
  const double scale = std::exp(-lambda);
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (rel_err(y1[i], x[i] * scale, 1e-12) > 1e-12) {
      r.passed = false;
      r.detail = "decay(d_max) deviates from e^-lambda";
      return r;
    }

  Tensor ones(Shape{L, 1}, 1.0);
  Tensor ramp(Shape{L});
  for (std::size_t i = 0; i < L; ++i) ramp[i] = d_max * static_cast<double>(i) / (L - 1);
  Tensor ys = decay(ones, ramp, lambda, d_max);
  for (std::size_t i = 1; i < L; ++i)
    if (!(ys[i] < ys[i - 1])) {
      r.passed = false;
      r.detail = "scales not strictly decreasing over sorted distances";
      return r;
    }
  r.detail = "endpoints exact, strictly monotone";
  return r;
}

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  Rng master(seed);
  std::vector<SuiteResult> out;
  out.push_back(suite_scan_oracle(master.next_u64()));
  out.push_back(suite_recurrence_identity(master.next_u64()));
  out.push_back(suite_bijectivity(master.next_u64()));
  out.push_back(suite_zigzag_adjacency(master.next_u64()));
  out.push_back(suite_pillar_permutation(master.next_u64()));
  out.push_back(suite_descriptor_simplex(master.next_u64()));
  out.push_back(suite_eigen_oracle(master.next_u64()));
  out.push_back(check_decay_law(
      [](const Tensor& x, const Tensor& d, double lambda, double d_max) {
        return reference_decay(x, d, lambda, d_max);
      },
      master.next_u64()));
  out.push_back(suite_gradient_checks(master.next_u64()));
  out.push_back(suite_fusion_convexity(master.next_u64()));
  out.push_back(suite_directional_init(master.next_u64()));
  out.push_back(suite_pe_interleave(master.next_u64()));
  return out;
}

std::string selftest_report(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  for (const auto& r : results)
    os << "suite=" << r.name << " status=" << (r.passed ? "pass" : "fail") << " seed=" << r.seed
       << " detail=" << r.detail << "\n";
  return os.str();
}

}  // namespace gmf
