#include "gmf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "gmf/attention_baseline.hpp"
#include "gmf/bev_ssm_block.hpp"
#include "gmf/flops.hpp"

namespace gmf {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Median wall time of opt.reps measurements; each measurement loops the
// kernel enough times to clear min_measure_ms, so coarse timers cannot
// swallow fast runs.
template <class F>
double measure_ms(const F& fn, int reps, double min_measure_ms) {
  fn();  // warm-up
  Clock::time_point probe = Clock::now();
  fn();
  const double once = std::max(1e-4, ms_since(probe));
  const int inner = std::max(1, static_cast<int>(std::ceil(min_measure_ms / once)));
  std::vector<double> samples;
  for (int r = 0; r < reps; ++r) {
    Clock::time_point t0 = Clock::now();
    for (int i = 0; i < inner; ++i) fn();
    samples.push_back(ms_since(t0) / inner);
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

// H x W split of a power-of-two cell count, square when possible.
void split_dims(std::size_t n, std::size_t& rows, std::size_t& cols) {
  rows = 1;
  while (rows * rows < n) rows <<= 1;
  cols = n / rows;
}

GridConfig synthetic_grid(std::size_t rows, std::size_t cols) {
  return GridConfig{1.0, 0.0, static_cast<double>(rows), -static_cast<double>(cols) / 2.0,
                    static_cast<double>(cols) / 2.0};
}

double fit_loglog_slope(const std::vector<std::pair<std::size_t, double>>& pts) {
  if (pts.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [n, ms] : pts) {
    const double x = std::log(static_cast<double>(n));
    const double y = std::log(ms);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(pts.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

template <class S>
void bench_scalar(const BenchOptions& opt, BenchReport& report) {
  Rng rng(opt.seed);
  std::vector<std::pair<std::size_t, double>> ssm_pts, attn_pts;

  for (std::size_t n : opt.sweep) {
    std::size_t rows, cols;
    split_dims(n, rows, cols);

    // --- BEV-SSM block forward ---
    BlockGeometry geo = make_block_geometry(synthetic_grid(rows, cols), opt.channels);
    BlockParams<Tensor> params_d =
        make_block_params(rng, opt.channels, opt.d_state, geo.d_max, opt.chunk_len);
    auto params = lift_block_params<BasicTensor<S>>(params_d, nullptr);
    auto inputs = lift_block_geometry<BasicTensor<S>>(geo, nullptr);
    BasicTensor<S> x(Shape{rows, cols, opt.channels});
    for (std::size_t i = 0; i < x.numel(); ++i)
      x[i] = static_cast<S>(rng.uniform(-1.0, 1.0));

    const std::size_t baseline_bytes = AllocStats::current();
    AllocStats::reset_peak();
    const double ssm_ms = measure_ms(
        [&] { (void)block_forward(x, inputs, geo, params); }, opt.reps, opt.min_measure_ms);
    const std::size_t ssm_peak = AllocStats::peak() - baseline_bytes;
    report.records.push_back({n, "bev-ssm", ssm_ms,
                              bev_ssm_block_flops(n, opt.channels, opt.d_state, opt.chunk_len),
                              ssm_peak});
    ssm_pts.push_back({n, ssm_ms});

    // --- self-attention baseline ---
    BasicTensor<S> tokens(Shape{n, opt.channels});
    for (std::size_t i = 0; i < tokens.numel(); ++i)
      tokens[i] = static_cast<S>(rng.uniform(-1.0, 1.0));
    BenchRecord attn{n, "self-attention", -1.0, attention_flops(n, opt.channels), 0};
    if (n <= opt.attention_wall_cap) {
      const std::size_t base2 = AllocStats::current();
      AllocStats::reset_peak();
      attn.wall_ms = measure_ms(
          [&] { (void)self_attention_baseline(tokens); }, opt.reps, opt.min_measure_ms);
      attn.peak_bytes = AllocStats::peak() - base2;
      attn_pts.push_back({n, attn.wall_ms});
    }
    report.records.push_back(attn);
  }

  report.slope_bev_ssm = fit_loglog_slope(ssm_pts);
  report.slope_attention = fit_loglog_slope(attn_pts);
}

}  // namespace

BenchReport run_bench(const BenchOptions& opt) {
  for (std::size_t n : opt.sweep) {
    if (n < 1024 || n > 65536 || (n & (n - 1)) != 0)
      throw ConfigError("bench sweep values must be powers of two in [1024, 65536], got " +
                        std::to_string(n));
  }
  if (!std::is_sorted(opt.sweep.begin(), opt.sweep.end()))
    throw ConfigError("bench sweep must be increasing");

  BenchReport report;
  FiniteCheckGuard guard(false);  // keep checks out of the timed path
  if (opt.float32)
    bench_scalar<float>(opt, report);
  else
    bench_scalar<double>(opt, report);
  if (opt.attention_wall_cap < opt.sweep.back())
    report.notes = "self-attention wall-clock capped at N <= " +
                   std::to_string(opt.attention_wall_cap) + " (quadratic runtime)";
  return report;
}

std::string bench_csv(const BenchReport& report, const std::string& config_echo) {
  std::ostringstream os;
  std::istringstream cfg(config_echo);
  std::string line;
  while (std::getline(cfg, line)) os << "# " << line << "\n";
  if (!report.notes.empty()) os << "# " << report.notes << "\n";
  os << "N,mechanism,wall_ms,flops,peak_bytes\n";
  os.precision(6);
  for (const auto& r : report.records) {
    os << r.n << "," << r.mechanism << ",";
    if (r.wall_ms >= 0) os << r.wall_ms;
    os << "," << r.flops << "," << r.peak_bytes << "\n";
  }
  os << "# loglog_slope,bev-ssm," << report.slope_bev_ssm << "\n";
  os << "# loglog_slope,self-attention," << report.slope_attention << "\n";
  return os.str();
}

}  // namespace gmf
