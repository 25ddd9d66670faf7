#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmf {

struct BenchOptions {
  std::vector<std::size_t> sweep{1024, 4096, 16384, 65536};
  std::size_t channels = 16;
  std::size_t d_state = 16;
  std::size_t chunk_len = 64;
  int reps = 5;  // timed measurements per point; the median is reported
  // Wall-clock cap for the quadratic baseline; FLOP counts still cover the
  // full sweep.
  std::size_t attention_wall_cap = 16384;
  std::uint64_t seed = 42;
  bool float32 = true;  // benchmark precision (the library default is f64)
  double min_measure_ms = 20.0;
};

struct BenchRecord {
  std::size_t n = 0;
  std::string mechanism;    // "bev-ssm" or "self-attention"
  double wall_ms = -1.0;    // median; < 0 when not timed (capped)
  std::uint64_t flops = 0;  // analytic counter
  std::size_t peak_bytes = 0;  // transient working set above inputs/params
};

struct BenchReport {
  std::vector<BenchRecord> records;
  double slope_bev_ssm = 0.0;    // least-squares log(time) vs log(N)
  double slope_attention = 0.0;
  std::string notes;
};

BenchReport run_bench(const BenchOptions& opt);

// CSV with the resolved config echoed as leading comment lines and the
// fitted exponents appended as trailing comments.
std::string bench_csv(const BenchReport& report, const std::string& config_echo);

}  // namespace gmf
