#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gmf/bench.hpp"
#include "gmf/config.hpp"
#include "gmf/io.hpp"
#include "gmf/parallel.hpp"
#include "gmf/pipeline.hpp"
#include "gmf/selftest.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInvariant = 2;

struct CommonOpts {
  std::string config_path;
  std::string input_path;
  std::string output_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

gmf::RunConfig resolve_config(const CommonOpts& o) {
  gmf::RunConfig cfg =
      o.config_path.empty() ? gmf::RunConfig{} : gmf::RunConfig::from_file(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (o.threads >= 0) cfg.threads = o.threads;
  cfg.validate();
  gmf::set_num_threads(cfg.threads);
  return cfg;
}

int cmd_pillarize(const CommonOpts& o) {
  gmf::RunConfig cfg = resolve_config(o);
  gmf::PointCloud pc = gmf::read_point_cloud(o.input_path);
  gmf::PillarGrid grid = gmf::pillarize(pc, cfg.grid());
  gmf::write_tensor_file(o.output_path, grid.features);

  const std::size_t in_pillars = std::accumulate(grid.occupancy.begin(), grid.occupancy.end(), 0ull);
  std::ostringstream summary;
  summary << "# pillarize summary\n";
  summary << "input=" << o.input_path << "\n";
  summary << "points=" << pc.size() << "\n";
  summary << "points_binned=" << in_pillars << "\n";
  summary << "points_dropped=" << grid.dropped << "\n";
  summary << "occupied_pillars=" << grid.occupied_count() << "\n";
  summary << "grid_rows=" << grid.features.dim(0) << "\n";
  summary << "grid_cols=" << grid.features.dim(1) << "\n";
  summary << "# resolved config\n" << cfg.echo();
  gmf::write_text_file(o.output_path + ".summary.txt", summary.str());
  std::printf("pillarize: %zu points -> %zu occupied pillars (%zu dropped), wrote %s\n", pc.size(),
              grid.occupied_count(), grid.dropped, o.output_path.c_str());
  return kExitOk;
}

int cmd_forward(const CommonOpts& o) {
  gmf::RunConfig cfg = resolve_config(o);
  gmf::Tensor grid = gmf::read_tensor_file(o.input_path);
  gmf::Tensor out = gmf::forward_pipeline(grid, cfg);
  gmf::write_tensor_file(o.output_path, out);

  double mn = out[0], mx = out[0], mean = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    mn = std::min(mn, out[i]);
    mx = std::max(mx, out[i]);
    mean += out[i];
  }
  mean /= static_cast<double>(out.numel());
  std::ostringstream stats;
  stats << "# forward stats\n";
  stats << "input=" << o.input_path << "\n";
  stats << "output_rows=" << out.dim(0) << "\n";
  stats << "output_cols=" << out.dim(1) << "\n";
  stats << "output_channels=" << out.dim(2) << "\n";
  stats.precision(17);
  stats << "output_min=" << mn << "\noutput_max=" << mx << "\noutput_mean=" << mean << "\n";
  stats << "# resolved config\n" << cfg.echo();
  gmf::write_text_file(o.output_path + ".stats.txt", stats.str());
  std::printf("forward: %zux%zux%zu -> %s (mean %.6g)\n", out.dim(0), out.dim(1), out.dim(2),
              o.output_path.c_str(), mean);
  return kExitOk;
}

int cmd_selftest(const CommonOpts& o) {
  gmf::RunConfig cfg = resolve_config(o);
  auto results = gmf::run_selftest(cfg.seed);
  std::fputs(gmf::selftest_report(results).c_str(), stdout);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::printf("selftest: %zu/%zu suites passed\n", results.size() - failed, results.size());
  return failed == 0 ? kExitOk : kExitInvariant;
}

int cmd_bench(const CommonOpts& o, const std::string& sweep, std::size_t attn_cap, int reps,
              const std::string& precision) {
  gmf::RunConfig cfg = resolve_config(o);
  gmf::BenchOptions opt;
  opt.channels = cfg.channels;
  opt.d_state = cfg.d_state;
  opt.chunk_len = cfg.chunk_len;
  opt.seed = cfg.seed;
  opt.reps = reps;
  opt.attention_wall_cap = attn_cap;
  if (precision == "f32")
    opt.float32 = true;
  else if (precision == "f64")
    opt.float32 = false;
  else
    throw gmf::ConfigError("precision must be f32 or f64, got '" + precision + "'");
  if (!sweep.empty()) {
    opt.sweep.clear();
    std::istringstream ss(sweep);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        opt.sweep.push_back(std::stoull(tok));
      } catch (const std::exception&) {
        throw gmf::ConfigError("bad sweep entry '" + tok + "'");
      }
    }
  }

  gmf::BenchReport report = gmf::run_bench(opt);
  const std::string csv = gmf::bench_csv(report, cfg.echo());
  if (!o.output_path.empty()) gmf::write_text_file(o.output_path, csv);
  std::fputs(csv.c_str(), stdout);
  std::printf("fitted exponents: bev-ssm %.3f, self-attention %.3f\n", report.slope_bev_ssm,
              report.slope_attention);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric pillar encoding and BEV state-space fusion kernels"};
  app.require_subcommand(1);

  CommonOpts opt;
  auto add_common = [&](CLI::App* cmd, bool needs_input, bool needs_output) {
    cmd->add_option("--config", opt.config_path, "key=value config file");
    auto* seed = cmd->add_option("--seed", opt.seed, "RNG seed (overrides config)");
    cmd->callback([&opt, seed] { opt.seed_set = seed->count() > 0; });
    cmd->add_option("--threads", opt.threads, "worker threads, 0 = hardware (overrides config)");
    if (needs_input) cmd->add_option("--input", opt.input_path, "input path")->required();
    if (needs_output) cmd->add_option("--output", opt.output_path, "output path")->required();
  };

  CLI::App* pillarize = app.add_subcommand("pillarize", "point cloud -> 14-channel pillar grid");
  add_common(pillarize, true, true);

  CLI::App* forward = app.add_subcommand("forward", "pillar grid -> fused BEV features");
  add_common(forward, true, true);

  CLI::App* selftest = app.add_subcommand("selftest", "run the invariant suite");
  add_common(selftest, false, false);

  CLI::App* bench = app.add_subcommand("bench", "linear-vs-quadratic complexity benchmark");
  add_common(bench, false, false);
  std::string sweep, precision = "f32";
  std::size_t attn_cap = 16384;
  int reps = 5;
  bench->add_option("--sweep", sweep, "comma-separated cell counts, powers of two in [1024,65536]");
  bench->add_option("--output", opt.output_path, "CSV output path");
  bench->add_option("--attn-cap", attn_cap, "largest N timed for the attention baseline");
  bench->add_option("--reps", reps, "timed measurements per point (median reported)");
  bench->add_option("--precision", precision, "f32 (default) or f64");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (app.got_subcommand(pillarize)) return cmd_pillarize(opt);
    if (app.got_subcommand(forward)) return cmd_forward(opt);
    if (app.got_subcommand(selftest)) return cmd_selftest(opt);
    if (app.got_subcommand(bench)) return cmd_bench(opt, sweep, attn_cap, reps, precision);
  } catch (const gmf::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const gmf::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const gmf::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const gmf::NumericError& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return kExitInvariant;
  }
  return kExitOk;
}
