#pragma once

#include <cstdint>
#include <string>

#include "gmf/pillarizer.hpp"

namespace gmf {

// Flat key=value run configuration. Unknown keys are rejected; the resolved
// config is echoed into every output artifact.
struct RunConfig {
  double rho = 4.0;
  double x_min = 0.0, x_max = 32.0;
  double y_min = -16.0, y_max = 16.0;
  std::size_t d_state = 16;
  std::size_t chunk_len = 64;
  std::size_t channels = 16;
  double pe_base = 10000.0;
  std::uint64_t seed = 42;
  int threads = 1;

  static RunConfig from_file(const std::string& path);

  // Applies one key=value pair; throws ConfigError naming unknown keys or
  // unparseable values.
  void set(const std::string& key, const std::string& value);

  void validate() const;

  GridConfig grid() const { return GridConfig{rho, x_min, x_max, y_min, y_max}; }

  // Canonical key=value lines, one per field, for provenance embedding.
  std::string echo() const;
};

}  // namespace gmf
