#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmf {

// Validation failures (bad shapes, bad configs, malformed files). The CLI
// maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced by an operation (overflow, 0/0, ...).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Global toggle for post-op finiteness checks. On by default; the benchmark
// harness turns it off while timing.
bool finite_checks_enabled();
void set_finite_checks(bool on);

struct FiniteCheckGuard {
  bool prev;
  explicit FiniteCheckGuard(bool on) : prev(finite_checks_enabled()) { set_finite_checks(on); }
  ~FiniteCheckGuard() { set_finite_checks(prev); }
};

void log_warn(const std::string& msg);

}  // namespace gmf
