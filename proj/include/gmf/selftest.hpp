#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gmf/tensor.hpp"

namespace gmf {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // failure reason or summary statistic
  std::uint64_t seed = 0;
};

// Injectable decay kernel so fault-injection tests can exercise the harness:
// (features L x C, distances {L}, lambda, d_max) -> attenuated features.
using DecayFn = std::function<Tensor(const Tensor&, const Tensor&, double, double)>;

// The shipped distance-decay path (softplus-reparameterized lambda).
Tensor reference_decay(const Tensor& x, const Tensor& d, double lambda, double d_max);

SuiteResult check_decay_law(const DecayFn& decay, std::uint64_t seed);

// Full invariant suite: oracle equivalences, bijectivity, pillar and
// encoding properties, gradient checks. Every suite carries its seed.
std::vector<SuiteResult> run_selftest(std::uint64_t seed);

// One line per suite, machine readable:
//   suite=<name> status=pass|fail seed=<u64> detail=<text>
std::string selftest_report(const std::vector<SuiteResult>& results);

}  // namespace gmf
