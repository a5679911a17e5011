// Self-contained numerical validation suite: gradient checks against finite
// differences, flow invertibility and normalization, and mutual-information
// estimates on Gaussians with a known closed form.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace calopt {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // the measured quantity
  double threshold = 0.0;  // what it was compared against
  std::string detail;
};

std::vector<CheckResult> run_validation_suite(std::uint64_t seed = 20260826);

}  // namespace calopt
