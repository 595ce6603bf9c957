#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cras {

struct SelfCheckReport {
  double max_gradient_error = 0.0;  // analytic vs central differences, 64-bit
  double gradient_tolerance = 1e-6;
  std::size_t gradient_cases = 0;
  std::size_t roundtrip_cases = 0;
  std::vector<std::string> failures;

  bool ok() const noexcept { return failures.empty(); }
};

// Gradient check of the adapter + discriminator objective in every feature
// mode, then bit-exact CRFT and checkpoint roundtrips through memory.
SelfCheckReport run_selfcheck(std::uint64_t seed = 0);

}  // namespace cras
