#pragma once

#include <string>
#include <vector>

namespace bsrkit {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks over the core operations: binary16 round trips,
/// DCT orthonormality, SNR mixing, fusion idempotence and the SGDR schedule.
std::vector<CheckResult> run_selftest();

}  // namespace bsrkit
