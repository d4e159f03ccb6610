#pragma once

#include <string>
#include <vector>

namespace jacspec::selftest {

/// Deliberate faults for negative controls.
struct Hooks {
  bool corrupt_qr_sign_fix = false;  // Haar sampler skips the sign(diag R) step
  bool corrupt_root_choice = false;  // solver takes the other root of the quadratic
};

struct CheckResult {
  std::string module;
  std::string id;
  bool passed = false;
  std::string observed;
  std::string expected;
  double seconds = 0.0;
};

struct Summary {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

/// level: "quick" (well under a minute) or "full".
Summary run_selftest(const std::string& level, const Hooks& hooks = {});

}  // namespace jacspec::selftest
