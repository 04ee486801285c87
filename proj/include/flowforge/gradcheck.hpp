#ifndef FLOWFORGE_GRADCHECK_HPP
#define FLOWFORGE_GRADCHECK_HPP

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace flowforge {

/// Outcome of one operator's finite-difference check. `max_rel_error` is
/// the largest over trials of max|analytic - numeric| / max(|numeric|_inf, 1e-3).
struct CheckResult {
  std::string op;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  int trials = 0;
  bool passed = false;
};

struct GradcheckOptions {
  int trials = 200;
  std::uint64_t seed = 1;
  /// Operators whose analytic gradient is deliberately sign-flipped
  /// (harness self-test).
  std::set<std::string> broken;
};

/// Names accepted by GradcheckOptions::broken and printed in results.
std::vector<std::string> gradcheck_ops();

CheckResult check_warp(const GradcheckOptions& opts);
CheckResult check_conv2d(const GradcheckOptions& opts);
CheckResult check_upconv2d(const GradcheckOptions& opts);
CheckResult check_leaky_relu(const GradcheckOptions& opts);
CheckResult check_brightness_error(const GradcheckOptions& opts);
CheckResult check_magnitude(const GradcheckOptions& opts);
CheckResult check_loss(const GradcheckOptions& opts, double exponent);
/// |<conv(x), y> - <x, upconv(y)>| / max(|<conv(x), y>|, 1e-12).
CheckResult check_conv_adjoint(const GradcheckOptions& opts);
/// Two-unit warping stack in 64-bit arithmetic.
CheckResult check_stack(const GradcheckOptions& opts);

std::vector<CheckResult> run_gradcheck_suite(const GradcheckOptions& opts);

}  // namespace flowforge

#endif  // FLOWFORGE_GRADCHECK_HPP
