#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpnp/weighted_pnp.hpp"

namespace bpnp {

enum class CheckStatus { kPass, kFail, kExpectedSingular, kSkipped };

std::string_view toString(CheckStatus status);

/// Deliberate bugs for testing the harness itself: the named analytic
/// derivative has its sign flipped before comparison.
enum class InjectedFault {
  kNone,
  kSinkhornVjpSign,
  kPnpGradientSign,
  kPnpHessianSign,
  kPnpVjpSign,
  kPoseLossSign,
  kEndToEndSign,
};

struct GradCheckConfig {
  /// Problem sizes (m = n for PnP and end-to-end, m x (m + 2) for Sinkhorn).
  std::vector<std::size_t> sizes{1, 8, 10};
  std::size_t seeds = 2;
  std::uint64_t base_seed = 1;
  double fd_step = 1e-6;
  double sinkhorn_tolerance = 1e-5;
  double gradient_tolerance = 1e-6;
  double second_order_tolerance = 1e-5;
  double vjp_tolerance = 1e-4;
  double loss_tolerance = 1e-6;
  double end_to_end_tolerance = 1e-3;
  /// Fraction of unflipped end-to-end probes that must pass.
  double end_to_end_pass_fraction = 0.9;
  InjectedFault fault = InjectedFault::kNone;
};

struct CheckRecord {
  std::string suite;
  std::size_t size = 0;
  std::uint64_t seed = 0;
  CheckStatus status = CheckStatus::kPass;
  /// max |analytic - numeric| / max |numeric| over the checked entries.
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Runs every suite for every size and seed, in a fixed order.
std::vector<CheckRecord> runGradientChecks(const GradCheckConfig& config);

/// Normwise relative difference used by all suites. Returns the absolute
/// difference when the numeric side is negligible (max entry below 1e-8).
double relativeError(const MatX& analytic, const MatX& numeric);

/// Newton iterations on the analytic gradient (Hessian from central
/// differences of that gradient) until it stops decreasing. Used to push a
/// converged pose to the exact stationary point for finite-difference
/// oracles. Weights need not sum to one.
Pose polishStationary(const PointSets& instance, std::span<const WeightedPair> pairs,
                      const Pose& pose, int max_iterations = 20);

}  // namespace bpnp
