#pragma once

#include <functional>

#include "bpnp/types.hpp"

namespace bpnp {

struct LbfgsOptions {
  int history = 10;
  /// Converged once ||grad||_2 <= gradient_tolerance.
  double gradient_tolerance = 1e-9;
  int max_iterations = 200;
  /// Gradients longer than this are rescaled before computing the search
  /// direction. The line search still uses the true gradient.
  double gradient_clip = 100.0;
  /// Stop (unconverged) when a step moves x by less than this in max-norm.
  double step_tolerance = 1e-16;
  int max_line_search_evaluations = 30;
  double c1 = 1e-4;
  double c2 = 0.9;
};

struct LbfgsResult {
  VecX x;
  double value = 0.0;
  VecX gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const VecX& x, VecX& grad)>;

/// Limited-memory BFGS with a strong Wolfe line search (cubic interpolation,
/// bracketing and zoom). Never throws on line-search failure: the best
/// iterate so far is returned with converged = false.
LbfgsResult minimizeLbfgs(const Objective& objective, const VecX& x0,
                          const LbfgsOptions& options = {});

}  // namespace bpnp
