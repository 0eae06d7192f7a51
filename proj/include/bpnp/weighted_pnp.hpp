#pragma once

#include <span>
#include <vector>

#include "bpnp/geometry.hpp"
#include "bpnp/lbfgs.hpp"
#include "bpnp/types.hpp"

namespace bpnp {

/// Weighted blind PnP problem: minimise
///   f(r, t) = sum_ij P_ij (1 - f_i^T (R_r p_j + t) / ||R_r p_j + t||)
/// over the pose, for fixed weights P given as a sparse pair list.
struct PnPProblem {
  std::vector<WeightedPair> pairs;
  Pose init;
};

/// Sparse pair list from a dense probability matrix. Entries below
/// relative_prune * max(P) are dropped (0 keeps every entry).
std::vector<WeightedPair> weightedPairsFromDense(const MatX& P, double relative_prune = 0.0);

/// Throws ValidationError for out-of-range indices, negative weights, or
/// total weight outside 1 +- 1e-6.
void validateProblem(const PointSets& instance, const PnPProblem& problem);

struct ObjectiveValue {
  double value = 0.0;
  /// d f / d(r, t).
  Vec6 gradient = Vec6::Zero();
};

/// Thrown when a weighted pair maps its point onto the camera centre.
class SingularPairError : public NumericalError {
 public:
  SingularPairError(const std::string& what, std::size_t bearing, std::size_t point)
      : NumericalError(what), bearing(bearing), point(point) {}
  std::size_t bearing;
  std::size_t point;
};

ObjectiveValue pnpObjective(const PointSets& instance, std::span<const WeightedPair> pairs,
                            const Pose& pose);

struct PnPSolveOptions {
  LbfgsOptions lbfgs;
};

struct PnPSolution {
  Pose pose;
  double objective_value = 0.0;
  bool converged = false;
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// L-BFGS with strong Wolfe line search from problem.init. The returned
/// rotation is canonicalised to norm <= pi.
PnPSolution pnpSolve(const PointSets& instance, const PnPProblem& problem,
                     const PnPSolveOptions& options = {});

/// Hessian of the objective in (r, t) and the mixed derivative d/dP of the
/// gradient, which for each pair is the gradient of that pair's residual.
struct SecondOrderData {
  Mat6 H = Mat6::Zero();
  /// Column k belongs to problem.pairs[k].
  Eigen::Matrix<double, 6, Eigen::Dynamic> B;
  double condition = 0.0;
  bool singular = false;
};

/// Condition numbers above this make H singular for differentiation purposes.
inline constexpr double kMaxHessianCondition = 1e12;

/// Requires ||grad f(pose)|| <= 1e-6 (ValidationError otherwise). H comes from
/// forward-mode automatic differentiation of the analytic gradient.
SecondOrderData pnpSecondOrder(const PointSets& instance, const PnPProblem& problem,
                               const Pose& pose);

/// Gradient of a single pair's residual 1 - f_i^T y / ||y|| in (r, t).
Vec6 pairResidualGradient(const Vec3& bearing, const Vec3& point, const Pose& pose);

/// Raised by the VJP when H is singular or too ill-conditioned to invert.
class IllConditionedError : public NumericalError {
 public:
  IllConditionedError(const std::string& what, double condition)
      : NumericalError(what), condition(condition) {}
  double condition;
};

struct PnPVjpOptions {
  /// Diagnostic only: adds damping * I to H. Biases gradients.
  double damping = 0.0;
};

/// dL/dP over problem.pairs for dL/d(r, t) = grad_pose, via implicit
/// differentiation: -(H^-1 grad_pose)^T B. Throws IllConditionedError.
std::vector<double> pnpVjp(const PointSets& instance, const PnPProblem& problem,
                           const PnPSolution& solution, const Vec6& grad_pose,
                           const PnPVjpOptions& options = {});

/// Same product for every (i, j) in the m x n product set, including pairs
/// outside problem.pairs (their weight enters linearly, so the derivative
/// exists even when the weight was pruned to zero).
MatX pnpVjpDense(const PointSets& instance, const PnPProblem& problem,
                 const PnPSolution& solution, const Vec6& grad_pose,
                 const PnPVjpOptions& options = {});

}  // namespace bpnp
