#pragma once

#include <cstddef>

#include "bpnp/types.hpp"

namespace bpnp {

/// Marginal priors of the transport polytope; both positive and summing to one.
struct Priors {
  VecX row;
  VecX col;

  static Priors uniform(Eigen::Index m, Eigen::Index n);
};

struct SinkhornOptions {
  double mu = 0.1;
  /// L-infinity marginal residual at which iteration stops.
  double tolerance = 1e-9;
  int max_iterations = 10000;
};

/// Entropic transport plan P = diag(u) exp(-M / mu) diag(v).
struct TransportPlan {
  MatX P;
  Priors priors;
  /// Scaling iterations plus any Newton steps.
  int iterations = 0;
  /// max(||P 1 - r||_inf, ||P^T 1 - c||_inf) of the returned plan.
  double residual = 0.0;
  /// False when the iteration cap was hit before reaching the tolerance.
  bool converged = false;
};

/// Entropy-regularised optimal transport, solved with Sinkhorn iterations in
/// the log-stabilised (absorbing) form. When scaling stalls (less than a
/// halving of the residual over 500 iterations) or hits the iteration cap,
/// Newton steps on the dual potentials finish the solve for sides up to 2000.
/// Costs of any sign are accepted; only differences along rows and columns
/// matter. Throws ValidationError for
/// mu <= 0, non-finite costs, or priors that are not positive and normalised.
TransportPlan sinkhorn(const MatX& M, const Priors& priors, const SinkhornOptions& options = {});
TransportPlan sinkhorn(const MatX& M, double mu = 0.1);

/// Which marginal constraint to remove to make the constraint matrix full rank.
enum class DroppedConstraint { kLastColumn, kFirstColumn };

/// Vector-Jacobian product of the converged plan with respect to the cost:
/// returns dL/dM given dL/dP. Uses the diagonal Hessian of the entropic
/// objective and eliminates one block of the reduced constraint system, so
/// storage stays O(mn). Throws ValidationError if the plan has a nonpositive
/// entry or violates its marginals by more than 1e-6, NumericalError if the
/// reduced system is not positive definite.
MatX sinkhornVjp(const TransportPlan& plan, double mu, const MatX& grad_P,
                 DroppedConstraint dropped = DroppedConstraint::kLastColumn);

/// M_ij = ||a_i - b_j||_2 for feature rows a_i of `a` and b_j of `b`.
/// Throws ValidationError when the feature dimensions differ.
MatX pairwiseCost(const MatX& a, const MatX& b);

}  // namespace bpnp
