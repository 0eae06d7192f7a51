#pragma once

#include <optional>

#include "bpnp/types.hpp"

namespace bpnp {

struct LossConfig {
  /// Angular inlier threshold (radians) used when no ground-truth pairs exist.
  double theta = 0.01;
  /// Weight of the pose loss in the total loss.
  double gamma_p = 0.0;
};

struct CorrespondenceLoss {
  double value = 0.0;
  /// dL_c/dP, every entry exactly +1 (outlier) or -1 (inlier).
  MatX grad;
};

/// L_c = sum_ij P_ij (1 - 2 [pair ij is an inlier]). Inliers come from
/// gt_pairs when given, otherwise from the angular test against gt_pose.
CorrespondenceLoss correspondenceLoss(const MatX& P, const PointSets& instance,
                                      const Pose& gt_pose, double theta,
                                      const std::optional<CorrespondenceList>& gt_pairs = {});

struct PoseLoss {
  double rotation = 0.0;     ///< L_r, radians in [0, pi]
  double translation = 0.0;  ///< L_t
  double total = 0.0;        ///< L_p = L_r + L_t
  /// dL_p/d(r, t) of the estimate. The rotation part is zero where the
  /// arccos clamp is active; the translation part is zero at t = t_gt.
  Vec6 grad = Vec6::Zero();
};

PoseLoss poseLoss(const Pose& pose, const Pose& gt_pose);

/// L = L_c + gamma_p L_p. Throws ValidationError for gamma_p < 0.
double totalLoss(double correspondence, double pose, double gamma_p);

struct ReprojectionLoss {
  double value = 0.0;
  MatX grad;
};

/// Alternative correspondence loss: the probability-weighted angular
/// reprojection error at the ground-truth pose, normalised by m*n.
ReprojectionLoss reprojectionLoss(const MatX& P, const PointSets& instance, const Pose& gt_pose);

}  // namespace bpnp
