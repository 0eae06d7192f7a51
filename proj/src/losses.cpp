#include "bpnp/losses.hpp"

#include <cmath>
#include <numbers>

#include "bpnp/geometry.hpp"

namespace bpnp {
namespace {

void checkShape(const MatX& P, const PointSets& instance) {
  if (static_cast<std::size_t>(P.rows()) != instance.numBearings() ||
      static_cast<std::size_t>(P.cols()) != instance.numPoints()) {
    throw ValidationError("loss: probability matrix shape does not match the instance");
  }
}

}  // namespace

CorrespondenceLoss correspondenceLoss(const MatX& P, const PointSets& instance,
                                      const Pose& gt_pose, double theta,
                                      const std::optional<CorrespondenceList>& gt_pairs) {
  checkShape(P, instance);
  if (std::abs(P.sum() - 1.0) > 1e-6) {
    throw ValidationError("correspondenceLoss: probabilities must sum to one");
  }
  CorrespondenceLoss out;
  out.grad = MatX::Ones(P.rows(), P.cols());
  if (gt_pairs) {
    validateOneToOne(*gt_pairs, instance.numBearings(), instance.numPoints());
    for (const auto& c : *gt_pairs) {
      out.grad(static_cast<Eigen::Index>(c.bearing), static_cast<Eigen::Index>(c.point)) = -1.0;
    }
  } else {
    if (!(theta > 0.0 && theta < std::numbers::pi)) {
      throw ValidationError("correspondenceLoss: theta must lie in (0, pi)");
    }
    const Mat3 R = expSO3<double>(gt_pose.rotation);
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const double angle = pairAngleExact(instance.bearings[static_cast<std::size_t>(i)],
                                       instance.points[static_cast<std::size_t>(j)], R,
                                       gt_pose.translation);
        if (angle <= theta) out.grad(i, j) = -1.0;
      }
    }
  }
  out.value = P.cwiseProduct(out.grad).sum();
  return out;
}

PoseLoss poseLoss(const Pose& pose, const Pose& gt_pose) {
  PoseLoss out;
  const Mat3 R = expSO3<double>(pose.rotation);
  const Mat3 R_gt = expSO3<double>(gt_pose.rotation);
  const double c = 0.5 * ((R_gt.transpose() * R).trace() - 1.0);
  out.rotation = clampedAcos(c);

  const double bound = 1.0 - kArccosClamp;
  if (c > -bound && c < bound) {
    // d trace(R_gt^T exp([w]x) R)/dw at w = 0 is -vee(A - A^T) with
    // A = R R_gt^T; chain through the left Jacobian for the angle-axis.
    const Mat3 A = R * R_gt.transpose();
    const Vec3 dtrace_dw(A(1, 2) - A(2, 1), A(2, 0) - A(0, 2), A(0, 1) - A(1, 0));
    const double dacos = -1.0 / std::sqrt(1.0 - c * c);
    out.grad.head<3>() =
        dacos * 0.5 * (leftJacobianSO3<double>(pose.rotation).transpose() * dtrace_dw);
  }

  const Vec3 dt = pose.translation - gt_pose.translation;
  out.translation = dt.norm();
  if (out.translation > 0.0) out.grad.tail<3>() = dt / out.translation;

  out.total = out.rotation + out.translation;
  return out;
}

double totalLoss(double correspondence, double pose, double gamma_p) {
  if (!(gamma_p >= 0.0)) throw ValidationError("totalLoss: gamma_p must be nonnegative");
  return correspondence + gamma_p * pose;
}

ReprojectionLoss reprojectionLoss(const MatX& P, const PointSets& instance, const Pose& gt_pose) {
  checkShape(P, instance);
  const Mat3 R = expSO3<double>(gt_pose.rotation);
  const double mn = static_cast<double>(P.size());
  ReprojectionLoss out;
  out.grad.resize(P.rows(), P.cols());
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      out.grad(i, j) = pairAngle(instance.bearings[static_cast<std::size_t>(i)],
                                 instance.points[static_cast<std::size_t>(j)], R,
                                 gt_pose.translation) /
                       mn;
    }
  }
  out.value = P.cwiseProduct(out.grad).sum();
  return out;
}

}  // namespace bpnp
