#include "bpnp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bpnp {

void validateOneToOne(const CorrespondenceList& pairs, std::size_t m, std::size_t n) {
  std::vector<bool> row_used(m, false), col_used(n, false);
  for (const auto& c : pairs) {
    if (c.bearing >= m || c.point >= n) {
      throw ValidationError("correspondence (" + std::to_string(c.bearing) + ", " +
                            std::to_string(c.point) + ") out of range");
    }
    if (row_used[c.bearing]) {
      throw ValidationError("bearing index " + std::to_string(c.bearing) +
                            " appears in more than one correspondence");
    }
    if (col_used[c.point]) {
      throw ValidationError("point index " + std::to_string(c.point) +
                            " appears in more than one correspondence");
    }
    row_used[c.bearing] = true;
    col_used[c.point] = true;
  }
}

bool isRotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && R.determinant() > 0.0;
}

Vec3 logSO3(const Mat3& R) {
  if (!isRotation(R, 1e-6)) {
    throw ValidationError("logSO3: matrix is not a rotation");
  }
  const Vec3 vee = 0.5 * Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double s = vee.norm();
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(s, c);

  if (theta < kSmallAngle) {
    return vee;
  }
  if (c > -0.99) {
    return (theta / s) * vee;
  }

  // Near pi the antisymmetric part vanishes; recover the axis from the
  // symmetric part instead, using its largest diagonal entry.
  const Mat3 sym = 0.5 * (R + R.transpose());
  const Mat3 outer = (sym - c * Mat3::Identity()) / (1.0 - c);
  Eigen::Index k = 0;
  outer.diagonal().maxCoeff(&k);
  Vec3 axis = outer.col(k) / std::sqrt(std::max(outer(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis;
}

Vec3 canonicalizeAngleAxis(const Vec3& r) {
  const double theta = r.norm();
  if (theta <= std::numbers::pi) return r;
  const Vec3 axis = r / theta;
  double reduced = std::fmod(theta, 2.0 * std::numbers::pi);
  if (reduced > std::numbers::pi) {
    return -(2.0 * std::numbers::pi - reduced) * axis;
  }
  return reduced * axis;
}

Mat3 rotationFromEulerZYX(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 bearingFromPixel(double u, double v, const Mat3& K) {
  if (!K.allFinite() || K(0, 0) <= 0.0 || K(1, 1) <= 0.0 || K(2, 2) <= 0.0 ||
      K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0) {
    throw ValidationError("intrinsics must be upper triangular with positive diagonal");
  }
  const Vec3 x = K.triangularView<Eigen::Upper>().solve(Vec3(u, v, 1.0));
  return x.normalized();
}

Eigen::Vector2d projectToPixel(const Vec3& x, const Mat3& K) {
  const Vec3 h = K * (x / x.z());
  return h.head<2>();
}

double angleBetween(const Vec3& x, const Vec3& y) {
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) {
    throw ValidationError("angleBetween: zero-norm argument");
  }
  return clampedAcos(x.dot(y) / (nx * ny));
}

double pairAngle(const Vec3& bearing, const Vec3& point, const Mat3& R, const Vec3& t) {
  const Vec3 y = R * point + t;
  const double ny = y.norm();
  if (ny == 0.0) return std::numbers::pi;
  return clampedAcos(bearing.dot(y) / (bearing.norm() * ny));
}

double unclampedAngle(const Vec3& x, const Vec3& y) {
  return std::atan2(x.cross(y).norm(), x.dot(y));
}

double pairAngleExact(const Vec3& bearing, const Vec3& point, const Mat3& R, const Vec3& t) {
  const Vec3 y = R * point + t;
  if (y.norm() == 0.0) return std::numbers::pi;
  return unclampedAngle(bearing, y);
}

namespace {

template <typename Visit>
ReprojectionError accumulateReprojection(const PointSets& instance, const Pose& pose,
                                         ReprojectionNormalization norm, Visit&& visit) {
  const Mat3 R = expSO3<double>(pose.rotation);
  ReprojectionError out;
  double sum = 0.0;
  double weight_sum = 0.0;
  visit([&](std::size_t i, std::size_t j, double w) {
    if (w == 0.0) return;
    if (w < 0.0) throw ValidationError("reprojection weights must be nonnegative");
    const Vec3 y = R * instance.points[j] + pose.translation;
    double angle;
    if (y.norm() == 0.0) {
      angle = std::numbers::pi;
      out.degenerate = true;
    } else {
      angle = angleBetween(instance.bearings[i], y);
    }
    sum += w * angle;
    weight_sum += w;
  });
  const double denom = norm == ReprojectionNormalization::kProductSet
                           ? static_cast<double>(instance.numBearings() * instance.numPoints())
                           : weight_sum;
  out.value = denom > 0.0 ? sum / denom : 0.0;
  return out;
}

void checkIndex(const PointSets& instance, std::size_t i, std::size_t j) {
  if (i >= instance.numBearings() || j >= instance.numPoints()) {
    throw ValidationError("correspondence index out of range");
  }
}

}  // namespace

ReprojectionError angularReprojectionError(const PointSets& instance,
                                           const CorrespondenceList& pairs, const Pose& pose,
                                           ReprojectionNormalization norm) {
  return accumulateReprojection(instance, pose, norm, [&](auto&& add) {
    for (const auto& c : pairs) {
      checkIndex(instance, c.bearing, c.point);
      add(c.bearing, c.point, 1.0);
    }
  });
}

ReprojectionError angularReprojectionError(const PointSets& instance,
                                           std::span<const WeightedPair> pairs,
                                           const Pose& pose, ReprojectionNormalization norm) {
  return accumulateReprojection(instance, pose, norm, [&](auto&& add) {
    for (const auto& p : pairs) {
      checkIndex(instance, p.bearing, p.point);
      add(p.bearing, p.point, p.weight);
    }
  });
}

ReprojectionError angularReprojectionError(const PointSets& instance, const MatX& weights,
                                           const Pose& pose, ReprojectionNormalization norm) {
  if (static_cast<std::size_t>(weights.rows()) != instance.numBearings() ||
      static_cast<std::size_t>(weights.cols()) != instance.numPoints()) {
    throw ValidationError("weight matrix shape does not match the instance");
  }
  return accumulateReprojection(instance, pose, norm, [&](auto&& add) {
    for (Eigen::Index i = 0; i < weights.rows(); ++i)
      for (Eigen::Index j = 0; j < weights.cols(); ++j)
        add(static_cast<std::size_t>(i), static_cast<std::size_t>(j), weights(i, j));
  });
}

long inlierObjective(const PointSets& instance, const CorrespondenceList& pairs,
                     const Pose& pose, double theta) {
  if (!(theta > 0.0 && theta < std::numbers::pi)) {
    throw ValidationError("inlier threshold must lie in (0, pi)");
  }
  validateOneToOne(pairs, instance.numBearings(), instance.numPoints());
  const Mat3 R = expSO3<double>(pose.rotation);
  long score = 0;
  for (const auto& c : pairs) {
    const double angle = pairAngleExact(instance.bearings[c.bearing], instance.points[c.point], R,
                                        pose.translation);
    score += angle <= theta ? 1 : -1;
  }
  return score;
}

double rotationError(const Mat3& R, const Mat3& R_gt) {
  return clampedAcos(0.5 * ((R_gt.transpose() * R).trace() - 1.0));
}

double translationError(const Vec3& t, const Vec3& t_gt) { return (t - t_gt).norm(); }

double rotationAngleExact(const Mat3& R, const Mat3& R_gt) {
  const Mat3 D = R_gt.transpose() * R;
  const Vec3 axis_sin(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  return std::atan2(0.5 * axis_sin.norm(), 0.5 * (D.trace() - 1.0));
}

double rotationAngleExact(const Pose& pose, const Pose& gt) {
  return rotationAngleExact(expSO3<double>(pose.rotation), expSO3<double>(gt.rotation));
}

double rotationError(const Pose& pose, const Pose& gt) {
  return rotationError(expSO3<double>(pose.rotation), expSO3<double>(gt.rotation));
}

double translationError(const Pose& pose, const Pose& gt) {
  return translationError(pose.translation, gt.translation);
}

}  // namespace bpnp
