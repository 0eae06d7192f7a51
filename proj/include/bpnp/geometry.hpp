#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include <Eigen/Core>

#include "bpnp/types.hpp"

namespace bpnp {

/// Every arccos in the library clamps its argument to +-(1 - kArccosClamp).
inline constexpr double kArccosClamp = 1e-7;

/// Below this rotation angle the exponential map and its Jacobian switch to
/// their Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

template <typename Scalar>
Matrix3<Scalar> skew(const Vector3<Scalar>& v) {
  Matrix3<Scalar> m;
  m << Scalar(0), -v.z(), v.y(),
       v.z(), Scalar(0), -v.x(),
       -v.y(), v.x(), Scalar(0);
  return m;
}

/// Rodrigues' formula, exp([r]x). Works for any scalar type with sqrt/sin/cos,
/// including Eigen::AutoDiffScalar.
template <typename Scalar>
Matrix3<Scalar> expSO3(const Vector3<Scalar>& r) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta2 = r.squaredNorm();
  const Matrix3<Scalar> k = skew(r);
  const Matrix3<Scalar> k2 = k * k;
  if (theta2 < Scalar(kSmallAngle * kSmallAngle)) {
    return Matrix3<Scalar>::Identity() + k + Scalar(0.5) * k2;
  }
  const Scalar theta = sqrt(theta2);
  return Matrix3<Scalar>::Identity() + (sin(theta) / theta) * k +
         ((Scalar(1) - cos(theta)) / theta2) * k2;
}

/// Left Jacobian of SO(3): exp([r + d]x) ~= exp([J_l(r) d]x) exp([r]x).
template <typename Scalar>
Matrix3<Scalar> leftJacobianSO3(const Vector3<Scalar>& r) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta2 = r.squaredNorm();
  const Matrix3<Scalar> k = skew(r);
  const Matrix3<Scalar> k2 = k * k;
  if (theta2 < Scalar(kSmallAngle * kSmallAngle)) {
    return Matrix3<Scalar>::Identity() + Scalar(0.5) * k + Scalar(1.0 / 6.0) * k2;
  }
  const Scalar theta = sqrt(theta2);
  return Matrix3<Scalar>::Identity() + ((Scalar(1) - cos(theta)) / theta2) * k +
         ((theta - sin(theta)) / (theta2 * theta)) * k2;
}

/// Inverse of expSO3 on SO(3); the returned vector has norm in [0, pi].
/// Throws ValidationError when R is not orthonormal within 1e-6.
Vec3 logSO3(const Mat3& R);

/// Maps an angle-axis vector of any norm to the equivalent one with norm <= pi.
Vec3 canonicalizeAngleAxis(const Vec3& r);

/// True when ||R^T R - I||_inf <= tol and det(R) > 0.
bool isRotation(const Mat3& R, double tol = 1e-6);

/// Intrinsic Z-Y-X Euler angles: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rotationFromEulerZYX(double yaw, double pitch, double roll);

/// Unit bearing proportional to K^-1 (u, v, 1). Throws ValidationError for a
/// singular K or nonpositive focal entries.
Vec3 bearingFromPixel(double u, double v, const Mat3& K);

/// Pixel coordinates of the camera-frame direction x (x.z() != 0).
Eigen::Vector2d projectToPixel(const Vec3& x, const Mat3& K);

/// Angle in [0, pi] between x and y, arccos argument clamped.
/// Throws ValidationError if either argument has zero norm.
double angleBetween(const Vec3& x, const Vec3& y);

/// Clamped arccos used throughout the library.
inline double clampedAcos(double c) {
  const double bound = 1.0 - kArccosClamp;
  return std::acos(c < -bound ? -bound : (c > bound ? bound : c));
}

enum class ReprojectionNormalization {
  kProductSet,  ///< divide by m*n
  kPerMatch,    ///< divide by the total correspondence weight
};

struct ReprojectionError {
  double value = 0.0;
  /// Some weighted pair transformed a point onto the camera centre; that term
  /// was scored as pi.
  bool degenerate = false;
};

/// Weighted angular reprojection error (1/mn) sum C_ij angle(f_i, R p_j + t).
ReprojectionError angularReprojectionError(
    const PointSets& instance, const CorrespondenceList& pairs, const Pose& pose,
    ReprojectionNormalization norm = ReprojectionNormalization::kProductSet);
ReprojectionError angularReprojectionError(
    const PointSets& instance, std::span<const WeightedPair> pairs, const Pose& pose,
    ReprojectionNormalization norm = ReprojectionNormalization::kProductSet);
/// Dense m x n weights.
ReprojectionError angularReprojectionError(
    const PointSets& instance, const MatX& weights, const Pose& pose,
    ReprojectionNormalization norm = ReprojectionNormalization::kProductSet);

/// (#inliers - #outliers) among the listed one-to-one pairs, inliers having
/// angular error <= theta. Throws ValidationError for duplicate indices or
/// theta outside (0, pi).
long inlierObjective(const PointSets& instance, const CorrespondenceList& pairs,
                     const Pose& pose, double theta);

/// Geodesic angle between two rotation matrices.
double rotationError(const Mat3& R, const Mat3& R_gt);
double translationError(const Vec3& t, const Vec3& t_gt);

/// Pose-level conveniences.
double rotationError(const Pose& pose, const Pose& gt);
double translationError(const Pose& pose, const Pose& gt);

/// Angular error of pair (i, j) under pose; pi when R p_j + t vanishes.
double pairAngle(const Vec3& bearing, const Vec3& point, const Mat3& R, const Vec3& t);

/// atan2(|x cross y|, x . y): no clamp, accurate near 0 and pi. Inlier tests
/// and solver residuals use this so thresholds below the clamp floor work.
double unclampedAngle(const Vec3& x, const Vec3& y);

/// Unclamped counterpart of pairAngle.
double pairAngleExact(const Vec3& bearing, const Vec3& point, const Mat3& R, const Vec3& t);

/// Geodesic distance ||log(R_gt^T R)|| without the arccos clamp, for
/// reporting errors far below the clamp floor.
double rotationAngleExact(const Mat3& R, const Mat3& R_gt);
double rotationAngleExact(const Pose& pose, const Pose& gt);

}  // namespace bpnp
