#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bpnp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Input violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solver hit a degenerate or ill-conditioned system.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal-solver input in a degenerate configuration (collinear points etc).
class DegenerateConfigurationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed instance or cost file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rigid transform x_cam = R(rotation) * x_world + translation, with the
/// rotation stored as an angle-axis vector.
struct Pose {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  Vec6 asVector() const {
    Vec6 v;
    v << rotation, translation;
    return v;
  }
  static Pose fromVector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

  bool operator==(const Pose&) const = default;
};

/// One (bearing index, point index) pair.
struct Correspondence {
  std::size_t bearing = 0;
  std::size_t point = 0;

  auto operator<=>(const Correspondence&) const = default;
};

using CorrespondenceList = std::vector<Correspondence>;

/// A correspondence with an attached nonnegative weight (probability).
struct WeightedPair {
  std::size_t bearing = 0;
  std::size_t point = 0;
  double weight = 0.0;

  bool operator==(const WeightedPair&) const = default;
};

/// m unit bearing vectors and n 3D points, optionally with ground truth.
struct PointSets {
  std::vector<Vec3> bearings;
  std::vector<Vec3> points;
  Mat3 intrinsics = Mat3::Identity();
  std::optional<Pose> gt_pose;
  std::optional<CorrespondenceList> gt_pairs;
  /// Free-form provenance (generator seed, Euler convention, ...).
  std::map<std::string, std::string> metadata;

  std::size_t numBearings() const { return bearings.size(); }
  std::size_t numPoints() const { return points.size(); }

  bool operator==(const PointSets&) const = default;
};

/// Throws ValidationError when pairs repeat a bearing or point index or
/// reference out-of-range indices.
void validateOneToOne(const CorrespondenceList& pairs, std::size_t m, std::size_t n);

}  // namespace bpnp
