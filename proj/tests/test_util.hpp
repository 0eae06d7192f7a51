#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "bpnp/types.hpp"

namespace bpnp::test {

inline Vec3 randomVec3(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  return Vec3(normal(rng), normal(rng), normal(rng));
}

/// Random angle-axis vector with norm uniform in [lo, hi].
inline Vec3 randomRotation(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> angle(lo, hi);
  Vec3 axis = randomVec3(rng);
  while (axis.norm() < 1e-3) axis = randomVec3(rng);
  return angle(rng) * axis.normalized();
}

inline MatX randomMatrix(std::mt19937_64& rng, Eigen::Index m, Eigen::Index n, double lo = 0.0,
                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatX M(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) M(i, j) = u(rng);
  return M;
}

/// Camera-frame points in front of the camera and their world coordinates
/// under `pose`, with exact bearings.
inline PointSets exactScene(std::mt19937_64& rng, std::size_t n, const Pose& pose) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> z(3.0, 6.0);
  PointSets s;
  const Eigen::AngleAxisd aa(pose.rotation.norm(),
                             pose.rotation.norm() > 0 ? Vec3(pose.rotation.normalized())
                                                      : Vec3::UnitX());
  const Mat3 R = aa.toRotationMatrix();
  CorrespondenceList gt;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 cam(u(rng), u(rng), z(rng));
    s.bearings.push_back(cam.normalized());
    s.points.push_back(R.transpose() * (cam - pose.translation));
    gt.push_back({k, k});
  }
  s.gt_pose = pose;
  s.gt_pairs = gt;
  return s;
}

}  // namespace bpnp::test
