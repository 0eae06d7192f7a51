#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bpnp/types.hpp"

namespace bpnp {

/// Up to four poses mapping three world points onto three bearings (Grunert's
/// quartic, polished by Newton steps on the law-of-cosines system). Only
/// solutions with every angular residual <= 1e-9 and positive depths are
/// returned. Throws DegenerateConfigurationError for coincident or collinear
/// points.
std::vector<Pose> p3p(const std::array<Vec3, 3>& bearings, const std::array<Vec3, 3>& points);

/// Weighted rigid alignment (Kabsch): the R, t minimising
/// sum w_i ||R src_i + t - dst_i||^2. Reflections are excluded.
Pose absoluteOrientation(std::span<const Vec3> src, std::span<const Vec3> dst,
                         std::span<const double> weights = {});

/// EPnP on bearing vectors: four control points (three for planar scenes),
/// null-space recovery with one to three kernel vectors, Gauss-Newton on the
/// kernel coefficients, best candidate by weighted angular residual. With
/// fewer than six pairs, P3P solutions on triplets are candidates too.
/// Throws ValidationError for fewer than 4 pairs and NumericalError for
/// collinear/coincident points.
Pose epnp(const PointSets& instance, const CorrespondenceList& pairs,
          std::span<const double> weights = {});

struct RansacConfig {
  /// Angular residual (radians) below which a candidate is an inlier.
  double inlier_threshold = 0.01;
  int max_iterations = 1000;
  double confidence = 0.99;
  std::uint64_t seed = 0;
  /// Weight the final EPnP fit by candidate probabilities.
  bool weighted_refit = false;
};

struct RobustEstimate {
  Pose pose;
  /// One-to-one inlier set the final pose was fitted to.
  CorrespondenceList inliers;
  int iterations_used = 0;
  /// Best hypothesis from the sampling loop and its inlier count.
  Pose minimal_pose;
  std::size_t hypothesis_inliers = 0;
  /// No hypothesis ever had an inlier (or none could be formed).
  bool no_inliers = false;
};

/// RANSAC over candidate correspondences: P3P on three sampled pairs, the
/// fourth selecting among the P3P roots, inliers scored against all
/// candidates, early exit from the standard confidence bound, then EPnP on the
/// one-to-one filtered inliers. Deterministic given the seed.
/// Throws ValidationError for fewer than 4 candidates or invalid config.
RobustEstimate ransacP3P(const PointSets& instance, std::span<const WeightedPair> candidates,
                         const RansacConfig& config = {});

}  // namespace bpnp
