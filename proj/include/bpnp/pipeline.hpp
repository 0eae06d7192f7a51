#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bpnp/losses.hpp"
#include "bpnp/pose_solvers.hpp"
#include "bpnp/transport.hpp"
#include "bpnp/weighted_pnp.hpp"

namespace bpnp {

struct PipelineConfig {
  SinkhornOptions sinkhorn;
  /// Candidate count k = ceil(k_factor * min(m, n)).
  double k_factor = 1.5;
  RansacConfig ransac;
  PnPSolveOptions pnp;
  LossConfig loss;
  /// Plan entries below relative_prune * max(P) are left out of the PnP
  /// objective and the remaining weights renormalised. 0 keeps all m*n pairs.
  double relative_prune = 1e-9;
  /// The result is flagged low_inlier when the final RANSAC inlier set is
  /// smaller than this fraction of the candidates (or smaller than 4).
  double min_inlier_fraction = 0.1;
};

struct StageTimings {
  double sinkhorn = 0.0;
  double ransac = 0.0;
  double refine = 0.0;
  double total = 0.0;
};

struct PipelineResult {
  TransportPlan plan;
  std::vector<WeightedPair> candidates;
  RobustEstimate ransac;
  /// Problem handed to the weighted PnP layer, initialised at the RANSAC pose.
  PnPProblem problem;
  PnPSolution refined;
  StageTimings seconds;
  bool low_inlier = false;

  const Pose& ransacPose() const { return ransac.pose; }
  const Pose& refinedPose() const { return refined.pose; }
};

/// Cost -> Sinkhorn -> top-k -> RANSAC/P3P/EPnP -> weighted PnP.
/// Stage failures are rethrown with the stage name prefixed to the message.
PipelineResult solve(const MatX& M, const PointSets& instance, const PipelineConfig& config = {});

/// dL/dM from dL/dP and dL/d(r, t) of the refined pose. The pose gradient is
/// pulled back through the PnP layer, added to dL/dP, and pulled back through
/// Sinkhorn. RANSAC only initialises the refinement and has no gradient path.
MatX backward(const PipelineResult& result, const PointSets& instance,
              const PipelineConfig& config, const MatX& grad_P, const Vec6& grad_pose);

struct LossEvaluation {
  double correspondence = 0.0;
  PoseLoss pose;
  double total = 0.0;
  MatX grad_P;
  /// gamma_p * dL_p/d(r, t).
  Vec6 grad_pose = Vec6::Zero();
};

/// L = L_c(P) + gamma_p L_p(refined pose) with the instance ground truth.
/// Ground-truth pairs define the inliers when present.
LossEvaluation evaluateLoss(const PipelineResult& result, const PointSets& instance,
                            const LossConfig& loss);

struct AlternationResult {
  Pose pose;
  CorrespondenceList pairs;
  int rounds = 0;
  /// A round found fewer than four admissible pairs; pose is the last good one.
  bool stalled = false;
  /// The correspondence set stopped changing before max_rounds.
  bool stable = false;
  /// Stopped between rounds because the time limit ran out.
  bool timed_out = false;
};

/// Local baseline alternating the angular inlier test (plus assignment) with
/// EPnP and uniformly weighted L-BFGS refinement on the hard correspondences.
/// A positive time_limit (seconds) is checked between rounds.
AlternationResult alternationBaseline(const PointSets& instance, const Pose& init, double theta,
                                      int max_rounds = 20, const PnPSolveOptions& options = {},
                                      double time_limit = 0.0);

struct Quartiles {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
};

/// Linear interpolation between order statistics (h = (n - 1) p).
/// Throws ValidationError on an empty sample or p outside [0, 1].
double quantile(std::vector<double> values, double p);
Quartiles quartiles(std::span<const double> values);

/// Fraction of values strictly below the threshold.
double recall(std::span<const double> values, double threshold);

/// Per-instance errors of one pose estimate.
struct PoseErrors {
  double rotation_deg = 0.0;
  double translation = 0.0;
  /// Mean angular error over the ground-truth matches, degrees.
  double reprojection_deg = 0.0;
};

/// Requires instance.gt_pose; reprojection uses gt_pairs when present.
PoseErrors poseErrors(const PointSets& instance, const Pose& pose);

struct MethodSample {
  PoseErrors errors;
  double seconds = 0.0;
};

struct MethodSummary {
  Quartiles rotation_deg;
  Quartiles translation;
  Quartiles reprojection_deg;
  double mean_seconds = 0.0;
  /// One entry per threshold, rotation errors in degrees.
  std::vector<double> rotation_recall;
  /// One entry per threshold, translation errors.
  std::vector<double> translation_recall;
};

MethodSummary summarize(std::span<const MethodSample> samples,
                        std::span<const double> rotation_thresholds_deg,
                        std::span<const double> translation_thresholds);

struct EvaluationReport {
  MethodSummary refined;
  MethodSummary ransac;
};

/// Quartiles and recall for the refined and RANSAC poses of each result.
EvaluationReport evaluate(std::span<const PipelineResult> results,
                          std::span<const PointSets> instances,
                          std::span<const double> rotation_thresholds_deg,
                          std::span<const double> translation_thresholds = {});

/// Runs task(0..count-1) on up to `jobs` threads. Exceptions from tasks are
/// rethrown after all workers finish (the one from the lowest index wins).
void parallelFor(std::size_t count, int jobs, const std::function<void(std::size_t)>& task);

}  // namespace bpnp
