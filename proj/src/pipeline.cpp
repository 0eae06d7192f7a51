#include "bpnp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include "bpnp/assignment.hpp"
#include "bpnp/geometry.hpp"

namespace bpnp {
namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
auto runStage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("pipeline stage ") + stage + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("pipeline stage ") + stage + ": " + e.what());
  }
}

double radToDeg(double x) { return x * 180.0 / std::numbers::pi; }

double objectiveOrInf(const PointSets& instance, std::span<const WeightedPair> pairs,
                      const Pose& pose) {
  try {
    return pnpObjective(instance, pairs, pose).value;
  } catch (const SingularPairError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

PipelineResult solve(const MatX& M, const PointSets& instance, const PipelineConfig& config) {
  const auto m = static_cast<Eigen::Index>(instance.numBearings());
  const auto n = static_cast<Eigen::Index>(instance.numPoints());
  if (M.rows() != m || M.cols() != n) {
    throw ValidationError("pipeline: cost matrix is " + std::to_string(M.rows()) + "x" +
                          std::to_string(M.cols()) + " but the instance is " +
                          std::to_string(m) + "x" + std::to_string(n));
  }
  const auto start = Clock::now();
  PipelineResult out;

  auto t0 = Clock::now();
  out.plan = runStage("sinkhorn", [&] { return sinkhorn(M, Priors::uniform(m, n), config.sinkhorn); });
  out.seconds.sinkhorn = secondsSince(t0);

  t0 = Clock::now();
  const std::size_t k = candidateCount(instance.numBearings(), instance.numPoints(), config.k_factor);
  out.candidates = runStage("top-k", [&] { return topKSelect(out.plan.P, k); });
  out.ransac = runStage("ransac", [&] { return ransacP3P(instance, out.candidates, config.ransac); });
  out.seconds.ransac = secondsSince(t0);
  const double needed = std::max(4.0, config.min_inlier_fraction * static_cast<double>(k));
  out.low_inlier = out.ransac.no_inliers || static_cast<double>(out.ransac.inliers.size()) < needed;

  t0 = Clock::now();
  out.problem.pairs = weightedPairsFromDense(out.plan.P, config.relative_prune);
  double total = 0.0;
  for (const auto& p : out.problem.pairs) total += p.weight;
  for (auto& p : out.problem.pairs) p.weight /= total;
  out.problem.init = out.ransac.pose;
  out.refined = runStage("refine", [&] { return pnpSolve(instance, out.problem, config.pnp); });
  out.seconds.refine = secondsSince(t0);

  out.seconds.total = secondsSince(start);
  return out;
}

MatX backward(const PipelineResult& result, const PointSets& instance,
              const PipelineConfig& config, const MatX& grad_P, const Vec6& grad_pose) {
  if (grad_P.rows() != result.plan.P.rows() || grad_P.cols() != result.plan.P.cols()) {
    throw ValidationError("pipeline backward: dL/dP has the wrong shape");
  }
  MatX total = grad_P;
  if (!grad_pose.isZero(0.0)) {
    total += runStage("refine backward", [&] {
      return pnpVjpDense(instance, result.problem, result.refined, grad_pose);
    });
  }
  return runStage("sinkhorn backward",
                  [&] { return sinkhornVjp(result.plan, config.sinkhorn.mu, total); });
}

LossEvaluation evaluateLoss(const PipelineResult& result, const PointSets& instance,
                            const LossConfig& loss) {
  if (!instance.gt_pose) throw ValidationError("evaluateLoss: instance has no ground-truth pose");
  LossEvaluation out;
  const auto lc =
      correspondenceLoss(result.plan.P, instance, *instance.gt_pose, loss.theta, instance.gt_pairs);
  out.correspondence = lc.value;
  out.grad_P = lc.grad;
  out.pose = poseLoss(result.refined.pose, *instance.gt_pose);
  out.total = totalLoss(out.correspondence, out.pose.total, loss.gamma_p);
  out.grad_pose = loss.gamma_p * out.pose.grad;
  return out;
}

AlternationResult alternationBaseline(const PointSets& instance, const Pose& init, double theta,
                                      int max_rounds, const PnPSolveOptions& options,
                                      double time_limit) {
  const auto start = Clock::now();
  AlternationResult out;
  out.pose = init;
  for (int round = 0; round < max_rounds; ++round) {
    if (time_limit > 0.0 && secondsSince(start) > time_limit) {
      out.timed_out = true;
      break;
    }
    CorrespondenceList pairs = correspondencesFromPose(instance, out.pose, theta);
    if (out.rounds > 0 && pairs == out.pairs) {
      out.stable = true;
      break;
    }
    if (pairs.size() < 4) {
      out.stalled = true;
      break;
    }
    PnPProblem problem;
    const double w = 1.0 / static_cast<double>(pairs.size());
    for (const auto& c : pairs) problem.pairs.push_back({c.bearing, c.point, w});
    problem.init = out.pose;
    try {
      const Pose linear = epnp(instance, pairs);
      if (objectiveOrInf(instance, problem.pairs, linear) <
          objectiveOrInf(instance, problem.pairs, problem.init)) {
        problem.init = linear;
      }
    } catch (const NumericalError&) {
    }
    out.pose = pnpSolve(instance, problem, options).pose;
    out.pairs = std::move(pairs);
    ++out.rounds;
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Quartiles quartiles(std::span<const double> values) {
  const std::vector<double> v(values.begin(), values.end());
  return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

double recall(std::span<const double> values, double threshold) {
  if (values.empty()) return 0.0;
  const auto hits = std::count_if(values.begin(), values.end(),
                                  [&](double v) { return v < threshold; });
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

PoseErrors poseErrors(const PointSets& instance, const Pose& pose) {
  if (!instance.gt_pose) throw ValidationError("poseErrors: instance has no ground-truth pose");
  PoseErrors e;
  e.rotation_deg = radToDeg(rotationAngleExact(pose, *instance.gt_pose));
  e.translation = translationError(pose, *instance.gt_pose);
  if (instance.gt_pairs && !instance.gt_pairs->empty()) {
    e.reprojection_deg = radToDeg(angularReprojectionError(instance, *instance.gt_pairs, pose,
                                                           ReprojectionNormalization::kPerMatch)
                                      .value);
  }
  return e;
}

MethodSummary summarize(std::span<const MethodSample> samples,
                        std::span<const double> rotation_thresholds_deg,
                        std::span<const double> translation_thresholds) {
  if (samples.empty()) throw ValidationError("summarize: no samples");
  std::vector<double> rot, trans, reproj;
  double seconds = 0.0;
  for (const auto& s : samples) {
    rot.push_back(s.errors.rotation_deg);
    trans.push_back(s.errors.translation);
    reproj.push_back(s.errors.reprojection_deg);
    seconds += s.seconds;
  }
  MethodSummary out;
  out.rotation_deg = quartiles(rot);
  out.translation = quartiles(trans);
  out.reprojection_deg = quartiles(reproj);
  out.mean_seconds = seconds / static_cast<double>(samples.size());
  for (double tau : rotation_thresholds_deg) out.rotation_recall.push_back(recall(rot, tau));
  for (double tau : translation_thresholds) out.translation_recall.push_back(recall(trans, tau));
  return out;
}

EvaluationReport evaluate(std::span<const PipelineResult> results,
                          std::span<const PointSets> instances,
                          std::span<const double> rotation_thresholds_deg,
                          std::span<const double> translation_thresholds) {
  if (results.size() != instances.size()) {
    throw ValidationError("evaluate: results and instances differ in length");
  }
  std::vector<MethodSample> refined, ransac;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    refined.push_back({poseErrors(instances[k], r.refined.pose), r.seconds.total});
    ransac.push_back(
        {poseErrors(instances[k], r.ransac.pose), r.seconds.sinkhorn + r.seconds.ransac});
  }
  return {summarize(refined, rotation_thresholds_deg, translation_thresholds),
          summarize(ransac, rotation_thresholds_deg, translation_thresholds)};
}

void parallelFor(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  const auto run = [&](std::size_t k) {
    try {
      task(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) run(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bpnp
