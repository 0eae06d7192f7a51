#include "bpnp/weighted_pnp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/AutoDiff>

namespace bpnp {
namespace {

using Dual6 = Eigen::AutoDiffScalar<Vec6>;

template <typename Scalar>
struct GradientTerms {
  Scalar value{0.0};
  Vector3<Scalar> grad_r = Vector3<Scalar>::Zero();
  Vector3<Scalar> grad_t = Vector3<Scalar>::Zero();
};

/// Objective and analytic gradient. With y = R p + t and a = d e / d y for the
/// residual e = 1 - f^T y / ||y||:
///   d e / d t = a,   d e / d r = J_l(r)^T (R p x a).
/// J_l is shared by every pair, so it is applied once to the accumulated sum.
template <typename Scalar>
GradientTerms<Scalar> accumulate(const PointSets& instance, std::span<const WeightedPair> pairs,
                                 const Vector3<Scalar>& r, const Vector3<Scalar>& t) {
  using std::sqrt;
  const Matrix3<Scalar> R = expSO3<Scalar>(r);
  std::vector<Vector3<Scalar>> rotated(instance.numPoints());
  std::vector<char> cached(instance.numPoints(), 0);

  GradientTerms<Scalar> out;
  Vector3<Scalar> cross_sum = Vector3<Scalar>::Zero();
  for (const auto& pair : pairs) {
    if (pair.weight == 0.0) continue;
    if (!cached[pair.point]) {
      rotated[pair.point] = R * instance.points[pair.point].cast<Scalar>();
      cached[pair.point] = 1;
    }
    const Vector3<Scalar>& rp = rotated[pair.point];
    const Vector3<Scalar> y = rp + t;
    const Scalar norm_sq = y.squaredNorm();
    if (norm_sq <= Scalar(1e-24)) {
      throw SingularPairError("weighted PnP: pair (" + std::to_string(pair.bearing) + ", " +
                                  std::to_string(pair.point) +
                                  ") maps its point onto the camera centre",
                              pair.bearing, pair.point);
    }
    const Scalar norm = sqrt(norm_sq);
    const Vector3<Scalar> y_hat = y / norm;
    const Vector3<Scalar> f = instance.bearings[pair.bearing].cast<Scalar>();
    const Scalar cos_angle = f.dot(y_hat);
    const Scalar w(pair.weight);
    // 1 - f.y_hat written so it keeps full relative accuracy at small angles.
    const Vector3<Scalar> diff = f - y_hat;
    out.value += w * (Scalar(0.5) * diff.squaredNorm() +
                      Scalar(0.5) * (Scalar(1.0) - f.squaredNorm()));
    const Vector3<Scalar> a = -(f - y_hat * cos_angle) / norm;
    cross_sum += w * rp.cross(a);
    out.grad_t += w * a;
  }
  out.grad_r = leftJacobianSO3<Scalar>(r).transpose() * cross_sum;
  return out;
}

Mat6 hessian(const PointSets& instance, std::span<const WeightedPair> pairs, const Pose& pose) {
  Vector3<Dual6> r, t;
  for (int k = 0; k < 3; ++k) {
    r(k) = Dual6(pose.rotation(k), 6, k);
    t(k) = Dual6(pose.translation(k), 6, 3 + k);
  }
  const auto terms = accumulate<Dual6>(instance, pairs, r, t);
  Mat6 H;
  for (int k = 0; k < 3; ++k) {
    H.row(k) = terms.grad_r(k).derivatives().transpose();
    H.row(3 + k) = terms.grad_t(k).derivatives().transpose();
  }
  return 0.5 * (H + H.transpose());
}

double conditionNumber(const Mat6& H) {
  Eigen::SelfAdjointEigenSolver<Mat6> es(H, Eigen::EigenvaluesOnly);
  const Vec6 ev = es.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / lo;
}

Vec6 solveForVjp(const Mat6& H_in, const Vec6& grad_pose, const PnPVjpOptions& options) {
  const Mat6 H = H_in + options.damping * Mat6::Identity();
  const double cond = conditionNumber(H);
  if (!(cond <= kMaxHessianCondition)) {
    throw IllConditionedError("weighted PnP: Hessian is singular or ill-conditioned (cond " +
                                  std::to_string(cond) + ")",
                              cond);
  }
  return H.fullPivLu().solve(grad_pose);
}

}  // namespace

std::vector<WeightedPair> weightedPairsFromDense(const MatX& P, double relative_prune) {
  std::vector<WeightedPair> out;
  if (P.size() == 0) return out;
  const double cutoff = relative_prune > 0.0 ? relative_prune * P.maxCoeff() : -1.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      const double w = P(i, j);
      if (relative_prune > 0.0 && w < cutoff) continue;
      out.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), w});
    }
  }
  return out;
}

void validateProblem(const PointSets& instance, const PnPProblem& problem) {
  double total = 0.0;
  for (const auto& p : problem.pairs) {
    if (p.bearing >= instance.numBearings() || p.point >= instance.numPoints()) {
      throw ValidationError("weighted PnP: pair index out of range");
    }
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      throw ValidationError("weighted PnP: weights must be finite and nonnegative");
    }
    total += p.weight;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ValidationError("weighted PnP: weights must sum to one (got " + std::to_string(total) +
                          ")");
  }
}

ObjectiveValue pnpObjective(const PointSets& instance, std::span<const WeightedPair> pairs,
                            const Pose& pose) {
  const auto terms = accumulate<double>(instance, pairs, pose.rotation, pose.translation);
  ObjectiveValue out;
  out.value = terms.value;
  out.gradient << terms.grad_r, terms.grad_t;
  return out;
}

Vec6 pairResidualGradient(const Vec3& bearing, const Vec3& point, const Pose& pose) {
  const Vec3 rp = expSO3<double>(pose.rotation) * point;
  const Vec3 y = rp + pose.translation;
  const double norm = y.norm();
  if (norm <= 1e-12) {
    throw NumericalError("weighted PnP: point maps onto the camera centre");
  }
  const Vec3 y_hat = y / norm;
  const Vec3 a = -(bearing - y_hat * bearing.dot(y_hat)) / norm;
  Vec6 g;
  g << leftJacobianSO3<double>(pose.rotation).transpose() * rp.cross(a), a;
  return g;
}

PnPSolution pnpSolve(const PointSets& instance, const PnPProblem& problem,
                     const PnPSolveOptions& options) {
  validateProblem(instance, problem);
  const Objective objective = [&](const VecX& x, VecX& grad) {
    try {
      const auto ov = pnpObjective(instance, problem.pairs, Pose::fromVector(x));
      grad = ov.gradient;
      return ov.value;
    } catch (const SingularPairError&) {
      grad = VecX::Zero(6);
      return std::numeric_limits<double>::infinity();
    }
  };

  PnPSolution solution;
  VecX x = problem.init.asVector();
  int total_iterations = 0;
  // A second pass restarts from the canonical rotation if the first one
  // wandered past norm pi, so the reported gradient is for the returned pose.
  for (int pass = 0; pass < 2; ++pass) {
    const LbfgsResult res = minimizeLbfgs(objective, x, options.lbfgs);
    total_iterations += res.iterations;
    Pose pose = Pose::fromVector(res.x);
    const Vec3 canonical = canonicalizeAngleAxis(pose.rotation);
    solution.converged = res.converged;
    solution.objective_value = res.value;
    solution.gradient_norm = res.gradient.norm();
    if (canonical == pose.rotation) {
      solution.pose = pose;
      break;
    }
    pose.rotation = canonical;
    solution.pose = pose;
    const auto ov = pnpObjective(instance, problem.pairs, pose);
    solution.objective_value = ov.value;
    solution.gradient_norm = ov.gradient.norm();
    solution.converged = solution.gradient_norm <= options.lbfgs.gradient_tolerance;
    if (solution.converged) break;
    x = pose.asVector();
  }
  solution.iterations = total_iterations;
  return solution;
}

SecondOrderData pnpSecondOrder(const PointSets& instance, const PnPProblem& problem,
                               const Pose& pose_in) {
  validateProblem(instance, problem);
  Pose pose = pose_in;
  pose.rotation = canonicalizeAngleAxis(pose.rotation);
  const auto first = pnpObjective(instance, problem.pairs, pose);
  if (first.gradient.norm() > 1e-6) {
    throw ValidationError("pnpSecondOrder: pose is not stationary (gradient norm " +
                          std::to_string(first.gradient.norm()) + ")");
  }
  SecondOrderData out;
  out.H = hessian(instance, problem.pairs, pose);
  out.B.resize(6, static_cast<Eigen::Index>(problem.pairs.size()));
  for (std::size_t k = 0; k < problem.pairs.size(); ++k) {
    const auto& p = problem.pairs[k];
    out.B.col(static_cast<Eigen::Index>(k)) =
        pairResidualGradient(instance.bearings[p.bearing], instance.points[p.point], pose);
  }
  out.condition = conditionNumber(out.H);
  out.singular = !(out.condition <= kMaxHessianCondition);
  return out;
}

std::vector<double> pnpVjp(const PointSets& instance, const PnPProblem& problem,
                           const PnPSolution& solution, const Vec6& grad_pose,
                           const PnPVjpOptions& options) {
  validateProblem(instance, problem);
  const Mat6 H = hessian(instance, problem.pairs, solution.pose);
  const Vec6 v = solveForVjp(H, grad_pose, options);
  std::vector<double> out(problem.pairs.size());
  for (std::size_t k = 0; k < problem.pairs.size(); ++k) {
    const auto& p = problem.pairs[k];
    out[k] = -v.dot(pairResidualGradient(instance.bearings[p.bearing], instance.points[p.point],
                                         solution.pose));
  }
  return out;
}

MatX pnpVjpDense(const PointSets& instance, const PnPProblem& problem,
                 const PnPSolution& solution, const Vec6& grad_pose,
                 const PnPVjpOptions& options) {
  validateProblem(instance, problem);
  const Mat6 H = hessian(instance, problem.pairs, solution.pose);
  const Vec6 v = solveForVjp(H, grad_pose, options);
  const auto m = static_cast<Eigen::Index>(instance.numBearings());
  const auto n = static_cast<Eigen::Index>(instance.numPoints());

  // -v^T grad e_ij = -(J_l^T (Rp_j x a_ij))^T v_r - a_ij^T v_t
  //               = -a_ij^T (v_t + (J_l v_r) x Rp_j).
  const Mat3 R = expSO3<double>(solution.pose.rotation);
  const Vec3 jv = leftJacobianSO3<double>(solution.pose.rotation) * v.head<3>();
  MatX out(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vec3 rp = R * instance.points[static_cast<std::size_t>(j)];
    const Vec3 y = rp + solution.pose.translation;
    const double norm = y.norm();
    if (norm <= 1e-12) {
      throw NumericalError("weighted PnP: point " + std::to_string(j) +
                           " maps onto the camera centre");
    }
    const Vec3 y_hat = y / norm;
    const Vec3 u = v.tail<3>() + jv.cross(rp);
    const double u_par = u.dot(y_hat);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec3& f = instance.bearings[static_cast<std::size_t>(i)];
      // a = -(f - y_hat (f . y_hat)) / ||y||
      out(i, j) = (f.dot(u) - f.dot(y_hat) * u_par) / norm;
    }
  }
  return out;
}

}  // namespace bpnp
