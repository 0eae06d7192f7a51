#include "bpnp/pose_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "bpnp/assignment.hpp"
#include "bpnp/geometry.hpp"

namespace bpnp {
namespace {

/// Real roots of a4 x^4 + ... + a0 via companion-matrix eigenvalues,
/// Newton-polished.
std::vector<double> quarticRealRoots(const std::array<double, 5>& a) {
  std::vector<double> roots;
  if (std::abs(a[4]) < 1e-14 * (std::abs(a[3]) + std::abs(a[2]) + std::abs(a[1]) + std::abs(a[0]))) {
    // Degenerates to a cubic; handle through the same companion route.
    Eigen::Matrix3d comp = Eigen::Matrix3d::Zero();
    comp(0, 0) = -a[2] / a[3];
    comp(0, 1) = -a[1] / a[3];
    comp(0, 2) = -a[0] / a[3];
    comp(1, 0) = 1.0;
    comp(2, 1) = 1.0;
    if (!comp.allFinite()) return roots;
    Eigen::EigenSolver<Eigen::Matrix3d> es(comp, false);
    for (int i = 0; i < 3; ++i) {
      const auto z = es.eigenvalues()(i);
      if (std::abs(z.imag()) <= 1e-6 * (1.0 + std::abs(z.real()))) roots.push_back(z.real());
    }
  } else {
    Eigen::Matrix4d comp = Eigen::Matrix4d::Zero();
    for (int j = 0; j < 4; ++j) comp(0, j) = -a[static_cast<std::size_t>(3 - j)] / a[4];
    comp(1, 0) = comp(2, 1) = comp(3, 2) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix4d> es(comp, false);
    for (int i = 0; i < 4; ++i) {
      const auto z = es.eigenvalues()(i);
      if (std::abs(z.imag()) <= 1e-6 * (1.0 + std::abs(z.real()))) roots.push_back(z.real());
    }
  }
  // Double roots come out of the eigenvalue route only to sqrt(eps); they are
  // recovered exactly as roots of the derivative where the quartic vanishes.
  if (std::abs(a[4]) > 0.0) {
    Eigen::Matrix3d comp = Eigen::Matrix3d::Zero();
    comp(0, 0) = -3.0 * a[3] / (4.0 * a[4]);
    comp(0, 1) = -2.0 * a[2] / (4.0 * a[4]);
    comp(0, 2) = -a[1] / (4.0 * a[4]);
    comp(1, 0) = 1.0;
    comp(2, 1) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix3d> es(comp, false);
    const double scale = std::abs(a[4]) + std::abs(a[3]) + std::abs(a[2]) + std::abs(a[1]) +
                         std::abs(a[0]);
    for (int i = 0; i < 3; ++i) {
      const auto z = es.eigenvalues()(i);
      if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
      double x = z.real();
      for (int it = 0; it < 5; ++it) {
        const double dp = ((4.0 * a[4] * x + 3.0 * a[3]) * x + 2.0 * a[2]) * x + a[1];
        const double ddp = (12.0 * a[4] * x + 6.0 * a[3]) * x + 2.0 * a[2];
        if (ddp == 0.0) break;
        x -= dp / ddp;
      }
      const double p = (((a[4] * x + a[3]) * x + a[2]) * x + a[1]) * x + a[0];
      const double x4 = std::max(1.0, x * x * x * x);
      if (std::abs(p) <= 1e-12 * scale * x4) roots.push_back(x);
    }
  }
  for (double& x : roots) {
    for (int it = 0; it < 5; ++it) {
      const double p = (((a[4] * x + a[3]) * x + a[2]) * x + a[1]) * x + a[0];
      const double dp = ((4.0 * a[4] * x + 3.0 * a[3]) * x + 2.0 * a[2]) * x + a[1];
      if (dp == 0.0) break;
      const double step = p / dp;
      x -= step;
      if (std::abs(step) <= 1e-16 * (1.0 + std::abs(x))) break;
    }
  }
  return roots;
}

/// Newton iterations on the three law-of-cosines equations in the depths.
void polishDepths(Vec3& s, double cos_a, double cos_b, double cos_g, double a2, double b2,
                  double c2) {
  auto residual = [&](const Vec3& d) {
    return Vec3(d(1) * d(1) + d(2) * d(2) - 2.0 * d(1) * d(2) * cos_a - a2,
                d(0) * d(0) + d(2) * d(2) - 2.0 * d(0) * d(2) * cos_b - b2,
                d(0) * d(0) + d(1) * d(1) - 2.0 * d(0) * d(1) * cos_g - c2);
  };
  Vec3 r = residual(s);
  for (int it = 0; it < 8; ++it) {
    Mat3 J;
    J << 0.0, 2.0 * s(1) - 2.0 * s(2) * cos_a, 2.0 * s(2) - 2.0 * s(1) * cos_a,
        2.0 * s(0) - 2.0 * s(2) * cos_b, 0.0, 2.0 * s(2) - 2.0 * s(0) * cos_b,
        2.0 * s(0) - 2.0 * s(1) * cos_g, 2.0 * s(1) - 2.0 * s(0) * cos_g, 0.0;
    const Vec3 step = J.fullPivLu().solve(r);
    if (!step.allFinite()) return;
    const Vec3 candidate = s - step;
    const Vec3 r_new = residual(candidate);
    if (r_new.norm() >= r.norm()) return;
    s = candidate;
    r = r_new;
  }
}

double sumWeightedAngle(const PointSets& instance, const CorrespondenceList& pairs,
                        std::span<const double> weights, const Pose& pose) {
  const Mat3 R = expSO3<double>(pose.rotation);
  double total = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double w = weights.empty() ? 1.0 : weights[k];
    total += w * pairAngleExact(instance.bearings[pairs[k].bearing], instance.points[pairs[k].point],
                           R, pose.translation);
  }
  return total;
}

}  // namespace

std::vector<Pose> p3p(const std::array<Vec3, 3>& bearings, const std::array<Vec3, 3>& points) {
  const double a = (points[1] - points[2]).norm();
  const double b = (points[0] - points[2]).norm();
  const double c = (points[0] - points[1]).norm();
  const double area = 0.5 * (points[1] - points[0]).cross(points[2] - points[0]).norm();
  if (a <= 1e-9 || b <= 1e-9 || c <= 1e-9 || area <= 1e-12) {
    throw DegenerateConfigurationError("p3p: world points are coincident or collinear");
  }
  std::array<Vec3, 3> f;
  for (std::size_t i = 0; i < 3; ++i) f[i] = bearings[i].normalized();

  const double cos_a = f[1].dot(f[2]);
  const double cos_b = f[0].dot(f[2]);
  const double cos_g = f[0].dot(f[1]);
  const double a2 = a * a, b2 = b * b, c2 = c * c;
  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;

  std::array<double, 5> coeff;
  coeff[4] = (amc - 1.0) * (amc - 1.0) - 4.0 * c2 / b2 * cos_a * cos_a;
  coeff[3] = 4.0 * (amc * (1.0 - amc) * cos_b - (1.0 - apc) * cos_a * cos_g +
                    2.0 * c2 / b2 * cos_a * cos_a * cos_b);
  coeff[2] = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cos_b * cos_b +
                    2.0 * (b2 - c2) / b2 * cos_a * cos_a - 4.0 * apc * cos_a * cos_b * cos_g +
                    2.0 * (b2 - a2) / b2 * cos_g * cos_g);
  coeff[1] = 4.0 * (-amc * (1.0 + amc) * cos_b + 2.0 * a2 / b2 * cos_g * cos_g * cos_b -
                    (1.0 - apc) * cos_a * cos_g);
  coeff[0] = (1.0 + amc) * (1.0 + amc) - 4.0 * a2 / b2 * cos_g * cos_g;

  std::vector<Pose> solutions;
  for (const double v : quarticRealRoots(coeff)) {
    if (!(v > 0.0)) continue;
    const double s1_sq = b2 / (1.0 + v * v - 2.0 * v * cos_b);
    if (!(s1_sq > 0.0)) continue;
    const double s1 = std::sqrt(s1_sq);
    const double s3 = v * s1;
    // s2 from the linear combination of the two equations involving it and
    // from the quadratic law of cosines against s1; the consistency check
    // below discards the wrong branches.
    std::vector<double> s2_options;
    const double denom = 2.0 * (cos_g - v * cos_a);
    if (std::abs(denom) > 1e-6) {
      s2_options.push_back(s1 * ((-1.0 + amc) * v * v - 2.0 * amc * cos_b * v + 1.0 + amc) / denom);
    }
    const double disc = s1 * s1 * cos_g * cos_g - (s1 * s1 - c2);
    if (disc >= 0.0) {
      s2_options.push_back(s1 * cos_g + std::sqrt(disc));
      s2_options.push_back(s1 * cos_g - std::sqrt(disc));
    }
    for (const double s2 : s2_options) {
    if (!(s2 > 0.0)) continue;
    Vec3 depth(s1, s2, s3);
    polishDepths(depth, cos_a, cos_b, cos_g, a2, b2, c2);
    if (!depth.allFinite() || !(depth.array() > 0.0).all()) continue;

    const std::array<Vec3, 3> cam{depth(0) * f[0], depth(1) * f[1], depth(2) * f[2]};
    const Pose pose = absoluteOrientation(points, cam);
    const Mat3 R = expSO3<double>(pose.rotation);
    bool consistent = true;
    for (std::size_t i = 0; i < 3; ++i) {
      if (pairAngleExact(f[i], points[i], R, pose.translation) > 1e-9) consistent = false;
    }
    if (!consistent) continue;

    const bool duplicate = std::any_of(solutions.begin(), solutions.end(), [&](const Pose& q) {
      return (q.asVector() - pose.asVector()).cwiseAbs().maxCoeff() < 1e-10;
    });
    if (!duplicate) solutions.push_back(pose);
    }
  }
  return solutions;
}

Pose absoluteOrientation(std::span<const Vec3> src, std::span<const Vec3> dst,
                         std::span<const double> weights) {
  if (src.size() != dst.size() || src.empty()) {
    throw ValidationError("absoluteOrientation: point lists must be non-empty and equal length");
  }
  double wsum = 0.0;
  Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    src_mean += w * src[i];
    dst_mean += w * dst[i];
    wsum += w;
  }
  if (!(wsum > 0.0)) throw ValidationError("absoluteOrientation: weights sum to zero");
  src_mean /= wsum;
  dst_mean /= wsum;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    cov += w * (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 R = svd.matrixV() * d * svd.matrixU().transpose();
  return {logSO3(R), dst_mean - R * src_mean};
}

Pose epnp(const PointSets& instance, const CorrespondenceList& pairs,
          std::span<const double> weights) {
  const std::size_t count = pairs.size();
  if (count < 4) throw ValidationError("epnp: at least 4 correspondences are required");
  if (!weights.empty() && weights.size() != count) {
    throw ValidationError("epnp: weight count does not match pair count");
  }
  for (const auto& c : pairs) {
    if (c.bearing >= instance.numBearings() || c.point >= instance.numPoints()) {
      throw ValidationError("epnp: correspondence index out of range");
    }
  }
  auto weight = [&](std::size_t k) { return weights.empty() ? 1.0 : weights[k]; };

  // Control points from the (weighted) centroid and principal axes.
  double wsum = 0.0;
  Vec3 centroid = Vec3::Zero();
  for (std::size_t k = 0; k < count; ++k) {
    centroid += weight(k) * instance.points[pairs[k].point];
    wsum += weight(k);
  }
  if (!(wsum > 0.0)) throw ValidationError("epnp: weights sum to zero");
  centroid /= wsum;
  Mat3 cov = Mat3::Zero();
  for (std::size_t k = 0; k < count; ++k) {
    const Vec3 d = instance.points[pairs[k].point] - centroid;
    cov += weight(k) * d * d.transpose();
  }
  cov /= wsum;
  Eigen::SelfAdjointEigenSolver<Mat3> pca(cov);
  const Vec3 lambda = pca.eigenvalues();  // ascending
  if (!(lambda(2) > 0.0) || lambda(1) <= 1e-12 * lambda(2)) {
    throw NumericalError("epnp: world points are coincident or collinear");
  }
  const bool planar = lambda(0) <= 1e-10 * lambda(2);
  const int nc = planar ? 3 : 4;

  std::vector<Vec3> ctrl_world{centroid};
  std::vector<Vec3> axes;
  for (int k = 2; k >= (planar ? 1 : 0); --k) {
    const Vec3 axis = pca.eigenvectors().col(k) * std::sqrt(lambda(k));
    axes.push_back(axis);
    ctrl_world.push_back(centroid + axis);
  }

  // Barycentric coordinates; the axes are orthogonal so each coefficient is
  // an independent projection.
  MatX alphas(static_cast<Eigen::Index>(count), nc);
  for (std::size_t k = 0; k < count; ++k) {
    const Vec3 d = instance.points[pairs[k].point] - centroid;
    double rest = 1.0;
    for (int c = 1; c < nc; ++c) {
      const Vec3& axis = axes[static_cast<std::size_t>(c - 1)];
      const double beta = axis.dot(d) / axis.squaredNorm();
      alphas(static_cast<Eigen::Index>(k), c) = beta;
      rest -= beta;
    }
    alphas(static_cast<Eigen::Index>(k), 0) = rest;
  }

  // [f]x sum_c alpha_c ctrl_c = 0 for every pair.
  const int dim = 3 * nc;
  MatX mtm = MatX::Zero(dim, dim);
  for (std::size_t k = 0; k < count; ++k) {
    const Mat3 fx = skew<double>(instance.bearings[pairs[k].bearing].normalized());
    Eigen::Matrix<double, 3, Eigen::Dynamic> rows(3, dim);
    for (int c = 0; c < nc; ++c) {
      rows.block<3, 3>(0, 3 * c) = alphas(static_cast<Eigen::Index>(k), c) * fx;
    }
    mtm.noalias() += weight(k) * rows.transpose() * rows;
  }
  Eigen::SelfAdjointEigenSolver<MatX> kernel(mtm);
  if (kernel.info() != Eigen::Success) throw NumericalError("epnp: eigen-decomposition failed");
  const int max_kernel = planar ? 3 : 4;
  MatX null_vecs = kernel.eigenvectors().leftCols(max_kernel);

  // Control-point pair distances.
  std::vector<std::pair<int, int>> links;
  for (int a = 0; a < nc; ++a)
    for (int b = a + 1; b < nc; ++b) links.emplace_back(a, b);
  const auto num_links = static_cast<Eigen::Index>(links.size());
  VecX dist_world_sq(num_links);
  for (Eigen::Index l = 0; l < num_links; ++l) {
    const auto [a, b] = links[static_cast<std::size_t>(l)];
    dist_world_sq(l) = (ctrl_world[static_cast<std::size_t>(a)] -
                        ctrl_world[static_cast<std::size_t>(b)]).squaredNorm();
  }
  // diff(l, k) = difference vector of link l in kernel vector k.
  auto kernelDiff = [&](Eigen::Index l, int k) -> Vec3 {
    const auto [a, b] = links[static_cast<std::size_t>(l)];
    return null_vecs.col(k).segment<3>(3 * a) - null_vecs.col(k).segment<3>(3 * b);
  };

  auto refineBetas = [&](VecX betas) {
    for (int it = 0; it < 10; ++it) {
      MatX J(num_links, max_kernel);
      VecX r(num_links);
      for (Eigen::Index l = 0; l < num_links; ++l) {
        Vec3 d = Vec3::Zero();
        for (int k = 0; k < max_kernel; ++k) d += betas(k) * kernelDiff(l, k);
        r(l) = d.squaredNorm() - dist_world_sq(l);
        for (int k = 0; k < max_kernel; ++k) J(l, k) = 2.0 * d.dot(kernelDiff(l, k));
      }
      const VecX step = J.completeOrthogonalDecomposition().solve(r);
      if (!step.allFinite()) break;
      betas -= step;
      if (step.norm() <= 1e-15 * (1.0 + betas.norm())) break;
    }
    return betas;
  };

  auto poseFromBetas = [&](const VecX& betas) -> std::optional<Pose> {
    VecX ctrl_cam = VecX::Zero(dim);
    for (int k = 0; k < max_kernel; ++k) ctrl_cam += betas(k) * null_vecs.col(k);
    std::vector<Vec3> world(count), cam(count);
    double facing = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      Vec3 x = Vec3::Zero();
      for (int c = 0; c < nc; ++c) {
        x += alphas(static_cast<Eigen::Index>(k), c) * ctrl_cam.segment<3>(3 * c);
      }
      cam[k] = x;
      world[k] = instance.points[pairs[k].point];
      facing += weight(k) * x.dot(instance.bearings[pairs[k].bearing]);
    }
    if (facing < 0.0) {
      for (auto& x : cam) x = -x;
    }
    std::vector<double> w(count);
    for (std::size_t k = 0; k < count; ++k) w[k] = weight(k);
    try {
      return absoluteOrientation(world, cam, w);
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  };

  std::vector<VecX> initial;
  // One kernel vector: scale from the link lengths.
  {
    double num = 0.0, den = 0.0;
    for (Eigen::Index l = 0; l < num_links; ++l) {
      const double dv = kernelDiff(l, 0).norm();
      num += dv * std::sqrt(dist_world_sq(l));
      den += dv * dv;
    }
    VecX b = VecX::Zero(max_kernel);
    b(0) = den > 0.0 ? num / den : 0.0;
    initial.push_back(b);
  }
  // Two and three kernel vectors: linearise in the products beta_a beta_b.
  for (int dims = 2; dims <= 3; ++dims) {
    const int unknowns = dims * (dims + 1) / 2;
    if (unknowns > num_links) break;
    MatX L(num_links, unknowns);
    for (Eigen::Index l = 0; l < num_links; ++l) {
      int col = 0;
      for (int a = 0; a < dims; ++a) {
        for (int b = a; b < dims; ++b) {
          const double dot = kernelDiff(l, a).dot(kernelDiff(l, b));
          L(l, col++) = a == b ? dot : 2.0 * dot;
        }
      }
    }
    const VecX prod = L.completeOrthogonalDecomposition().solve(dist_world_sq);
    VecX b = VecX::Zero(max_kernel);
    b(0) = std::sqrt(std::abs(prod(0)));
    if (b(0) > 0.0) {
      for (int k = 1; k < dims; ++k) b(k) = prod(k) / b(0);
    }
    initial.push_back(b);
  }

  std::optional<Pose> best;
  double best_err = std::numeric_limits<double>::infinity();
  for (const VecX& b0 : initial) {
    const auto pose = poseFromBetas(refineBetas(b0));
    if (!pose) continue;
    const double err = sumWeightedAngle(instance, pairs, weights, *pose);
    if (err < best_err) {
      best_err = err;
      best = pose;
    }
  }
  // With four or five pairs the kernel can have more dimensions than the
  // linearisations above cover; minimal solutions on triplets fill the gap.
  if (count < 6) {
    for (std::size_t skip = 0; skip < 4; ++skip) {
      std::array<Vec3, 3> f, p;
      std::size_t slot = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        if (k == skip) continue;
        f[slot] = instance.bearings[pairs[k].bearing];
        p[slot] = instance.points[pairs[k].point];
        ++slot;
      }
      std::vector<Pose> roots;
      try {
        roots = p3p(f, p);
      } catch (const DegenerateConfigurationError&) {
        continue;
      }
      for (const auto& pose : roots) {
        const double err = sumWeightedAngle(instance, pairs, weights, pose);
        if (err < best_err) {
          best_err = err;
          best = pose;
        }
      }
    }
  }
  if (!best) throw NumericalError("epnp: no valid control-point solution");
  return *best;
}

RobustEstimate ransacP3P(const PointSets& instance, std::span<const WeightedPair> candidates,
                         const RansacConfig& config) {
  const std::size_t k = candidates.size();
  if (k < 4) throw ValidationError("ransacP3P: at least 4 candidates are required");
  if (!(config.inlier_threshold > 0.0) || config.max_iterations < 1 ||
      !(config.confidence > 0.0 && config.confidence < 1.0)) {
    throw ValidationError("ransacP3P: invalid configuration");
  }
  for (const auto& c : candidates) {
    if (c.bearing >= instance.numBearings() || c.point >= instance.numPoints() || c.weight < 0.0) {
      throw ValidationError("ransacP3P: candidate out of range or with negative weight");
    }
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  const double cos_threshold = std::cos(config.inlier_threshold);

  auto countInliers = [&](const Pose& pose) {
    const Mat3 R = expSO3<double>(pose.rotation);
    std::size_t inliers = 0;
    for (const auto& c : candidates) {
      const Vec3 y = R * instance.points[c.point] + pose.translation;
      const double ny = y.norm();
      if (ny > 0.0 && instance.bearings[c.bearing].dot(y) >= cos_threshold * ny) ++inliers;
    }
    return inliers;
  };

  RobustEstimate est;
  bool have_hypothesis = false;
  double needed = static_cast<double>(config.max_iterations);
  int iter = 0;
  while (iter < config.max_iterations && static_cast<double>(iter) < needed) {
    ++iter;
    std::array<std::size_t, 4> sample{};
    for (std::size_t s = 0; s < 4; ++s) {
      std::size_t idx;
      do {
        idx = pick(rng);
      } while (std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), idx) !=
               sample.begin() + static_cast<std::ptrdiff_t>(s));
      sample[s] = idx;
    }
    std::array<Vec3, 3> f, p;
    for (std::size_t s = 0; s < 3; ++s) {
      f[s] = instance.bearings[candidates[sample[s]].bearing];
      p[s] = instance.points[candidates[sample[s]].point];
    }
    std::vector<Pose> roots;
    try {
      roots = p3p(f, p);
    } catch (const DegenerateConfigurationError&) {
      continue;
    }
    if (roots.empty()) continue;

    const auto& check = candidates[sample[3]];
    const Pose* chosen = nullptr;
    double chosen_err = std::numeric_limits<double>::infinity();
    for (const auto& pose : roots) {
      const double err = pairAngleExact(instance.bearings[check.bearing], instance.points[check.point],
                                   expSO3<double>(pose.rotation), pose.translation);
      if (err < chosen_err) {
        chosen_err = err;
        chosen = &pose;
      }
    }
    const std::size_t score = countInliers(*chosen);
    if (!have_hypothesis || score > est.hypothesis_inliers) {
      have_hypothesis = true;
      est.hypothesis_inliers = score;
      est.minimal_pose = *chosen;
      const double w = static_cast<double>(score) / static_cast<double>(k);
      const double w4 = w * w * w * w;
      if (w4 >= 1.0) {
        needed = 0.0;
      } else if (w4 > 0.0) {
        needed = std::log(1.0 - config.confidence) / std::log1p(-w4);
      }
    }
  }
  est.iterations_used = iter;
  est.pose = est.minimal_pose;
  if (!have_hypothesis || est.hypothesis_inliers == 0) {
    est.no_inliers = true;
    return est;
  }

  // One-to-one inlier set by assignment on angular error.
  const Mat3 R = expSO3<double>(est.minimal_pose.rotation);
  std::vector<CandidateEdge> edges;
  std::vector<double> cand_weight;
  for (const auto& c : candidates) {
    const double angle = pairAngleExact(instance.bearings[c.bearing], instance.points[c.point], R,
                                   est.minimal_pose.translation);
    if (angle <= config.inlier_threshold) edges.push_back({c.bearing, c.point, angle});
  }
  est.inliers = matchEdges(edges);
  if (est.inliers.size() >= 4) {
    std::vector<double> weights;
    if (config.weighted_refit) {
      for (const auto& pair : est.inliers) {
        double w = 0.0;
        for (const auto& c : candidates) {
          if (c.bearing == pair.bearing && c.point == pair.point) w = std::max(w, c.weight);
        }
        weights.push_back(w);
      }
    }
    try {
      const Pose refit = epnp(instance, est.inliers, weights);
      if (sumWeightedAngle(instance, est.inliers, weights, refit) <=
          sumWeightedAngle(instance, est.inliers, weights, est.minimal_pose)) {
        est.pose = refit;
      }
    } catch (const std::exception&) {
      // Keep the minimal pose when the inliers are degenerate for EPnP.
    }
  }
  return est;
}

}  // namespace bpnp
