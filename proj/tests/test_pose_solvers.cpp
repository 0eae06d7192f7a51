#include <gtest/gtest.h>

#include <algorithm>

#include "bpnp/geometry.hpp"
#include "bpnp/pose_solvers.hpp"
#include "test_util.hpp"

using namespace bpnp;

namespace {

Pose randomPose(std::mt19937_64& rng) {
  return {test::randomRotation(rng, 0.0, 3.0), test::randomVec3(rng, 0.3)};
}

double bestRotationError(const std::vector<Pose>& poses, const Pose& gt) {
  double best = 1e9;
  for (const auto& p : poses) best = std::min(best, rotationAngleExact(p, gt));
  return best;
}

}  // namespace

TEST(P3P, RecoversGroundTruthAmongRoots) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const Pose gt = randomPose(rng);
    const PointSets s = test::exactScene(rng, 3, gt);
    const std::array<Vec3, 3> f{s.bearings[0], s.bearings[1], s.bearings[2]};
    const std::array<Vec3, 3> p{s.points[0], s.points[1], s.points[2]};
    const auto roots = p3p(f, p);
    ASSERT_FALSE(roots.empty());
    ASSERT_LE(roots.size(), 4u);
    EXPECT_LT(bestRotationError(roots, gt), 1e-8);
    for (const auto& pose : roots) {
      const Mat3 R = expSO3<double>(pose.rotation);
      for (int k = 0; k < 3; ++k) {
        EXPECT_LE(pairAngleExact(f[k], p[k], R, pose.translation), 1e-9);
        EXPECT_GT((R * p[k] + pose.translation).dot(f[k]), 0.0);
      }
    }
  }
}

TEST(P3P, SymmetricConfiguration) {
  // Isosceles layout where the true depth ratio is a double root.
  const std::array<Vec3, 3> p{Vec3(1, 0, 5), Vec3(0, 1, 5), Vec3(-1, 0, 5)};
  const std::array<Vec3, 3> f{p[0].normalized(), p[1].normalized(), p[2].normalized()};
  EXPECT_LT(bestRotationError(p3p(f, p), Pose{}), 1e-9);
}

TEST(P3P, CollinearPointsThrow) {
  const std::array<Vec3, 3> p{Vec3(0, 0, 5), Vec3(1, 0, 5), Vec3(2, 0, 5)};
  const std::array<Vec3, 3> f{p[0].normalized(), p[1].normalized(), p[2].normalized()};
  EXPECT_THROW(p3p(f, p), DegenerateConfigurationError);
}

TEST(AbsoluteOrientation, RecoversRigidMotion) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose gt = randomPose(rng);
    const Mat3 R = expSO3<double>(gt.rotation);
    std::vector<Vec3> src, dst;
    for (int k = 0; k < 6; ++k) {
      src.push_back(test::randomVec3(rng));
      dst.push_back(R * src.back() + gt.translation);
    }
    const Pose est = absoluteOrientation(src, dst);
    EXPECT_LT(rotationAngleExact(est, gt), 1e-10);
    EXPECT_LT((est.translation - gt.translation).norm(), 1e-10);
  }
}

TEST(AbsoluteOrientation, ExcludesReflections) {
  const std::vector<Vec3> src{Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0, 0, 0)};
  std::vector<Vec3> dst;
  for (const auto& x : src) dst.push_back(Vec3(-x.x(), x.y(), x.z()));
  const Pose est = absoluteOrientation(src, dst);
  EXPECT_TRUE(isRotation(expSO3<double>(est.rotation), 1e-12));
}

TEST(AbsoluteOrientation, ZeroWeightIgnoresPoint) {
  std::mt19937_64 rng(33);
  const Pose gt = randomPose(rng);
  const Mat3 R = expSO3<double>(gt.rotation);
  std::vector<Vec3> src, dst;
  for (int k = 0; k < 5; ++k) {
    src.push_back(test::randomVec3(rng));
    dst.push_back(R * src.back() + gt.translation);
  }
  dst[2] += Vec3(5, 5, 5);
  const std::vector<double> w{1, 1, 0, 1, 1};
  EXPECT_LT(rotationAngleExact(absoluteOrientation(src, dst, w), gt), 1e-10);
}

TEST(EPnP, ExactOnNoiselessScenes) {
  std::mt19937_64 rng(34);
  for (std::size_t n : {4, 5, 6, 10, 50, 200}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Pose gt = randomPose(rng);
      const PointSets s = test::exactScene(rng, n, gt);
      const Pose est = epnp(s, *s.gt_pairs);
      EXPECT_LT(rotationAngleExact(est, gt), 1e-7) << "n " << n;
      EXPECT_LT((est.translation - gt.translation).norm(), 1e-6) << "n " << n;
    }
  }
}

TEST(EPnP, PlanarScene) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Pose gt{Vec3(0.3, -0.2, 0.1), Vec3(0.1, -0.1, 5.0)};
  const Mat3 R = expSO3<double>(gt.rotation);
  PointSets s;
  CorrespondenceList pairs;
  for (std::size_t k = 0; k < 20; ++k) {
    s.points.push_back(Vec3(u(rng), u(rng), 0.0));
    s.bearings.push_back((R * s.points.back() + gt.translation).normalized());
    pairs.push_back({k, k});
  }
  const Pose est = epnp(s, pairs);
  EXPECT_LT(rotationAngleExact(est, gt), 1e-7);
}

TEST(EPnP, RejectsTooFewPairs) {
  std::mt19937_64 rng(36);
  const PointSets s = test::exactScene(rng, 3, Pose{});
  EXPECT_THROW(epnp(s, *s.gt_pairs), ValidationError);
}

namespace {

struct RansacScene {
  PointSets instance;
  std::vector<WeightedPair> candidates;
};

RansacScene outlierScene(std::uint64_t seed, std::size_t n, double outlier_fraction) {
  std::mt19937_64 rng(seed);
  RansacScene out;
  out.instance = test::exactScene(rng, n, Pose{test::randomRotation(rng, 0.0, 1.0),
                                               test::randomVec3(rng, 0.3)});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const auto outliers = static_cast<std::size_t>(outlier_fraction * static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t j = k;
    if (k < outliers) {
      while (j == k) j = pick(rng);
    }
    out.candidates.push_back({k, j, 1.0 / static_cast<double>(n)});
  }
  return out;
}

}  // namespace

TEST(Ransac, HalfOutliers) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = outlierScene(seed, 100, 0.5);
    const auto est = ransacP3P(scene.instance, scene.candidates);
    EXPECT_LT(rotationAngleExact(est.pose, *scene.instance.gt_pose), 1e-6) << seed;
    EXPECT_GE(est.inliers.size(), 50u);
    validateOneToOne(est.inliers, 100, 100);
  }
}

TEST(Ransac, DeterministicPerSeed) {
  const auto scene = outlierScene(40, 60, 0.6);
  RansacConfig c;
  c.seed = 9;
  const auto a = ransacP3P(scene.instance, scene.candidates, c);
  const auto b = ransacP3P(scene.instance, scene.candidates, c);
  EXPECT_EQ(a.pose, b.pose);
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST(Ransac, RespectsIterationCap) {
  const auto scene = outlierScene(41, 60, 0.9);
  RansacConfig c;
  c.max_iterations = 7;
  EXPECT_LE(ransacP3P(scene.instance, scene.candidates, c).iterations_used, 7);
}

TEST(Ransac, RejectsTooFewCandidates) {
  const auto scene = outlierScene(42, 3, 0.0);
  EXPECT_THROW(ransacP3P(scene.instance, scene.candidates), ValidationError);
}
