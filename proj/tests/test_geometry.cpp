#include <gtest/gtest.h>

#include <numbers>

#include "bpnp/geometry.hpp"
#include "test_util.hpp"

using namespace bpnp;

namespace {

Mat3 expSeries(const Vec3& r) {
  const Mat3 K = skew<double>(r);
  Mat3 term = Mat3::Identity();
  Mat3 sum = Mat3::Identity();
  for (int k = 1; k < 40; ++k) {
    term = term * K / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

}  // namespace

TEST(Geometry, ExpMatchesPowerSeries) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 r = test::randomRotation(rng, 0.0, 3.0);
    EXPECT_LT((expSO3<double>(r) - expSeries(r)).cwiseAbs().maxCoeff(), 1e-12);
  }
  const Vec3 tiny(1e-10, -2e-10, 3e-11);
  EXPECT_LT((expSO3<double>(tiny) - expSeries(tiny)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Geometry, ExpIsRotation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 R = expSO3<double>(test::randomRotation(rng, 0.0, 10.0));
    EXPECT_TRUE(isRotation(R, 1e-12));
  }
}

TEST(Geometry, LogInvertsExp) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec3 r = test::randomRotation(rng, 0.0, std::numbers::pi - 1e-6);
    const Vec3 back = logSO3(expSO3<double>(r));
    EXPECT_LT((back - r).norm(), 1e-9) << r.transpose();
  }
}

TEST(Geometry, LogNearPiAndZero) {
  for (const double theta : {std::numbers::pi, std::numbers::pi - 1e-9, 1e-12, 0.0}) {
    const Vec3 r = theta * Vec3(1.0, 2.0, -2.0) / 3.0;
    const Vec3 back = logSO3(expSO3<double>(r));
    EXPECT_NEAR(back.norm(), theta, 1e-7);
    EXPECT_LT((expSO3<double>(back) - expSO3<double>(r)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Geometry, LogRejectsNonRotation) {
  Mat3 R = Mat3::Identity();
  R(0, 0) = -1.0;
  EXPECT_THROW(logSO3(R), ValidationError);
  EXPECT_THROW(logSO3(2.0 * Mat3::Identity()), ValidationError);
}

TEST(Geometry, CanonicalizeKeepsRotation) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 r = test::randomRotation(rng, 0.0, 20.0);
    const Vec3 c = canonicalizeAngleAxis(r);
    EXPECT_LE(c.norm(), std::numbers::pi + 1e-12);
    EXPECT_LT((expSO3<double>(c) - expSO3<double>(r)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Geometry, LeftJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 r = test::randomRotation(rng, 0.0, 3.0);
    const Mat3 R = expSO3<double>(r);
    Mat3 J;
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d(k) = h;
      const Vec3 plus = logSO3(expSO3<double>(Vec3(r + d)) * R.transpose());
      const Vec3 minus = logSO3(expSO3<double>(Vec3(r - d)) * R.transpose());
      J.col(k) = (plus - minus) / (2.0 * h);
    }
    EXPECT_LT((leftJacobianSO3<double>(r) - J).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Geometry, EulerIsIntrinsicZYX) {
  const double yaw = 0.3, pitch = -0.2, roll = 0.7;
  Mat3 Rz, Ry, Rx;
  Rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
  Ry << std::cos(pitch), 0, std::sin(pitch), 0, 1, 0, -std::sin(pitch), 0, std::cos(pitch);
  Rx << 1, 0, 0, 0, std::cos(roll), -std::sin(roll), 0, std::sin(roll), std::cos(roll);
  EXPECT_LT((rotationFromEulerZYX(yaw, pitch, roll) - Rz * Ry * Rx).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Geometry, BearingRoundTrip) {
  Mat3 K;
  K << 800, 0, 320, 0, 800, 240, 0, 0, 1;
  for (double u : {0.0, 100.5, 320.0, 639.0}) {
    for (double v : {0.0, 240.0, 479.0}) {
      const Vec3 f = bearingFromPixel(u, v, K);
      EXPECT_NEAR(f.norm(), 1.0, 1e-15);
      const auto px = projectToPixel(f, K);
      EXPECT_NEAR(px.x(), u, 1e-9);
      EXPECT_NEAR(px.y(), v, 1e-9);
    }
  }
  Mat3 bad = K;
  bad(0, 0) = 0.0;
  EXPECT_THROW(bearingFromPixel(1, 1, bad), ValidationError);
}

TEST(Geometry, ClampedAngleFloor) {
  const Vec3 x(0.0, 0.0, 1.0);
  EXPECT_NEAR(angleBetween(x, x), std::acos(1.0 - kArccosClamp), 1e-15);
  EXPECT_NEAR(angleBetween(x, -x), std::acos(-1.0 + kArccosClamp), 1e-15);
  EXPECT_NEAR(angleBetween(x, Vec3(1.0, 0.0, 0.0)), std::numbers::pi / 2, 1e-15);
  EXPECT_THROW(angleBetween(x, Vec3::Zero()), ValidationError);
}

TEST(Geometry, UnclampedAngleResolvesSmallAngles) {
  for (const double a : {1e-12, 1e-9, 1e-5, 0.5, 3.0}) {
    const Vec3 y(std::sin(a), 0.0, std::cos(a));
    EXPECT_NEAR(unclampedAngle(Vec3::UnitZ(), 2.0 * y), a, 1e-15 + 1e-14 * a);
  }
}

TEST(Geometry, RotationErrors) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 r = test::randomRotation(rng, 0.0, 3.0);
    const Vec3 d = test::randomRotation(rng, 0.01, 2.0);
    const Mat3 R = expSO3<double>(r);
    const Mat3 R2 = expSO3<double>(d) * R;
    EXPECT_NEAR(rotationAngleExact(R2, R), d.norm(), 1e-10);
    EXPECT_NEAR(rotationError(R2, R), d.norm(), 1e-7);
  }
  const Vec3 small(2e-9, 0.0, 0.0);
  EXPECT_NEAR(rotationAngleExact(expSO3<double>(small), Mat3::Identity()), 2e-9, 1e-16);
  EXPECT_NEAR(translationError(Vec3(1, 2, 3), Vec3(1, 2, 5)), 2.0, 1e-15);
}

TEST(Geometry, InlierObjectiveCounts) {
  std::mt19937_64 rng(9);
  const Pose pose{Vec3(0.1, -0.2, 0.05), Vec3(0.1, 0.0, 0.3)};
  PointSets s = test::exactScene(rng, 6, pose);
  // Push two bearings 0.05 rad off.
  for (std::size_t k : {1, 4}) {
    const Vec3 axis = s.bearings[k].cross(Vec3::UnitX()).normalized();
    s.bearings[k] = Eigen::AngleAxisd(0.05, axis) * s.bearings[k];
  }
  EXPECT_EQ(inlierObjective(s, *s.gt_pairs, pose, 0.01), 4 - 2);
  EXPECT_EQ(inlierObjective(s, *s.gt_pairs, pose, 0.06), 6);
  const CorrespondenceList dup{{0, 0}, {0, 1}};
  EXPECT_THROW(inlierObjective(s, dup, pose, 0.01), ValidationError);
  EXPECT_THROW(inlierObjective(s, *s.gt_pairs, pose, 0.0), ValidationError);
}

TEST(Geometry, ReprojectionNormalisation) {
  std::mt19937_64 rng(10);
  const Pose pose{Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0)};
  PointSets s = test::exactScene(rng, 3, pose);
  MatX W = MatX::Zero(3, 3);
  W(0, 1) = 2.0;
  W(2, 0) = 1.0;
  const double a01 = angleBetween(s.bearings[0], s.points[1]);
  const double a20 = angleBetween(s.bearings[2], s.points[0]);
  EXPECT_NEAR(angularReprojectionError(s, W, pose).value, (2 * a01 + a20) / 9.0, 1e-14);
  EXPECT_NEAR(angularReprojectionError(s, W, pose, ReprojectionNormalization::kPerMatch).value,
              (2 * a01 + a20) / 3.0, 1e-14);
}
