#include <gtest/gtest.h>

#include <numbers>

#include "bpnp/geometry.hpp"
#include "bpnp/losses.hpp"
#include "bpnp/transport.hpp"
#include "test_util.hpp"

using namespace bpnp;

TEST(CorrespondenceLoss, RangeAndGradient) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> dim(1, 12);
    const auto n = static_cast<std::size_t>(dim(rng));
    const PointSets s = test::exactScene(rng, n, Pose{});
    const MatX M = test::randomMatrix(rng, static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(n), 0.0, 5.0);
    const MatX P = sinkhorn(M, 0.1).P;
    for (const bool use_pairs : {true, false}) {
      const auto loss = correspondenceLoss(P, s, *s.gt_pose, 1e-6,
                                           use_pairs ? s.gt_pairs : std::nullopt);
      EXPECT_GE(loss.value, -1.0);
      EXPECT_LT(loss.value, 1.0);
      EXPECT_TRUE((loss.grad.array().abs() == 1.0).all());
      // The loss is linear in P.
      EXPECT_NEAR(loss.value, P.cwiseProduct(loss.grad).sum(), 1e-15);
    }
  }
}

TEST(CorrespondenceLoss, PerfectPlanIsMinusOne) {
  std::mt19937_64 rng(62);
  const PointSets s = test::exactScene(rng, 4, Pose{});
  const MatX P = MatX::Identity(4, 4) / 4.0;
  EXPECT_NEAR(correspondenceLoss(P, s, *s.gt_pose, 1e-6).value, -1.0, 1e-15);
  EXPECT_NEAR(correspondenceLoss(P, s, *s.gt_pose, 0.01, s.gt_pairs).value, -1.0, 1e-15);
  EXPECT_THROW(correspondenceLoss(2.0 * P, s, *s.gt_pose, 0.01), ValidationError);
  EXPECT_THROW(correspondenceLoss(MatX::Ones(3, 4) / 12.0, s, *s.gt_pose, 0.01), ValidationError);
}

TEST(PoseLoss, RangeValueAndGradient) {
  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose gt{test::randomRotation(rng, 0.0, 3.1), test::randomVec3(rng)};
    const Pose est{test::randomRotation(rng, 0.0, 3.1), test::randomVec3(rng)};
    const auto loss = poseLoss(est, gt);
    EXPECT_GE(loss.rotation, 0.0);
    EXPECT_LE(loss.rotation, std::numbers::pi);
    EXPECT_NEAR(loss.rotation, rotationAngleExact(est, gt), 1e-6);
    EXPECT_NEAR(loss.translation, (est.translation - gt.translation).norm(), 1e-15);
    EXPECT_DOUBLE_EQ(loss.total, loss.rotation + loss.translation);

    const double h = 1e-6;
    Vec6 num;
    for (int k = 0; k < 6; ++k) {
      Vec6 xp = est.asVector(), xm = est.asVector();
      xp(k) += h;
      xm(k) -= h;
      num(k) = (poseLoss(Pose::fromVector(xp), gt).total -
                poseLoss(Pose::fromVector(xm), gt).total) /
               (2.0 * h);
    }
    if (loss.rotation > 0.01 && loss.rotation < 3.1) {
      EXPECT_LT((loss.grad - num).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(PoseLoss, ClampedAtIdentity) {
  const Pose gt{Vec3(0.1, 0.2, 0.3), Vec3(1, 2, 3)};
  const auto loss = poseLoss(gt, gt);
  EXPECT_NEAR(loss.rotation, std::acos(1.0 - kArccosClamp), 1e-15);
  EXPECT_EQ(loss.translation, 0.0);
  EXPECT_TRUE(loss.grad.isZero(0.0));
}

TEST(TotalLoss, Combination) {
  EXPECT_DOUBLE_EQ(totalLoss(0.5, 2.0, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(totalLoss(0.5, 2.0, 1.5), 3.5);
  EXPECT_THROW(totalLoss(0.5, 2.0, -1.0), ValidationError);
}

TEST(ReprojectionLoss, RangeAndValue) {
  std::mt19937_64 rng(64);
  for (int trial = 0; trial < 50; ++trial) {
    const PointSets s = test::exactScene(rng, 6, Pose{test::randomRotation(rng, 0, 1), Vec3::Zero()});
    const MatX P = sinkhorn(test::randomMatrix(rng, 6, 6), 0.1).P;
    const auto loss = reprojectionLoss(P, s, *s.gt_pose);
    EXPECT_GE(loss.value, 0.0);
    EXPECT_LE(loss.value, std::numbers::pi);
    EXPECT_NEAR(loss.value, P.cwiseProduct(loss.grad).sum(), 1e-15);
    EXPECT_LE(loss.grad.maxCoeff(), std::numbers::pi / 36.0);
  }
}
