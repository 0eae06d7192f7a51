#include <gtest/gtest.h>

#include <cmath>

#include "bpnp/assignment.hpp"
#include "bpnp/transport.hpp"
#include "test_util.hpp"

using namespace bpnp;

namespace {

SinkhornOptions tight(double mu) {
  SinkhornOptions o;
  o.mu = mu;
  o.tolerance = 1e-14;
  o.max_iterations = 100000;
  return o;
}

double marginalError(const TransportPlan& plan) {
  return std::max((plan.P.rowwise().sum() - plan.priors.row).cwiseAbs().maxCoeff(),
                  (plan.P.colwise().sum().transpose() - plan.priors.col).cwiseAbs().maxCoeff());
}

MatX fdVjp(const MatX& M, const MatX& G, double mu, double h) {
  const Priors priors = Priors::uniform(M.rows(), M.cols());
  MatX out(M.rows(), M.cols());
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      MatX Mp = M, Mm = M;
      Mp(i, j) += h;
      Mm(i, j) -= h;
      out(i, j) = (G.cwiseProduct(sinkhorn(Mp, priors, tight(mu)).P).sum() -
                   G.cwiseProduct(sinkhorn(Mm, priors, tight(mu)).P).sum()) /
                  (2.0 * h);
    }
  }
  return out;
}

}  // namespace

TEST(Sinkhorn, TwoByTwoClosedForm) {
  const double mu = 0.1;
  MatX M(2, 2);
  M << 0.0, mu, mu, 0.0;
  const auto plan = sinkhorn(M, Priors::uniform(2, 2), tight(mu));
  const double a = 1.0 / (2.0 * (1.0 + std::exp(-1.0)));
  EXPECT_NEAR(plan.P(0, 0), a, 1e-14);
  EXPECT_NEAR(plan.P(1, 1), a, 1e-14);
  EXPECT_NEAR(plan.P(0, 1), std::exp(-1.0) * a, 1e-14);
  EXPECT_TRUE(plan.converged);
}

TEST(Sinkhorn, MarginalsAndPositivity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> dim(1, 40);
    const int m = dim(rng), n = dim(rng);
    const MatX M = test::randomMatrix(rng, m, n, -3.0, 3.0);
    for (double mu : {1.0, 0.1, 0.01}) {
      SinkhornOptions o;
      o.mu = mu;
      const auto plan = sinkhorn(M, Priors::uniform(m, n), o);
      ASSERT_TRUE(plan.converged) << m << "x" << n << " mu " << mu;
      EXPECT_LE(marginalError(plan), 1e-9);
      EXPECT_GT(plan.P.minCoeff(), 0.0);
      EXPECT_NEAR(plan.P.sum(), 1.0, 1e-9 * m);
    }
  }
}

TEST(Sinkhorn, NonUniformPriors) {
  std::mt19937_64 rng(22);
  const MatX M = test::randomMatrix(rng, 4, 3);
  Priors p;
  p.row = VecX(4);
  p.row << 0.1, 0.2, 0.3, 0.4;
  p.col = VecX(3);
  p.col << 0.5, 0.25, 0.25;
  const auto plan = sinkhorn(M, p, tight(0.05));
  EXPECT_LE(marginalError(plan), 1e-13);
}

TEST(Sinkhorn, InvariantToRowAndColumnShifts) {
  std::mt19937_64 rng(23);
  const MatX M = test::randomMatrix(rng, 5, 7);
  MatX shifted = M;
  for (Eigen::Index i = 0; i < 5; ++i) shifted.row(i).array() += 10.0 * i;
  for (Eigen::Index j = 0; j < 7; ++j) shifted.col(j).array() -= 3.0 * j;
  const auto a = sinkhorn(M, Priors::uniform(5, 7), tight(0.1));
  const auto b = sinkhorn(shifted, Priors::uniform(5, 7), tight(0.1));
  EXPECT_LT((a.P - b.P).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Sinkhorn, SmallMuApproachesAssignment) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    const MatX M = test::randomMatrix(rng, 5, 5);
    SinkhornOptions o;
    o.mu = 1e-3;
    const auto plan = sinkhorn(M, Priors::uniform(5, 5), o);
    const double exact = assignmentCost(M, hungarian(M)) / 5.0;
    EXPECT_LE(M.cwiseProduct(plan.P).sum(), exact * 1.02 + 1e-12);
    EXPECT_GE(M.cwiseProduct(plan.P).sum(), exact - 1e-12);
  }
}

TEST(Sinkhorn, RejectsBadInput) {
  EXPECT_THROW(sinkhorn(MatX::Ones(2, 2), 0.0), ValidationError);
  EXPECT_THROW(sinkhorn(MatX(0, 0), 0.1), ValidationError);
  MatX M = MatX::Ones(2, 2);
  M(1, 1) = INFINITY;
  EXPECT_THROW(sinkhorn(M, 0.1), ValidationError);
  Priors p = Priors::uniform(2, 2);
  p.row(0) = 0.7;
  EXPECT_THROW(sinkhorn(MatX::Ones(2, 2), p), ValidationError);
}

TEST(SinkhornVjp, MatchesFiniteDifferences) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 5; ++trial) {
    const MatX M = test::randomMatrix(rng, 4, 6);
    const MatX G = test::randomMatrix(rng, 4, 6, -1.0, 1.0);
    const auto plan = sinkhorn(M, Priors::uniform(4, 6), tight(0.1));
    const MatX analytic = sinkhornVjp(plan, 0.1, G);
    const MatX numeric = fdVjp(M, G, 0.1, 1e-6);
    EXPECT_LE((analytic - numeric).cwiseAbs().maxCoeff() / numeric.cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(SinkhornVjp, DroppedConstraintDoesNotMatter) {
  std::mt19937_64 rng(26);
  const MatX M = test::randomMatrix(rng, 6, 9);
  const MatX G = test::randomMatrix(rng, 6, 9, -1.0, 1.0);
  const auto plan = sinkhorn(M, Priors::uniform(6, 9), tight(0.05));
  const MatX last = sinkhornVjp(plan, 0.05, G, DroppedConstraint::kLastColumn);
  const MatX first = sinkhornVjp(plan, 0.05, G, DroppedConstraint::kFirstColumn);
  EXPECT_LT((last - first).cwiseAbs().maxCoeff(), 1e-10 * last.cwiseAbs().maxCoeff());
}

TEST(SinkhornVjp, LinearAndAnnihilatesShifts) {
  std::mt19937_64 rng(27);
  const MatX M = test::randomMatrix(rng, 5, 8);
  const MatX G1 = test::randomMatrix(rng, 5, 8, -1.0, 1.0);
  const MatX G2 = test::randomMatrix(rng, 5, 8, -1.0, 1.0);
  const auto plan = sinkhorn(M, Priors::uniform(5, 8), tight(0.1));
  const MatX a = sinkhornVjp(plan, 0.1, G1);
  const MatX b = sinkhornVjp(plan, 0.1, G2);
  const MatX ab = sinkhornVjp(plan, 0.1, 2.0 * G1 - 3.0 * G2);
  EXPECT_LT((ab - (2.0 * a - 3.0 * b)).cwiseAbs().maxCoeff(), 1e-12);
  // P is unchanged by adding a constant to a row or column of M.
  EXPECT_LT(a.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(a.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  // Every feasible P has the same total mass.
  EXPECT_LT(sinkhornVjp(plan, 0.1, MatX::Ones(5, 8)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SinkhornVjp, RejectsBadInput) {
  const auto plan = sinkhorn(MatX::Ones(3, 3), 0.1);
  EXPECT_THROW(sinkhornVjp(plan, 0.1, MatX::Ones(2, 3)), ValidationError);
  EXPECT_THROW(sinkhornVjp(plan, -1.0, MatX::Ones(3, 3)), ValidationError);
  TransportPlan broken = plan;
  broken.P(0, 0) += 1e-3;
  EXPECT_THROW(sinkhornVjp(broken, 0.1, MatX::Ones(3, 3)), ValidationError);
}

TEST(PairwiseCost, EuclideanDistances) {
  MatX a(2, 2), b(3, 2);
  a << 0, 0, 1, 1;
  b << 3, 4, 1, 1, 0, 1;
  const MatX C = pairwiseCost(a, b);
  EXPECT_DOUBLE_EQ(C(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(C(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(C(0, 2), 1.0);
  EXPECT_THROW(pairwiseCost(a, MatX::Ones(2, 3)), ValidationError);
}
