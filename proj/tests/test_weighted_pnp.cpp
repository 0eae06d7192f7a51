#include <gtest/gtest.h>

#include "bpnp/geometry.hpp"
#include "bpnp/weighted_pnp.hpp"
#include "test_util.hpp"

using namespace bpnp;

namespace {

Vec6 fdGradient(const PointSets& s, std::span<const WeightedPair> pairs, const Vec6& x, double h) {
  Vec6 g;
  for (int k = 0; k < 6; ++k) {
    Vec6 xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (pnpObjective(s, pairs, Pose::fromVector(xp)).value -
            pnpObjective(s, pairs, Pose::fromVector(xm)).value) /
           (2.0 * h);
  }
  return g;
}

Mat6 fdHessian(const PointSets& s, std::span<const WeightedPair> pairs, const Vec6& x, double h) {
  Mat6 H;
  for (int k = 0; k < 6; ++k) {
    Vec6 xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    H.col(k) = (pnpObjective(s, pairs, Pose::fromVector(xp)).gradient -
                pnpObjective(s, pairs, Pose::fromVector(xm)).gradient) /
               (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

// Newton on the analytic gradient with a difference Hessian; drives a
// converged pose to the stationary point to rounding accuracy.
Vec6 newtonPolish(const PointSets& s, std::span<const WeightedPair> pairs, Vec6 x) {
  double gnorm = pnpObjective(s, pairs, Pose::fromVector(x)).gradient.norm();
  for (int it = 0; it < 20; ++it) {
    const Vec6 g = pnpObjective(s, pairs, Pose::fromVector(x)).gradient;
    const Vec6 next = x - fdHessian(s, pairs, x, 1e-5).ldlt().solve(g);
    const double n = pnpObjective(s, pairs, Pose::fromVector(next)).gradient.norm();
    if (!(n < gnorm)) break;
    x = next;
    gnorm = n;
  }
  return x;
}

struct Fixture {
  PointSets instance;
  PnPProblem problem;
  PnPSolution solution;
};

// Soft weights concentrated on the true pairs, plus noise on the bearings so
// the optimum is not a zero-residual point.
Fixture makeFixture(std::uint64_t seed, std::size_t n = 10) {
  std::mt19937_64 rng(seed);
  Fixture fx;
  const Pose gt{test::randomRotation(rng, 0.0, 1.0), test::randomVec3(rng, 0.3)};
  fx.instance = test::exactScene(rng, n, gt);
  for (auto& f : fx.instance.bearings) f = (f + test::randomVec3(rng, 0.01)).normalized();
  MatX P = test::randomMatrix(rng, n, n, 0.0, 0.2);
  P.diagonal().array() += 1.0;
  P /= P.sum();
  fx.problem.pairs = weightedPairsFromDense(P);
  fx.problem.init = gt;
  PnPSolveOptions o;
  o.lbfgs.gradient_tolerance = 1e-12;
  o.lbfgs.max_iterations = 500;
  fx.solution = pnpSolve(fx.instance, fx.problem, o);
  fx.solution.pose =
      Pose::fromVector(newtonPolish(fx.instance, fx.problem.pairs, fx.solution.pose.asVector()));
  return fx;
}

double relErr(const MatX& a, const MatX& n) {
  return (a - n).cwiseAbs().maxCoeff() / n.cwiseAbs().maxCoeff();
}

}  // namespace

TEST(WeightedPnP, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(51);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Fixture fx = makeFixture(seed);
    const Vec6 x = fx.solution.pose.asVector() + 0.1 * Vec6::Random();
    const Vec6 g = pnpObjective(fx.instance, fx.problem.pairs, Pose::fromVector(x)).gradient;
    EXPECT_LT(relErr(g, fdGradient(fx.instance, fx.problem.pairs, x, 1e-6)), 1e-7);
  }
}

TEST(WeightedPnP, RecoversPoseFromExactWeights) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose gt{test::randomRotation(rng, 0.0, 1.0), test::randomVec3(rng, 0.3)};
    const PointSets s = test::exactScene(rng, 20, gt);
    PnPProblem problem;
    for (const auto& c : *s.gt_pairs) problem.pairs.push_back({c.bearing, c.point, 1.0 / 20});
    problem.init = {gt.rotation + Vec3(0.05, -0.05, 0.02), gt.translation + Vec3(0.05, 0, 0)};
    const auto sol = pnpSolve(s, problem);
    EXPECT_TRUE(sol.converged);
    EXPECT_LT(rotationAngleExact(sol.pose, gt), 1e-7);
    EXPECT_LE(sol.pose.rotation.norm(), 3.15);
  }
}

TEST(WeightedPnP, SecondOrderMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Fixture fx = makeFixture(seed);
    const auto so = pnpSecondOrder(fx.instance, fx.problem, fx.solution.pose);
    ASSERT_FALSE(so.singular);
    const Vec6 x = fx.solution.pose.asVector();
    EXPECT_LT(relErr(so.H, fdHessian(fx.instance, fx.problem.pairs, x, 1e-6)), 1e-6);
    for (std::size_t k = 0; k < fx.problem.pairs.size(); k += 7) {
      const WeightedPair one{fx.problem.pairs[k].bearing, fx.problem.pairs[k].point, 1.0};
      const Vec6 b = fdGradient(fx.instance, std::span(&one, 1), x, 1e-6);
      EXPECT_LT(relErr(so.B.col(static_cast<Eigen::Index>(k)), b), 1e-6);
    }
  }
}

TEST(WeightedPnP, SecondOrderRequiresStationaryPose) {
  const Fixture fx = makeFixture(3);
  Pose off = fx.solution.pose;
  off.translation.x() += 0.1;
  EXPECT_THROW(pnpSecondOrder(fx.instance, fx.problem, off), ValidationError);
}

TEST(WeightedPnP, VjpMatchesResolveDifferences) {
  std::mt19937_64 rng(53);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture fx = makeFixture(seed);
    const Vec6 v = test::randomMatrix(rng, 6, 1, -1.0, 1.0);
    const auto analytic = pnpVjp(fx.instance, fx.problem, fx.solution, v);
    const double h = 1e-6;
    VecX a(static_cast<Eigen::Index>(analytic.size())), num(a.size());
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      auto plus = fx.problem.pairs, minus = fx.problem.pairs;
      plus[k].weight += h;
      minus[k].weight -= h;
      const Vec6 xp = newtonPolish(fx.instance, plus, fx.solution.pose.asVector());
      const Vec6 xm = newtonPolish(fx.instance, minus, fx.solution.pose.asVector());
      a(static_cast<Eigen::Index>(k)) = analytic[k];
      num(static_cast<Eigen::Index>(k)) = v.dot(xp - xm) / (2.0 * h);
    }
    EXPECT_LT(relErr(a, num), 1e-4);
  }
}

TEST(WeightedPnP, DenseVjpAgreesOnProblemPairs) {
  const Fixture fx = makeFixture(7);
  Vec6 v;
  v << 0.3, -1.0, 0.2, 0.5, 0.1, -0.7;
  const auto sparse = pnpVjp(fx.instance, fx.problem, fx.solution, v);
  const MatX dense = pnpVjpDense(fx.instance, fx.problem, fx.solution, v);
  ASSERT_EQ(dense.rows(), 10);
  for (std::size_t k = 0; k < sparse.size(); ++k) {
    const auto& p = fx.problem.pairs[k];
    EXPECT_NEAR(dense(static_cast<Eigen::Index>(p.bearing), static_cast<Eigen::Index>(p.point)),
                sparse[k], 1e-12 * (1.0 + std::abs(sparse[k])));
  }
}

TEST(WeightedPnP, VjpIndependentOfSolverPath) {
  const Fixture fx = makeFixture(8);
  Vec6 v;
  v << 1.0, 0.5, -0.5, 0.2, -0.3, 0.9;
  PnPProblem far = fx.problem;
  far.init = Pose{fx.problem.init.rotation + Vec3(0.1, 0.1, -0.1),
                  fx.problem.init.translation + Vec3(0.1, -0.1, 0.1)};
  PnPSolveOptions a, b;
  a.lbfgs.gradient_tolerance = 1e-11;
  a.lbfgs.max_iterations = 1000;
  b.lbfgs = a.lbfgs;
  b.lbfgs.history = 3;
  const auto sa = pnpSolve(fx.instance, fx.problem, a);
  const auto sb = pnpSolve(fx.instance, far, b);
  ASSERT_LE(sa.gradient_norm, 1e-10);
  ASSERT_LE(sb.gradient_norm, 1e-10);
  const auto ga = pnpVjp(fx.instance, fx.problem, sa, v);
  const auto gb = pnpVjp(fx.instance, fx.problem, sb, v);
  for (std::size_t k = 0; k < ga.size(); ++k) EXPECT_NEAR(ga[k], gb[k], 1e-6);
}

TEST(WeightedPnP, SingularPairReported) {
  PointSets s;
  s.bearings = {Vec3::UnitZ()};
  s.points = {Vec3(0, 0, -1)};
  const std::vector<WeightedPair> pairs{{0, 0, 1.0}};
  const Pose pose{Vec3::Zero(), Vec3(0, 0, 1)};
  try {
    pnpObjective(s, pairs, pose);
    FAIL() << "expected SingularPairError";
  } catch (const SingularPairError& e) {
    EXPECT_EQ(e.bearing, 0u);
    EXPECT_EQ(e.point, 0u);
  }
}

TEST(WeightedPnP, ValidateProblem) {
  std::mt19937_64 rng(54);
  const PointSets s = test::exactScene(rng, 3, Pose{});
  PnPProblem p;
  p.pairs = {{0, 0, 0.5}, {1, 1, 0.5}};
  EXPECT_NO_THROW(validateProblem(s, p));
  p.pairs[1].weight = 0.4;
  EXPECT_THROW(validateProblem(s, p), ValidationError);
  p.pairs = {{0, 0, 1.5}, {1, 5, -0.5}};
  EXPECT_THROW(validateProblem(s, p), ValidationError);
}

TEST(WeightedPnP, PruneDense) {
  MatX P(2, 2);
  P << 1.0, 1e-12, 0.0, 0.5;
  EXPECT_EQ(weightedPairsFromDense(P).size(), 4u);
  EXPECT_EQ(weightedPairsFromDense(P, 1e-9).size(), 2u);
}
