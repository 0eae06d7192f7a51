#include <gtest/gtest.h>

#include <cmath>

#include "bpnp/lbfgs.hpp"

using namespace bpnp;

TEST(Lbfgs, Rosenbrock) {
  const Objective f = [](const VecX& x, VecX& g) {
    g.resize(2);
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    g(0) = -2.0 * a - 400.0 * x(0) * b;
    g(1) = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  VecX x0(2);
  x0 << -1.2, 1.0;
  LbfgsOptions o;
  o.max_iterations = 500;
  const auto r = minimizeLbfgs(f, x0, o);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-8);
  EXPECT_NEAR(r.x(1), 1.0, 1e-8);
  EXPECT_LE(r.gradient.norm(), o.gradient_tolerance);
}

TEST(Lbfgs, IllScaledQuadratic) {
  VecX d(5);
  d << 1.0, 10.0, 100.0, 1e3, 1e4;
  const Objective f = [&](const VecX& x, VecX& g) {
    g = d.cwiseProduct(x);
    return 0.5 * x.dot(g);
  };
  const auto r = minimizeLbfgs(f, VecX::Ones(5));
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.x.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Lbfgs, HugeGradientStillConverges) {
  // |grad| ~ 1e6 at the start exercises the direction clip.
  const Objective f = [](const VecX& x, VecX& g) {
    g = 2e6 * x;
    return 1e6 * x.squaredNorm();
  };
  const auto r = minimizeLbfgs(f, VecX::Constant(3, 1.0));
  EXPECT_LT(r.x.norm(), 1e-12);
}

TEST(Lbfgs, NonFiniteObjectiveDoesNotThrow) {
  const Objective f = [](const VecX& x, VecX& g) {
    g = VecX::Ones(1);
    return x(0) < 0.5 ? x(0) : std::nan("");
  };
  LbfgsResult r;
  EXPECT_NO_THROW(r = minimizeLbfgs(f, VecX::Zero(1)));
  EXPECT_FALSE(r.converged);
  EXPECT_TRUE(std::isfinite(r.value));
}
