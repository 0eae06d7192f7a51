#include "bpnp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "bpnp/losses.hpp"
#include "bpnp/pipeline.hpp"
#include "bpnp/synth.hpp"
#include "bpnp/transport.hpp"

namespace bpnp {
namespace {

constexpr double kFaultSign = -1.0;
// Central differences with the default step carry about 1e-10 of rounding
// noise; a numeric derivative below this is treated as exactly zero.
constexpr double kNegligible = 1e-8;

double faultSign(const GradCheckConfig& config, InjectedFault which) {
  return config.fault == which ? kFaultSign : 1.0;
}

Vec6 fdGradient(const std::function<double(const Vec6&)>& f, const Vec6& x, double h) {
  Vec6 g;
  for (int k = 0; k < 6; ++k) {
    Vec6 xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

Mat6 fdJacobian(const std::function<Vec6(const Vec6&)>& f, const Vec6& x, double h) {
  Mat6 J;
  for (int k = 0; k < 6; ++k) {
    Vec6 xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    J.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

SinkhornOptions tightSinkhorn(double mu) {
  SinkhornOptions o;
  o.mu = mu;
  o.tolerance = 1e-14;
  o.max_iterations = 100000;
  return o;
}

PnPSolveOptions tightPnP() {
  PnPSolveOptions o;
  o.lbfgs.gradient_tolerance = 1e-12;
  o.lbfgs.max_iterations = 500;
  return o;
}

struct PnPFixture {
  PointSets instance;
  PnPProblem problem;
  PnPSolution solution;
};

PnPFixture makeFixture(std::size_t size, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_points = size;
  sc.seed = seed;
  PnPFixture fx;
  fx.instance = generateInstance(sc);
  const MatX P = oracleProbability(fx.instance, 1.0, 0.5, seed, 0.1).P;
  fx.problem.pairs = weightedPairsFromDense(P);
  double total = 0.0;
  for (const auto& p : fx.problem.pairs) total += p.weight;
  for (auto& p : fx.problem.pairs) p.weight /= total;
  fx.problem.init = *fx.instance.gt_pose;
  fx.solution = pnpSolve(fx.instance, fx.problem, tightPnP());
  fx.solution.pose = polishStationary(fx.instance, fx.problem.pairs, fx.solution.pose);
  fx.solution.gradient_norm =
      pnpObjective(fx.instance, fx.problem.pairs, fx.solution.pose).gradient.norm();
  return fx;
}

CheckRecord record(std::string suite, std::size_t size, std::uint64_t seed, double err,
                   double tol) {
  CheckRecord r;
  r.suite = std::move(suite);
  r.size = size;
  r.seed = seed;
  r.max_rel_error = err;
  r.tolerance = tol;
  r.status = err <= tol ? CheckStatus::kPass : CheckStatus::kFail;
  return r;
}

CheckRecord checkSinkhorn(const GradCheckConfig& cfg, std::size_t size, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(size);
  const Eigen::Index n = m + 2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatX M(m, n), G(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) M(i, j) = unif(rng);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) G(i, j) = normal(rng);

  const double mu = 0.1;
  const Priors priors = Priors::uniform(m, n);
  const auto plan = sinkhorn(M, priors, tightSinkhorn(mu));
  const MatX analytic = faultSign(cfg, InjectedFault::kSinkhornVjpSign) * sinkhornVjp(plan, mu, G);
  MatX numeric(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      MatX Mp = M, Mm = M;
      Mp(i, j) += cfg.fd_step;
      Mm(i, j) -= cfg.fd_step;
      const double lp = G.cwiseProduct(sinkhorn(Mp, priors, tightSinkhorn(mu)).P).sum();
      const double lm = G.cwiseProduct(sinkhorn(Mm, priors, tightSinkhorn(mu)).P).sum();
      numeric(i, j) = (lp - lm) / (2.0 * cfg.fd_step);
    }
  }
  return record("sinkhorn_vjp", size, seed, relativeError(analytic, numeric),
                cfg.sinkhorn_tolerance);
}

CheckRecord checkPnPGradient(const GradCheckConfig& cfg, const PnPFixture& fx, std::size_t size,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 0.05);
  Vec6 x = fx.solution.pose.asVector();
  for (int k = 0; k < 6; ++k) x(k) += normal(rng);
  const auto f = [&](const Vec6& v) {
    return pnpObjective(fx.instance, fx.problem.pairs, Pose::fromVector(v)).value;
  };
  const Vec6 analytic = faultSign(cfg, InjectedFault::kPnpGradientSign) *
                        pnpObjective(fx.instance, fx.problem.pairs, Pose::fromVector(x)).gradient;
  const Vec6 numeric = fdGradient(f, x, cfg.fd_step);
  return record("pnp_gradient", size, seed, relativeError(analytic, numeric),
                cfg.gradient_tolerance);
}

CheckRecord checkPnPSecondOrder(const GradCheckConfig& cfg, const PnPFixture& fx,
                                std::size_t size, std::uint64_t seed) {
  const SecondOrderData so = pnpSecondOrder(fx.instance, fx.problem, fx.solution.pose);
  if (so.singular) {
    CheckRecord r = record("pnp_second_order", size, seed, 0.0, cfg.second_order_tolerance);
    r.status = size < 3 ? CheckStatus::kExpectedSingular : CheckStatus::kFail;
    r.detail = "Hessian condition " + std::to_string(so.condition);
    return r;
  }
  const Vec6 x = fx.solution.pose.asVector();
  const auto grad = [&](const Vec6& v) {
    return pnpObjective(fx.instance, fx.problem.pairs, Pose::fromVector(v)).gradient;
  };
  const Mat6 H_num = fdJacobian(grad, x, cfg.fd_step);
  const Mat6 H = faultSign(cfg, InjectedFault::kPnpHessianSign) * so.H;
  double err = relativeError(H, H_num);

  MatX B_num(6, so.B.cols());
  for (std::size_t k = 0; k < fx.problem.pairs.size(); ++k) {
    const WeightedPair single{fx.problem.pairs[k].bearing, fx.problem.pairs[k].point, 1.0};
    const auto residual = [&](const Vec6& v) {
      return pnpObjective(fx.instance, std::span(&single, 1), Pose::fromVector(v)).value;
    };
    B_num.col(static_cast<Eigen::Index>(k)) = fdGradient(residual, x, cfg.fd_step);
  }
  err = std::max(err, relativeError(so.B, B_num));
  return record("pnp_second_order", size, seed, err, cfg.second_order_tolerance);
}

CheckRecord checkPnPVjp(const GradCheckConfig& cfg, const PnPFixture& fx, std::size_t size,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec6 grad_pose;
  for (int k = 0; k < 6; ++k) grad_pose(k) = normal(rng);

  std::vector<double> analytic;
  try {
    analytic = pnpVjp(fx.instance, fx.problem, fx.solution, grad_pose);
  } catch (const IllConditionedError& e) {
    CheckRecord r = record("pnp_vjp", size, seed, 0.0, cfg.vjp_tolerance);
    r.status = size < 3 ? CheckStatus::kExpectedSingular : CheckStatus::kFail;
    r.detail = e.what();
    return r;
  }
  const std::size_t K = fx.problem.pairs.size();
  MatX a(static_cast<Eigen::Index>(K), 1), num(static_cast<Eigen::Index>(K), 1);
  for (std::size_t k = 0; k < K; ++k) {
    a(static_cast<Eigen::Index>(k)) = faultSign(cfg, InjectedFault::kPnpVjpSign) * analytic[k];
    auto plus = fx.problem.pairs, minus = fx.problem.pairs;
    plus[k].weight += cfg.fd_step;
    minus[k].weight -= cfg.fd_step;
    const Vec6 xp = polishStationary(fx.instance, plus, fx.solution.pose).asVector();
    const Vec6 xm = polishStationary(fx.instance, minus, fx.solution.pose).asVector();
    num(static_cast<Eigen::Index>(k)) = grad_pose.dot(xp - xm) / (2.0 * cfg.fd_step);
  }
  return record("pnp_vjp", size, seed, relativeError(a, num), cfg.vjp_tolerance);
}

CheckRecord checkLosses(const GradCheckConfig& cfg, const PnPFixture& fx, std::size_t size,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed + 31);
  std::normal_distribution<double> normal(0.0, 0.3);
  const Pose gt = *fx.instance.gt_pose;
  Vec6 x = gt.asVector();
  for (int k = 0; k < 6; ++k) x(k) += normal(rng);
  const auto f = [&](const Vec6& v) { return poseLoss(Pose::fromVector(v), gt).total; };
  const Vec6 analytic =
      faultSign(cfg, InjectedFault::kPoseLossSign) * poseLoss(Pose::fromVector(x), gt).grad;
  double err = relativeError(analytic, fdGradient(f, x, cfg.fd_step));

  // L_c is linear in P with entries of +-1: superposition must hold exactly.
  MatX P = MatX::Zero(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  for (const auto& p : fx.problem.pairs) {
    P(static_cast<Eigen::Index>(p.bearing), static_cast<Eigen::Index>(p.point)) = p.weight;
  }
  const auto lc = correspondenceLoss(P, fx.instance, gt, 0.01, fx.instance.gt_pairs);
  const bool unit = (lc.grad.array().abs() == 1.0).all();
  const double superposition = std::abs(lc.value - lc.grad.cwiseProduct(P).sum());
  if (!unit) err = std::max(err, 1.0);
  err = std::max(err, superposition);
  return record("loss_gradient", size, seed, err, cfg.loss_tolerance);
}

std::set<std::pair<std::size_t, std::size_t>> candidateSet(const PipelineResult& r) {
  std::set<std::pair<std::size_t, std::size_t>> s;
  for (const auto& c : r.candidates) s.emplace(c.bearing, c.point);
  return s;
}

CheckRecord checkEndToEnd(const GradCheckConfig& cfg, std::size_t size, std::uint64_t seed,
                          double gamma_p) {
  const std::string suite = gamma_p == 0.0 ? "end_to_end_gamma0" : "end_to_end_gamma1";
  if (size < 6) {
    CheckRecord r = record(suite, size, seed, 0.0, cfg.end_to_end_tolerance);
    r.status = CheckStatus::kSkipped;
    r.detail = "needs m = n >= 6 for a RANSAC candidate set";
    return r;
  }
  SynthConfig sc;
  sc.n_points = size;
  sc.seed = seed;
  const PointSets instance = generateInstance(sc);
  const MatX M = oracleCost(instance, 0.3, 0.3, seed);

  PipelineConfig pc;
  pc.sinkhorn = tightSinkhorn(0.1);
  pc.relative_prune = 0.0;
  pc.pnp = tightPnP();
  pc.ransac.seed = seed;
  pc.loss.gamma_p = gamma_p;

  const auto run = [&](const MatX& cost, PipelineResult& out) {
    out = solve(cost, instance, pc);
    out.refined.pose = polishStationary(instance, out.problem.pairs, out.refined.pose);
    const auto loss = evaluateLoss(out, instance, pc.loss);
    return loss;
  };
  PipelineResult base;
  const LossEvaluation base_loss = run(M, base);
  const MatX analytic = faultSign(cfg, InjectedFault::kEndToEndSign) *
                        backward(base, instance, pc, base_loss.grad_P, base_loss.grad_pose);
  const auto base_set = candidateSet(base);

  const auto n = static_cast<Eigen::Index>(size);
  MatX numeric = MatX::Zero(n, n);
  std::vector<char> flipped(static_cast<std::size_t>(n * n), 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      MatX Mp = M, Mm = M;
      Mp(i, j) += cfg.fd_step;
      Mm(i, j) -= cfg.fd_step;
      PipelineResult rp, rm;
      const double lp = run(Mp, rp).total;
      const double lm = run(Mm, rm).total;
      const bool flip = candidateSet(rp) != base_set || candidateSet(rm) != base_set ||
                        (rp.refined.pose.asVector() - base.refined.pose.asVector()).norm() > 1e-3 ||
                        (rm.refined.pose.asVector() - base.refined.pose.asVector()).norm() > 1e-3;
      flipped[static_cast<std::size_t>(j * n + i)] = flip ? 1 : 0;
      numeric(i, j) = (lp - lm) / (2.0 * cfg.fd_step);
    }
  }
  const double scale = numeric.cwiseAbs().maxCoeff();
  std::size_t probes = 0, flips = 0, passed = 0;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (flipped[static_cast<std::size_t>(j * n + i)]) {
        ++flips;
        continue;
      }
      ++probes;
      const double denom = std::max(std::abs(numeric(i, j)), 1e-6 * scale);
      const double rel = denom > 0.0 ? std::abs(analytic(i, j) - numeric(i, j)) / denom
                                     : std::abs(analytic(i, j));
      worst = std::max(worst, rel);
      if (rel <= cfg.end_to_end_tolerance) ++passed;
    }
  }
  CheckRecord r = record(suite, size, seed, worst, cfg.end_to_end_tolerance);
  const bool ok = probes > 0 && static_cast<double>(passed) >=
                                    cfg.end_to_end_pass_fraction * static_cast<double>(probes);
  r.status = ok ? CheckStatus::kPass : CheckStatus::kFail;
  r.detail = "probes " + std::to_string(probes) + ", passed " + std::to_string(passed) +
             ", flipped " + std::to_string(flips);
  return r;
}

}  // namespace

std::string_view toString(CheckStatus status) {
  switch (status) {
    case CheckStatus::kPass:
      return "pass";
    case CheckStatus::kFail:
      return "FAIL";
    case CheckStatus::kExpectedSingular:
      return "expected-singular";
    case CheckStatus::kSkipped:
      return "skipped";
  }
  return "unknown";
}

double relativeError(const MatX& analytic, const MatX& numeric) {
  const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
  const double scale = numeric.cwiseAbs().maxCoeff();
  return scale > kNegligible ? diff / scale : diff;
}

Pose polishStationary(const PointSets& instance, std::span<const WeightedPair> pairs,
                      const Pose& pose, int max_iterations) {
  const auto grad = [&](const Vec6& v) {
    return pnpObjective(instance, pairs, Pose::fromVector(v)).gradient;
  };
  Vec6 x = pose.asVector();
  Vec6 g = grad(x);
  for (int it = 0; it < max_iterations && g.norm() > 0.0; ++it) {
    const Mat6 H = fdJacobian(grad, x, 1e-5);
    const Mat6 Hs = 0.5 * (H + H.transpose());
    const Vec6 step = Hs.fullPivLu().solve(g);
    if (!step.allFinite()) break;
    const Vec6 x_new = x - step;
    const Vec6 g_new = grad(x_new);
    if (!(g_new.norm() < g.norm())) break;
    x = x_new;
    g = g_new;
  }
  return Pose::fromVector(x);
}

std::vector<CheckRecord> runGradientChecks(const GradCheckConfig& config) {
  std::vector<CheckRecord> out;
  for (const std::size_t size : config.sizes) {
    if (size < 1) throw ValidationError("gradcheck: sizes must be positive");
    for (std::size_t s = 0; s < config.seeds; ++s) {
      const std::uint64_t seed = config.base_seed + s;
      out.push_back(checkSinkhorn(config, size, seed));
      const PnPFixture fx = makeFixture(size, seed);
      out.push_back(checkPnPGradient(config, fx, size, seed));
      out.push_back(checkPnPSecondOrder(config, fx, size, seed));
      out.push_back(checkPnPVjp(config, fx, size, seed));
      out.push_back(checkLosses(config, fx, size, seed));
      out.push_back(checkEndToEnd(config, size, seed, 0.0));
      out.push_back(checkEndToEnd(config, size, seed, 1.0));
    }
  }
  return out;
}

}  // namespace bpnp
