#include "bpnp/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace bpnp {
namespace {

/// Minimiser of the cubic interpolating (x1, f1, g1) and (x2, f2, g2), clamped
/// to [lo, hi]; bisects when the cubic has no real minimiser.
double cubicStep(double x1, double f1, double g1, double x2, double f2, double g2, double lo,
                 double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_sq = d1 * d1 - g1 * g2;
  if (d2_sq >= 0.0 && std::isfinite(d2_sq)) {
    const double d2 = std::sqrt(d2_sq);
    double x;
    if (x1 <= x2) {
      x = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
    } else {
      x = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    }
    if (std::isfinite(x)) return std::clamp(x, lo, hi);
  }
  return 0.5 * (lo + hi);
}

struct Trial {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;
  VecX grad;
};

class WolfeSearch {
 public:
  WolfeSearch(const Objective& objective, const VecX& x, const VecX& dir, double f0,
              double slope0, const LbfgsOptions& options)
      : objective_(objective), x_(x), dir_(dir), f0_(f0), slope0_(slope0), opt_(options) {}

  /// Returns true and fills `out` when a step satisfying the (approximate)
  /// strong Wolfe conditions is found.
  bool run(double initial_step, Trial& out) {
    Trial prev{0.0, f0_, slope0_, {}};
    double step = initial_step;
    for (int i = 0; evaluations_ < opt_.max_line_search_evaluations; ++i) {
      Trial cur = evaluate(step);
      if (!sufficientDecrease(cur) || (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(cur, prev, out);
      const double lo = step + 0.01 * (step - prev.step);
      const double hi = step * 10.0;
      const double next = cubicStep(prev.step, prev.value, prev.slope, cur.step, cur.value,
                                    cur.slope, lo, hi);
      prev = std::move(cur);
      step = next;
    }
    return false;
  }

  int evaluations() const { return evaluations_; }

 private:
  Trial evaluate(double step) {
    Trial t;
    t.step = step;
    t.grad.resize(x_.size());
    t.value = objective_(x_ + step * dir_, t.grad);
    t.slope = t.grad.dot(dir_);
    ++evaluations_;
    if (!std::isfinite(t.value)) {
      t.value = std::numeric_limits<double>::infinity();
      t.slope = std::numeric_limits<double>::infinity();
    }
    return t;
  }

  bool sufficientDecrease(const Trial& t) const {
    if (t.value <= f0_ + opt_.c1 * t.step * slope0_) return true;
    // Approximate Wolfe: near a minimiser f(x) differences drown in rounding,
    // so accept a non-increase when the slope has flattened enough.
    const double eps = 1e-13 * std::abs(f0_);
    return t.value <= f0_ + eps && t.slope <= (2.0 * opt_.c1 - 1.0) * slope0_;
  }

  bool zoom(Trial lo, Trial hi, Trial& out) {
    const double dir_norm = dir_.cwiseAbs().maxCoeff();
    while (evaluations_ < opt_.max_line_search_evaluations) {
      const double width = std::abs(hi.step - lo.step);
      if (width * dir_norm < 1e-18 * (1.0 + x_.cwiseAbs().maxCoeff())) break;
      const double a = std::min(lo.step, hi.step);
      const double b = std::max(lo.step, hi.step);
      double step = cubicStep(lo.step, lo.value, lo.slope, hi.step, hi.value, hi.slope, a, b);
      // Keep trial points away from the interval ends.
      const double margin = 0.1 * (b - a);
      if (step < a + margin || step > b - margin) step = 0.5 * (a + b);

      Trial cur = evaluate(step);
      if (!sufficientDecrease(cur) || cur.value >= lo.value) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
      lo = std::move(cur);
    }
    // Interval collapsed: settle for the low end if it made progress.
    if (lo.step > 0.0 && lo.value < f0_) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const Objective& objective_;
  const VecX& x_;
  const VecX& dir_;
  double f0_;
  double slope0_;
  const LbfgsOptions& opt_;
  int evaluations_ = 0;
};

}  // namespace

LbfgsResult minimizeLbfgs(const Objective& objective, const VecX& x0,
                          const LbfgsOptions& options) {
  LbfgsResult result;
  result.x = x0;
  result.gradient.resize(x0.size());
  result.value = objective(result.x, result.gradient);
  result.evaluations = 1;
  if (!std::isfinite(result.value) || !result.gradient.allFinite()) {
    return result;
  }
  if (result.gradient.norm() <= options.gradient_tolerance) {
    result.converged = true;
    return result;
  }

  std::deque<VecX> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> alpha(static_cast<std::size_t>(options.history));

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const VecX& g = result.gradient;
    VecX g_dir = g;
    const double g_norm = g.norm();
    if (g_norm > options.gradient_clip) g_dir *= options.gradient_clip / g_norm;

    // Two-loop recursion.
    VecX q = -g_dir;
    const auto hist = static_cast<int>(s_hist.size());
    for (int i = hist - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] * y_hist[i];
    }
    if (hist > 0) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (int i = 0; i < hist; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[static_cast<std::size_t>(i)] - beta) * s_hist[i];
    }
    VecX dir = std::move(q);

    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g_dir;
      slope = g.dot(dir);
    }
    const double initial_step =
        hist == 0 ? std::min(1.0, 1.0 / g_dir.cwiseAbs().sum()) : 1.0;

    WolfeSearch search(objective, result.x, dir, result.value, slope, options);
    Trial accepted;
    const bool ok = search.run(initial_step, accepted);
    result.evaluations += search.evaluations();
    result.iterations = iter + 1;
    if (!ok) {
      result.line_search_failed = true;
      break;
    }

    const VecX s = accepted.step * dir;
    const VecX y = accepted.grad - g;
    const double ys = y.dot(s);
    if (ys > 1e-300 && ys > 1e-10 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / ys);
    }
    result.x += s;
    result.value = accepted.value;
    result.gradient = accepted.grad;

    if (result.gradient.norm() <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    if (s.cwiseAbs().maxCoeff() <= options.step_tolerance) break;
  }
  return result;
}

}  // namespace bpnp
