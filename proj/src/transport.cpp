#include "bpnp/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace bpnp {
namespace {

// Scalings outside [1/kAbsorb, kAbsorb] are folded into the log potentials.
constexpr double kAbsorb = 1e50;
// Scaling iterations between stall checks, and the cap on Newton steps.
constexpr int kStallWindow = 500;
constexpr int kNewtonSteps = 50;
// Newton is skipped above this size (dense O(n^3) solve).
constexpr Eigen::Index kNewtonMaxSide = 2000;

void validatePriors(const Priors& priors, Eigen::Index m, Eigen::Index n) {
  if (priors.row.size() != m || priors.col.size() != n) {
    throw ValidationError("sinkhorn: prior lengths do not match the cost matrix");
  }
  if ((priors.row.array() <= 0.0).any() || (priors.col.array() <= 0.0).any()) {
    throw ValidationError("sinkhorn: priors must be strictly positive");
  }
  if (std::abs(priors.row.sum() - 1.0) > 1e-12 || std::abs(priors.col.sum() - 1.0) > 1e-12) {
    throw ValidationError("sinkhorn: priors must sum to one");
  }
}

MatX planFromPotentials(const MatX& M, const VecX& alpha, const VecX& beta, double mu) {
  return ((((-M).colwise() + alpha).rowwise() + beta.transpose()).array() / mu).exp().matrix();
}

double marginalResidual(const MatX& P, const VecX& r, const VecX& c) {
  return std::max((P.rowwise().sum() - r).cwiseAbs().maxCoeff(),
                  (P.colwise().sum().transpose() - c).cwiseAbs().maxCoeff());
}

// Newton steps on the log potentials, minimising the convex dual
//   psi(alpha, beta) = mu sum P - r.alpha - c.beta,
// whose gradient is the marginal error and whose Hessian is the bordered
// matrix [diag(P1) P; P^T diag(P^T 1)] / mu. The last column potential is held
// fixed and the row block eliminated, leaving an (n-1)-square system.
// Assumes n <= m. Returns the number of steps taken.
int newtonFinish(const MatX& M, const VecX& r, const VecX& c, double mu, double tol,
                 VecX& alpha, VecX& beta) {
  const Eigen::Index n = M.cols();
  MatX P = planFromPotentials(M, alpha, beta, mu);
  auto dual = [&](const MatX& Q, const VecX& a, const VecX& b) {
    return mu * Q.sum() - r.dot(a) - c.dot(b);
  };
  double psi = dual(P, alpha, beta);
  double residual = marginalResidual(P, r, c);
  int steps = 0;
  for (; steps < kNewtonSteps && residual > tol; ++steps) {
    const VecX a = P.rowwise().sum();
    const VecX b = P.colwise().sum().transpose();
    const VecX gr = a - r;
    const VecX gc = b - c;
    const MatX Pa = a.cwiseInverse().asDiagonal() * P;
    VecX db = VecX::Zero(n);
    if (n > 1) {
      MatX S = -P.transpose() * Pa;
      S.diagonal() += b;
      // Rows or columns whose mass sits on a single entry make S singular
      // along directions that leave P unchanged; a small ridge removes them.
      MatX S11 = S.topLeftCorner(n - 1, n - 1);
      S11.diagonal().array() += 1e-12 * S11.diagonal().maxCoeff();
      const VecX rhs = mu * (Pa.transpose() * gr - gc);
      db.head(n - 1) = S11.ldlt().solve(rhs.head(n - 1));
    }
    const VecX da = -a.cwiseInverse().cwiseProduct(mu * gr + P * db);
    if (!da.allFinite() || !db.allFinite()) break;
    const double slope = gr.dot(da) + gc.dot(db);
    if (!(slope < 0.0)) break;

    bool improved = false;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      const VecX alpha_t = alpha + t * da;
      const VecX beta_t = beta + t * db;
      MatX Q = planFromPotentials(M, alpha_t, beta_t, mu);
      const double psi_t = dual(Q, alpha_t, beta_t);
      const double residual_t = marginalResidual(Q, r, c);
      if (!std::isfinite(psi_t)) continue;
      // Near the optimum psi changes by less than its rounding error; the
      // marginal residual still tells a full step apart from a bad one.
      if (psi_t <= psi + 1e-4 * t * slope || (t == 1.0 && residual_t < residual)) {
        alpha = alpha_t;
        beta = beta_t;
        P = std::move(Q);
        psi = psi_t;
        residual = residual_t;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return steps;
}

}  // namespace

Priors Priors::uniform(Eigen::Index m, Eigen::Index n) {
  return {VecX::Constant(m, 1.0 / static_cast<double>(m)),
          VecX::Constant(n, 1.0 / static_cast<double>(n))};
}

TransportPlan sinkhorn(const MatX& M, double mu) {
  SinkhornOptions options;
  options.mu = mu;
  return sinkhorn(M, Priors::uniform(M.rows(), M.cols()), options);
}

TransportPlan sinkhorn(const MatX& M, const Priors& priors, const SinkhornOptions& options) {
  const double mu = options.mu;
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("sinkhorn: mu must be positive");
  if (M.size() == 0) throw ValidationError("sinkhorn: empty cost matrix");
  if (!M.allFinite()) throw ValidationError("sinkhorn: cost matrix has non-finite entries");
  const Eigen::Index m = M.rows();
  const Eigen::Index n = M.cols();
  validatePriors(priors, m, n);

  // Potentials (in cost units) such that every row and column of the kernel
  // has a unit entry to start with.
  VecX alpha = M.rowwise().minCoeff();
  VecX beta = (M.colwise() - alpha).colwise().minCoeff().transpose();

  MatX K(m, n);
  auto rebuildKernel = [&] {
    K = (((-M).colwise() + alpha).rowwise() + beta.transpose()).array() / mu;
    K = K.array().exp().matrix();
  };
  rebuildKernel();

  VecX u = VecX::Ones(m);
  VecX v = VecX::Ones(n);
  VecX Kv(m), Ktu(n);

  TransportPlan plan;
  plan.priors = priors;
  int iter = 0;
  double checkpoint = std::numeric_limits<double>::infinity();
  for (; iter < options.max_iterations; ++iter) {
    Kv.noalias() = K * v;
    if (iter > 0) {
      const double row_residual = (u.cwiseProduct(Kv) - priors.row).cwiseAbs().maxCoeff();
      if (row_residual <= options.tolerance) break;
      if (iter % kStallWindow == 0) {
        // Less than a halving per window: hand over to Newton below.
        if (row_residual > 0.5 * checkpoint) break;
        checkpoint = row_residual;
      }
    }
    u = priors.row.cwiseQuotient(Kv);
    Ktu.noalias() = K.transpose() * u;
    v = priors.col.cwiseQuotient(Ktu);

    const double big = std::max(u.maxCoeff(), v.maxCoeff());
    const double small = std::min(u.minCoeff(), v.minCoeff());
    if (big > kAbsorb || small < 1.0 / kAbsorb) {
      alpha += mu * u.array().log().matrix();
      beta += mu * v.array().log().matrix();
      u.setOnes();
      v.setOnes();
      rebuildKernel();
    }
  }
  plan.iterations = iter;

  alpha += mu * u.array().log().matrix();
  beta += mu * v.array().log().matrix();
  plan.P = planFromPotentials(M, alpha, beta, mu);
  plan.residual = marginalResidual(plan.P, priors.row, priors.col);

  if (plan.residual > options.tolerance && std::min(m, n) <= kNewtonMaxSide) {
    if (n <= m) {
      plan.iterations += newtonFinish(M, priors.row, priors.col, mu, options.tolerance, alpha, beta);
      plan.P = planFromPotentials(M, alpha, beta, mu);
    } else {
      const MatX Mt = M.transpose();
      plan.iterations += newtonFinish(Mt, priors.col, priors.row, mu, options.tolerance, beta, alpha);
      plan.P = planFromPotentials(M, alpha, beta, mu);
    }
    plan.residual = marginalResidual(plan.P, priors.row, priors.col);
  }
  plan.converged = plan.residual <= options.tolerance;
  return plan;
}

MatX sinkhornVjp(const TransportPlan& plan, double mu, const MatX& grad_P,
                 DroppedConstraint dropped) {
  const MatX& P = plan.P;
  const Eigen::Index m = P.rows();
  const Eigen::Index n = P.cols();
  if (!(mu > 0.0)) throw ValidationError("sinkhornVjp: mu must be positive");
  if (grad_P.rows() != m || grad_P.cols() != n) {
    throw ValidationError("sinkhornVjp: gradient shape does not match the plan");
  }
  if (!(P.array() > 0.0).all()) {
    throw ValidationError("sinkhornVjp: plan has nonpositive entries (underflow at small mu?)");
  }
  const VecX row_sum = P.rowwise().sum();
  const VecX col_sum = P.colwise().sum().transpose();
  if (plan.priors.row.size() == m && plan.priors.col.size() == n) {
    const double res = std::max((row_sum - plan.priors.row).cwiseAbs().maxCoeff(),
                                (col_sum - plan.priors.col).cwiseAbs().maxCoeff());
    if (res > 1e-6) {
      throw ValidationError("sinkhornVjp: plan violates its marginals by " + std::to_string(res));
    }
  }

  // q = H^-1 g with H = diag(mu / P).
  MatX q = P.cwiseProduct(grad_P) / mu;
  const VecX b_row = q.rowwise().sum();
  const VecX b_col_all = q.colwise().sum().transpose();

  // Kept columns form a contiguous block of P.
  const Eigen::Index kept = n - 1;
  const Eigen::Index first_kept = dropped == DroppedConstraint::kLastColumn ? 0 : 1;
  const auto Pk = P.middleCols(first_kept, kept);
  const VecX b_col = b_col_all.segment(first_kept, kept);
  const VecX d_row = row_sum / mu;
  const VecX d_col = col_sum.segment(first_kept, kept) / mu;

  VecX lambda_row(m);
  VecX lambda_col = VecX::Zero(kept);

  // Reduced system [[D_r, Pk/mu], [Pk^T/mu, D_c]] [l_r; l_c] = [b_r; b_c];
  // eliminate whichever diagonal block leaves the smaller Schur complement.
  if (kept == 0) {
    lambda_row = b_row.cwiseQuotient(d_row);
  } else if (kept <= m) {
    const MatX scaled = d_row.cwiseSqrt().cwiseInverse().asDiagonal() * Pk / mu;
    MatX schur = MatX(d_col.asDiagonal());
    schur.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(), -1.0);
    const VecX rhs = b_col - Pk.transpose() * b_row.cwiseQuotient(d_row) / mu;
    Eigen::LDLT<MatX> ldlt(schur);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError("sinkhornVjp: reduced system is not positive definite");
    }
    lambda_col = ldlt.solve(rhs);
    lambda_row = (b_row - Pk * lambda_col / mu).cwiseQuotient(d_row);
  } else {
    const MatX scaled = Pk * d_col.cwiseSqrt().cwiseInverse().asDiagonal() / mu;
    MatX schur = MatX(d_row.asDiagonal());
    schur.selfadjointView<Eigen::Lower>().rankUpdate(scaled, -1.0);
    const VecX rhs = b_row - Pk * b_col.cwiseQuotient(d_col) / mu;
    Eigen::LDLT<MatX> ldlt(schur);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError("sinkhornVjp: reduced system is not positive definite");
    }
    lambda_row = ldlt.solve(rhs);
    lambda_col = (b_col - Pk.transpose() * lambda_row / mu).cwiseQuotient(d_col);
  }
  if (!lambda_row.allFinite() || !lambda_col.allFinite()) {
    throw NumericalError("sinkhornVjp: reduced system solve produced non-finite values");
  }

  VecX lambda_col_full = VecX::Zero(n);
  lambda_col_full.segment(first_kept, kept) = lambda_col;

  // dL/dM = H^-1 A^T lambda - H^-1 g, reusing q's storage.
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      q(i, j) = P(i, j) * (lambda_row(i) + lambda_col_full(j)) / mu - q(i, j);
    }
  }
  return q;
}

MatX pairwiseCost(const MatX& a, const MatX& b) {
  if (a.cols() != b.cols()) {
    throw ValidationError("pairwiseCost: feature dimensions differ (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.cols()) + ")");
  }
  MatX out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = (a.row(i) - b.row(j)).norm();
    }
  }
  return out;
}

}  // namespace bpnp
