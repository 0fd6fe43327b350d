#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolamp/linalg.hpp"
#include "poolamp/model.hpp"

namespace poolamp {

// ---------------------------------------------------------------------------
// Iterative hard thresholding for pooled data.
// ---------------------------------------------------------------------------

/// Count-constrained greedy assignment: repeatedly take the largest entry of
/// the input, assign its (item, category) pair, retire the item, retire the
/// category once its quota is filled. Equivalent to one pass over entries
/// sorted in descending order.
inline Mat hard_threshold_counts(const Mat& input,
                                 const std::vector<Eigen::Index>& target_counts) {
  const Eigen::Index p = input.rows(), L = input.cols();
  if (static_cast<Eigen::Index>(target_counts.size()) != L)
    throw std::invalid_argument("hard_threshold_counts: counts size mismatch");
  Eigen::Index total = 0;
  for (Eigen::Index c : target_counts) {
    if (c < 0) throw std::invalid_argument("hard_threshold_counts: negative count");
    total += c;
  }
  if (total != p)
    throw std::invalid_argument("hard_threshold_counts: counts must sum to p");

  struct Entry { double value; Eigen::Index j, l; };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(p * L));
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index l = 0; l < L; ++l) entries.push_back({input(j, l), j, l});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.j != b.j) return a.j < b.j;
    return a.l < b.l;
  });

  Mat out = Mat::Zero(p, L);
  std::vector<bool> item_done(static_cast<std::size_t>(p), false);
  std::vector<Eigen::Index> remaining(target_counts.begin(), target_counts.end());
  Eigen::Index assigned = 0;
  for (const Entry& e : entries) {
    if (assigned == p) break;
    if (item_done[static_cast<std::size_t>(e.j)] ||
        remaining[static_cast<std::size_t>(e.l)] == 0)
      continue;
    out(e.j, e.l) = 1.0;
    item_done[static_cast<std::size_t>(e.j)] = true;
    --remaining[static_cast<std::size_t>(e.l)];
    ++assigned;
  }
  return out;
}

/// IHT on the centered/rescaled data:
///   B^{k+1} = H(B^k + tX^T (tY - tX B^k)).
inline Mat iht(const Mat& ty, const Mat& tx,
               const std::vector<Eigen::Index>& target_counts, int iterations) {
  Mat b = Mat::Zero(tx.cols(), ty.cols());
  for (int k = 0; k < iterations; ++k) {
    Mat grad_step = b + tx.transpose() * (ty - tx * b);
    b = hard_threshold_counts(grad_step, target_counts);
  }
  return b;
}

// ---------------------------------------------------------------------------
// First-order convex solvers: projected gradient with quadratic penalty /
// augmented Lagrangian for the data constraints. Box constraints by clipping,
// per-item simplex constraints by sort-based projection.
// ---------------------------------------------------------------------------

struct SolverConfig {
  int max_iters = 5000;
  double tol_primal = 1e-6;  // relative data-constraint residual
  double tol_obj = 1e-9;     // relative objective change
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  int penalty_every = 500;
  double penalty_max = 1e8;

  void validate() const {
    if (max_iters < 1 || tol_primal <= 0 || tol_obj <= 0)
      throw std::invalid_argument("SolverConfig: positive tolerances required");
  }
};

enum class SolverStatus { Converged, MaxIterations, Infeasible };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::MaxIterations: return "max_iterations";
    case SolverStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

struct SolverReport {
  SolverStatus status = SolverStatus::MaxIterations;
  double objective = 0.0;        // original (unpenalized) objective
  double max_residual = 0.0;     // relative data residual (equality or linf excess)
  int iterations = 0;
  std::vector<double> objective_history;  // penalized surrogate, per iteration
};

/// Euclidean projection of a row onto the probability simplex.
inline void project_simplex_row(Eigen::Ref<Eigen::RowVectorXd> row) {
  const Eigen::Index L = row.size();
  std::vector<double> u(row.data(), row.data() + L);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (Eigen::Index i = 0; i < L; ++i) {
    css += u[static_cast<std::size_t>(i)];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0) {
      rho = static_cast<int>(i + 1);
      theta = t;
    }
  }
  (void)rho;
  for (Eigen::Index l = 0; l < L; ++l) row(l) = std::max(row(l) - theta, 0.0);
}

namespace detail {

inline double relative_residual(const Mat& r, const Mat& y) {
  return max_abs(r) / std::max(1.0, max_abs(y));
}

}  // namespace detail

struct PooledSolveResult {
  Mat b;  // p x L, rows on the simplex
  SolverReport report;
};

/// Shared machinery for the pooled LP (equality-constrained, linear
/// objective) and CVX (quadratic data term) relaxations. lin_cost holds the
/// per-category coefficients (-log pi_l, shifted so min = 0); quad_weight is
/// 1/(2 p sigma^2) for CVX and 0 for the LP.
inline PooledSolveResult solve_pooled_relaxed(const Mat& y, const Mat& x,
                                              const Vec& lin_cost, double quad_weight,
                                              bool equality_data,
                                              const SolverConfig& cfg) {
  cfg.validate();
  const Eigen::Index p = x.cols(), L = y.cols();
  const double xtx_norm = sq_op_norm(x);

  Mat b = Mat::Constant(p, L, 1.0 / static_cast<double>(L));
  Mat dual = Mat::Zero(y.rows(), L);  // scaled multipliers (equality mode)
  double rho = equality_data ? cfg.penalty_init : 0.0;

  auto true_objective = [&](const Mat& bb, const Mat& resid) {
    double obj = (bb * lin_cost).sum();
    if (quad_weight > 0) obj += 0.5 * quad_weight * resid.squaredNorm();
    return obj;
  };
  auto surrogate = [&](const Mat& bb, const Mat& resid) {
    double obj = (bb * lin_cost).sum() + 0.5 * quad_weight * resid.squaredNorm();
    if (equality_data) obj += 0.5 * rho * (resid + dual).squaredNorm();
    return obj;
  };

  SolverReport rep;
  rep.objective_history.reserve(static_cast<std::size_t>(cfg.max_iters));
  Mat resid = x * b - y;
  double prev_surr = surrogate(b, resid);
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const double lip = std::max((quad_weight + rho) * xtx_norm, 1e-12);
    double step = 1.0 / (1.01 * lip);

    Mat grad = Vec::Ones(p) * lin_cost.transpose();
    if (quad_weight > 0) grad.noalias() += quad_weight * (x.transpose() * resid);
    if (equality_data) grad.noalias() += rho * (x.transpose() * (resid + dual));

    // Projected gradient step with a halving safeguard so the surrogate is
    // monotone under the current penalty parameters.
    Mat b_next;
    Mat resid_next;
    double surr_next = 0.0;
    for (int tries = 0; tries < 30; ++tries) {
      b_next = b - step * grad;
      for (Eigen::Index j = 0; j < p; ++j) project_simplex_row(b_next.row(j));
      resid_next = x * b_next - y;
      surr_next = surrogate(b_next, resid_next);
      if (surr_next <= prev_surr + 1e-12 * std::abs(prev_surr)) break;
      step *= 0.5;
    }
    const double change = std::abs(prev_surr - surr_next);
    b.swap(b_next);
    resid.swap(resid_next);
    prev_surr = surr_next;
    rep.objective_history.push_back(surr_next);

    const double rel_res = detail::relative_residual(resid, y);
    if (equality_data) {
      if (rel_res <= cfg.tol_primal && change <= cfg.tol_obj * std::max(1.0, std::abs(surr_next))) {
        ++iter;
        break;
      }
      if ((iter + 1) % cfg.penalty_every == 0) {
        dual += resid;  // scaled multiplier update
        if (rho < cfg.penalty_max) {
          rho = std::min(rho * cfg.penalty_growth, cfg.penalty_max);
          dual *= 1.0 / cfg.penalty_growth;
        }
        prev_surr = surrogate(b, resid);
      }
    } else if (change <= cfg.tol_obj * std::max(1.0, std::abs(surr_next)) && iter > 20) {
      ++iter;
      break;
    }
  }

  rep.iterations = iter;
  rep.max_residual = equality_data ? detail::relative_residual(resid, y) : 0.0;
  rep.objective = true_objective(b, resid);
  if (equality_data) {
    if (rep.max_residual <= cfg.tol_primal)
      rep.status = SolverStatus::Converged;
    else if (rep.max_residual > 1e-4)
      rep.status = SolverStatus::Infeasible;
    else
      rep.status = SolverStatus::MaxIterations;
  } else {
    rep.status = iter < cfg.max_iters ? SolverStatus::Converged
                                      : SolverStatus::MaxIterations;
  }
  return PooledSolveResult{std::move(b), std::move(rep)};
}

inline Vec pooled_lin_cost(const Prior& prior) {
  // -log pi_l, shifted so the smallest coefficient is zero; with row sums
  // fixed at one the shift changes the objective by a constant only. A
  // uniform prior therefore yields a pure feasibility problem.
  Vec c(prior.L());
  for (Eigen::Index l = 0; l < prior.L(); ++l) {
    if (prior.probs(l) <= 0.0)
      throw std::invalid_argument("pooled solver: prior has empty categories");
    c(l) = -std::log(prior.probs(l));
  }
  c.array() -= c.minCoeff();
  return c;
}

/// Noiseless linear-programming relaxation.
inline PooledSolveResult solve_pooled_lp(const Mat& y, const Mat& x,
                                         const Prior& prior,
                                         const SolverConfig& cfg = {}) {
  return solve_pooled_relaxed(y, x, pooled_lin_cost(prior), 0.0, true, cfg);
}

/// Gaussian-noise convex relaxation with data weight 1/(2 p sigma^2).
inline PooledSolveResult solve_pooled_cvx(const Mat& y, const Mat& x,
                                          const Prior& prior, double sigma,
                                          const SolverConfig& cfg = {}) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("solve_pooled_cvx: sigma > 0 required");
  // true_objective adds 0.5 * quad_weight * ||resid||^2, so this weight
  // realizes the 1/(2 p sigma^2) data term.
  const double quad_weight = 1.0 / (sigma * sigma * static_cast<double>(x.cols()));
  return solve_pooled_relaxed(y, x, pooled_lin_cost(prior), quad_weight, false, cfg);
}

struct QgtSolveResult {
  Vec beta;  // in [0,1]^p
  SolverReport report;
};

/// l1 minimization over the box with either an equality data constraint
/// (linf_bound < 0) or an l-infinity band |y - X beta|_inf <= linf_bound.
inline QgtSolveResult solve_qgt_box_l1(const Vec& y, const Mat& x, double linf_bound,
                                       const SolverConfig& cfg) {
  cfg.validate();
  const Eigen::Index p = x.cols();
  const double xtx_norm = sq_op_norm(x);
  const bool equality = linf_bound < 0.0;

  Vec beta = Vec::Constant(p, 0.5);
  Vec dual = Vec::Zero(y.size());
  double rho = cfg.penalty_init;

  auto violation = [&](const Vec& resid) -> Vec {
    if (equality) return resid;
    return resid.array().sign() *
           (resid.array().abs() - linf_bound).max(0.0);
  };
  auto surrogate = [&](const Vec& bb, const Vec& resid) {
    const Vec v = violation(resid);
    double obj = bb.sum() + 0.5 * rho * (equality ? (v + dual).squaredNorm()
                                                  : v.squaredNorm());
    return obj;
  };

  SolverReport rep;
  rep.objective_history.reserve(static_cast<std::size_t>(cfg.max_iters));
  Vec resid = x * beta - y;
  double prev_surr = surrogate(beta, resid);
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const double lip = std::max(rho * xtx_norm, 1e-12);
    double step = 1.0 / (1.01 * lip);
    const Vec v = violation(resid);
    Vec grad = Vec::Ones(p);
    grad.noalias() += rho * (x.transpose() * (equality ? Vec(v + dual) : v));

    Vec beta_next, resid_next;
    double surr_next = 0.0;
    for (int tries = 0; tries < 30; ++tries) {
      beta_next = (beta - step * grad).cwiseMax(0.0).cwiseMin(1.0);
      resid_next = x * beta_next - y;
      surr_next = surrogate(beta_next, resid_next);
      if (surr_next <= prev_surr + 1e-12 * std::abs(prev_surr)) break;
      step *= 0.5;
    }
    const double change = std::abs(prev_surr - surr_next);
    beta.swap(beta_next);
    resid.swap(resid_next);
    prev_surr = surr_next;
    rep.objective_history.push_back(surr_next);

    const double rel_res = detail::relative_residual(violation(resid), y);
    if (rel_res <= cfg.tol_primal &&
        change <= cfg.tol_obj * std::max(1.0, std::abs(surr_next))) {
      ++iter;
      break;
    }
    if ((iter + 1) % cfg.penalty_every == 0) {
      if (equality) dual += resid;
      if (rho < cfg.penalty_max) {
        rho = std::min(rho * cfg.penalty_growth, cfg.penalty_max);
        if (equality) dual *= 1.0 / cfg.penalty_growth;
      }
      prev_surr = surrogate(beta, resid);
    }
  }

  rep.iterations = iter;
  rep.max_residual = detail::relative_residual(violation(resid), y);
  rep.objective = beta.sum();
  if (rep.max_residual <= cfg.tol_primal)
    rep.status = SolverStatus::Converged;
  else if (rep.max_residual > 1e-4)
    rep.status = SolverStatus::Infeasible;
  else
    rep.status = SolverStatus::MaxIterations;
  return QgtSolveResult{std::move(beta), std::move(rep)};
}

/// minimize ||beta||_1 subject to y = X beta, 0 <= beta <= 1.
inline QgtSolveResult solve_qgt_lp(const Vec& y, const Mat& x,
                                   const SolverConfig& cfg = {}) {
  return solve_qgt_box_l1(y, x, -1.0, cfg);
}

/// minimize ||beta||_1 subject to ||y - X beta||_inf <= lambda sqrt(p),
/// 0 <= beta <= 1.
inline QgtSolveResult solve_qgt_bpdn(const Vec& y, const Mat& x, double lambda,
                                     const SolverConfig& cfg = {}) {
  if (lambda < 0.0)
    throw std::invalid_argument("solve_qgt_bpdn: lambda >= 0 required");
  const double bound = lambda * std::sqrt(static_cast<double>(x.cols()));
  return solve_qgt_box_l1(y, x, bound, cfg);
}

/// Componentwise indicator 1{x_j > zeta}.
inline Vec threshold_relaxed(const Vec& values, double zeta) {
  Vec out = Vec::Zero(values.size());
  for (Eigen::Index j = 0; j < values.size(); ++j)
    if (values(j) > zeta) out(j) = 1.0;
  return out;
}

}  // namespace poolamp
