#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolamp/denoisers.hpp"
#include "poolamp/model.hpp"
#include "poolamp/se_qgt.hpp"

namespace poolamp {

struct QgtAmpConfig {
  enum class OnsagerMode { EmpiricalJacobian, DeterministicSe };
  enum class InitKind { IidBernoulli, ConstantPrior };

  int iterations = 10;
  OnsagerMode onsager_mode = OnsagerMode::EmpiricalJacobian;
  InitKind init = InitKind::IidBernoulli;
  double zeta = 0.5;  // threshold for the default hard estimate
  GaussianQuadSpec quad;
  std::uint64_t init_seed = 0;
  int noise_integral_nodes = 201;
};

struct QgtTrace {
  std::vector<Vec> theta;     // length n
  std::vector<Vec> beta_iter; // beta^{k+1}
  std::vector<Vec> beta_hat;  // posterior probabilities in [0,1]
  std::vector<QgtSeState> se_states;
  std::vector<double> sq_corr;  // empirical, vs truth (if given)
  Vec hard_estimate;            // thresholded final iterate at cfg.zeta
  std::vector<Eigen::Index> defective_set;
  bool has_truth = false;
};

/// Hard decision on the final linear iterate: S = { j : beta_j / mu > zeta }.
struct ThresholdResult {
  Vec hard;  // 0/1 vector
  std::vector<Eigen::Index> defective_set;
};

inline ThresholdResult threshold_final(const Vec& beta_k, double mu_beta_k,
                                       double zeta) {
  if (!(mu_beta_k > 0.0))
    throw std::invalid_argument("threshold_final: mu_beta must be positive "
                                "(uninformative run)");
  ThresholdResult out;
  out.hard = Vec::Zero(beta_k.size());
  for (Eigen::Index j = 0; j < beta_k.size(); ++j) {
    if (beta_k(j) / mu_beta_k > zeta) {
      out.hard(j) = 1.0;
      out.defective_set.push_back(j);
    }
  }
  return out;
}

struct FprFnr {
  std::optional<double> fpr;  // undefined when there are no non-defectives
  std::optional<double> fnr;  // undefined when there are no defectives
};

inline FprFnr empirical_fpr_fnr(const Vec& beta_true, const Vec& hard_estimate) {
  if (beta_true.size() != hard_estimate.size())
    throw std::invalid_argument("empirical_fpr_fnr: size mismatch");
  double fp = 0, fn = 0, pos = 0, neg = 0;
  for (Eigen::Index j = 0; j < beta_true.size(); ++j) {
    const bool truth = beta_true(j) != 0.0;
    const bool decided = hard_estimate(j) != 0.0;
    if (truth) {
      pos += 1;
      if (!decided) fn += 1;
    } else {
      neg += 1;
      if (decided) fp += 1;
    }
  }
  FprFnr out;
  if (neg > 0) out.fpr = fp / neg;
  if (pos > 0) out.fnr = fn / pos;
  return out;
}

/// Normalized squared correlation <bhat, b>^2 / (||bhat||^2 ||b||^2).
inline double empirical_sq_corr(const Vec& beta_hat, const Vec& beta) {
  const double num = beta_hat.dot(beta);
  const double den = beta_hat.squaredNorm() * beta.squaredNorm();
  if (den <= 0.0) return 0.0;
  return num * num / den;
}

/// Scalar AMP for quantitative group testing; same scheme as the pooled
/// iteration with vector iterates and the scalar state evolution companion.
inline QgtTrace run_qgt_amp(const Vec& ty, const DesignPair& design, double pi,
                            const NoiseSpec& noise, const QgtAmpConfig& cfg,
                            const Vec* truth = nullptr) {
  const Eigen::Index n = design.n, p = design.p;
  if (ty.size() != n) throw std::invalid_argument("run_qgt_amp: ty size mismatch");
  if (!(pi > 0.0 && pi < 1.0))
    throw std::invalid_argument("run_qgt_amp: pi must lie in (0,1)");
  if (noise.kind == NoiseSpec::Kind::GaussianIsotropic && noise.sigma > 0.0)
    throw std::invalid_argument("run_qgt_amp: Gaussian noise not supported for QGT");
  const double delta = static_cast<double>(n) / static_cast<double>(p);
  const double lambda_tilde =
      noise.is_none() ? 0.0
                      : noise.lambda * std::sqrt(rescaled_noise_factor(delta, design.alpha));

  QgtTrace trace;
  trace.has_truth = truth != nullptr;
  trace.se_states.push_back(se_qgt_init(
      pi, delta,
      cfg.init == QgtAmpConfig::InitKind::IidBernoulli ? QgtSeInitKind::IidBernoulli
                                                       : QgtSeInitKind::PriorProduct));

  Vec beta_hat(p);
  if (cfg.init == QgtAmpConfig::InitKind::IidBernoulli) {
    std::mt19937_64 rng(cfg.init_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index j = 0; j < p; ++j) beta_hat(j) = unif(rng) < pi ? 1.0 : 0.0;
  } else {
    beta_hat = Vec::Constant(p, pi);
  }

  Vec r_hat_prev;
  double f_prev = 0.0;

  for (int k = 0; k < cfg.iterations; ++k) {
    const QgtSeState& se = trace.se_states.back();
    Vec theta = design.tX * beta_hat;
    if (k > 0) theta.noalias() -= f_prev * r_hat_prev;
    if (!theta.allFinite())
      throw std::runtime_error("run_qgt_amp: non-finite theta at iteration " +
                               std::to_string(k));

    const QgtGDenoiser g(se.Sigma, lambda_tilde, cfg.noise_integral_nodes);
    Vec r_hat(n);
    double c_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const QgtGDenoiser::Eval e = g.eval(theta(i), ty(i));
      r_hat(i) = e.g;
      c_sum += e.deriv_u;
    }
    const double c = c_sum / static_cast<double>(n);

    Vec beta_iter = design.tX.transpose() * r_hat - c * beta_hat;
    if (!beta_iter.allFinite())
      throw std::runtime_error("run_qgt_amp: non-finite beta at iteration " +
                               std::to_string(k));

    QgtSeState se_next = se_qgt_step(se, pi, delta, noise, design.alpha, cfg.quad,
                                     cfg.noise_integral_nodes);

    Vec beta_hat_next(p);
    double f_sum = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      beta_hat_next(j) =
          qgt_denoise_f(beta_iter(j), se_next.mu_beta, se_next.sigma_beta, pi);
      f_sum += qgt_denoise_f_deriv(beta_iter(j), se_next.mu_beta,
                                   se_next.sigma_beta, pi);
    }
    double f_mat;
    if (cfg.onsager_mode == QgtAmpConfig::OnsagerMode::EmpiricalJacobian) {
      f_mat = f_sum / static_cast<double>(n);
    } else {
      const QgtFMoments fm =
          qgt_f_moments(pi, se_next.mu_beta, se_next.sigma_beta, cfg.quad);
      f_mat = fm.e_deriv / delta;
    }

    if (truth) trace.sq_corr.push_back(empirical_sq_corr(beta_hat_next, *truth));
    trace.theta.push_back(std::move(theta));
    trace.beta_iter.push_back(std::move(beta_iter));
    trace.beta_hat.push_back(beta_hat_next);
    trace.se_states.push_back(std::move(se_next));

    r_hat_prev = std::move(r_hat);
    f_prev = f_mat;
    beta_hat = std::move(beta_hat_next);
  }

  const double mu_final = trace.se_states.back().mu_beta;
  ThresholdResult thr = threshold_final(trace.beta_iter.back(), mu_final, cfg.zeta);
  trace.hard_estimate = std::move(thr.hard);
  trace.defective_set = std::move(thr.defective_set);
  return trace;
}

}  // namespace poolamp
