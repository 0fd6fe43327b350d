#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolamp/denoisers.hpp"
#include "poolamp/model.hpp"
#include "poolamp/state_evolution.hpp"

namespace poolamp {

struct AmpConfig {
  enum class OnsagerMode { EmpiricalJacobian, DeterministicSe };
  enum class InitKind { IidCategorical, RowConstantPrior };

  int iterations = 10;
  OnsagerMode onsager_mode = OnsagerMode::EmpiricalJacobian;
  InitKind init = InitKind::IidCategorical;
  bool quantize_final = true;
  GaussianQuadSpec quad;
  std::uint64_t init_seed = 0;
};

inline SeInitKind se_init_kind(AmpConfig::InitKind k) {
  return k == AmpConfig::InitKind::IidCategorical ? SeInitKind::IidCategorical
                                                  : SeInitKind::PriorProduct;
}

struct Metrics {
  double correlation = 0.0;
  double mse = 0.0;
};

/// correlation = (1/p) sum_j <Bhat_j, B_j>, mse = (1/p) sum_j ||Bhat_j - B_j||^2.
inline Metrics empirical_metrics(const Mat& b_hat, const Mat& b) {
  if (b_hat.rows() != b.rows() || b_hat.cols() != b.cols())
    throw std::invalid_argument("empirical_metrics: shape mismatch");
  const double p = static_cast<double>(b.rows());
  Metrics m;
  m.correlation = b_hat.cwiseProduct(b).sum() / p;
  m.mse = (b_hat - b).squaredNorm() / p;
  return m;
}

/// Row-wise hard decision: each row becomes the one-hot of its largest
/// entry; ties break toward the lowest index.
inline SignalMatrix quantize(const Mat& b_hat) {
  if (!b_hat.allFinite())
    throw std::invalid_argument("quantize: non-finite entries");
  SignalMatrix out;
  out.rows = Mat::Zero(b_hat.rows(), b_hat.cols());
  for (Eigen::Index j = 0; j < b_hat.rows(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < b_hat.cols(); ++l)
      if (b_hat(j, l) > b_hat(j, best)) best = l;
    out.rows(j, best) = 1.0;
  }
  return out;
}

struct AmpTrace {
  std::vector<Mat> theta;    // Theta^k, n x L
  std::vector<Mat> b_iter;   // B^{k+1}, p x L
  std::vector<Mat> b_hat;    // Bhat^{k+1}, p x L (simplex rows)
  std::vector<Mat> r_hat;    // Rhat^k, n x L
  std::vector<Mat> onsager_c, onsager_f;  // C^k, F^{k+1}, L x L
  std::vector<SeState> se_states;         // se_states[k] = companion state k
  std::vector<Metrics> metrics;           // of Bhat^{k+1} vs truth (if given)
  Mat b_hat_final;            // quantized if requested, else last posterior mean
  Metrics final_metrics;      // of b_hat_final vs truth (if given)
  bool has_truth = false;
};

/// Matrix-AMP for pooled data with Bayes-optimal denoisers driven by the
/// companion state evolution:
///   Theta^k = tX Bhat^k - Rhat^{k-1} (F^k)^T,   Rhat^k = g_k(Theta^k, tY),
///   B^{k+1} = tX^T Rhat^k - Bhat^k (C^k)^T,     Bhat^{k+1} = f_{k+1}(B^{k+1}).
/// `truth` enables per-iteration empirical metrics.
inline AmpTrace run_amp(const Observations& obs, const DesignPair& design,
                        const Prior& prior, const NoiseSpec& noise,
                        const AmpConfig& cfg, const SignalMatrix* truth = nullptr) {
  const Eigen::Index n = design.n, p = design.p, L = prior.L();
  if (obs.tY.rows() != n || obs.tY.cols() != L)
    throw std::invalid_argument("run_amp: observation shape mismatch");
  if (cfg.iterations < 1)
    throw std::invalid_argument("run_amp: iterations >= 1 required");
  const double delta = static_cast<double>(n) / static_cast<double>(p);

  AmpTrace trace;
  trace.has_truth = truth != nullptr;
  trace.se_states.push_back(se_init(prior, delta, se_init_kind(cfg.init)));

  Mat b_hat;
  if (cfg.init == AmpConfig::InitKind::IidCategorical) {
    b_hat = gen_signal(p, prior, cfg.init_seed).rows;
  } else {
    b_hat = Vec::Ones(p) * prior.probs.transpose();
  }

  Mat r_hat_prev;  // Rhat^{-1} = 0
  Mat f_prev;
  const Mat noise_cov = pooled_noise_cov(noise, delta, design.alpha, L);

  for (int k = 0; k < cfg.iterations; ++k) {
    const SeState& se = trace.se_states.back();
    Mat theta = design.tX * b_hat;
    if (k > 0) theta.noalias() -= r_hat_prev * f_prev.transpose();
    if (!theta.allFinite())
      throw std::runtime_error("run_amp: non-finite Theta at iteration " +
                               std::to_string(k));

    const PooledGDenoiser g(se.sigma11(), se.sigma12(), se.sigma21(), se.sigma22(),
                            noise_cov);
    Mat r_hat(n, L);
    for (Eigen::Index i = 0; i < n; ++i)
      r_hat.row(i) = g.apply(theta.row(i), obs.tY.row(i)).transpose();
    // g is linear in its first argument, so the empirical Jacobian average
    // coincides with the deterministic one.
    const Mat c = g.jacobian_u();

    Mat b_iter = design.tX.transpose() * r_hat - b_hat * c.transpose();
    if (!b_iter.allFinite())
      throw std::runtime_error("run_amp: non-finite B at iteration " +
                               std::to_string(k));

    SeState se_next = se_step_bayes(se, prior, delta, noise, design.alpha, cfg.quad);

    const CategoricalPosterior f = make_f_denoiser(prior, se_next.Mu_B, se_next.Tau_B);
    Mat b_hat_next(p, L);
    Mat f_sum = Mat::Zero(L, L);
    const bool empirical_f =
        cfg.onsager_mode == AmpConfig::OnsagerMode::EmpiricalJacobian;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Vec q = f.probs(b_iter.row(j));
      b_hat_next.row(j) = q.transpose();
      if (empirical_f) f_sum.noalias() += f.jacobian_from_probs(q);
    }
    Mat f_mat;
    if (empirical_f) {
      f_mat = f_sum / static_cast<double>(n);
    } else {
      const MixtureMoments fm =
          f_moments(prior, se_next.Mu_B, se_next.Tau_B, cfg.quad, true);
      f_mat = fm.e_jac / delta;
    }

    trace.theta.push_back(std::move(theta));
    trace.r_hat.push_back(std::move(r_hat));
    trace.onsager_c.push_back(c);
    trace.onsager_f.push_back(f_mat);
    trace.b_iter.push_back(std::move(b_iter));
    if (truth) trace.metrics.push_back(empirical_metrics(b_hat_next, truth->rows));
    trace.b_hat.push_back(b_hat_next);
    trace.se_states.push_back(std::move(se_next));

    r_hat_prev = trace.r_hat.back();
    f_prev = f_mat;
    b_hat = std::move(b_hat_next);
  }

  trace.b_hat_final = cfg.quantize_final ? quantize(trace.b_hat.back()).rows
                                         : trace.b_hat.back();
  if (truth)
    trace.final_metrics = empirical_metrics(trace.b_hat_final, truth->rows);
  return trace;
}

}  // namespace poolamp
