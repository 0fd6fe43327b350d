#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "poolamp/denoisers.hpp"
#include "poolamp/gaussian.hpp"
#include "poolamp/model.hpp"
#include "poolamp/rng.hpp"

namespace poolamp {

/// Scalar (L = 1) state evolution for quantitative group testing.
/// sigma_beta / sigma_theta are standard deviations; Sigma is the 2x2
/// covariance of (Z, Z^k).
struct QgtSeState {
  int k = 0;
  double mu_beta = 0.0;
  double sigma_beta = 0.0;
  Mat Sigma;  // 2x2
  double mu_theta = 0.0;
  double sigma_theta = 0.0;
  bool saturated = false;

  double sigma11() const { return Sigma(0, 0); }
  double sigma21() const { return Sigma(1, 0); }
  double sigma22() const { return Sigma(1, 1); }
};

enum class QgtSeInitKind { IidBernoulli, PriorProduct };

namespace detail {

inline void fill_qgt_theta(QgtSeState& s) {
  s.mu_theta = s.sigma21() / s.sigma11();
  s.sigma_theta =
      std::sqrt(std::max(0.0, s.sigma22() - s.sigma21() * s.sigma21() / s.sigma11()));
}

}  // namespace detail

inline QgtSeState se_qgt_init(double pi, double delta,
                              QgtSeInitKind kind = QgtSeInitKind::IidBernoulli) {
  if (!(pi > 0.0 && pi < 1.0))
    throw std::invalid_argument("se_qgt_init: pi must lie in (0,1)");
  if (!(delta > 0.0)) throw std::invalid_argument("se_qgt_init: delta > 0 required");
  QgtSeState s;
  s.k = 0;
  s.Sigma = Mat(2, 2);
  s.Sigma(0, 0) = pi / delta;
  s.Sigma(0, 1) = s.Sigma(1, 0) = pi * pi / delta;
  s.Sigma(1, 1) = (kind == QgtSeInitKind::IidBernoulli ? pi : pi * pi) / delta;
  detail::fill_qgt_theta(s);
  return s;
}

/// Moments of the scalar posterior-probability denoiser under
/// s = mu beta + sigma G, beta ~ Bernoulli(pi).
struct QgtFMoments {
  double e_ff = 0.0;   // E[f^2]
  double e_fB = 0.0;   // E[f beta]
  double e_deriv = 0.0;  // E[f'(s)]
  double mse = 0.0;
  double sq_corr = 0.0;  // (E[f beta])^2 / (E[f^2] E[beta^2])
};

inline QgtFMoments qgt_f_moments(double pi, double mu, double sigma,
                                 const GaussianQuadSpec& quad) {
  QgtFMoments m;
  auto accumulate = [&](double beta, double w, double g) {
    const double s = mu * beta + sigma * g;
    const double q = qgt_denoise_f(s, mu, sigma, pi);
    m.e_ff += w * q * q;
    m.e_fB += w * q * beta;
    m.e_deriv += w * qgt_denoise_f_deriv(s, mu, sigma, pi);
    m.mse += w * (q - beta) * (q - beta);
  };
  const double cls_w[2] = {1.0 - pi, pi};
  if (quad.method == GaussianQuadSpec::Method::GaussHermite) {
    const QuadRule rule = gauss_hermite_rule(quad.n_nodes);
    for (int c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        accumulate(static_cast<double>(c), cls_w[c] * rule.weights[i], rule.nodes[i]);
  } else {
    for (int c = 0; c < 2; ++c) {
      std::mt19937_64 rng(
          stream_key(quad.seed, static_cast<std::uint64_t>(c), StreamRole::Quad));
      std::normal_distribution<double> gauss(0.0, 1.0);
      const double w = cls_w[c] / quad.n_samples;
      for (int s = 0; s < quad.n_samples; ++s)
        accumulate(static_cast<double>(c), w, gauss(rng));
    }
  }
  m.sq_corr = m.e_fB * m.e_fB / std::max(m.e_ff * pi, 1e-300);
  return m;
}

/// One scalar state evolution step. Noiseless: mu^{k+1} = 1/(Sigma11-Sigma21)
/// in closed form. Uniform noise: mu^{k+1} = E[dg/dZ] and
/// (sigma^{k+1})^2 = E[g^2], evaluated over (Z, Z^k, noise) with the chosen
/// backend; the inner conditional mean uses the one-dimensional noise
/// integral of the residual denoiser.
inline QgtSeState se_qgt_step(const QgtSeState& state, double pi, double delta,
                              const NoiseSpec& noise, double alpha,
                              const GaussianQuadSpec& quad,
                              int noise_integral_nodes = 201) {
  if (state.saturated) {
    QgtSeState next = state;
    ++next.k;
    return next;
  }
  const double gap = state.sigma11() - state.sigma21();
  if (gap <= 1e-12 * std::max(state.sigma11(), 1e-300)) {
    QgtSeState next = state;
    ++next.k;
    next.saturated = true;
    return next;
  }
  if (noise.kind == NoiseSpec::Kind::GaussianIsotropic && noise.sigma > 0.0)
    throw std::invalid_argument("se_qgt_step: Gaussian noise not supported; use uniform");

  QgtSeState next;
  next.k = state.k + 1;
  double mu = 0.0, tau = 0.0;  // tau = variance
  if (noise.is_none()) {
    mu = 1.0 / gap;
    const double num = state.sigma11() - 2.0 * state.sigma21() + state.sigma22();
    tau = num / (gap * gap);
  } else {
    const double lt = noise.lambda * std::sqrt(rescaled_noise_factor(delta, alpha));
    const QgtGDenoiser g(state.Sigma, lt, noise_integral_nodes);
    // Outer expectation over (Z, Z^k) jointly Gaussian and noise ~ U[-lt,lt].
    Eigen::LLT<Mat> llt(state.Sigma + 1e-14 * state.sigma11() * Mat::Identity(2, 2));
    const Mat chol = llt.matrixL();
    auto accumulate = [&](double g1, double g2, double psi, double w) {
      const double z = chol(0, 0) * g1;
      const double zk = chol(1, 0) * g1 + chol(1, 1) * g2;
      const QgtGDenoiser::Eval e = g.eval(zk, z + psi);
      mu += w * e.deriv_y;
      tau += w * e.g * e.g;
    };
    if (quad.method == GaussianQuadSpec::Method::GaussHermite) {
      const QuadRule gh = gauss_hermite_rule(std::min(quad.n_nodes, 40));
      const QuadRule gl = gauss_legendre_rule(33, -lt, lt);
      const double inv_len = 1.0 / (2.0 * lt);
      for (std::size_t i = 0; i < gh.nodes.size(); ++i)
        for (std::size_t j = 0; j < gh.nodes.size(); ++j)
          for (std::size_t u = 0; u < gl.nodes.size(); ++u)
            accumulate(gh.nodes[i], gh.nodes[j], gl.nodes[u],
                       gh.weights[i] * gh.weights[j] * gl.weights[u] * inv_len);
    } else {
      std::mt19937_64 rng(stream_key(quad.seed, 0, StreamRole::Quad));
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> unif(-lt, lt);
      const int n = std::max(1, quad.n_samples / 10);
      const double w = 1.0 / n;
      for (int s = 0; s < n; ++s) accumulate(gauss(rng), gauss(rng), unif(rng), w);
    }
  }
  if (!(mu > 0.0))
    throw std::runtime_error("se_qgt_step: non-positive mu (uninformative step)");
  next.mu_beta = mu;
  next.sigma_beta = std::sqrt(std::max(tau, 0.0));

  const QgtFMoments fm = qgt_f_moments(pi, next.mu_beta, next.sigma_beta, quad);
  next.Sigma = Mat(2, 2);
  next.Sigma(0, 0) = pi / delta;
  next.Sigma(0, 1) = next.Sigma(1, 0) = fm.e_fB / delta;
  next.Sigma(1, 1) = fm.e_ff / delta;
  detail::fill_qgt_theta(next);
  return next;
}

/// Limiting error rates of the thresholded final iterate (threshold zeta):
/// FPR = 1 - Phi(mu zeta / sigma), FNR = 1 - Phi(mu (1-zeta) / sigma).
inline std::pair<double, double> limiting_fpr_fnr(double mu_beta, double sigma_beta,
                                                  double zeta) {
  if (!(sigma_beta > 0.0))
    throw std::invalid_argument("limiting_fpr_fnr: sigma_beta > 0 required");
  const double fpr = 1.0 - normal_cdf(mu_beta * zeta / sigma_beta);
  const double fnr = 1.0 - normal_cdf(mu_beta * (1.0 - zeta) / sigma_beta);
  return {fpr, fnr};
}

struct QgtSeTrajectory {
  std::vector<QgtSeState> states;
  std::vector<double> sq_corr;  // prediction for iteration k >= 1 (index k-1)
};

inline QgtSeTrajectory run_qgt_se(double pi, double delta, const NoiseSpec& noise,
                                  double alpha, int iterations,
                                  const GaussianQuadSpec& quad,
                                  QgtSeInitKind init_kind = QgtSeInitKind::IidBernoulli,
                                  int noise_integral_nodes = 201) {
  QgtSeTrajectory traj;
  traj.states.push_back(se_qgt_init(pi, delta, init_kind));
  for (int k = 0; k < iterations; ++k) {
    QgtSeState next = se_qgt_step(traj.states.back(), pi, delta, noise, alpha, quad,
                                  noise_integral_nodes);
    if (next.saturated) {
      traj.sq_corr.push_back(1.0);
    } else {
      const QgtFMoments fm = qgt_f_moments(pi, next.mu_beta, next.sigma_beta, quad);
      traj.sq_corr.push_back(fm.sq_corr);
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace poolamp
