#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "poolamp/denoisers.hpp"
#include "poolamp/gaussian.hpp"
#include "poolamp/linalg.hpp"
#include "poolamp/model.hpp"
#include "poolamp/rng.hpp"

namespace poolamp {

/// Per-iteration state of the deterministic recursion predicting the AMP
/// iterates' statistics. Sigma is 2L x 2L with blocks
/// [[Sigma11, Sigma12], [Sigma21, Sigma22]] describing the joint law of
/// (Z, Z^k); Mu_Theta and Tau_Theta are derived from it.
struct SeState {
  int k = 0;
  Mat Mu_B, Tau_B;  // L x L
  Mat Sigma;        // 2L x 2L
  Mat Mu_Theta, Tau_Theta;
  double pinv_cutoff_applied = 0.0;
  bool saturated = false;  // information gap numerically closed (exact recovery)

  Eigen::Index L() const { return Mu_B.rows(); }
  Mat sigma11() const { return Sigma.topLeftCorner(L(), L()); }
  Mat sigma12() const { return Sigma.topRightCorner(L(), L()); }
  Mat sigma21() const { return Sigma.bottomLeftCorner(L(), L()); }
  Mat sigma22() const { return Sigma.bottomRightCorner(L(), L()); }
};

enum class SeInitKind {
  PriorProduct,    // row-constant initializer Bhat0_j = pi; Sigma22_0 = pi pi^T / delta
  IidCategorical,  // i.i.d. one-hot rows from pi;          Sigma22_0 = diag(pi) / delta
};

namespace detail {

inline void fill_theta_params(SeState& s) {
  const Mat s11_pinv = pinv_psd(s.sigma11(), 1e-10, &s.pinv_cutoff_applied);
  s.Mu_Theta = s.sigma21() * s11_pinv;
  s.Tau_Theta = symmetrize(s.sigma22() - s.sigma21() * s11_pinv * s.sigma12());
}

}  // namespace detail

inline SeState se_init(const Prior& prior, double delta,
                       SeInitKind kind = SeInitKind::PriorProduct) {
  if (!(delta > 0.0)) throw std::invalid_argument("se_init: delta > 0 required");
  if ((prior.probs.array() <= 0.0).any())
    throw std::invalid_argument(
        "se_init: prior has empty categories; drop zero-probability categories "
        "before running state evolution");
  const Eigen::Index L = prior.L();
  const Mat pp = prior.probs * prior.probs.transpose();
  const Mat dp = Mat(prior.probs.asDiagonal());
  SeState s;
  s.k = 0;
  s.Sigma = Mat(2 * L, 2 * L);
  s.Sigma.topLeftCorner(L, L) = dp / delta;
  s.Sigma.topRightCorner(L, L) = pp / delta;
  s.Sigma.bottomLeftCorner(L, L) = pp / delta;
  s.Sigma.bottomRightCorner(L, L) =
      (kind == SeInitKind::PriorProduct ? pp : dp) / delta;
  s.Mu_B = Mat::Zero(L, L);
  s.Tau_B = Mat::Zero(L, L);
  detail::fill_theta_params(s);
  return s;
}

/// Moments of the posterior-mean denoiser under the scalar-channel law
/// s = mean_l + G with G ~ N(0, add_cov) and class l ~ prior.
struct MixtureMoments {
  Mat e_ffT;         // E[f f^T]
  Mat e_fBT;         // E[f Bbar^T]
  Mat e_jac;         // E[f'(s)]
  double corr = 0.0;       // E <f, Bbar>
  double mse = 0.0;        // E ||f - Bbar||^2
  double corr_hard = 0.0;  // P[argmax f = true class]
  double mc_se = 0.0;      // max-entry std error of e_fBT - e_ffT (MC only)
};

inline MixtureMoments mixture_moments(const Prior& prior, const Mat& means,
                                      const Mat& add_cov,
                                      const CategoricalPosterior& post,
                                      const GaussianQuadSpec& quad,
                                      bool want_jacobian = false) {
  const Eigen::Index L = prior.L();
  MixtureMoments m;
  m.e_ffT = Mat::Zero(L, L);
  m.e_fBT = Mat::Zero(L, L);
  m.e_jac = Mat::Zero(L, L);

  // Directions with non-negligible variance; the one-hot simplex constraint
  // makes the all-ones direction structurally degenerate, which shrinks the
  // integration dimension by one.
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(add_cov));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("mixture_moments: eigendecomposition failed");
  const double ev_max = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < L; ++i)
    if (es.eigenvalues()(i) > 1e-12 * std::max(ev_max, 1e-300)) kept.push_back(i);
  const int r = static_cast<int>(kept.size());
  Mat transform(L, r);
  for (int i = 0; i < r; ++i)
    transform.col(i) =
        es.eigenvectors().col(kept[static_cast<std::size_t>(i)]) *
        std::sqrt(es.eigenvalues()(kept[static_cast<std::size_t>(i)]));

  // Evaluate one channel output s = mean_l + transform * g and fold it into
  // the running moments with weight w.
  Mat diff_sq = Mat::Zero(L, L);  // E[(f B^T - f f^T)^2] entrywise, per class
  auto accumulate = [&](Eigen::Index l, double w, const Vec& g_std, bool track_var) {
    Vec s = means.col(l);
    if (r > 0) s.noalias() += transform * g_std;
    const Vec q = post.probs(s);
    m.e_ffT.noalias() += w * (q * q.transpose());
    m.e_fBT.col(l).noalias() += w * q;
    m.corr += w * q(l);
    m.mse += w * (q - Vec(Vec::Unit(L, l))).squaredNorm();
    Eigen::Index arg;
    q.maxCoeff(&arg);
    if (arg == l) m.corr_hard += w;
    if (want_jacobian) m.e_jac.noalias() += w * post.jacobian_from_probs(q);
    if (track_var) {
      Mat d = q * Vec(Vec::Unit(L, l)).transpose() - q * q.transpose();
      diff_sq.noalias() += d.cwiseProduct(d);
    }
  };

  if (quad.method == GaussianQuadSpec::Method::GaussHermite) {
    const QuadRule rule = gauss_hermite_rule(quad.n_nodes);
    const int nn = static_cast<int>(rule.nodes.size());
    for (Eigen::Index l = 0; l < L; ++l) {
      if (prior.probs(l) <= 0.0) continue;
      const double pl = prior.probs(l);
      if (r == 0) {
        accumulate(l, pl, Vec(), false);
        continue;
      }
      std::vector<int> idx(static_cast<std::size_t>(r), 0);
      Vec g(r);
      while (true) {  // odometer over the product rule
        double w = pl;
        for (int d = 0; d < r; ++d) {
          const auto i = static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]);
          g(d) = rule.nodes[i];
          w *= rule.weights[i];
        }
        accumulate(l, w, g, false);
        int d = 0;
        for (; d < r; ++d) {
          if (++idx[static_cast<std::size_t>(d)] < nn) break;
          idx[static_cast<std::size_t>(d)] = 0;
        }
        if (d == r) break;
      }
    }
  } else {
    const int n = quad.n_samples;
    double se_sq = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      if (prior.probs(l) <= 0.0) continue;
      const double pl = prior.probs(l);
      // Per-class stream so both recursions in an equivalence check see
      // identical draws regardless of call order.
      std::mt19937_64 rng(
          stream_key(quad.seed, static_cast<std::uint64_t>(l), StreamRole::Quad));
      std::normal_distribution<double> gauss(0.0, 1.0);
      const Mat fBT_before = m.e_fBT, ffT_before = m.e_ffT;
      diff_sq.setZero();
      Vec g(r);
      const double w = pl / n;
      for (int s = 0; s < n; ++s) {
        for (int d = 0; d < r; ++d) g(d) = gauss(rng);
        accumulate(l, w, g, true);
      }
      // Entrywise variance of (f B^T - f f^T) within this class, for the
      // Monte Carlo error bar of the tower-property identities.
      const Mat class_diff_mean = ((m.e_fBT - fBT_before) - (m.e_ffT - ffT_before)) / pl;
      const Mat var = diff_sq / n - class_diff_mean.cwiseProduct(class_diff_mean);
      se_sq += pl * pl * std::max(0.0, var.maxCoeff()) / n;
    }
    m.mc_se = std::sqrt(se_sq);
  }
  m.e_ffT = symmetrize(m.e_ffT);
  return m;
}

inline MixtureMoments f_moments(const Prior& prior, const Mat& mu_b, const Mat& tau_b,
                                const GaussianQuadSpec& quad,
                                bool want_jacobian = false) {
  const CategoricalPosterior post = make_f_denoiser(prior, mu_b, tau_b);
  return mixture_moments(prior, mu_b, tau_b, post, quad, want_jacobian);
}

/// Covariance of the rescaled Gaussian noise row: sigma^2/(delta alpha(1-alpha)) I.
inline Mat pooled_noise_cov(const NoiseSpec& noise, double delta, double alpha,
                            Eigen::Index L) {
  if (noise.kind == NoiseSpec::Kind::UniformScalar && noise.lambda > 0.0)
    throw std::invalid_argument("pooled state evolution: uniform noise is QGT-only");
  if (noise.is_none()) return Mat();
  const double v = noise.sigma * noise.sigma * rescaled_noise_factor(delta, alpha);
  return v * Mat::Identity(L, L);
}

/// One Bayes-optimal state evolution step. Noiseless: Mu^{k+1} equals the
/// pseudo-inverse of Sigma11 - Sigma21 in closed form. Gaussian noise:
/// Mu^{k+1} = E[dg/dZ] and Tau^{k+1} = E[g g^T], both closed-form
/// linear-Gaussian expectations. The Sigma^{k+1} blocks involving the
/// denoiser f_{k+1} are evaluated with the supplied quadrature.
inline SeState se_step_bayes(const SeState& state, const Prior& prior, double delta,
                             const NoiseSpec& noise, double alpha,
                             const GaussianQuadSpec& quad) {
  const Eigen::Index L = state.L();
  if (state.saturated) {
    SeState next = state;
    ++next.k;
    return next;
  }
  const Mat gap = symmetrize(state.sigma11() - 0.5 * (state.sigma21() + state.sigma12()));
  {
    Eigen::SelfAdjointEigenSolver<Mat> es(gap);
    const double top = es.eigenvalues().maxCoeff();
    const double scale = std::max(max_abs(state.sigma11()), 1e-300);
    if (top <= 1e-12 * scale) {
      // Information gap numerically closed: the recursion has reached the
      // exact-recovery fixed point; carry the state forward.
      SeState next = state;
      ++next.k;
      next.saturated = true;
      return next;
    }
  }

  const Mat noise_cov = pooled_noise_cov(noise, delta, alpha, L);
  const PooledGDenoiser g(state.sigma11(), state.sigma12(), state.sigma21(),
                          state.sigma22(), noise_cov);

  SeState next;
  next.k = state.k + 1;
  next.Mu_B = symmetrize(g.jacobian_z());

  // Tau^{k+1} = W D Cov([Z^k; Ybar]) D^T W^T with D = cond_coef - [I 0].
  Mat cuy(2 * L, 2 * L);
  cuy.topLeftCorner(L, L) = state.sigma22();
  cuy.topRightCorner(L, L) = state.sigma21();
  cuy.bottomLeftCorner(L, L) = state.sigma12();
  cuy.bottomRightCorner(L, L) =
      state.sigma11() + (noise_cov.size() ? noise_cov : Mat::Zero(L, L));
  Mat d = g.cond_coef();
  d.leftCols(L) -= Mat::Identity(L, L);
  next.Tau_B = project_psd(g.gap_pinv() * d * cuy * d.transpose() *
                           g.gap_pinv().transpose());

  const MixtureMoments fm = f_moments(prior, next.Mu_B, next.Tau_B, quad);
  next.Sigma = Mat(2 * L, 2 * L);
  next.Sigma.topLeftCorner(L, L) = Mat(prior.probs.asDiagonal()) / delta;
  next.Sigma.topRightCorner(L, L) = fm.e_fBT.transpose() / delta;
  next.Sigma.bottomLeftCorner(L, L) = fm.e_fBT / delta;
  next.Sigma.bottomRightCorner(L, L) = fm.e_ffT / delta;
  detail::fill_theta_params(next);
  return next;
}

struct SePrediction {
  double mse = 0.0;
  double correlation = 0.0;
  double correlation_quantized = 0.0;
};

inline SePrediction se_predict_metrics(const SeState& state, const Prior& prior,
                                       const GaussianQuadSpec& quad) {
  if (state.k < 1)
    throw std::invalid_argument("se_predict_metrics: needs k >= 1");
  const MixtureMoments fm = f_moments(prior, state.Mu_B, state.Tau_B, quad);
  return SePrediction{fm.mse, fm.corr, fm.corr_hard};
}

/// Effective noise covariances N = M^+ T (M^+)^T for the Theta and B pairs.
inline std::pair<Mat, Mat> effective_noise_cov(const SeState& state) {
  auto one = [](const Mat& mu, const Mat& tau, const char* which) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(mu));
    if (es.eigenvalues().cwiseAbs().maxCoeff() <= 1e-300)
      throw std::runtime_error(std::string("effective_noise_cov: singular Mu_") + which);
    const Mat inv = pinv_psd(mu);
    return Mat(inv * tau * inv.transpose());
  };
  return {one(state.Mu_Theta, state.Tau_Theta, "Theta"),
          one(state.Mu_B, state.Tau_B, "B")};
}

struct SeTrajectory {
  std::vector<SeState> states;       // states[k] has iteration index k
  std::vector<SePrediction> predictions;  // predictions[k] for k >= 1 (index k-1)
};

inline SeTrajectory run_se(const Prior& prior, double delta, const NoiseSpec& noise,
                           double alpha, int iterations, const GaussianQuadSpec& quad,
                           SeInitKind init_kind = SeInitKind::IidCategorical,
                           bool early_stop = false, double early_stop_tol = 1e-10) {
  SeTrajectory traj;
  traj.states.push_back(se_init(prior, delta, init_kind));
  for (int k = 0; k < iterations; ++k) {
    SeState next = se_step_bayes(traj.states.back(), prior, delta, noise, alpha, quad);
    traj.predictions.push_back(next.saturated
                                   ? SePrediction{0.0, 1.0, 1.0}
                                   : se_predict_metrics(next, prior, quad));
    const bool converged =
        early_stop && max_abs(next.Sigma - traj.states.back().Sigma) < early_stop_tol;
    traj.states.push_back(std::move(next));
    if (converged) break;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Reference recursion of the earlier pooled-data AMP analysis, tracked via the
// overlap matrices M, Q. Runs only in the noiseless setting.
// ---------------------------------------------------------------------------

struct AlaouiSeState {
  int k = 1;  // state holds M^k, Q^k; initialized with M^1 = Q^1 = pi pi^T
  Mat M, Q;
  Mat A, R;  // matrices produced while computing this state (empty at init)
};

inline AlaouiSeState alaoui_se_init(const Prior& prior) {
  AlaouiSeState s;
  s.k = 1;
  s.M = prior.probs * prior.probs.transpose();
  s.Q = s.M;
  return s;
}

/// One step of the reference recursion:
///   A = (diag(pi) - M - M^T + Q) / delta,  R = diag(Q 1) - Q,
///   M' = sum_l pi_l E[eta(e_l + A^{1/2} G, R/delta)] e_l^T,
///   Q' = sum_l pi_l E[eta(...) eta(...)^T].
inline AlaouiSeState alaoui_se_step(const AlaouiSeState& state, const Prior& prior,
                                    double delta, const GaussianQuadSpec& quad) {
  const Eigen::Index L = prior.L();
  AlaouiSeState next;
  next.k = state.k + 1;
  next.A = project_psd(
      (Mat(prior.probs.asDiagonal()) - state.M - state.M.transpose() + state.Q) / delta,
      1e-8);
  next.R = Mat((state.Q * Vec::Ones(L)).asDiagonal()) - state.Q;
  const Mat gamma = symmetrize(next.R / delta);

  const CategoricalPosterior eta = make_eta_denoiser(prior, gamma);
  const MixtureMoments em =
      mixture_moments(prior, Mat::Identity(L, L), next.A, eta, quad);
  next.M = em.e_fBT;
  next.Q = em.e_ffT;
  return next;
}

/// Numerical check of the equivalence between the two state evolution
/// recursions (noiseless only). Both sides share the same quadrature object,
/// so the reported discrepancies reflect algebra, not sampling differences.
struct SeEquivalenceReport {
  double max_a_vs_mu_inv = 0.0;       // ||A^{k+1} - (Mu^{k+1})^{-1}||_inf
  double max_r_vs_mu_inv = 0.0;       // ||R^{k+1}/delta - (Mu^{k+1})^{-1}||_inf
  double max_m_vs_fb = 0.0;           // ||M^{k+2} - E[f Bbar^T]||_inf
  double max_q_vs_ff = 0.0;           // ||Q^{k+2} - E[f f^T]||_inf
  double mc_standard_error = 0.0;     // 0 under Gauss-Hermite
  double overall() const {
    return std::max(std::max(max_a_vs_mu_inv, max_r_vs_mu_inv),
                    std::max(max_m_vs_fb, max_q_vs_ff));
  }
};

inline SeEquivalenceReport check_se_equivalence(int iterations, const Prior& prior,
                                                double delta,
                                                const GaussianQuadSpec& quad) {
  SeEquivalenceReport rep;
  SeState ours = se_init(prior, delta, SeInitKind::PriorProduct);
  AlaouiSeState theirs = alaoui_se_init(prior);
  const NoiseSpec noiseless = NoiseSpec::none();
  for (int k = 0; k < iterations; ++k) {
    SeState next = se_step_bayes(ours, prior, delta, noiseless, 0.5, quad);
    if (next.saturated) break;
    AlaouiSeState their_next = alaoui_se_step(theirs, prior, delta, quad);

    const Mat mu_inv = pinv_psd(next.Mu_B);
    rep.max_a_vs_mu_inv = std::max(rep.max_a_vs_mu_inv, max_abs(their_next.A - mu_inv));
    rep.max_r_vs_mu_inv =
        std::max(rep.max_r_vs_mu_inv, max_abs(their_next.R / delta - mu_inv));

    const MixtureMoments fm = f_moments(prior, next.Mu_B, next.Tau_B, quad);
    rep.max_m_vs_fb = std::max(rep.max_m_vs_fb, max_abs(their_next.M - fm.e_fBT));
    rep.max_q_vs_ff = std::max(rep.max_q_vs_ff, max_abs(their_next.Q - fm.e_ffT));
    rep.mc_standard_error = std::max(rep.mc_standard_error, fm.mc_se / delta);

    ours = std::move(next);
    theirs = std::move(their_next);
  }
  return rep;
}

}  // namespace poolamp
