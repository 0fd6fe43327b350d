#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "poolamp/gaussian.hpp"
#include "poolamp/linalg.hpp"
#include "poolamp/model.hpp"

namespace poolamp {

/// Posterior mean of a categorical one-hot signal observed through a
/// Gaussian channel: component l of the output is
///   pi_l N(s; m_l, Cov) / sum_r pi_r N(s; m_r, Cov).
/// Computed in log space with per-row max subtraction. Covers both the
/// AMP denoiser f_k (means Mu_B e_l, covariance Tau_B) and the eta function
/// of the reference recursion (means e_l, covariance Gamma). Rank-deficient
/// covariances use the pseudo-inverse quadratic form, which is exact for
/// inputs supported on the non-degenerate subspace.
class CategoricalPosterior {
 public:
  CategoricalPosterior(const Prior& prior, Mat means, const Mat& cov)
      : means_(std::move(means)), cov_pinv_(pinv_psd(cov)) {
    const Eigen::Index L = prior.L();
    if (means_.rows() != L || means_.cols() != L || cov.rows() != L)
      throw std::invalid_argument("CategoricalPosterior: dimension mismatch");
    log_pi_ = Vec(L);
    for (Eigen::Index l = 0; l < L; ++l)
      log_pi_(l) = prior.probs(l) > 0.0 ? std::log(prior.probs(l))
                                        : -std::numeric_limits<double>::infinity();
    jac_right_ = means_.transpose() * cov_pinv_;
  }

  /// Posterior probabilities given input row s; lies on the simplex.
  Vec probs(const Eigen::Ref<const Vec>& s) const {
    const Eigen::Index L = means_.cols();
    Vec logw(L);
    for (Eigen::Index l = 0; l < L; ++l) {
      if (std::isinf(log_pi_(l))) {
        logw(l) = -std::numeric_limits<double>::infinity();
        continue;
      }
      const Vec d = s - means_.col(l);
      logw(l) = log_pi_(l) - 0.5 * d.dot(cov_pinv_ * d);
    }
    const double m = logw.maxCoeff();
    if (!std::isfinite(m)) return mahalanobis_fallback(s);
    Vec w = (logw.array() - m).exp();
    const double total = w.sum();
    if (!(total > 0.0) || !w.allFinite()) return mahalanobis_fallback(s);
    return w / total;
  }

  /// Jacobian of probs with respect to s: (diag(q) - q q^T) M^T Cov^+.
  Mat jacobian(const Eigen::Ref<const Vec>& s) const {
    const Vec q = probs(s);
    return (Mat(q.asDiagonal()) - q * q.transpose()) * jac_right_;
  }

  Mat jacobian_from_probs(const Eigen::Ref<const Vec>& q) const {
    return (Mat(q.asDiagonal()) - q * q.transpose()) * jac_right_;
  }

 private:
  Vec mahalanobis_fallback(const Eigen::Ref<const Vec>& s) const {
    // Extreme underflow: return the one-hot at the closest admissible mean.
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < means_.cols(); ++l) {
      if (std::isinf(log_pi_(l))) continue;
      const Vec d = s - means_.col(l);
      const double dist = d.dot(cov_pinv_ * d);
      if (dist < best_d) { best_d = dist; best = l; }
    }
    Vec out = Vec::Zero(means_.cols());
    out(best) = 1.0;
    return out;
  }

  Mat means_;     // column l = mean of class l
  Mat cov_pinv_;
  Vec log_pi_;
  Mat jac_right_;  // M^T Cov^+
};

inline CategoricalPosterior make_f_denoiser(const Prior& prior, const Mat& mu_b,
                                            const Mat& tau_b) {
  return CategoricalPosterior(prior, mu_b, tau_b);
}

/// eta(z, Gamma) with class means e_l.
inline CategoricalPosterior make_eta_denoiser(const Prior& prior, const Mat& gamma) {
  return CategoricalPosterior(prior, Mat::Identity(gamma.rows(), gamma.cols()), gamma);
}

/// Residual denoiser g_k(u, y) for pooled data, shared by the AMP iteration
/// and the state evolution step. Noiseless form: W (y - u) with
/// W = (Sigma11 - Sigma21)^+. Gaussian-noise form replaces y by the
/// conditional mean E[Z | Z^k = u, Ybar = y] built from the covariance of
/// (Z, Z^k, Ybar).
class PooledGDenoiser {
 public:
  /// noise_cov: covariance of the rescaled noise row Psi_bar (L x L);
  /// empty (0 x 0) means noiseless.
  PooledGDenoiser(const Mat& sigma11, const Mat& sigma12, const Mat& sigma21,
                  const Mat& sigma22, const Mat& noise_cov) {
    const Eigen::Index L = sigma11.rows();
    w_ = pinv_psd(symmetrize(sigma11 - 0.5 * (sigma21 + sigma12)));
    noiseless_ = noise_cov.size() == 0;
    if (noiseless_) {
      cond_coef_ = Mat::Zero(L, 2 * L);
      cond_coef_.rightCols(L) = Mat::Identity(L, L);
    } else {
      // Covariance of the conditioning pair (Z^k, Ybar) and its cross
      // covariance with Z. Ridge-regularized solve; the top-left block can
      // be rank deficient at early iterations.
      Mat cuy(2 * L, 2 * L);
      cuy.topLeftCorner(L, L) = sigma22;
      cuy.topRightCorner(L, L) = sigma21;
      cuy.bottomLeftCorner(L, L) = sigma12;
      cuy.bottomRightCorner(L, L) = sigma11 + noise_cov;
      Mat cross(L, 2 * L);
      cross.leftCols(L) = sigma12;
      cross.rightCols(L) = sigma11;
      const double ridge = 1e-10 * std::max(1.0, max_abs(cuy));
      Mat reg = symmetrize(cuy) + ridge * Mat::Identity(2 * L, 2 * L);
      cond_coef_ = reg.ldlt().solve(cross.transpose()).transpose();
    }
    jac_u_ = w_ * (cond_coef_.leftCols(L) - Mat::Identity(L, L));
  }

  Vec apply(const Eigen::Ref<const Vec>& u, const Eigen::Ref<const Vec>& y) const {
    const Eigen::Index L = u.size();
    Vec cond = cond_coef_.leftCols(L) * u + cond_coef_.rightCols(L) * y;
    return w_ * (cond - u);
  }

  /// Jacobian with respect to u (constant in u).
  const Mat& jacobian_u() const { return jac_u_; }
  /// Jacobian of g~ with respect to z (equals d/dy of g).
  Mat jacobian_z() const { return w_ * cond_coef_.rightCols(cond_coef_.rows()); }
  const Mat& gap_pinv() const { return w_; }
  const Mat& cond_coef() const { return cond_coef_; }

 private:
  Mat w_;
  Mat cond_coef_;  // L x 2L, E[Z | u, y] = cond_coef [u; y]
  Mat jac_u_;
  bool noiseless_ = false;
};

// ---------------------------------------------------------------------------
// Scalar denoisers for quantitative group testing.
// ---------------------------------------------------------------------------

/// Posterior probability that a Bernoulli(pi) signal equals 1 given
/// s = mu * beta + sigma * G:  pi phi((s-mu)/sigma) / (pi phi((s-mu)/sigma)
/// + (1-pi) phi(s/sigma)). sigma = 0 falls back to nearest-mean.
inline double qgt_denoise_f(double s, double mu, double sigma, double pi) {
  if (pi <= 0.0) return 0.0;
  if (pi >= 1.0) return 1.0;
  if (sigma == 0.0) {
    const double mid = 0.5 * mu;
    if (s == mid) return 0.5;
    return (mu > 0) == (s > mid) ? 1.0 : 0.0;
  }
  if (sigma < 0.0) throw std::invalid_argument("qgt_denoise_f: sigma >= 0 required");
  // logit(q) = logit(pi) + (2 s mu - mu^2) / (2 sigma^2)
  const double logit =
      std::log(pi / (1.0 - pi)) + (2.0 * s * mu - mu * mu) / (2.0 * sigma * sigma);
  if (logit > 0) {
    const double e = std::exp(-logit);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

/// d/ds of qgt_denoise_f: q (1 - q) mu / sigma^2.
inline double qgt_denoise_f_deriv(double s, double mu, double sigma, double pi) {
  if (sigma <= 0.0 || pi <= 0.0 || pi >= 1.0) return 0.0;
  const double q = qgt_denoise_f(s, mu, sigma, pi);
  return q * (1.0 - q) * mu / (sigma * sigma);
}

/// Scalar residual denoiser for QGT. Noiseless: (y - u) / gap. Uniform
/// noise: (E[Z | Z^k = u, Ybar = y] - u) / gap, where the conditional mean
/// is a ratio of one-dimensional integrals over the noise variable,
/// evaluated by composite Simpson quadrature on [-lambda_tilde, lambda_tilde]
/// (narrowed to the effective support of the Gaussian kernel when that is
/// much smaller than the interval).
class QgtGDenoiser {
 public:
  struct Eval {
    double g = 0.0;        // denoiser value
    double deriv_u = 0.0;  // d g / d u
    double deriv_y = 0.0;  // d g / d y
  };

  /// sigma: 2x2 covariance of (Z, Z^k); lambda_tilde <= 0 means noiseless.
  QgtGDenoiser(const Mat& sigma, double lambda_tilde, int n_nodes = 201)
      : lambda_tilde_(lambda_tilde), n_nodes_(n_nodes | 1) {
    if (sigma.rows() != 2 || sigma.cols() != 2)
      throw std::invalid_argument("QgtGDenoiser: Sigma must be 2x2");
    gap_ = sigma(0, 0) - 0.5 * (sigma(0, 1) + sigma(1, 0));
    if (gap_ <= 0.0)
      throw std::runtime_error("QgtGDenoiser: information gap Sigma11 - Sigma21 <= 0");
    const double det = sigma(0, 0) * sigma(1, 1) - sigma(0, 1) * sigma(1, 0);
    if (det <= 0.0) {
      // Degenerate joint (e.g. at convergence); fall back to noiseless form.
      degenerate_ = true;
      a_ = b_ = c_ = 0.0;
    } else {
      a_ = sigma(1, 1) / det;
      b_ = -sigma(0, 1) / det;
      c_ = sigma(0, 0) / det;
    }
  }

  double gap() const { return gap_; }

  Eval eval(double u, double y) const {
    Eval out;
    if (lambda_tilde_ <= 0.0 || degenerate_) {
      out.g = (y - u) / gap_;
      out.deriv_u = -1.0 / gap_;
      out.deriv_y = 1.0 / gap_;
      return out;
    }
    // Posterior over the noise value psi is a Gaussian with mean psi_star
    // and variance 1/a, truncated to [-lt, lt].
    const double psi_star = y + (b_ / a_) * u;
    const double sd = 1.0 / std::sqrt(a_);
    double lo = std::max(-lambda_tilde_, psi_star - 10.0 * sd);
    double hi = std::min(lambda_tilde_, psi_star + 10.0 * sd);
    if (lo >= hi) {
      // Kernel centred outside the interval: keep the boundary segment
      // nearest to psi_star, where all the remaining mass sits.
      const double width = std::min(2.0 * lambda_tilde_, 20.0 * sd);
      if (psi_star > 0) { hi = lambda_tilde_; lo = lambda_tilde_ - width; }
      else              { lo = -lambda_tilde_; hi = -lambda_tilde_ + width; }
    }
    const double h = (hi - lo) / (n_nodes_ - 1);

    // Composite Simpson accumulation of w, psi w, psi^2 w in log space.
    double max_logw = -std::numeric_limits<double>::infinity();
    std::vector<double> logw(static_cast<std::size_t>(n_nodes_));
    for (int i = 0; i < n_nodes_; ++i) {
      const double psi = lo + h * i;
      const double ry = y - psi;
      logw[static_cast<std::size_t>(i)] =
          -0.5 * (a_ * ry * ry + 2.0 * b_ * ry * u + c_ * u * u);
      max_logw = std::max(max_logw, logw[static_cast<std::size_t>(i)]);
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n_nodes_; ++i) {
      const double psi = lo + h * i;
      double coef = (i == 0 || i == n_nodes_ - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      const double w = coef * std::exp(logw[static_cast<std::size_t>(i)] - max_logw);
      s0 += w;
      s1 += w * psi;
      s2 += w * psi * psi;
    }
    if (!(s0 > 0.0) || !std::isfinite(s0))
      throw std::runtime_error(
          "QgtGDenoiser: noise integral vanished (u=" + std::to_string(u) +
          ", y=" + std::to_string(y) + ")");
    const double mean_psi = s1 / s0;
    const double var_psi = std::max(s2 / s0 - mean_psi * mean_psi, 0.0);
    const double cond_mean = y - mean_psi;
    out.g = (cond_mean - u) / gap_;
    out.deriv_u = (-b_ * var_psi - 1.0) / gap_;
    out.deriv_y = (1.0 - a_ * var_psi) / gap_;
    return out;
  }

  double apply(double u, double y) const { return eval(u, y).g; }

 private:
  double gap_ = 0.0;
  double a_ = 0.0, b_ = 0.0, c_ = 0.0;  // entries of Sigma^{-1}
  double lambda_tilde_ = 0.0;
  int n_nodes_ = 201;
  bool degenerate_ = false;
};

/// Effective noise magnitude after centering/rescaling: Gaussian sigma^2
/// becomes sigma^2 / (delta alpha (1-alpha)); uniform half-width lambda
/// becomes lambda / sqrt(delta alpha (1-alpha)).
inline double rescaled_noise_factor(double delta, double alpha) {
  return 1.0 / (delta * alpha * (1.0 - alpha));
}

}  // namespace poolamp
