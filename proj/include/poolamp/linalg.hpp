#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace poolamp {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

/// Eigendecomposition-based pseudo-inverse of a symmetric PSD matrix.
/// Eigenvalues below `cutoff * max_eig` are treated as zero. The simplex
/// structure of one-hot signals makes several SE matrices rank deficient
/// (null direction 1_L), so pseudo-inversion is the normal path, not an
/// exceptional one. Records the cutoff actually applied via `applied_cutoff`.
inline Mat pinv_psd(const Mat& a, double cutoff = 1e-10,
                    double* applied_cutoff = nullptr) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("pinv_psd: eigendecomposition failed");
  const Vec& ev = es.eigenvalues();
  const double thresh = cutoff * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Vec inv = Vec::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > thresh) inv(i) = 1.0 / ev(i);
  if (applied_cutoff) *applied_cutoff = thresh;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric PSD square root with eigenvalue clipping at 0 (tolerance 1e-12).
inline Mat sqrt_psd(const Mat& a, double clip_tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("sqrt_psd: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -clip_tol * scale && ev(i) < -clip_tol)
      throw std::runtime_error("sqrt_psd: matrix has negative eigenvalue " +
                               std::to_string(ev(i)));
    ev(i) = std::max(ev(i), 0.0);
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

/// Symmetrize and clip tiny negative eigenvalues (>= -tol); larger
/// violations indicate a genuinely broken state and raise.
inline Mat project_psd(const Mat& a, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("project_psd: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol)
      throw std::runtime_error("project_psd: eigenvalue " +
                               std::to_string(ev(i)) + " below -" +
                               std::to_string(tol));
    ev(i) = std::max(ev(i), 0.0);
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double max_abs(const Mat& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Largest eigenvalue of X^T X by power iteration (for solver step sizes).
inline double sq_op_norm(const Eigen::Ref<const Mat>& x, int iters = 60) {
  if (x.size() == 0) return 0.0;
  Vec v = Vec::Ones(x.cols()).normalized();
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vec w = x.transpose() * (x * v);
    lambda = w.norm();
    if (lambda <= 0) return 0.0;
    v = w / lambda;
  }
  return lambda;
}

}  // namespace poolamp
