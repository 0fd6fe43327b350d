#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "poolamp/linalg.hpp"

namespace poolamp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.8378770664093454836;

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Backend for the Gaussian expectations inside state evolution.
/// MonteCarlo draws `n_samples` fixed-seed samples; GaussHermite uses a
/// product rule with `n_nodes` points per (non-degenerate) dimension and is
/// practical for L <= 3.
struct GaussianQuadSpec {
  enum class Method { MonteCarlo, GaussHermite };
  Method method = Method::MonteCarlo;
  int n_samples = 200000;
  int n_nodes = 80;
  std::uint64_t seed = 20240531;

  static GaussianQuadSpec monte_carlo(int n = 200000, std::uint64_t seed = 20240531) {
    return GaussianQuadSpec{Method::MonteCarlo, n, 0, seed};
  }
  static GaussianQuadSpec gauss_hermite(int nodes = 80) {
    return GaussianQuadSpec{Method::GaussHermite, 0, nodes, 0};
  }
};

struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Golub-Welsch: nodes/weights from the symmetric tridiagonal Jacobi matrix.
inline QuadRule golub_welsch(const Vec& offdiag, double total_mass) {
  const Eigen::Index n = offdiag.size() + 1;
  Mat j = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    j(i, i + 1) = offdiag(i);
    j(i + 1, i) = offdiag(i);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(j);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("golub_welsch: eigendecomposition failed");
  QuadRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = total_mass * v0 * v0;
  }
  return rule;
}

}  // namespace detail

/// Nodes/weights such that E[h(G)] ~ sum w_i h(x_i) for G ~ N(0,1).
inline QuadRule gauss_hermite_rule(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite_rule: n >= 1 required");
  Vec off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  return detail::golub_welsch(off, 1.0);
}

/// Nodes/weights for integrating h over [a, b]: integral ~ sum w_i h(x_i).
inline QuadRule gauss_legendre_rule(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_rule: n >= 1 required");
  Vec off(n - 1);
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    off(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  QuadRule rule = detail::golub_welsch(off, 2.0);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

}  // namespace poolamp
