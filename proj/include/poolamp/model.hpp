#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "poolamp/linalg.hpp"
#include "poolamp/rng.hpp"

namespace poolamp {

/// Categorical distribution over L >= 2 categories.
struct Prior {
  Vec probs;

  explicit Prior(Vec p) : probs(std::move(p)) { validate(); }
  Prior(std::initializer_list<double> p) : probs(Eigen::Map<const Vec>(p.begin(), static_cast<Eigen::Index>(p.size()))) {
    validate();
  }

  Eigen::Index L() const { return probs.size(); }

  void validate() const {
    if (probs.size() < 2)
      throw std::invalid_argument("Prior: need at least 2 categories");
    if ((probs.array() < 0.0).any())
      throw std::invalid_argument("Prior: negative probability");
    if (std::abs(probs.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("Prior: probabilities must sum to 1, got " +
                                  std::to_string(probs.sum()));
  }
};

/// p x L matrix with one-hot rows: row j = e_{category(j)}.
struct SignalMatrix {
  Mat rows;  // p x L

  Eigen::Index p() const { return rows.rows(); }
  Eigen::Index L() const { return rows.cols(); }

  void validate() const {
    for (Eigen::Index j = 0; j < rows.rows(); ++j) {
      int ones = 0;
      for (Eigen::Index l = 0; l < rows.cols(); ++l) {
        const double v = rows(j, l);
        if (v == 1.0)
          ++ones;
        else if (v != 0.0)
          throw std::invalid_argument("SignalMatrix: entry not in {0,1}");
      }
      if (ones != 1)
        throw std::invalid_argument("SignalMatrix: row " + std::to_string(j) +
                                    " is not one-hot");
    }
  }
};

struct ProportionVector {
  Vec pi_hat;
};

/// Raw Bernoulli design X and its centered/rescaled counterpart
/// tX_ij = (X_ij - alpha) / sqrt(n alpha (1-alpha)).
struct DesignPair {
  Mat X;   // n x p, binary
  Mat tX;  // n x p
  double alpha = 0.5;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
};

struct NoiseSpec {
  enum class Kind { None, GaussianIsotropic, UniformScalar };
  Kind kind = Kind::None;
  double sigma = 0.0;   // Psi_i ~ N(0, p sigma^2 I_L)
  double lambda = 0.0;  // Psi_i ~ Uniform[-lambda sqrt(p), lambda sqrt(p)], L = 1 only

  static NoiseSpec none() { return NoiseSpec{}; }
  static NoiseSpec gaussian(double sigma) {
    if (sigma < 0) throw std::invalid_argument("NoiseSpec: sigma >= 0 required");
    return NoiseSpec{Kind::GaussianIsotropic, sigma, 0.0};
  }
  static NoiseSpec uniform(double lambda) {
    if (lambda < 0) throw std::invalid_argument("NoiseSpec: lambda >= 0 required");
    return NoiseSpec{Kind::UniformScalar, 0.0, lambda};
  }
  bool is_none() const {
    return kind == Kind::None ||
           (kind == Kind::GaussianIsotropic && sigma == 0.0) ||
           (kind == Kind::UniformScalar && lambda == 0.0);
  }
};

struct Observations {
  Mat Y;        // n x L raw test outcomes
  Mat tY;       // n x L centered/rescaled
  Vec pi_used;  // proportions used in centering
};

inline ProportionVector empirical_proportions(const SignalMatrix& b) {
  ProportionVector out;
  out.pi_hat = b.rows.colwise().sum().transpose() / static_cast<double>(b.p());
  return out;
}

/// Draw p one-hot rows i.i.d. from the prior. Deterministic given seed.
inline SignalMatrix gen_signal(Eigen::Index p, const Prior& prior,
                               std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("gen_signal: p >= 1 required");
  prior.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index L = prior.L();
  SignalMatrix b;
  b.rows = Mat::Zero(p, L);
  for (Eigen::Index j = 0; j < p; ++j) {
    double u = unif(rng), acc = 0.0;
    Eigen::Index cat = L - 1;
    for (Eigen::Index l = 0; l < L; ++l) {
      acc += prior.probs(l);
      if (u <= acc) { cat = l; break; }
    }
    b.rows(j, cat) = 1.0;
  }
  return b;
}

inline DesignPair gen_design(Eigen::Index n, Eigen::Index p, double alpha,
                             std::uint64_t seed) {
  if (n < 1 || p < 1) throw std::invalid_argument("gen_design: n, p >= 1 required");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("gen_design: alpha must lie in (0,1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  DesignPair d;
  d.alpha = alpha;
  d.n = n;
  d.p = p;
  d.X = Mat(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) d.X(i, j) = unif(rng) < alpha ? 1.0 : 0.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n) * alpha * (1.0 - alpha));
  d.tX = (d.X.array() - alpha).matrix() * scale;
  return d;
}

/// Moment diagnostics against the generalized-white-noise conditions:
/// mean ~ 0, n * var ~ 1, p * E|tX|^3 small.
struct WhiteNoiseReport {
  double mean = 0.0;
  double n_times_var = 0.0;
  double p_times_abs3 = 0.0;
  bool mean_ok = false;
  bool var_ok = false;
  bool third_moment_ok = false;
  bool pass() const { return mean_ok && var_ok && third_moment_ok; }
};

inline WhiteNoiseReport check_white_noise(const Mat& tX, double mean_tol = 1e-2,
                                          double var_rel_tol = 0.05,
                                          double third_moment_tol = 0.2) {
  if (!tX.allFinite()) throw std::invalid_argument("check_white_noise: non-finite entries");
  const auto n = tX.rows();
  const double count = static_cast<double>(tX.size());
  WhiteNoiseReport r;
  r.mean = tX.sum() / count;
  const double var = (tX.array() - r.mean).square().sum() / count;
  r.n_times_var = static_cast<double>(n) * var;
  r.p_times_abs3 = static_cast<double>(tX.cols()) * tX.array().abs().cube().sum() / count;
  r.mean_ok = std::abs(r.mean) <= mean_tol;
  r.var_ok = std::abs(r.n_times_var - 1.0) <= var_rel_tol;
  r.third_moment_ok = r.p_times_abs3 <= third_moment_tol;
  return r;
}

/// Y = X B + Psi with Psi drawn per the noise spec (not rounded to integers).
inline Mat forward(const SignalMatrix& b, const DesignPair& design,
                   const NoiseSpec& noise, std::uint64_t seed) {
  if (design.p != b.p())
    throw std::invalid_argument("forward: design/signal dimension mismatch");
  Mat y = design.X * b.rows;
  const double p = static_cast<double>(b.p());
  if (noise.kind == NoiseSpec::Kind::GaussianIsotropic && noise.sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise.sigma * std::sqrt(p));
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index l = 0; l < y.cols(); ++l) y(i, l) += gauss(rng);
  } else if (noise.kind == NoiseSpec::Kind::UniformScalar && noise.lambda > 0.0) {
    if (b.L() != 1)
      throw std::invalid_argument("forward: uniform noise requires L = 1");
    std::mt19937_64 rng(seed);
    const double half = noise.lambda * std::sqrt(p);
    std::uniform_real_distribution<double> unif(-half, half);
    for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, 0) += unif(rng);
  }
  return y;
}

/// tY_i = (Y_i - alpha p pi_used) / sqrt(n alpha (1-alpha)). With the exact
/// empirical proportions and no noise this reproduces tX B to round-off.
inline Observations rescale(const Mat& y, const DesignPair& design,
                            const ProportionVector& pi_used) {
  if (std::abs(pi_used.pi_hat.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("rescale: pi_used must sum to 1");
  if (y.rows() != design.n)
    throw std::invalid_argument("rescale: observation/design row mismatch");
  Observations obs;
  obs.Y = y;
  obs.pi_used = pi_used.pi_hat;
  const double p = static_cast<double>(design.p);
  const double scale =
      1.0 / std::sqrt(static_cast<double>(design.n) * design.alpha * (1.0 - design.alpha));
  obs.tY = (y.rowwise() - (design.alpha * p * pi_used.pi_hat).transpose()) * scale;
  return obs;
}

/// Quantitative group testing instance: binary signal, shared Bernoulli
/// design, raw and rescaled observations (exact empirical pi_hat centering).
struct QgtInstance {
  Vec beta;
  DesignPair design;
  Vec y;
  Vec ty;
  double pi_hat = 0.0;
};

inline QgtInstance gen_qgt_instance(Eigen::Index p, double pi, double alpha,
                                    Eigen::Index n, const NoiseSpec& noise,
                                    std::uint64_t seed) {
  if (!(pi > 0.0 && pi < 1.0))
    throw std::invalid_argument("gen_qgt_instance: pi must lie in (0,1)");
  if (noise.kind == NoiseSpec::Kind::GaussianIsotropic && noise.sigma > 0.0)
    throw std::invalid_argument("gen_qgt_instance: use uniform or no noise for QGT");
  QgtInstance inst;
  inst.design = gen_design(n, p, alpha, stream_key(seed, 0, StreamRole::Design));
  std::mt19937_64 rng(stream_key(seed, 0, StreamRole::Signal));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  inst.beta = Vec(p);
  for (Eigen::Index j = 0; j < p; ++j) inst.beta(j) = unif(rng) < pi ? 1.0 : 0.0;
  inst.pi_hat = inst.beta.sum() / static_cast<double>(p);

  inst.y = inst.design.X * inst.beta;
  if (noise.kind == NoiseSpec::Kind::UniformScalar && noise.lambda > 0.0) {
    std::mt19937_64 noise_rng(stream_key(seed, 0, StreamRole::Noise));
    const double half = noise.lambda * std::sqrt(static_cast<double>(p));
    std::uniform_real_distribution<double> u(-half, half);
    for (Eigen::Index i = 0; i < n; ++i) inst.y(i) += u(noise_rng);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n) * alpha * (1.0 - alpha));
  inst.ty = (inst.y.array() - alpha * static_cast<double>(p) * inst.pi_hat) * scale;
  return inst;
}

}  // namespace poolamp
