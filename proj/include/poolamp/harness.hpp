#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "poolamp/amp_pooled.hpp"
#include "poolamp/amp_qgt.hpp"
#include "poolamp/baselines.hpp"
#include "poolamp/io.hpp"
#include "poolamp/model.hpp"
#include "poolamp/se_qgt.hpp"
#include "poolamp/state_evolution.hpp"

namespace poolamp {

struct ExperimentConfig {
  enum class Problem { Pooled, Qgt };

  Problem problem = Problem::Pooled;
  Eigen::Index p = 500;
  std::vector<double> delta_grid;
  Vec prior;        // pooled
  double pi = 0.1;  // qgt
  double alpha = 0.5;
  NoiseSpec::Kind noise_kind = NoiseSpec::Kind::None;
  std::vector<double> noise_grid = {0.0};  // sigma or lambda levels
  int iterations = 10;
  int n_trials = 10;
  std::vector<std::string> methods = {"amp"};
  std::vector<double> zeta_grid;
  double mismatch_epsilon = 0.0;
  std::uint64_t master_seed = 1;
  std::string output_path = "results";
  GaussianQuadSpec quad = GaussianQuadSpec::gauss_hermite(60);
  SolverConfig solver;

  void validate() const {
    if (p < 2) throw std::invalid_argument("config: p >= 2 required");
    if (delta_grid.empty()) throw std::invalid_argument("config: empty delta grid");
    if (n_trials < 1) throw std::invalid_argument("config: n_trials >= 1 required");
    if (iterations < 1) throw std::invalid_argument("config: iterations >= 1 required");
    if (noise_grid.empty()) throw std::invalid_argument("config: empty noise grid");
    for (double d : delta_grid) {
      const auto n = static_cast<Eigen::Index>(std::llround(d * static_cast<double>(p)));
      if (n < 1)
        throw std::invalid_argument("config: delta " + std::to_string(d) +
                                    " gives n = round(delta p) < 1");
    }
    if (problem == Problem::Pooled) {
      Prior(prior).validate();
      if (noise_kind == NoiseSpec::Kind::UniformScalar)
        throw std::invalid_argument("config: uniform noise is QGT-only");
    } else {
      if (!(pi > 0.0 && pi < 1.0))
        throw std::invalid_argument("config: pi must lie in (0,1)");
      if (noise_kind == NoiseSpec::Kind::GaussianIsotropic)
        throw std::invalid_argument("config: Gaussian noise is pooled-only");
    }
    for (const std::string& m : methods) {
      const bool pooled_m = m == "amp" || m == "se-only" || m == "iht" ||
                            m == "lp" || m == "cvx";
      const bool qgt_m = m == "amp" || m == "se-only" || m == "lp" || m == "bpdn";
      if (problem == Problem::Pooled ? !pooled_m : !qgt_m)
        throw std::invalid_argument("config: method '" + m + "' not valid for " +
                                    (problem == Problem::Pooled ? "pooled" : "qgt"));
      if (m == "cvx" && (noise_kind != NoiseSpec::Kind::GaussianIsotropic))
        throw std::invalid_argument("config: cvx requires Gaussian noise");
    }
    if (problem == Problem::Qgt && zeta_grid.empty() &&
        (std::find(methods.begin(), methods.end(), std::string("amp")) != methods.end()))
      ;  // fpr/fnr rows are simply skipped without a zeta grid
  }

  NoiseSpec noise_at(double level) const {
    switch (noise_kind) {
      case NoiseSpec::Kind::None: return NoiseSpec::none();
      case NoiseSpec::Kind::GaussianIsotropic:
        return level > 0 ? NoiseSpec::gaussian(level) : NoiseSpec::none();
      case NoiseSpec::Kind::UniformScalar:
        return level > 0 ? NoiseSpec::uniform(level) : NoiseSpec::none();
    }
    return NoiseSpec::none();
  }
};

struct ResultRow {
  std::string method;
  double delta = 0.0;
  double noise_level = 0.0;
  std::optional<double> zeta;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<double> theory;
  int n_trials = 0;
  double runtime_seconds = 0.0;  // in-memory only; excluded from emitted files
};

using ResultTable = std::vector<ResultRow>;

// ---------------------------------------------------------------------------
// Emitters. Column order is fixed; floats use 9 significant digits; runtime
// stays out of the files so identical configs give identical bytes.
// ---------------------------------------------------------------------------

inline std::string table_to_csv(const ResultTable& table) {
  std::string out = "method,delta,noise,zeta,metric,mean,std,theory,trials\n";
  for (const ResultRow& r : table) {
    out += r.method + "," + format_g9(r.delta) + "," + format_g9(r.noise_level) + ",";
    if (r.zeta) out += format_g9(*r.zeta);
    out += "," + r.metric + "," + format_g9(r.mean) + "," + format_g9(r.stddev) + ",";
    if (r.theory) out += format_g9(*r.theory);
    out += "," + std::to_string(r.n_trials) + "\n";
  }
  return out;
}

inline json table_to_json(const ResultTable& table) {
  json rows = json::array();
  for (const ResultRow& r : table) {
    json j;
    j["method"] = r.method;
    j["delta"] = r.delta;
    j["noise"] = r.noise_level;
    j["zeta"] = r.zeta ? json(*r.zeta) : json(nullptr);
    j["metric"] = r.metric;
    j["mean"] = r.mean;
    j["std"] = r.stddev;
    j["theory"] = r.theory ? json(*r.theory) : json(nullptr);
    j["trials"] = r.n_trials;
    rows.push_back(std::move(j));
  }
  return rows;
}

inline ResultTable table_from_json(const json& rows) {
  ResultTable table;
  for (const json& j : rows) {
    ResultRow r;
    r.method = j.at("method").get<std::string>();
    r.delta = j.at("delta").get<double>();
    r.noise_level = j.at("noise").get<double>();
    if (!j.at("zeta").is_null()) r.zeta = j.at("zeta").get<double>();
    r.metric = j.at("metric").get<std::string>();
    r.mean = j.at("mean").get<double>();
    r.stddev = j.at("std").get<double>();
    if (!j.at("theory").is_null()) r.theory = j.at("theory").get<double>();
    r.n_trials = j.at("trials").get<int>();
    table.push_back(std::move(r));
  }
  return table;
}

inline void emit_csv(const ResultTable& table, const std::string& path) {
  write_text_file(path, table_to_csv(table));
}

inline void emit_json(const ResultTable& table, const std::string& path) {
  write_text_file(path, table_to_json(table).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Runner internals.
// ---------------------------------------------------------------------------

namespace detail {

inline void parallel_for(std::size_t n_tasks,
                         const std::function<void(std::size_t)>& fn, int threads) {
  if (threads <= 1 || n_tasks <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(threads, static_cast<int>(n_tasks));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

// Pairwise-stable reduction over the valid (finite) per-trial values.
inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate agg;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++agg.count;
    }
  if (agg.count == 0) return agg;
  agg.mean = sum / agg.count;
  if (agg.count > 1) {
    double ss = 0.0;
    for (double v : values)
      if (std::isfinite(v)) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(ss / (agg.count - 1));
  }
  return agg;
}

// Per-trial metric values for one (grid point, method); NaN marks a failed
// or undefined trial.
struct MetricSlot {
  std::string metric;
  std::optional<double> zeta;
  std::optional<double> theory;
  std::vector<double> values;
};

}  // namespace detail

/// Scaling diagnostics for the rescaled observations: mean |tY| should be
/// flat in p under the exact proportions and grow like sqrt(p) under an
/// epsilon-shifted estimate; the exact-proportions column means should be 0
/// within noise.
struct ScalingReport {
  struct Point {
    Eigen::Index p = 0;
    double mean_abs_exact = 0.0;
    double mean_abs_shifted = 0.0;
    double col1_mean_exact = 0.0;      // column-1 mean under exact proportions
    double col1_se_exact = 0.0;        // standard error of that mean
    double col1_mean_abs_shifted = 0.0;
  };
  std::vector<Point> points;  // p = 500 and p = 2000
  double exact_ratio = 0.0;   // mean|tY|(p=2000) / mean|tY|(p=500)
  double shifted_ratio = 0.0;
};

inline ScalingReport scaling_diagnostic(const ExperimentConfig& cfg) {
  if (cfg.problem != ExperimentConfig::Problem::Pooled)
    throw std::invalid_argument("scaling_diagnostic: pooled problem required");
  const Prior prior(cfg.prior);
  const double delta = cfg.delta_grid.front();
  const double eps = cfg.mismatch_epsilon > 0 ? cfg.mismatch_epsilon : 0.05;
  ScalingReport rep;
  for (Eigen::Index p : {Eigen::Index(500), Eigen::Index(2000)}) {
    const auto n = static_cast<Eigen::Index>(std::llround(delta * static_cast<double>(p)));
    ScalingReport::Point pt;
    pt.p = p;
    double col1_sum = 0.0, col1_sumsq = 0.0;
    Eigen::Index col1_count = 0;
    for (int t = 0; t < cfg.n_trials; ++t) {
      const auto trial = static_cast<std::uint64_t>(t) + (p == 500 ? 0u : 1000u);
      const SignalMatrix b =
          gen_signal(p, prior, stream_key(cfg.master_seed, trial, StreamRole::Signal));
      const DesignPair design =
          gen_design(n, p, cfg.alpha, stream_key(cfg.master_seed, trial, StreamRole::Design));
      const Mat y = forward(b, design, NoiseSpec::none(),
                            stream_key(cfg.master_seed, trial, StreamRole::Noise));
      const ProportionVector exact = empirical_proportions(b);
      const Observations obs_exact = rescale(y, design, exact);
      Vec shifted = exact.pi_hat;
      shifted(0) += eps;
      shifted(1) -= eps;
      const Observations obs_shift = rescale(y, design, ProportionVector{shifted});
      pt.mean_abs_exact += obs_exact.tY.cwiseAbs().mean() / cfg.n_trials;
      pt.mean_abs_shifted += obs_shift.tY.cwiseAbs().mean() / cfg.n_trials;
      pt.col1_mean_abs_shifted += obs_shift.tY.col(0).cwiseAbs().mean() / cfg.n_trials;
      col1_sum += obs_exact.tY.col(0).sum();
      col1_sumsq += obs_exact.tY.col(0).squaredNorm();
      col1_count += n;
    }
    pt.col1_mean_exact = col1_sum / static_cast<double>(col1_count);
    const double var =
        col1_sumsq / static_cast<double>(col1_count) - pt.col1_mean_exact * pt.col1_mean_exact;
    pt.col1_se_exact = std::sqrt(std::max(var, 0.0) / static_cast<double>(col1_count));
    rep.points.push_back(pt);
  }
  rep.exact_ratio = rep.points[1].mean_abs_exact / rep.points[0].mean_abs_exact;
  rep.shifted_ratio =
      rep.points[1].col1_mean_abs_shifted / rep.points[0].col1_mean_abs_shifted;
  return rep;
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

inline ResultTable run_experiment(const ExperimentConfig& cfg, int threads = 1) {
  cfg.validate();
  const bool pooled = cfg.problem == ExperimentConfig::Problem::Pooled;
  const std::size_t n_deltas = cfg.delta_grid.size();
  const std::size_t n_noise = cfg.noise_grid.size();
  const std::size_t n_points = n_deltas * n_noise;

  struct PointTheory {
    SePrediction pooled_pred;
    double qgt_sq_corr = 0.0;
    double qgt_mu = 0.0, qgt_sigma = 0.0;
    bool qgt_saturated = false;
  };
  std::vector<PointTheory> theory(n_points);
  const bool need_theory =
      std::find(cfg.methods.begin(), cfg.methods.end(), "amp") != cfg.methods.end() ||
      std::find(cfg.methods.begin(), cfg.methods.end(), "se-only") != cfg.methods.end();

  auto point_delta = [&](std::size_t pt) { return cfg.delta_grid[pt / n_noise]; };
  auto point_noise = [&](std::size_t pt) { return cfg.noise_grid[pt % n_noise]; };

  if (need_theory) {
    detail::parallel_for(
        n_points,
        [&](std::size_t pt) {
          const double delta = point_delta(pt);
          const NoiseSpec noise = cfg.noise_at(point_noise(pt));
          if (pooled) {
            const SeTrajectory traj =
                run_se(Prior(cfg.prior), delta, noise, cfg.alpha, cfg.iterations,
                       cfg.quad, SeInitKind::IidCategorical);
            theory[pt].pooled_pred = traj.predictions.back();
          } else {
            const QgtSeTrajectory traj = run_qgt_se(cfg.pi, delta, noise, cfg.alpha,
                                                    cfg.iterations, cfg.quad);
            theory[pt].qgt_sq_corr = traj.sq_corr.back();
            const QgtSeState& last = traj.states.back();
            theory[pt].qgt_mu = last.mu_beta;
            theory[pt].qgt_sigma = last.sigma_beta;
            theory[pt].qgt_saturated = last.saturated;
          }
        },
        threads);
  }

  // Metric slots per (point, method): filled by trial tasks, reduced in a
  // fixed order afterwards so the output is thread-count independent.
  struct TrialValues {
    std::vector<double> values;  // one entry per metric slot
    bool failed = false;
    std::string error;
  };

  ResultTable table;
  std::atomic<int> failures{0};

  for (std::size_t pt = 0; pt < n_points; ++pt) {
    const double delta = point_delta(pt);
    const double noise_level = point_noise(pt);
    const NoiseSpec noise = cfg.noise_at(noise_level);
    const auto n = static_cast<Eigen::Index>(
        std::llround(delta * static_cast<double>(cfg.p)));

    for (const std::string& method : cfg.methods) {
      // Describe this method's metric slots (names / zetas / theory).
      std::vector<detail::MetricSlot> slots;
      auto add_slot = [&](const std::string& metric, std::optional<double> zeta,
                          std::optional<double> th) {
        slots.push_back({metric, zeta, th, std::vector<double>()});
      };
      const PointTheory& th = theory[pt];
      if (pooled) {
        if (method == "se-only" || method == "amp") {
          const std::optional<double> tc = need_theory
              ? std::optional<double>(th.pooled_pred.correlation) : std::nullopt;
          const std::optional<double> tq = need_theory
              ? std::optional<double>(th.pooled_pred.correlation_quantized) : std::nullopt;
          const std::optional<double> tm = need_theory
              ? std::optional<double>(th.pooled_pred.mse) : std::nullopt;
          add_slot("correlation", std::nullopt, tc);
          add_slot("correlation_quantized", std::nullopt, tq);
          add_slot("mse", std::nullopt, tm);
        } else {
          add_slot("correlation", std::nullopt, std::nullopt);
          add_slot("correlation_quantized", std::nullopt, std::nullopt);
          add_slot("mse", std::nullopt, std::nullopt);
        }
      } else {
        if (method == "se-only" || method == "amp") {
          add_slot("sq_corr", std::nullopt,
                   need_theory ? std::optional<double>(th.qgt_sq_corr) : std::nullopt);
          for (double z : cfg.zeta_grid) {
            std::optional<double> tf, tn;
            if (need_theory && th.qgt_sigma > 0.0) {
              auto [fpr, fnr] = limiting_fpr_fnr(th.qgt_mu, th.qgt_sigma, z);
              tf = fpr;
              tn = fnr;
            } else if (need_theory && th.qgt_saturated) {
              tf = 0.0;
              tn = 0.0;
            }
            add_slot("fpr", z, tf);
            add_slot("fnr", z, tn);
          }
        } else {
          add_slot("sq_corr", std::nullopt, std::nullopt);
          for (double z : cfg.zeta_grid) {
            add_slot("fpr", z, std::nullopt);
            add_slot("fnr", z, std::nullopt);
          }
        }
      }

      if (method == "se-only") {
        for (const auto& slot : slots)
          table.push_back(ResultRow{"se", delta, noise_level, slot.zeta, slot.metric,
                                    slot.theory.value_or(0.0), 0.0, slot.theory, 0,
                                    0.0});
        continue;
      }

      std::vector<TrialValues> trials(static_cast<std::size_t>(cfg.n_trials));
      const auto t0 = std::chrono::steady_clock::now();
      detail::parallel_for(
          static_cast<std::size_t>(cfg.n_trials),
          [&](std::size_t t) {
            TrialValues& out = trials[t];
            out.values.assign(slots.size(),
                              std::numeric_limits<double>::quiet_NaN());
            const std::uint64_t trial_key =
                pt * static_cast<std::size_t>(cfg.n_trials) + t;
            try {
              if (pooled) {
                const Prior prior(cfg.prior);
                const SignalMatrix b = gen_signal(
                    cfg.p, prior, stream_key(cfg.master_seed, trial_key, StreamRole::Signal));
                const DesignPair design = gen_design(
                    n, cfg.p, cfg.alpha,
                    stream_key(cfg.master_seed, trial_key, StreamRole::Design));
                const Mat y = forward(
                    b, design, noise, stream_key(cfg.master_seed, trial_key, StreamRole::Noise));
                const ProportionVector pi_hat = empirical_proportions(b);
                Vec pi_used = pi_hat.pi_hat;
                if (cfg.mismatch_epsilon != 0.0) {
                  pi_used(0) += cfg.mismatch_epsilon;
                  pi_used(1) -= cfg.mismatch_epsilon;
                }
                const Observations obs = rescale(y, design, ProportionVector{pi_used});

                Mat estimate;        // relaxed / posterior-mean estimate
                Mat estimate_hard;   // one-hot estimate
                if (method == "amp") {
                  AmpConfig acfg;
                  acfg.iterations = cfg.iterations;
                  acfg.quad = cfg.quad;
                  acfg.init_seed =
                      stream_key(cfg.master_seed, trial_key, StreamRole::Init);
                  acfg.quantize_final = true;
                  const AmpTrace trace = run_amp(obs, design, prior, noise, acfg, &b);
                  estimate = trace.b_hat.back();
                  estimate_hard = trace.b_hat_final;
                } else if (method == "iht") {
                  std::vector<Eigen::Index> counts(static_cast<std::size_t>(prior.L()));
                  for (Eigen::Index l = 0; l < prior.L(); ++l)
                    counts[static_cast<std::size_t>(l)] = static_cast<Eigen::Index>(
                        std::llround(pi_hat.pi_hat(l) * static_cast<double>(cfg.p)));
                  estimate = iht(obs.tY, design.tX, counts, cfg.iterations);
                  estimate_hard = estimate;
                } else if (method == "lp") {
                  SolverConfig scfg = cfg.solver;
                  auto res = solve_pooled_lp(y, design.X, prior, scfg);
                  if (res.report.status == SolverStatus::Infeasible)
                    throw std::runtime_error("lp: infeasible");
                  estimate = res.b;
                  estimate_hard = quantize(res.b).rows;
                } else {  // cvx
                  SolverConfig scfg = cfg.solver;
                  auto res =
                      solve_pooled_cvx(y, design.X, prior, noise.sigma, scfg);
                  estimate = res.b;
                  estimate_hard = quantize(res.b).rows;
                }
                const Metrics soft = empirical_metrics(estimate, b.rows);
                const Metrics hard = empirical_metrics(estimate_hard, b.rows);
                out.values[0] = soft.correlation;
                out.values[1] = hard.correlation;
                out.values[2] = soft.mse;
              } else {
                const QgtInstance inst = gen_qgt_instance(
                    cfg.p, cfg.pi, cfg.alpha, n, noise,
                    stream_key(cfg.master_seed, trial_key, StreamRole::Signal));
                Vec relaxed;
                std::function<Vec(double)> hard_at;
                if (method == "amp") {
                  QgtAmpConfig acfg;
                  acfg.iterations = cfg.iterations;
                  acfg.quad = cfg.quad;
                  acfg.init_seed =
                      stream_key(cfg.master_seed, trial_key, StreamRole::Init);
                  const QgtTrace trace =
                      run_qgt_amp(inst.ty, inst.design, cfg.pi, noise, acfg, &inst.beta);
                  relaxed = trace.beta_hat.back();
                  const Vec beta_k = trace.beta_iter.back();
                  const double mu = trace.se_states.back().mu_beta;
                  hard_at = [beta_k, mu](double z) {
                    return threshold_final(beta_k, mu, z).hard;
                  };
                } else if (method == "lp") {
                  auto res = solve_qgt_lp(inst.y, inst.design.X, cfg.solver);
                  if (res.report.status == SolverStatus::Infeasible)
                    throw std::runtime_error("qgt lp: infeasible");
                  relaxed = res.beta;
                  const Vec rb = res.beta;
                  hard_at = [rb](double z) { return threshold_relaxed(rb, z); };
                } else {  // bpdn
                  auto res =
                      solve_qgt_bpdn(inst.y, inst.design.X, noise.lambda, cfg.solver);
                  if (res.report.status == SolverStatus::Infeasible)
                    throw std::runtime_error("qgt bpdn: infeasible");
                  relaxed = res.beta;
                  const Vec rb = res.beta;
                  hard_at = [rb](double z) { return threshold_relaxed(rb, z); };
                }
                out.values[0] = empirical_sq_corr(relaxed, inst.beta);
                std::size_t slot = 1;
                for (double z : cfg.zeta_grid) {
                  const FprFnr rates = empirical_fpr_fnr(inst.beta, hard_at(z));
                  out.values[slot++] =
                      rates.fpr ? *rates.fpr : std::numeric_limits<double>::quiet_NaN();
                  out.values[slot++] =
                      rates.fnr ? *rates.fnr : std::numeric_limits<double>::quiet_NaN();
                }
              }
            } catch (const std::exception& e) {
              out.failed = true;
              out.error = e.what();
            }
          },
          threads);
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      for (const TrialValues& t : trials)
        if (t.failed) {
          ++failures;
          std::cerr << "[poolamp] trial failed (method=" << method
                    << ", delta=" << delta << "): " << t.error << "\n";
        }

      for (std::size_t s = 0; s < slots.size(); ++s) {
        std::vector<double> vals;
        vals.reserve(trials.size());
        for (const TrialValues& t : trials)
          if (!t.failed) vals.push_back(t.values[s]);
        const detail::Aggregate agg = detail::aggregate(vals);
        table.push_back(ResultRow{method, delta, noise_level, slots[s].zeta,
                                  slots[s].metric, agg.mean, agg.stddev,
                                  slots[s].theory, agg.count, elapsed});
      }
    }
  }
  if (failures > 0)
    std::cerr << "[poolamp] " << failures
              << " trial(s) failed and were excluded from aggregation\n";
  return table;
}

// ---------------------------------------------------------------------------
// Config (de)serialization.
// ---------------------------------------------------------------------------

inline GaussianQuadSpec quad_from_json(const json& j) {
  GaussianQuadSpec q = GaussianQuadSpec::gauss_hermite(60);
  if (j.is_null()) return q;
  const std::string method = j.value("method", "gauss-hermite");
  if (method == "gauss-hermite") {
    q = GaussianQuadSpec::gauss_hermite(j.value("nodes", 60));
  } else if (method == "monte-carlo") {
    q = GaussianQuadSpec::monte_carlo(j.value("samples", 200000),
                                      j.value("seed", std::uint64_t(20240531)));
  } else {
    throw std::invalid_argument("config: unknown quadrature method '" + method + "'");
  }
  return q;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  const std::string problem = j.value("problem", "pooled");
  if (problem == "pooled")
    cfg.problem = ExperimentConfig::Problem::Pooled;
  else if (problem == "qgt")
    cfg.problem = ExperimentConfig::Problem::Qgt;
  else
    throw std::invalid_argument("config: unknown problem '" + problem + "'");

  cfg.p = j.value("p", 500);
  cfg.delta_grid = j.value("delta_grid", std::vector<double>{});
  if (j.contains("prior")) {
    const auto pv = j.at("prior").get<std::vector<double>>();
    cfg.prior = Eigen::Map<const Vec>(pv.data(), static_cast<Eigen::Index>(pv.size()));
  }
  cfg.pi = j.value("pi", 0.1);
  cfg.alpha = j.value("alpha", 0.5);
  if (j.contains("noise")) {
    const json& nj = j.at("noise");
    const std::string kind = nj.value("kind", "none");
    if (kind == "none") {
      cfg.noise_kind = NoiseSpec::Kind::None;
      cfg.noise_grid = {0.0};
    } else if (kind == "gaussian") {
      cfg.noise_kind = NoiseSpec::Kind::GaussianIsotropic;
      cfg.noise_grid = nj.value("levels", std::vector<double>{0.0});
    } else if (kind == "uniform") {
      cfg.noise_kind = NoiseSpec::Kind::UniformScalar;
      cfg.noise_grid = nj.value("levels", std::vector<double>{0.0});
    } else {
      throw std::invalid_argument("config: unknown noise kind '" + kind + "'");
    }
  }
  cfg.iterations = j.value("iterations", 10);
  cfg.n_trials = j.value("n_trials", 10);
  cfg.methods = j.value("methods", std::vector<std::string>{"amp"});
  cfg.zeta_grid = j.value("zeta_grid", std::vector<double>{});
  cfg.mismatch_epsilon = j.value("mismatch_epsilon", 0.0);
  cfg.master_seed = j.value("seed", std::uint64_t(1));
  cfg.output_path = j.value("output", "results");
  cfg.quad = quad_from_json(j.contains("quad") ? j.at("quad") : json(nullptr));
  if (j.contains("solver")) {
    const json& sj = j.at("solver");
    cfg.solver.max_iters = sj.value("max_iters", cfg.solver.max_iters);
    cfg.solver.tol_primal = sj.value("tol_primal", cfg.solver.tol_primal);
    cfg.solver.tol_obj = sj.value("tol_obj", cfg.solver.tol_obj);
  }
  return cfg;
}

}  // namespace poolamp
