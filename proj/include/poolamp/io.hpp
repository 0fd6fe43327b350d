#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolamp/amp_pooled.hpp"
#include "poolamp/amp_qgt.hpp"
#include "poolamp/baselines.hpp"
#include "poolamp/model.hpp"
#include "poolamp/state_evolution.hpp"

namespace poolamp {

using json = nlohmann::json;

/// Floats are written with 9 significant digits everywhere a stable textual
/// form matters (CSV outputs, manifests).
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Row-major nested-array form of a matrix.
inline json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Self-describing instance manifest; matrices are regenerable from the seed.
inline json instance_manifest(Eigen::Index n, Eigen::Index p, double alpha,
                              std::uint64_t seed, const Vec& prior_or_pi) {
  json j;
  j["n"] = n;
  j["p"] = p;
  j["alpha"] = alpha;
  j["seed"] = seed;
  j["prior"] = vector_to_json(prior_or_pi);
  return j;
}

/// AMP trace summary: one CSV line per iteration.
inline std::string trace_to_csv(const AmpTrace& trace) {
  std::string out = "iteration,correlation,mse,trace_tau_b\n";
  for (std::size_t k = 0; k < trace.b_hat.size(); ++k) {
    const SeState& se = trace.se_states[k + 1];
    const double corr = trace.has_truth ? trace.metrics[k].correlation : 0.0;
    const double mse = trace.has_truth ? trace.metrics[k].mse : 0.0;
    out += std::to_string(k + 1) + "," + format_g9(corr) + "," + format_g9(mse) +
           "," + format_g9(se.Tau_B.trace()) + "\n";
  }
  return out;
}

/// Optional full dump with all per-iteration matrices.
inline json trace_to_json(const AmpTrace& trace, bool full_matrices = false) {
  json j;
  json iters = json::array();
  for (std::size_t k = 0; k < trace.b_hat.size(); ++k) {
    json it;
    it["iteration"] = k + 1;
    if (trace.has_truth) {
      it["correlation"] = trace.metrics[k].correlation;
      it["mse"] = trace.metrics[k].mse;
    }
    it["trace_tau_b"] = trace.se_states[k + 1].Tau_B.trace();
    if (full_matrices) {
      it["theta"] = matrix_to_json(trace.theta[k]);
      it["b_iter"] = matrix_to_json(trace.b_iter[k]);
      it["b_hat"] = matrix_to_json(trace.b_hat[k]);
      it["r_hat"] = matrix_to_json(trace.r_hat[k]);
      it["onsager_c"] = matrix_to_json(trace.onsager_c[k]);
      it["onsager_f"] = matrix_to_json(trace.onsager_f[k]);
    }
    iters.push_back(std::move(it));
  }
  j["iterations"] = std::move(iters);
  if (full_matrices) j["b_hat_final"] = matrix_to_json(trace.b_hat_final);
  return j;
}

/// SE trajectory: JSON array of per-iteration states (matrices row-major).
inline json se_trajectory_to_json(const SeTrajectory& traj) {
  json out = json::array();
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const SeState& s = traj.states[k];
    json j;
    j["k"] = s.k;
    j["mu_b"] = matrix_to_json(s.Mu_B);
    j["tau_b"] = matrix_to_json(s.Tau_B);
    j["sigma"] = matrix_to_json(s.Sigma);
    j["mu_theta"] = matrix_to_json(s.Mu_Theta);
    j["tau_theta"] = matrix_to_json(s.Tau_Theta);
    j["saturated"] = s.saturated;
    out.push_back(std::move(j));
  }
  return out;
}

/// SE scalar summaries: k, correlation, mse, trace(Tau_B).
inline std::string se_trajectory_to_csv(const SeTrajectory& traj) {
  std::string out = "k,correlation,mse,trace_tau_b\n";
  for (std::size_t i = 0; i < traj.predictions.size(); ++i) {
    const SeState& s = traj.states[i + 1];
    out += std::to_string(s.k) + "," + format_g9(traj.predictions[i].correlation) +
           "," + format_g9(traj.predictions[i].mse) + "," +
           format_g9(s.Tau_B.trace()) + "\n";
  }
  return out;
}

inline json solver_report_to_json(const SolverReport& rep) {
  json j;
  j["status"] = to_string(rep.status);
  j["objective"] = rep.objective;
  j["residuals"] = {{"max_data_residual", rep.max_residual}};
  j["iterations"] = rep.iterations;
  return j;
}

/// FPR/FNR curve rows: zeta, empirical and limiting rates.
struct FprFnrCurveRow {
  double zeta;
  double fpr_emp, fnr_emp;
  double fpr_theory, fnr_theory;
};

inline std::string fpr_fnr_curve_to_csv(const std::vector<FprFnrCurveRow>& rows) {
  std::string out = "zeta,fpr_emp,fnr_emp,fpr_theory,fnr_theory\n";
  for (const auto& r : rows) {
    out += format_g9(r.zeta) + "," + format_g9(r.fpr_emp) + "," +
           format_g9(r.fnr_emp) + "," + format_g9(r.fpr_theory) + "," +
           format_g9(r.fnr_theory) + "\n";
  }
  return out;
}

}  // namespace poolamp
