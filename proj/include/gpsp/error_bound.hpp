/*
 Copyright 2026 The gpsp Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// High-probability bound on |mean - f| for the learned model:
//
//   |mu_j(z) - f_j(z)| <= Delta_j * sigma_j(z)  with probability >= 1 - delta_sc per output,
//   Delta_j = sqrt(2 |f_j|_k^2 + 300 gamma_j ln^3((m + 1) / delta_sc)),
//
// combined over outputs as a product of per-output confidences, and the supremum
// of |Delta o sigma(z)| over the working domain (Delta_bar).

#pragma once

#include <gpsp/domain.hpp>
#include <gpsp/gp_regression.hpp>
#include <gpsp/report.hpp>

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

namespace gpsp {

/// Per-output failure probability delta_sc such that (1 - delta_sc)^n = delta.
inline double delta_sc_from_delta(double delta, Eigen::Index n) {
  require(delta > 0.0 && delta < 1.0, "delta_sc_from_delta: delta must lie in (0, 1)");
  require(n >= 1, "delta_sc_from_delta: n must be positive");
  return -std::expm1(std::log(delta) / static_cast<double>(n));
}

struct InformationGain {
  double gamma = 0.0;
  std::vector<Eigen::Index> chosen;  // candidate indices in selection order
};

/// Greedy lower bound on max_X 1/2 log det(I + sigma^-2 K(X, X)) over `budget` candidate
/// columns. Each step takes the candidate with the largest posterior variance (lowest
/// index on ties), which maximizes the marginal gain.
inline InformationGain information_gain(const Eigen::Ref<const MatrixXd>& candidates, const Hyperparameters& hyper,
                                        Eigen::Index budget) {
  const Eigen::Index N = candidates.cols();
  require(N > 0, "information_gain: candidate set is empty");
  require(candidates.rows() == hyper.dim(), "information_gain: candidate dimension mismatch");
  require(budget >= 0 && budget <= N, "information_gain: budget exceeds candidate count");
  require(hyper.noise_std > 0.0, "information_gain: noise_std must be positive");
  const double noise_var = hyper.noise_std * hyper.noise_std;

  InformationGain out;
  VectorXd var = VectorXd::Constant(N, hyper.signal_variance);
  MatrixXd rows(budget, N);  // rows(t, c) = posterior cross-covariance factor
  std::vector<char> taken(static_cast<std::size_t>(N), 0);
  for (Eigen::Index t = 0; t < budget; ++t) {
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < N; ++c)
      if (!taken[static_cast<std::size_t>(c)] && (best < 0 || var(c) > var(best))) best = c;
    const double v = std::max(var(best), 0.0);
    out.gamma += 0.5 * std::log1p(v / noise_var);
    out.chosen.push_back(best);
    taken[static_cast<std::size_t>(best)] = 1;
    const double scale = 1.0 / std::sqrt(v + noise_var);
    for (Eigen::Index c = 0; c < N; ++c) {
      double cov = kernel_eval(candidates.col(best), candidates.col(c), hyper);
      for (Eigen::Index s = 0; s < t; ++s) cov -= rows(s, best) * rows(s, c);
      rows(t, c) = cov * scale;
      var(c) -= rows(t, c) * rows(t, c);
    }
  }
  return out;
}

/// sqrt(alpha^T K alpha): RKHS norm of the posterior-mean interpolant, optionally
/// floored by a user-supplied bound.
inline double rkhs_norm_estimate(const GPModel& model, Eigen::Index i, std::optional<double> user_bound = std::nullopt) {
  double surrogate = 0.0;
  if (model.m() > 0) {
    const auto& o = model.output(i);
    const MatrixXd K = gram_matrix(model.inputs(), o.hyper);
    surrogate = std::sqrt(std::max(0.0, o.alpha.dot(K * o.alpha)));
  }
  if (user_bound) {
    require(*user_bound >= 0.0, "rkhs_norm_estimate: user bound must be nonnegative");
    return std::max(surrogate, *user_bound);
  }
  return surrogate;
}

/// Delta_j = sqrt(2 |f_j|^2 + 300 gamma_j ln^3((m + 1) / delta_sc)) with delta_sc derived from delta.
inline VectorXd delta_vector(const Eigen::Ref<const VectorXd>& rkhs_norms, const Eigen::Ref<const VectorXd>& gammas,
                             Eigen::Index m, double delta) {
  require(rkhs_norms.size() == gammas.size() && rkhs_norms.size() > 0, "delta_vector: size mismatch");
  require((rkhs_norms.array() >= 0.0).all() && (gammas.array() >= 0.0).all(), "delta_vector: inputs must be >= 0");
  require(m >= 0, "delta_vector: m must be >= 0");
  const double dsc = delta_sc_from_delta(delta, rkhs_norms.size());
  const double l = std::log(static_cast<double>(m + 1) / dsc);
  VectorXd out(rkhs_norms.size());
  for (Eigen::Index j = 0; j < out.size(); ++j)
    out(j) = std::sqrt(2.0 * rkhs_norms(j) * rkhs_norms(j) + 300.0 * gammas(j) * l * l * l);
  return out;
}

/// | Delta o Var^{1/2}(z) |. Throws DomainViolation outside `domain` (ordered xdot2; x1; x2).
inline double pointwise_bound(const GPModel& model, const Eigen::Ref<const VectorXd>& Delta,
                              const Eigen::Ref<const VectorXd>& query, const Box& domain) {
  require(Delta.size() == model.n(), "pointwise_bound: Delta size must equal output dimension");
  if (!domain.contains(query, 1e-12)) throw DomainViolation("pointwise_bound: query outside the model domain");
  const VectorXd sd = model.predict_var(query).cwiseSqrt();
  return Delta.cwiseProduct(sd).norm();
}

struct ModelErrorBound {
  double delta = 0.0;     // joint confidence
  double delta_sc = 0.0;  // per-output failure probability
  Eigen::Index m = 0;
  VectorXd rkhs_norms;
  VectorXd gammas;
  VectorXd delta_vec;
  double delta_bar = 0.0;
  VectorXd argmax;  // (xdot2; x1; x2)
  std::vector<int> grid_counts;
  std::vector<int> gamma_grid_counts;
};

/// Grid supremum of the pointwise bound over D_xdot x D_x. Fills delta_bar, argmax, grid_counts.
inline void compute_delta_bar(const GPModel& model, const Eigen::Ref<const VectorXd>& Delta, const DomainSpec& domain,
                              const std::vector<int>& counts, ModelErrorBound& out) {
  require(Delta.size() == model.n(), "delta_bar: Delta size must equal output dimension");
  const Box box = domain.model_domain();
  require(box.dim() == model.d(), "delta_bar: model input dimension must be 3n");
  for (int c : counts) require(c >= 2, "delta_bar: resolution must be >= 2 per axis");
  const auto grid = regular_grid(box, counts);
  out.delta_bar = -1.0;
  constexpr Eigen::Index kChunk = 512;
  for (std::size_t start = 0; start < grid.size(); start += kChunk) {
    const Eigen::Index cnt = static_cast<Eigen::Index>(std::min<std::size_t>(kChunk, grid.size() - start));
    MatrixXd Q(box.dim(), cnt);
    for (Eigen::Index q = 0; q < cnt; ++q) Q.col(q) = grid[start + static_cast<std::size_t>(q)];
    const MatrixXd var = model.predict_var_batch(Q);
    for (Eigen::Index q = 0; q < cnt; ++q) {
      const double b = Delta.cwiseProduct(var.col(q).cwiseSqrt()).norm();
      if (b > out.delta_bar) {
        out.delta_bar = b;
        out.argmax = Q.col(q);
      }
    }
  }
  out.grid_counts = counts;
}

struct BoundConfig {
  double delta = 0.95;
  std::vector<std::optional<double>> rkhs_norms;  // per output; empty -> surrogate only
  int grid_resolution = 25;                       // Delta_bar grid nodes per axis
  int gamma_resolution = 12;                      // information-gain candidate nodes per axis
};

/// Full bound: surrogate RKHS norms, greedy gammas with budget m + 1, Delta, Delta_bar.
inline ModelErrorBound compute_error_bound(const GPModel& model, const DomainSpec& domain, const BoundConfig& cfg) {
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "compute_error_bound: delta must lie in (0, 1)");
  require(cfg.rkhs_norms.empty() || static_cast<Eigen::Index>(cfg.rkhs_norms.size()) == model.n(),
          "compute_error_bound: one RKHS norm per output dimension");
  const Box box = domain.model_domain();
  require(box.dim() == model.d(), "compute_error_bound: model input dimension must be 3n");
  ModelErrorBound out;
  out.delta = cfg.delta;
  out.delta_sc = delta_sc_from_delta(cfg.delta, model.n());
  out.m = model.m();
  out.rkhs_norms.resize(model.n());
  out.gammas.resize(model.n());

  out.gamma_grid_counts = uniform_counts(box.dim(), cfg.gamma_resolution);
  const auto cand_pts = regular_grid(box, out.gamma_grid_counts);
  MatrixXd candidates(box.dim(), static_cast<Eigen::Index>(cand_pts.size()));
  for (std::size_t c = 0; c < cand_pts.size(); ++c) candidates.col(static_cast<Eigen::Index>(c)) = cand_pts[c];
  const Eigen::Index budget = std::min<Eigen::Index>(model.m() + 1, candidates.cols());
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const auto user = cfg.rkhs_norms.empty() ? std::nullopt : cfg.rkhs_norms[static_cast<std::size_t>(i)];
    out.rkhs_norms(i) = rkhs_norm_estimate(model, i, user);
    out.gammas(i) = information_gain(candidates, model.hyper(i), budget).gamma;
  }
  out.delta_vec = delta_vector(out.rkhs_norms, out.gammas, model.m(), cfg.delta);
  compute_delta_bar(model, out.delta_vec, domain, uniform_counts(box.dim(), cfg.grid_resolution), out);
  return out;
}

inline void write_bound_report(std::ostream& os, const ModelErrorBound& b) {
  ReportWriter w(os);
  w.comment("gpsp model-error bound v1");
  w.comment("probability claim is conditional on the RKHS norm values below bounding the true function");
  w.put("delta", b.delta).put("delta_sc", b.delta_sc).put("m", static_cast<long long>(b.m));
  w.put("rkhs_norms", b.rkhs_norms).put("gammas", b.gammas).put("Delta", b.delta_vec);
  w.put("delta_bar", b.delta_bar).put("argmax", b.argmax);
  VectorXd counts(static_cast<Eigen::Index>(b.grid_counts.size()));
  for (std::size_t k = 0; k < b.grid_counts.size(); ++k) counts(static_cast<Eigen::Index>(k)) = b.grid_counts[k];
  w.put("grid_resolution", counts);
  VectorXd gcounts(static_cast<Eigen::Index>(b.gamma_grid_counts.size()));
  for (std::size_t k = 0; k < b.gamma_grid_counts.size(); ++k)
    gcounts(static_cast<Eigen::Index>(k)) = b.gamma_grid_counts[k];
  w.put("gamma_grid_resolution", gcounts);
}

inline ModelErrorBound read_bound_report(std::istream& is) {
  const Report r = Report::parse(is);
  ModelErrorBound b;
  b.delta = r.number("delta");
  b.delta_sc = r.number("delta_sc");
  b.m = static_cast<Eigen::Index>(r.number("m"));
  b.rkhs_norms = r.vector("rkhs_norms");
  b.gammas = r.vector("gammas");
  b.delta_vec = r.vector("Delta");
  b.delta_bar = r.number("delta_bar");
  b.argmax = r.vector("argmax");
  for (double c : r.vector("grid_resolution")) b.grid_counts.push_back(static_cast<int>(c));
  for (double c : r.vector("gamma_grid_resolution")) b.gamma_grid_counts.push_back(static_cast<int>(c));
  return b;
}

}  // namespace gpsp
