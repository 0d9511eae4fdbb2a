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

// Exact multi-output GP regression with an ARD squared-exponential kernel.
//
// Each output dimension is an independent scalar GP over shared inputs, so the
// joint predictive covariance is diagonal. The prior mean is zero.

#pragma once

#include <gpsp/core.hpp>
#include <gpsp/random.hpp>

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gpsp {

struct Hyperparameters {
  double signal_variance = 1.0;
  VectorXd lengthscales;
  double noise_std = 0.0;

  Hyperparameters() = default;
  Hyperparameters(double sf2, VectorXd ell, double sn) : signal_variance(sf2), lengthscales(std::move(ell)), noise_std(sn) {
    validate();
  }

  static Hyperparameters isotropic(Eigen::Index dim, double sf2, double ell, double sn) {
    return {sf2, VectorXd::Constant(dim, ell), sn};
  }

  Eigen::Index dim() const { return lengthscales.size(); }

  void validate() const {
    require(std::isfinite(signal_variance) && signal_variance > 0.0, "Hyperparameters: signal_variance must be > 0");
    require(lengthscales.size() > 0, "Hyperparameters: need at least one lengthscale");
    require(lengthscales.allFinite() && (lengthscales.array() > 0.0).all(), "Hyperparameters: lengthscales must be > 0");
    require(std::isfinite(noise_std) && noise_std >= 0.0, "Hyperparameters: noise_std must be >= 0");
  }

  /// (log sigma_f, log l_1..l_d, log sigma_n)
  VectorXd to_log() const {
    VectorXd t(dim() + 2);
    t(0) = 0.5 * std::log(signal_variance);
    t.segment(1, dim()) = lengthscales.array().log();
    t(dim() + 1) = std::log(noise_std);
    return t;
  }
  static Hyperparameters from_log(const Eigen::Ref<const VectorXd>& t) {
    const Eigen::Index d = t.size() - 2;
    return {std::exp(2.0 * t(0)), t.segment(1, d).array().exp().matrix(), std::exp(t(d + 1))};
  }
};

/// sigma_f^2 * exp(-1/2 sum_k (a_k - b_k)^2 / l_k^2)
inline double kernel_eval(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b,
                          const Hyperparameters& hyper) {
  if (a.size() != b.size() || a.size() != hyper.dim())
    throw ContractViolation("kernel_eval: dimension mismatch between points and lengthscales");
  double r2 = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double s = (a(k) - b(k)) / hyper.lengthscales(k);
    r2 += s * s;
  }
  return hyper.signal_variance * std::exp(-0.5 * r2);
}

/// Gram matrix K(j,l) = k(X_{:,l}, X_{:,j}) of the d x m input matrix X. Exactly symmetric.
inline MatrixXd gram_matrix(const Eigen::Ref<const MatrixXd>& X, const Hyperparameters& hyper) {
  require(X.rows() == hyper.dim(), "gram_matrix: input dimension does not match lengthscales");
  const Eigen::Index m = X.cols();
  MatrixXd K(m, m);
  for (Eigen::Index l = 0; l < m; ++l) {
    K(l, l) = hyper.signal_variance;
    for (Eigen::Index j = l + 1; j < m; ++j) {
      const double v = kernel_eval(X.col(j), X.col(l), hyper);
      K(j, l) = v;
      K(l, j) = v;
    }
  }
  return K;
}

/// Cross-covariance k(x*, X) as an m-vector.
inline VectorXd kernel_vector(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& query,
                              const Hyperparameters& hyper) {
  require(query.size() == X.rows(), "kernel_vector: query dimension mismatch");
  VectorXd k(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) k(j) = kernel_eval(query, X.col(j), hyper);
  return k;
}

struct TrainingSet {
  MatrixXd inputs;   // d x m, one column per point
  MatrixXd targets;  // m x n
  VectorXd noise_std;

  Eigen::Index d() const { return inputs.rows(); }
  Eigen::Index m() const { return inputs.cols(); }
  Eigen::Index n() const { return targets.cols(); }

  void validate() const {
    require(inputs.cols() == targets.rows(), "TrainingSet: input columns must equal target rows");
    require(noise_std.size() == targets.cols(), "TrainingSet: one noise_std per output dimension");
    require(inputs.allFinite() && targets.allFinite(), "TrainingSet: entries must be finite");
    require(noise_std.allFinite() && (noise_std.array() >= 0.0).all(), "TrainingSet: noise_std must be >= 0");
  }
};

/// Factor of K + (sigma^2 + jitter) I with the jitter ladder 1e-10 .. 1e-4.
struct FactoredGram {
  Eigen::LLT<MatrixXd> llt;
  double jitter = 0.0;
};

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

inline bool try_factor(const MatrixXd& K, double diag, Eigen::LLT<MatrixXd>& llt) {
  MatrixXd A = K;
  A.diagonal().array() += diag;
  llt.compute(A);
  if (llt.info() != Eigen::Success) return false;
  return llt.matrixLLT().diagonal().allFinite() && (llt.matrixLLT().diagonal().array() > 0.0).all();
}

/// Factor with noise variance `noise_var`, escalating jitter on failure.
/// `fixed_jitter` >= 0 replays a previously recorded jitter exactly.
inline FactoredGram factor_gram(const MatrixXd& K, double noise_var, double fixed_jitter = -1.0) {
  FactoredGram out;
  if (fixed_jitter >= 0.0) {
    if (!try_factor(K, noise_var + fixed_jitter, out.llt))
      throw IllConditionedData("factor_gram: stored jitter no longer yields a factorization");
    out.jitter = fixed_jitter;
    return out;
  }
  if (noise_var > 0.0 && try_factor(K, noise_var, out.llt)) return out;
  for (double j = kJitterStart; j <= kJitterMax * 1.0000001; j *= 10.0) {
    if (try_factor(K, noise_var + j, out.llt)) {
      out.jitter = j;
      return out;
    }
  }
  throw IllConditionedData("Gram matrix not factorizable even with jitter " + std::to_string(kJitterMax));
}

/// Fitted exact GP, one scalar regressor per output dimension. Immutable after construction.
class GPModel {
 public:
  struct Output {
    Hyperparameters hyper;
    FactoredGram factor;
    VectorXd alpha;  // (K + I sigma^2)^{-1} Y_{:,i}
  };

  /// Fit all output dimensions. One Hyperparameters entry per output.
  static GPModel fit(const TrainingSet& data, const std::vector<Hyperparameters>& hypers) {
    data.validate();
    require(data.m() >= 1, "fit: need at least one training point");
    require(static_cast<Eigen::Index>(hypers.size()) == data.n(), "fit: one Hyperparameters per output dimension");
    GPModel model;
    model.inputs_ = data.inputs;
    model.targets_ = data.targets;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const auto& h = hypers[static_cast<std::size_t>(i)];
      h.validate();
      require(h.dim() == data.d(), "fit: lengthscale count must equal input dimension");
      model.outputs_.push_back(make_output(data.inputs, data.targets.col(i), h, -1.0));
    }
    return model;
  }

  /// Model without data: predictions are the zero-mean prior.
  static GPModel prior(Eigen::Index d, const std::vector<Hyperparameters>& hypers) {
    GPModel model;
    model.inputs_ = MatrixXd(d, 0);
    model.targets_ = MatrixXd(0, static_cast<Eigen::Index>(hypers.size()));
    for (const auto& h : hypers) {
      h.validate();
      require(h.dim() == d, "prior: lengthscale count must equal input dimension");
      model.outputs_.push_back(Output{h, {}, VectorXd(0)});
    }
    return model;
  }

  Eigen::Index d() const { return inputs_.rows(); }
  Eigen::Index m() const { return inputs_.cols(); }
  Eigen::Index n() const { return static_cast<Eigen::Index>(outputs_.size()); }
  const MatrixXd& inputs() const { return inputs_; }
  const MatrixXd& targets() const { return targets_; }
  const Output& output(Eigen::Index i) const { return outputs_.at(static_cast<std::size_t>(i)); }
  const Hyperparameters& hyper(Eigen::Index i) const { return output(i).hyper; }

  double predict_mean(Eigen::Index i, const Eigen::Ref<const VectorXd>& query) const {
    check_query(query);
    if (m() == 0) return 0.0;
    const auto& o = output(i);
    double s = 0.0;
    for (Eigen::Index j = 0; j < m(); ++j) s += kernel_eval(query, inputs_.col(j), o.hyper) * o.alpha(j);
    return s;
  }

  VectorXd predict_mean(const Eigen::Ref<const VectorXd>& query) const {
    VectorXd mu(n());
    for (Eigen::Index i = 0; i < n(); ++i) mu(i) = predict_mean(i, query);
    return mu;
  }

  struct RoundedMean {
    VectorXd mean;
    VectorXd rounding;  // eps * sum_j |k_j alpha_j|: floating-point noise floor of `mean`
  };

  RoundedMean predict_mean_rounded(const Eigen::Ref<const VectorXd>& query) const {
    check_query(query);
    RoundedMean out{VectorXd::Zero(n()), VectorXd::Zero(n())};
    if (m() == 0) return out;
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto& o = output(i);
      double s = 0.0, a = 0.0;
      for (Eigen::Index j = 0; j < m(); ++j) {
        const double t = kernel_eval(query, inputs_.col(j), o.hyper) * o.alpha(j);
        s += t;
        a += std::abs(t);
      }
      out.mean(i) = s;
      out.rounding(i) = std::numeric_limits<double>::epsilon() * a;
    }
    return out;
  }

  double predict_var(Eigen::Index i, const Eigen::Ref<const VectorXd>& query) const {
    check_query(query);
    const auto& o = output(i);
    const double prior = o.hyper.signal_variance;
    if (m() == 0) return prior;
    VectorXd v = kernel_vector(inputs_, query, o.hyper);
    o.factor.llt.matrixL().solveInPlace(v);
    return clamp_variance(prior - v.squaredNorm(), prior);
  }

  VectorXd predict_var(const Eigen::Ref<const VectorXd>& query) const {
    VectorXd var(n());
    for (Eigen::Index i = 0; i < n(); ++i) var(i) = predict_var(i, query);
    return var;
  }

  /// Variances for many queries (columns of Q) via one blocked triangular solve.
  /// Returns n x q.
  MatrixXd predict_var_batch(const Eigen::Ref<const MatrixXd>& Q) const {
    require(Q.rows() == d(), "predict_var_batch: query dimension mismatch");
    MatrixXd out(n(), Q.cols());
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto& o = output(i);
      const double prior = o.hyper.signal_variance;
      if (m() == 0) {
        out.row(i).setConstant(prior);
        continue;
      }
      MatrixXd Ks(m(), Q.cols());
      for (Eigen::Index q = 0; q < Q.cols(); ++q)
        for (Eigen::Index j = 0; j < m(); ++j) Ks(j, q) = kernel_eval(Q.col(q), inputs_.col(j), o.hyper);
      o.factor.llt.matrixL().solveInPlace(Ks);
      const VectorXd sq = Ks.colwise().squaredNorm().transpose();
      for (Eigen::Index q = 0; q < Q.cols(); ++q) out(i, q) = clamp_variance(prior - sq(q), prior);
    }
    return out;
  }

  /// Model serialization: versioned plain text, 17 significant digits.
  void write(std::ostream& os) const {
    const auto old_precision = os.precision();
    os << std::setprecision(17);
    os << "gpsp-gp-model 1\n";
    os << "d " << d() << "\nn " << n() << "\nm " << m() << "\n";
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto& o = output(i);
      os << "output " << i << "\n";
      os << "signal_variance " << o.hyper.signal_variance << "\n";
      os << "lengthscales";
      for (Eigen::Index k = 0; k < d(); ++k) os << ' ' << o.hyper.lengthscales(k);
      os << "\nnoise_std " << o.hyper.noise_std << "\n";
      os << "jitter " << o.factor.jitter << "\n";
      os << "alpha";
      for (Eigen::Index j = 0; j < m(); ++j) os << ' ' << o.alpha(j);
      os << "\n";
    }
    os << "inputs\n";
    for (Eigen::Index j = 0; j < m(); ++j) {
      for (Eigen::Index k = 0; k < d(); ++k) os << (k ? " " : "") << inputs_(k, j);
      os << "\n";
    }
    os << "targets\n";
    for (Eigen::Index j = 0; j < m(); ++j) {
      for (Eigen::Index i = 0; i < n(); ++i) os << (i ? " " : "") << targets_(j, i);
      os << "\n";
    }
    os << "end\n";
    os.precision(old_precision);
  }

  static GPModel read(std::istream& is) {
    auto expect = [&](const std::string& key) {
      std::string tok;
      if (!(is >> tok) || tok != key) throw std::runtime_error("GP model file: expected '" + key + "', got '" + tok + "'");
    };
    auto read_num = [&](auto& value, const char* what) {
      if (!(is >> value)) throw std::runtime_error(std::string("GP model file: bad value for ") + what);
    };
    expect("gpsp-gp-model");
    int version = 0;
    read_num(version, "version");
    if (version != 1) throw std::runtime_error("GP model file: unsupported version " + std::to_string(version));
    Eigen::Index d = 0, n = 0, m = 0;
    expect("d");
    read_num(d, "d");
    expect("n");
    read_num(n, "n");
    expect("m");
    read_num(m, "m");
    if (d < 1 || n < 1 || m < 0) throw std::runtime_error("GP model file: invalid sizes");
    std::vector<Hyperparameters> hypers;
    std::vector<double> jitters;
    std::vector<VectorXd> alphas;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index idx = 0;
      expect("output");
      read_num(idx, "output index");
      Hyperparameters h;
      expect("signal_variance");
      read_num(h.signal_variance, "signal_variance");
      expect("lengthscales");
      h.lengthscales.resize(d);
      for (Eigen::Index k = 0; k < d; ++k) read_num(h.lengthscales(k), "lengthscale");
      expect("noise_std");
      read_num(h.noise_std, "noise_std");
      double jitter = 0.0;
      expect("jitter");
      read_num(jitter, "jitter");
      VectorXd alpha(m);
      expect("alpha");
      for (Eigen::Index j = 0; j < m; ++j) read_num(alpha(j), "alpha");
      h.validate();
      hypers.push_back(h);
      jitters.push_back(jitter);
      alphas.push_back(alpha);
    }
    MatrixXd X(d, m), Y(m, n);
    expect("inputs");
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < d; ++k) read_num(X(k, j), "input");
    expect("targets");
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) read_num(Y(j, i), "target");
    expect("end");

    if (m == 0) return prior(d, hypers);
    GPModel model;
    model.inputs_ = X;
    model.targets_ = Y;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const MatrixXd K = gram_matrix(X, hypers[si]);
      Output o{hypers[si], factor_gram(K, hypers[si].noise_std * hypers[si].noise_std, jitters[si]), alphas[si]};
      model.outputs_.push_back(std::move(o));
    }
    return model;
  }

 private:
  static Output make_output(const MatrixXd& X, const Eigen::Ref<const VectorXd>& y, const Hyperparameters& h,
                            double fixed_jitter) {
    const MatrixXd K = gram_matrix(X, h);
    Output o{h, factor_gram(K, h.noise_std * h.noise_std, fixed_jitter), VectorXd()};
    o.alpha = o.factor.llt.solve(y);
    return o;
  }

  void check_query(const Eigen::Ref<const VectorXd>& query) const {
    require(query.size() == d(), "predict: query dimension mismatch");
    require(query.allFinite(), "predict: query must be finite");
  }

  // Cancellation in k(x,x) - |L^{-1}k|^2 scales with the prior variance.
  static double clamp_variance(double v, double prior) {
    if (v >= 0.0) return v;
    if (v >= -1e-10 * std::max(1.0, prior)) return 0.0;
    throw InternalConsistencyError("predict_var: negative variance " + std::to_string(v));
  }

  MatrixXd inputs_;
  MatrixXd targets_;
  std::vector<Output> outputs_;
};

struct LogLikelihood {
  double value = 0.0;
  VectorXd gradient;  // w.r.t. (log sigma_f, log l_1..l_d, log sigma_n)
};

/// Log marginal likelihood of output column i and its exact gradient in log-parameter space.
inline LogLikelihood log_marginal_likelihood(const TrainingSet& data, const Hyperparameters& hyper, Eigen::Index i,
                                             bool with_gradient = true) {
  require(i >= 0 && i < data.n(), "log_marginal_likelihood: output index out of range");
  require(hyper.dim() == data.d(), "log_marginal_likelihood: lengthscale count must equal input dimension");
  hyper.validate();
  const MatrixXd& X = data.inputs;
  const Eigen::Index m = data.m();
  const Eigen::Index d = data.d();
  const VectorXd y = data.targets.col(i);
  const MatrixXd Kf = gram_matrix(X, hyper);
  const double noise_var = hyper.noise_std * hyper.noise_std;
  const FactoredGram fg = factor_gram(Kf, noise_var);
  const VectorXd alpha = fg.llt.solve(y);

  LogLikelihood out;
  const double log_det_half = fg.llt.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * y.dot(alpha) - log_det_half - 0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);
  if (!with_gradient) return out;

  // dL/dtheta_j = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta_j)
  MatrixXd W = fg.llt.solve(MatrixXd::Identity(m, m));
  W = alpha * alpha.transpose() - W;
  out.gradient = VectorXd::Zero(d + 2);
  const MatrixXd WK = W.cwiseProduct(Kf);
  out.gradient(0) = WK.sum();  // dK/dlog sf = 2 Kf
  for (Eigen::Index k = 0; k < d; ++k) {
    const double inv_l2 = 1.0 / (hyper.lengthscales(k) * hyper.lengthscales(k));
    double acc = 0.0;
    for (Eigen::Index l = 0; l < m; ++l) {
      for (Eigen::Index j = l + 1; j < m; ++j) {
        const double diff = X(k, j) - X(k, l);
        acc += WK(j, l) * diff * diff * inv_l2;
      }
    }
    out.gradient(1 + k) = acc;  // symmetric: 2 * (1/2) * lower-triangle sum
  }
  out.gradient(d + 1) = hyper.noise_std > 0.0 ? W.trace() * noise_var : 0.0;  // dK/dlog sn = 2 sn^2 I
  return out;
}

struct OptimizerConfig {
  int restarts = 5;
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double noise_floor = 1e-6;
  double log_bound = 12.0;          // |log parameter| cap against overflow
  double signal_ratio_cap = 100.0;  // sigma_f <= cap * RMS(y)
  std::uint64_t seed = 0;
};

struct OptimizationResult {
  std::vector<Hyperparameters> hypers;
  std::vector<double> log_likelihood;
  std::vector<int> iterations;
  std::vector<bool> stationary;  // gradient inf-norm reached tolerance
  bool warning = false;          // some output never improved on its best initial guess
};

namespace detail {

struct AscentOutcome {
  VectorXd theta;
  double value;
  int iterations;
  bool stationary;
};

struct LogBox {
  VectorXd lo, hi;
};

inline LogBox log_bounds(const TrainingSet& data, Eigen::Index i, const OptimizerConfig& cfg) {
  const Eigen::Index p = data.d() + 2;
  LogBox b{VectorXd::Constant(p, -cfg.log_bound), VectorXd::Constant(p, cfg.log_bound)};
  const double rms = std::sqrt(data.targets.col(i).squaredNorm() / static_cast<double>(data.m()));
  if (rms > 0.0 && cfg.signal_ratio_cap > 0.0) b.hi(0) = std::min(b.hi(0), std::log(cfg.signal_ratio_cap * rms));
  b.lo(p - 1) = std::max(b.lo(p - 1), std::log(cfg.noise_floor));
  b.lo = b.lo.cwiseMin(b.hi);
  return b;
}

inline VectorXd project(const VectorXd& theta, const LogBox& b) { return theta.cwiseMax(b.lo).cwiseMin(b.hi); }

// Quasi-Newton (BFGS) ascent with Armijo backtracking in log-parameter space.
inline AscentOutcome ascend(const TrainingSet& data, Eigen::Index i, VectorXd theta, const OptimizerConfig& cfg) {
  auto evaluate = [&](const VectorXd& t, bool grad) {
    try {
      return log_marginal_likelihood(data, Hyperparameters::from_log(t), i, grad);
    } catch (const IllConditionedData&) {
      return LogLikelihood{-std::numeric_limits<double>::infinity(), VectorXd()};
    }
  };
  const LogBox box = log_bounds(data, i, cfg);
  theta = project(theta, box);
  LogLikelihood cur = evaluate(theta, true);
  if (!std::isfinite(cur.value)) return {theta, cur.value, 0, false};
  const Eigen::Index p = theta.size();
  MatrixXd H = MatrixXd::Identity(p, p);  // inverse-Hessian approximation of -L
  int it = 0;
  bool stationary = false;
  int stalls = 0;
  for (; it < cfg.max_iterations; ++it) {
    // Components pinned at a bound with the gradient pointing outward do not count.
    VectorXd g_free = cur.gradient;
    for (Eigen::Index k = 0; k < p; ++k)
      if ((theta(k) >= box.hi(k) && g_free(k) > 0.0) || (theta(k) <= box.lo(k) && g_free(k) < 0.0)) g_free(k) = 0.0;
    if (g_free.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance) {
      stationary = true;
      break;
    }
    VectorXd dir = H * cur.gradient;
    if (dir.dot(cur.gradient) <= 0.0) {
      H.setIdentity();
      dir = cur.gradient;
    }
    const double max_step = dir.lpNorm<Eigen::Infinity>();
    if (max_step > 2.0) dir *= 2.0 / max_step;  // trust cap: at most e^2 change per step

    double step = 1.0;
    VectorXd trial;
    LogLikelihood next;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      trial = project(theta + step * dir, box);
      next = evaluate(trial, false);
      if (std::isfinite(next.value) && next.value >= cur.value + 1e-4 * cur.gradient.dot(trial - theta)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    next = evaluate(trial, true);
    const VectorXd s = trial - theta;
    const VectorXd yv = cur.gradient - next.gradient;  // gradient of -L
    const double sy = s.dot(yv);
    const double gain = next.value - cur.value;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(p, p);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
    } else {
      H.setIdentity();
    }
    theta = trial;
    cur = next;
    stalls = gain <= 1e-10 * (1.0 + std::abs(cur.value)) ? stalls + 1 : 0;
    if (stalls >= 3) break;
  }
  return {theta, cur.value, it, stationary};
}

}  // namespace detail

/// Data-driven starting point for output i.
inline Hyperparameters initial_guess(const TrainingSet& data, Eigen::Index i, double noise_floor) {
  const VectorXd y = data.targets.col(i);
  const double mean = y.mean();
  double sf = std::sqrt((y.array() - mean).square().mean() + mean * mean);
  if (!(sf > 0.0)) sf = 1.0;
  VectorXd ell(data.d());
  for (Eigen::Index k = 0; k < data.d(); ++k) {
    const double range = data.inputs.row(k).maxCoeff() - data.inputs.row(k).minCoeff();
    ell(k) = range > 0.0 ? 0.5 * range : 1.0;
  }
  double sn = data.noise_std(i) > 0.0 ? data.noise_std(i) : 1e-3 * sf;
  sn = std::max(sn, noise_floor);
  return {sf * sf, ell, sn};
}

/// Maximize the marginal likelihood per output dimension with seeded random restarts.
inline OptimizationResult optimize_hyperparameters(const TrainingSet& data, const OptimizerConfig& cfg = {}) {
  data.validate();
  require(data.m() >= 2, "optimize_hyperparameters: need at least two training points");
  require(cfg.restarts >= 1, "optimize_hyperparameters: restarts must be >= 1");
  OptimizationResult result;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    Rng rng = make_rng(cfg.seed, "gp-restarts/" + std::to_string(i));
    std::normal_distribution<double> normal(0.0, 1.0);
    const VectorXd base = initial_guess(data, i, cfg.noise_floor).to_log();

    double best_initial = -std::numeric_limits<double>::infinity();
    VectorXd best_initial_theta = base;
    detail::AscentOutcome best{base, -std::numeric_limits<double>::infinity(), 0, false};
    for (int r = 0; r < cfg.restarts; ++r) {
      VectorXd start = base;
      if (r > 0)
        for (Eigen::Index k = 0; k < start.size(); ++k) start(k) += normal(rng);
      start = detail::project(start, detail::log_bounds(data, i, cfg));
      double start_value = -std::numeric_limits<double>::infinity();
      try {
        start_value = log_marginal_likelihood(data, Hyperparameters::from_log(start), i, false).value;
      } catch (const IllConditionedData&) {
      }
      if (start_value > best_initial) {
        best_initial = start_value;
        best_initial_theta = start;
      }
      const auto outcome = detail::ascend(data, i, start, cfg);
      if (outcome.value > best.value) best = outcome;
    }
    if (!(best.value > best_initial)) {
      result.warning = true;
      best = {best_initial_theta, best_initial, 0, false};
    }
    if (!std::isfinite(best.value))
      throw IllConditionedData("optimize_hyperparameters: no restart produced a factorizable Gram matrix");
    result.hypers.push_back(Hyperparameters::from_log(best.theta));
    result.log_likelihood.push_back(best.value);
    result.iterations.push_back(best.iterations);
    result.stationary.push_back(best.stationary);
  }
  return result;
}

}  // namespace gpsp
