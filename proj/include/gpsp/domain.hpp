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

#pragma once

#include <gpsp/core.hpp>

namespace gpsp {

/// Symmetric-part eigenvalues of a small matrix, ascending.
inline VectorXd symmetric_eigenvalues(const Eigen::Ref<const MatrixXd>& A) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Eigen::Ref<const MatrixXd>& A) { return symmetric_eigenvalues(A).minCoeff(); }
inline double max_eigenvalue(const Eigen::Ref<const MatrixXd>& A) { return symmetric_eigenvalues(A).maxCoeff(); }

/// PD feedback gains u_c = Kd x2 + Kp x1 together with the passive-output constant c.
struct GainSet {
  MatrixXd Kd;
  MatrixXd Kp;
  double c = 0.0;

  GainSet() = default;
  GainSet(MatrixXd kd, MatrixXd kp, double c_) : Kd(std::move(kd)), Kp(std::move(kp)), c(c_) { validate(); }

  static GainSet scalar(double kd, double kp, double c) {
    return {MatrixXd::Constant(1, 1, kd), MatrixXd::Constant(1, 1, kp), c};
  }

  Eigen::Index n() const { return Kd.rows(); }

  void validate() const {
    require(Kd.rows() == Kd.cols() && Kp.rows() == Kp.cols() && Kd.rows() == Kp.rows() && Kd.rows() > 0,
            "GainSet: Kd and Kp must be square and of equal size");
    require(Kd.allFinite() && Kp.allFinite() && std::isfinite(c), "GainSet: entries must be finite");
    require(c >= 0.0, "GainSet: c must be nonnegative");
    require((Kd - Kd.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "GainSet: Kd must be symmetric");
    require((Kp - Kp.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "GainSet: Kp must be symmetric");
    require(min_eigenvalue(Kd) > 0.0, "GainSet: Kd must be positive definite");
    require(min_eigenvalue(Kp) > 0.0, "GainSet: Kp must be positive definite");
  }

  /// Storage function is positive definite only when lambda_min(Kp) > c^2.
  bool storage_positive() const { return min_eigenvalue(Kp) > c * c; }
};

/// Working region: state box D_x (x1 axes then x2 axes), acceleration box D_xdot,
/// and a bound on the external input norm.
struct DomainSpec {
  Box states;
  Box accelerations;
  double u_ex_max = 0.0;

  DomainSpec() = default;
  DomainSpec(Box dx, Box dxdot, double uex) : states(std::move(dx)), accelerations(std::move(dxdot)), u_ex_max(uex) {
    validate();
  }

  /// Same interval on every state axis and every acceleration axis.
  static DomainSpec uniform(Eigen::Index n, double x_lo, double x_hi, double a_lo, double a_hi, double uex) {
    return {Box::uniform(2 * n, x_lo, x_hi), Box::uniform(n, a_lo, a_hi), uex};
  }

  Eigen::Index n() const { return accelerations.dim(); }

  void validate() const {
    require(states.dim() == 2 * accelerations.dim() && accelerations.dim() > 0,
            "DomainSpec: state box must have twice the acceleration dimension");
    require(std::isfinite(u_ex_max) && u_ex_max >= 0.0, "DomainSpec: u_ex_max must be >= 0");
    require(states.lower.allFinite() && states.upper.allFinite() && accelerations.lower.allFinite() &&
                accelerations.upper.allFinite(),
            "DomainSpec: boxes must be bounded");
  }

  Box x1_box() const { return states.slice(0, n()); }
  Box x2_box() const { return states.slice(n(), n()); }

  /// Input region of the learned model, ordered (xdot2; x1; x2).
  Box model_domain() const { return product(accelerations, states); }

  bool contains(const State& x) const { return states.contains(x.stacked()); }
};

/// Largest Euclidean norm over a box (attained at a corner).
inline double max_norm_over_box(const Box& box) {
  double best = 0.0;
  for (const auto& corner : box.corners()) best = std::max(best, corner.norm());
  return best;
}

}  // namespace gpsp
