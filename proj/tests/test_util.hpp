#pragma once

#include <gpsp/core.hpp>
#include <gpsp/random.hpp>

#include <random>

namespace gpsp::testing {

inline MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline VectorXd uniform_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  return uniform_matrix(rng, n, 1, lo, hi).col(0);
}

inline VectorXd normal_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline MatrixXd random_spd(Rng& rng, Eigen::Index n, double lo, double hi) {
  const MatrixXd A = uniform_matrix(rng, n, n, -1.0, 1.0);
  const Eigen::HouseholderQR<MatrixXd> qr(A);
  const MatrixXd Q = qr.householderQ();
  const VectorXd eig = uniform_vector(rng, n, lo, hi);
  MatrixXd S = Q * eig.asDiagonal() * Q.transpose();
  return 0.5 * (S + S.transpose());
}

}  // namespace gpsp::testing
