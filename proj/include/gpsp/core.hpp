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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpsp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Caller broke a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Kernel matrix could not be factorized even after jitter escalation.
class IllConditionedData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Query outside the region where the error bound is valid.
class DomainViolation : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Numerical result contradicts an algebraic guarantee.
class InternalConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Gain synthesis could not satisfy its own postcondition.
class SynthesisFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

inline bool all_finite(const Eigen::Ref<const MatrixXd>& m) {
  return m.allFinite();
}

/// Axis-aligned box [lower, upper] in R^dim.
struct Box {
  VectorXd lower;
  VectorXd upper;

  Box() = default;
  Box(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
    require(lower.size() == upper.size(), "Box: bound dimensions differ");
    require((lower.array() <= upper.array()).all(), "Box: lower > upper");
  }

  /// Same interval [lo, hi] on every one of `dim` axes.
  static Box uniform(Eigen::Index dim, double lo, double hi) {
    return Box(VectorXd::Constant(dim, lo), VectorXd::Constant(dim, hi));
  }

  Eigen::Index dim() const { return lower.size(); }

  bool contains(const Eigen::Ref<const VectorXd>& p, double tol = 0.0) const {
    return p.size() == dim() && ((p.array() >= lower.array() - tol).all()) &&
           ((p.array() <= upper.array() + tol).all());
  }

  bool contains_origin_in_interior() const {
    return (lower.array() < 0.0).all() && (upper.array() > 0.0).all();
  }

  /// Largest r such that the centered Euclidean ball of radius r lies inside.
  double inscribed_centered_radius() const {
    double r = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < dim(); ++k) r = std::min({r, -lower(k), upper(k)});
    return r;
  }

  /// Centered closed ball of radius r lies inside the box.
  bool contains_centered_ball(double r) const {
    return r <= inscribed_centered_radius();
  }

  /// All 2^dim corners. Intended for small dim.
  std::vector<VectorXd> corners() const {
    require(dim() < 24, "Box::corners: dimension too large for enumeration");
    std::vector<VectorXd> out;
    const std::uint64_t count = std::uint64_t{1} << dim();
    out.reserve(count);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      VectorXd c(dim());
      for (Eigen::Index k = 0; k < dim(); ++k) c(k) = (mask >> k) & 1U ? upper(k) : lower(k);
      out.push_back(std::move(c));
    }
    return out;
  }

  Box slice(Eigen::Index start, Eigen::Index count) const {
    return Box(lower.segment(start, count), upper.segment(start, count));
  }
};

/// Concatenate boxes axis-wise (product set).
inline Box product(const Box& a, const Box& b) {
  VectorXd lo(a.dim() + b.dim()), hi(a.dim() + b.dim());
  lo << a.lower, b.lower;
  hi << a.upper, b.upper;
  return Box(lo, hi);
}

/// Second-order state (x1 = position-like, x2 = velocity-like), each in R^n.
struct State {
  VectorXd x1;
  VectorXd x2;

  State() = default;
  State(VectorXd p, VectorXd v) : x1(std::move(p)), x2(std::move(v)) {
    require(x1.size() == x2.size(), "State: x1 and x2 differ in size");
  }
  static State zero(Eigen::Index n) { return {VectorXd::Zero(n), VectorXd::Zero(n)}; }
  static State from_stacked(const Eigen::Ref<const VectorXd>& x) {
    require(x.size() % 2 == 0, "State: stacked vector has odd length");
    const Eigen::Index n = x.size() / 2;
    return {x.head(n), x.tail(n)};
  }

  Eigen::Index n() const { return x1.size(); }

  /// (x1; x2)
  VectorXd stacked() const {
    VectorXd z(2 * n());
    z << x1, x2;
    return z;
  }
  /// (x2; x1), the ordering used by the dissipation quadratic form.
  VectorXd velocity_first() const {
    VectorXd z(2 * n());
    z << x2, x1;
    return z;
  }
  double norm() const { return std::sqrt(x1.squaredNorm() + x2.squaredNorm()); }
};

/// GP query point (xdot2; x1; x2) in R^{3n}.
inline VectorXd stack_query(const Eigen::Ref<const VectorXd>& xdot2, const State& x) {
  VectorXd q(xdot2.size() + 2 * x.n());
  q << xdot2, x.x1, x.x2;
  return q;
}

/// Regular grid over a box with `counts[k]` nodes on axis k (1 node = midpoint).
/// Node order: first axis varies slowest.
inline std::vector<VectorXd> regular_grid(const Box& box, const std::vector<int>& counts) {
  require(static_cast<Eigen::Index>(counts.size()) == box.dim(), "regular_grid: counts/dimension mismatch");
  std::size_t total = 1;
  for (int c : counts) {
    require(c >= 1, "regular_grid: every axis needs at least one node");
    total *= static_cast<std::size_t>(c);
  }
  auto axis_value = [&](Eigen::Index k, int i) {
    if (counts[k] == 1) return 0.5 * (box.lower(k) + box.upper(k));
    const double t = static_cast<double>(i) / (counts[k] - 1);
    return box.lower(k) + t * (box.upper(k) - box.lower(k));
  };
  std::vector<VectorXd> out;
  out.reserve(total);
  std::vector<int> idx(counts.size(), 0);
  for (std::size_t node = 0; node < total; ++node) {
    VectorXd p(box.dim());
    for (Eigen::Index k = 0; k < box.dim(); ++k) p(k) = axis_value(k, idx[k]);
    out.push_back(std::move(p));
    for (int k = static_cast<int>(counts.size()) - 1; k >= 0; --k) {
      if (++idx[k] < counts[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

inline std::vector<int> uniform_counts(Eigen::Index dim, int per_axis) {
  return std::vector<int>(static_cast<std::size_t>(dim), per_axis);
}

}  // namespace gpsp
