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

// Sample-based audit of the dissipation inequality V' <= y_ex' u_ex - h(x) outside B_r.

#pragma once

#include <gpsp/dynamics.hpp>
#include <gpsp/error_bound.hpp>
#include <gpsp/passivation.hpp>
#include <gpsp/report.hpp>

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace gpsp {

/// grad V . (x2, xdot2) = (Kp x1 + c x2)' x2 + (x2 + c x1)' xdot2
inline double vdot_numeric(const State& x, const VectorXd& xdot2, const GainSet& g) {
  require(x.n() == g.n() && xdot2.size() == g.n(), "vdot_numeric: dimension mismatch");
  return (g.Kp * x.x1 + g.c * x.x2).dot(x.x2) + (x.x2 + g.c * x.x1).dot(xdot2);
}

/// Central difference of the recorded V at interior sample k. Cross-check only.
inline double vdot_finite_difference(const Trajectory& tr, std::size_t k) {
  require(k >= 1 && k + 1 < tr.size(), "vdot_finite_difference: needs an interior sample");
  return (tr.V[k + 1] - tr.V[k - 1]) / (tr.times[k + 1] - tr.times[k - 1]);
}

struct AuditSample {
  State x;
  VectorXd xdot2;
  VectorXd u_ex;
  bool resolved = true;  // algebraic loop converged at this sample
};

inline std::vector<AuditSample> samples_from_trajectory(const Trajectory& tr) {
  std::vector<AuditSample> out;
  out.reserve(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) out.push_back({tr.states[k], tr.xdot2[k], tr.u_ex[k], tr.loop_converged[k] != 0});
  return out;
}

/// Closed-loop samples (u_ex = 0) at the nodes of a state grid.
template <SecondOrderSystem S, MeanModel M>
std::vector<AuditSample> samples_from_grid(const S& sys, const M& model, const GainSet& g, const Box& state_box,
                                           const std::vector<int>& counts, const LoopOptions& loop = {}) {
  std::vector<AuditSample> out;
  for (const auto& row : vector_field(sys, model, g, state_box, counts, FieldMode::kClosedLoop, loop))
    out.push_back({row.x, row.xdot2, VectorXd::Zero(sys.n()), row.converged});
  return out;
}

struct AuditConfig {
  double tolerance = 1e-3;
  bool require_xdot_containment = true;
};

struct AuditRecord {
  State x;
  double V = 0.0;
  double Vdot = 0.0;
  double h = 0.0;
  double supply = 0.0;  // y_ex' u_ex
  double bound = 0.0;   // supply - h + tolerance
  bool outside_domain = false;
  bool unresolved = false;
  bool inside_ball = false;
  bool dissipation_ok = true;
  bool h_ok = true;
  bool xdot_in = true;
};

struct AuditReport {
  long samples = 0;
  long excluded = 0;     // model query outside D_xdot x D_x
  long unresolved = 0;   // algebraic loop did not converge
  long inside_ball = 0;  // |(x2; x1)| <= radius
  long checked = 0;
  long dissipation_violations = 0;
  double max_dissipation_violation = 0.0;
  long h_violations = 0;
  long violating_samples = 0;
  double violation_fraction = 0.0;
  double allowed_fraction = 0.0;  // 1 - delta
  double xdot_containment = 1.0;
  bool containment_required = true;
  double tolerance = 0.0;
  double radius = 0.0;
  bool verdict = false;
  std::vector<AuditRecord> records;
};

/// Checks V' <= y_ex' u_ex - h(x) + tol and h(x) >= -tol at every resolved sample outside B_r
/// and inside the model domain. Passes iff the violation fraction is at most 1 - delta (and, optionally,
/// every xdot2 lies in D_xdot).
inline AuditReport semipassivity_audit(const std::vector<AuditSample>& samples, const PassivityCertificate& cert,
                                       const DomainSpec& domain, const AuditConfig& cfg = {}, bool keep_records = false) {
  require(cfg.tolerance >= 0.0, "semipassivity_audit: tolerance must be >= 0");
  require(cert.delta > 0.0 && cert.delta < 1.0, "semipassivity_audit: certificate delta must lie in (0, 1)");
  const GainSet& g = cert.gains;
  const Box model_box = domain.model_domain();
  AuditReport rep;
  rep.tolerance = cfg.tolerance;
  rep.radius = cert.radius;
  rep.allowed_fraction = 1.0 - cert.delta;
  rep.containment_required = cfg.require_xdot_containment;
  long xdot_inside = 0;
  for (const auto& s : samples) {
    AuditRecord r;
    r.x = s.x;
    r.V = g.storage_positive() ? storage_value(s.x, g) : std::numeric_limits<double>::quiet_NaN();
    r.Vdot = vdot_numeric(s.x, s.xdot2, g);
    r.h = h_value(s.x, cert.lambda_min, cert.delta_bar, g.c);
    r.supply = passive_output(s.x, g.c).dot(s.u_ex);
    r.bound = r.supply - r.h + cfg.tolerance;
    r.xdot_in = domain.accelerations.contains(s.xdot2);
    r.outside_domain = !model_box.contains(stack_query(s.xdot2, s.x));
    r.inside_ball = s.x.norm() <= cert.radius;
    ++rep.samples;
    xdot_inside += r.xdot_in;
    r.unresolved = !s.resolved;
    if (r.unresolved) {
      ++rep.unresolved;
    } else if (r.outside_domain) {
      ++rep.excluded;
    } else if (r.inside_ball) {
      ++rep.inside_ball;
    } else {
      ++rep.checked;
      r.dissipation_ok = r.Vdot <= r.bound;
      r.h_ok = r.h >= -cfg.tolerance;
      if (!r.dissipation_ok) {
        ++rep.dissipation_violations;
        rep.max_dissipation_violation = std::max(rep.max_dissipation_violation, r.Vdot - r.bound);
      }
      if (!r.h_ok) ++rep.h_violations;
      if (!r.dissipation_ok || !r.h_ok) ++rep.violating_samples;
    }
    if (keep_records) rep.records.push_back(std::move(r));
  }
  rep.violation_fraction = rep.checked ? static_cast<double>(rep.violating_samples) / static_cast<double>(rep.checked) : 0.0;
  rep.xdot_containment = rep.samples ? static_cast<double>(xdot_inside) / static_cast<double>(rep.samples) : 1.0;
  rep.verdict = rep.violation_fraction <= rep.allowed_fraction && (!cfg.require_xdot_containment || rep.xdot_containment == 1.0);
  return rep;
}

/// Fraction of trajectory samples whose xdot2 lies in D_xdot.
inline double xdot_containment_check(const Trajectory& tr, const DomainSpec& domain) {
  if (tr.size() == 0) return 1.0;
  long inside = 0;
  for (const auto& a : tr.xdot2) inside += domain.accelerations.contains(a);
  return static_cast<double>(inside) / static_cast<double>(tr.size());
}

struct CoverageReport {
  long points = 0;
  long covered = 0;
  double coverage = 1.0;
  double max_error = 0.0;
  double max_bound = 0.0;
  long above_delta_bar = 0;  // points whose true error exceeds Delta_bar
};

/// Compares |mu(z) - (f^{-1}(x, xdot2) + xdot2)| with the pointwise bound at each column of
/// `queries` (ordered xdot2; x1; x2).
template <SecondOrderSystem S>
CoverageReport model_error_empirical(const GPModel& model, const S& sys, const VectorXd& Delta, double delta_bar,
                                     const MatrixXd& queries, const Box& domain) {
  const Eigen::Index n = sys.n();
  require(queries.rows() == 3 * n, "model_error_empirical: queries must be 3n x N");
  CoverageReport rep;
  for (Eigen::Index j = 0; j < queries.cols(); ++j) {
    const VectorXd q = queries.col(j);
    const State x(q.segment(n, n), q.tail(n));
    const double err = (model.predict_mean(q) - true_compensation(sys, x, q.head(n))).norm();
    const double b = pointwise_bound(model, Delta, q, domain);
    ++rep.points;
    rep.covered += err <= b;
    rep.above_delta_bar += err > delta_bar;
    rep.max_error = std::max(rep.max_error, err);
    rep.max_bound = std::max(rep.max_bound, b);
  }
  rep.coverage = rep.points ? static_cast<double>(rep.covered) / static_cast<double>(rep.points) : 1.0;
  return rep;
}

/// Uniform random query points over a box, one per column.
inline MatrixXd random_queries(const Box& box, Eigen::Index count, std::uint64_t seed) {
  Rng rng = make_rng(seed, "coverage-queries");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd Q(box.dim(), count);
  for (Eigen::Index j = 0; j < count; ++j)
    for (Eigen::Index k = 0; k < box.dim(); ++k) Q(k, j) = box.lower(k) + u(rng) * (box.upper(k) - box.lower(k));
  return Q;
}

/// Realized |u_gp - f~| along a trajectory against the pointwise bound; samples outside the
/// model domain are skipped.
template <SecondOrderSystem S>
CoverageReport trajectory_error_coverage(const Trajectory& tr, const S& sys, const GPModel& model, const VectorXd& Delta,
                                         double delta_bar, const Box& domain) {
  MatrixXd Q(3 * sys.n(), static_cast<Eigen::Index>(tr.size()));
  Eigen::Index cols = 0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const VectorXd q = stack_query(tr.xdot2[k], tr.states[k]);
    if (domain.contains(q)) Q.col(cols++) = q;
  }
  return model_error_empirical(model, sys, Delta, delta_bar, Q.leftCols(cols), domain);
}

/// Keys are written as `prefix + name`, so several audits can share one report.
inline void write_audit_report(std::ostream& os, const AuditReport& r, const CoverageReport* coverage = nullptr,
                               const std::string& prefix = "") {
  ReportWriter w(os);
  auto k = [&](const char* name) { return prefix + name; };
  if (prefix.empty()) {
    w.comment("gpsp semi-passivity audit v1");
    w.comment("thresholds are tool policy: pass iff violation_fraction <= 1 - delta");
  }
  w.put(k("verdict"), r.verdict);
  w.put(k("samples"), r.samples).put(k("excluded_outside_domain"), r.excluded).put(k("unresolved_loop"), r.unresolved);
  w.put(k("inside_ball"), r.inside_ball);
  w.put(k("checked"), r.checked);
  w.put(k("dissipation_violations"), r.dissipation_violations).put(k("max_dissipation_violation"), r.max_dissipation_violation);
  w.put(k("h_violations"), r.h_violations).put(k("violation_fraction"), r.violation_fraction);
  w.put(k("allowed_fraction"), r.allowed_fraction).put(k("tolerance"), r.tolerance).put(k("radius"), r.radius);
  w.put(k("xdot_containment"), r.xdot_containment).put(k("xdot_containment_required"), r.containment_required);
  if (coverage) {
    w.put(k("error_coverage"), coverage->coverage).put(k("error_points"), coverage->points);
    w.put(k("max_model_error"), coverage->max_error).put(k("errors_above_delta_bar"), coverage->above_delta_bar);
  }
}

/// Columns: x1_*, x2_*, V, Vdot, h, bound, outside_domain, unresolved, inside_ball, dissipation_ok, h_ok, xdot_in.
inline void write_audit_csv(std::ostream& os, const AuditReport& r) {
  if (r.records.empty()) return;
  const Eigen::Index n = r.records.front().x.n();
  bool first = true;
  for (const char* name : {"x1", "x2"}) detail::csv_header_block(os, name, n, first);
  os << ",V,Vdot,h,bound,outside_domain,unresolved,inside_ball,dissipation_ok,h_ok,xdot_in\n";
  const auto old = os.precision();
  os << std::setprecision(17);
  for (const auto& rec : r.records) {
    first = true;
    detail::csv_values(os, rec.x.x1, first);
    detail::csv_values(os, rec.x.x2, first);
    os << ',' << rec.V << ',' << rec.Vdot << ',' << rec.h << ',' << rec.bound << ',' << rec.outside_domain << ','
       << rec.unresolved << ',' << rec.inside_ball << ',' << rec.dissipation_ok << ',' << rec.h_ok << ',' << rec.xdot_in << '\n';
  }
  os.precision(old);
}

}  // namespace gpsp
