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

// Gain conditions and the semi-passivity certificate for the PD + feed-forward loop.
//
// Storage function  V = 1/2 x1' Kp x1 + 1/2 x2' x2 + c x2' x1.
// Along the closed loop, V' = -z' Lambda z + (x2 + c x1)' (f - mu + u_ex) with z = (x2; x1) and
//
//   Lambda(Kd, Kp, c) = [ Kd - c I     c/2 Kd ]
//                       [ c/2 Kd       c Kp   ].

#pragma once

#include <gpsp/domain.hpp>
#include <gpsp/error_bound.hpp>
#include <gpsp/report.hpp>

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace gpsp {

inline MatrixXd lambda_matrix(const GainSet& g) {
  g.validate();
  const Eigen::Index n = g.n();
  MatrixXd L(2 * n, 2 * n);
  L.topLeftCorner(n, n) = g.Kd - g.c * MatrixXd::Identity(n, n);
  L.topRightCorner(n, n) = 0.5 * g.c * g.Kd;
  L.bottomLeftCorner(n, n) = 0.5 * g.c * g.Kd;
  L.bottomRightCorner(n, n) = g.c * g.Kp;
  return L;
}

inline double lambda_min_eig(const GainSet& g) { return min_eigenvalue(lambda_matrix(g)); }

struct SchurVerdict {
  bool positive_definite = false;
  double witness = 0.0;  // lambda_min of Kd - cI - c/4 Kd Kp^{-1} Kd
};

/// Block test: Lambda > 0 iff c Kp > 0 and Kd - cI - c/4 Kd Kp^{-1} Kd > 0.
inline SchurVerdict is_lambda_pd(const GainSet& g) {
  g.validate();
  const Eigen::Index n = g.n();
  const Eigen::LLT<MatrixXd> kp(g.Kp);
  require(kp.info() == Eigen::Success && min_eigenvalue(g.Kp) > 1e-14 * std::max(1.0, max_eigenvalue(g.Kp)),
          "is_lambda_pd: Kp must be invertible");
  MatrixXd S = g.Kd - g.c * MatrixXd::Identity(n, n) - 0.25 * g.c * g.Kd * kp.solve(g.Kd);
  S = 0.5 * (S + S.transpose());
  SchurVerdict v;
  v.witness = min_eigenvalue(S);
  v.positive_definite = g.c > 0.0 && v.witness > 0.0;
  return v;
}

/// Scale seed gains so that lambda_min(Lambda) >= lambda_target and lambda_min(Kp) > c^2.
inline GainSet synthesize_gains(double c, double lambda_target, const MatrixXd& seed_Kd, const MatrixXd& seed_Kp) {
  require(c > 0.0 && std::isfinite(c), "synthesize_gains: c must be positive");
  require(lambda_target >= 0.0 && std::isfinite(lambda_target), "synthesize_gains: target must be >= 0");
  GainSet seed(seed_Kd, seed_Kp, c);  // validates symmetric PD seeds
  const Eigen::Index n = seed.n();

  // Seed repair: the scaled-Lambda block matrix needs Kd - c/4 Kd Kp^{-1} Kd > 0.
  auto seed_schur = [&](const MatrixXd& kp) {
    MatrixXd S = seed.Kd - 0.25 * c * seed.Kd * kp.llt().solve(seed.Kd);
    return min_eigenvalue(0.5 * (S + S.transpose()));
  };
  MatrixXd kp = seed.Kp;
  int doublings = 0;
  while (seed_schur(kp) <= 0.0) {
    if (++doublings > 20) throw SynthesisFailure("synthesize_gains: seed Schur complement not PD after Kp inflation");
    kp *= 2.0;
  }

  MatrixXd M(2 * n, 2 * n);
  M << seed.Kd, 0.5 * c * seed.Kd, 0.5 * c * seed.Kd, c * kp;
  const double lm = min_eigenvalue(M);
  if (!(lm > 0.0)) throw SynthesisFailure("synthesize_gains: scaled block matrix not PD");
  // lambda_min(gamma M - diag(cI, 0)) >= gamma lambda_min(M) - c
  const double gamma = (c + lambda_target) / lm * (1.0 + 1e-9);
  GainSet out(gamma * seed.Kd, gamma * kp, c);
  // Raising Kp only adds a PSD block to Lambda, so the eigenvalue target is kept.
  for (int k = 0; !out.storage_positive(); ++k) {
    if (k > 60) throw SynthesisFailure("synthesize_gains: could not make lambda_min(Kp) exceed c^2");
    out.Kp *= 2.0;
  }
  if (lambda_min_eig(out) < lambda_target - 1e-12 * std::max(1.0, lambda_target))
    throw SynthesisFailure("synthesize_gains: eigenvalue target missed");
  return out;
}

/// max{c kd_bar^2 / (4 (kd_bar - c)), c^2}: the lower limit on kp_bar.
inline double kp_cap_threshold(double c, double kd_bar) {
  require(kd_bar > c, "kd_bar must exceed c (kd_bar > c)");
  return std::max(c * kd_bar * kd_bar / (4.0 * (kd_bar - c)), c * c);
}

inline void check_cap_preconditions(double c, double kd_bar, double kp_bar) {
  require(kd_bar > c, "gain caps: kd_bar > c violated");
  require(kp_bar > kp_cap_threshold(c, kd_bar), "gain caps: kp_bar > max{c kd_bar^2 / (4 (kd_bar - c)), c^2} violated");
}

/// True iff the gains respect the eigenvalue caps and Lambda > 0.
inline bool check_gain_caps(const GainSet& g, double kd_bar, double kp_bar) {
  check_cap_preconditions(g.c, kd_bar, kp_bar);
  return max_eigenvalue(g.Kd) <= kd_bar && max_eigenvalue(g.Kp) <= kp_bar && is_lambda_pd(g).positive_definite;
}

struct XdotBound {
  double bound = 0.0;
  bool contained = false;  // centered ball of radius `bound` inside D_xdot
};

/// sup over D_x of kp_bar |x1| + kd_bar |x2| + u_ex_max.
inline XdotBound required_xdot_bound(const DomainSpec& domain, double kd_bar, double kp_bar) {
  domain.validate();
  XdotBound out;
  out.bound = kp_bar * max_norm_over_box(domain.x1_box()) + kd_bar * max_norm_over_box(domain.x2_box()) + domain.u_ex_max;
  out.contained = domain.accelerations.contains_centered_ball(out.bound);
  return out;
}

/// sup over D_x of Delta_bar + lmax(Kd) |x2| + lmax(Kp) |x1| + u_ex_max.
inline XdotBound xdot2_envelope(double delta_bar, const GainSet& g, const DomainSpec& domain) {
  domain.validate();
  require(delta_bar >= 0.0, "xdot2_envelope: delta_bar must be >= 0");
  XdotBound out;
  out.bound = delta_bar + max_eigenvalue(g.Kd) * max_norm_over_box(domain.x2_box()) +
              max_eigenvalue(g.Kp) * max_norm_over_box(domain.x1_box()) + domain.u_ex_max;
  out.contained = domain.accelerations.contains_centered_ball(out.bound);
  return out;
}

/// v = (1 + c) Delta_bar / lambda_min. h is provably positive for |z| > v; the square-root
/// form sqrt(v) dominates it whenever v < 1.
inline double linear_radius(double delta_bar, double c, double lambda_min) {
  require(lambda_min > 0.0, "passivity_radius: lambda_min must be positive");
  require(delta_bar >= 0.0, "passivity_radius: delta_bar must be >= 0");
  return (1.0 + c) * delta_bar / lambda_min;
}

inline double passivity_radius(double delta_bar, double c, double lambda_min) {
  const double v = linear_radius(delta_bar, c, lambda_min);
  return std::max(std::sqrt(v), v);
}

inline double storage_value(const State& x, const GainSet& g) {
  require(x.n() == g.n(), "storage_value: state/gain dimension mismatch");
  require(g.storage_positive(), "storage_value: requires lambda_min(Kp) > c^2");
  return 0.5 * x.x1.dot(g.Kp * x.x1) + 0.5 * x.x2.squaredNorm() + g.c * x.x2.dot(x.x1);
}

/// h = lambda_min |(x2; x1)|^2 - Delta_bar |x2| - c Delta_bar |x1|
inline double h_value(const State& x, double lambda_min, double delta_bar, double c) {
  return lambda_min * (x.x1.squaredNorm() + x.x2.squaredNorm()) - delta_bar * x.x2.norm() - c * delta_bar * x.x1.norm();
}

struct GainCaps {
  double kd_bar = 0.0;
  double kp_bar = 0.0;
};

struct PassivityCertificate {
  GainSet gains;
  double delta_bar = 0.0;
  double delta = 0.0;
  double lambda_min = 0.0;
  double schur_witness = 0.0;
  bool lambda_pd = false;
  bool storage_positive = false;
  double radius = 0.0;
  double radius_sqrt = 0.0;
  double radius_linear = 0.0;
  bool ball_in_Dx = false;
  double kd_bar = 0.0;
  double kp_bar = 0.0;
  bool caps_valid = false;      // cap constants satisfy their own preconditions
  bool caps_satisfied = false;  // gains respect the caps
  double required_xdot = 0.0;
  bool required_xdot_in_Dxdot = false;
  double xdot_envelope = 0.0;
  bool envelope_in_Dxdot = false;  // conservative, reported only
  bool verdict = false;
  std::vector<std::string> reasons;
};

/// Assemble every obligation of the semi-passivity argument. Never throws on a failed
/// obligation; failures land in `reasons` and clear `verdict`.
inline PassivityCertificate certify(double delta_bar, double delta, const GainSet& g, const DomainSpec& domain,
                                    const GainCaps& caps) {
  g.validate();
  domain.validate();
  require(domain.n() == g.n(), "certify: domain/gain dimension mismatch");
  require(delta_bar >= 0.0 && std::isfinite(delta_bar), "certify: delta_bar must be finite and >= 0");
  PassivityCertificate cert;
  cert.gains = g;
  cert.delta_bar = delta_bar;
  cert.delta = delta;
  cert.lambda_min = lambda_min_eig(g);
  const auto schur = is_lambda_pd(g);
  cert.schur_witness = schur.witness;
  cert.lambda_pd = schur.positive_definite && cert.lambda_min > 0.0;
  cert.storage_positive = g.storage_positive();
  cert.kd_bar = caps.kd_bar;
  cert.kp_bar = caps.kp_bar;

  if (cert.lambda_pd) {
    cert.radius_linear = linear_radius(delta_bar, g.c, cert.lambda_min);
    cert.radius_sqrt = std::sqrt(cert.radius_linear);
    cert.radius = passivity_radius(delta_bar, g.c, cert.lambda_min);
  } else {
    cert.radius = cert.radius_sqrt = cert.radius_linear = std::numeric_limits<double>::infinity();
    cert.reasons.emplace_back("Λ not PD");
  }
  if (!cert.storage_positive) cert.reasons.emplace_back("storage function not positive: lambda_min(Kp) <= c^2");
  cert.ball_in_Dx = cert.lambda_pd && domain.states.contains_centered_ball(cert.radius);
  if (cert.lambda_pd && !cert.ball_in_Dx) cert.reasons.emplace_back("ball B_r not contained in D_x");

  cert.caps_valid = caps.kd_bar > g.c && caps.kp_bar > kp_cap_threshold(g.c, caps.kd_bar);
  if (cert.caps_valid) {
    cert.caps_satisfied = check_gain_caps(g, caps.kd_bar, caps.kp_bar);
    const auto req = required_xdot_bound(domain, caps.kd_bar, caps.kp_bar);
    cert.required_xdot = req.bound;
    cert.required_xdot_in_Dxdot = req.contained;
    if (!req.contained) cert.reasons.emplace_back("required xdot2 bound not contained in D_xdot");
  } else {
    cert.reasons.emplace_back("gain caps violate kd_bar > c or kp_bar > max{c kd_bar^2 / (4 (kd_bar - c)), c^2}");
  }
  const auto env = xdot2_envelope(delta_bar, g, domain);
  cert.xdot_envelope = env.bound;
  cert.envelope_in_Dxdot = env.contained;

  cert.verdict = cert.lambda_pd && cert.storage_positive && cert.ball_in_Dx && cert.caps_valid && cert.required_xdot_in_Dxdot;
  return cert;
}

inline PassivityCertificate certify(const ModelErrorBound& bound, const GainSet& g, const DomainSpec& domain,
                                    const GainCaps& caps) {
  return certify(bound.delta_bar, bound.delta, g, domain, caps);
}

inline void write_certificate(std::ostream& os, const PassivityCertificate& c) {
  ReportWriter w(os);
  w.comment("gpsp semi-passivity certificate v1");
  w.put("verdict", c.verdict);
  w.put("n", static_cast<long long>(c.gains.n()));
  w.put("c", c.gains.c).put("Kd", c.gains.Kd, true).put("Kp", c.gains.Kp, true);
  w.put("delta", c.delta).put("delta_bar", c.delta_bar);
  w.put("lambda_min", c.lambda_min).put("schur_witness", c.schur_witness).put("lambda_pd", c.lambda_pd);
  w.put("storage_positive", c.storage_positive);
  w.put("radius", c.radius).put("radius_sqrt", c.radius_sqrt).put("radius_linear", c.radius_linear);
  w.put("ball_in_Dx", c.ball_in_Dx);
  w.put("kd_bar", c.kd_bar).put("kp_bar", c.kp_bar).put("caps_valid", c.caps_valid).put("caps_satisfied", c.caps_satisfied);
  w.put("required_xdot", c.required_xdot).put("required_xdot_in_Dxdot", c.required_xdot_in_Dxdot);
  w.comment("envelope check below is conservative and does not enter the verdict");
  w.put("xdot_envelope", c.xdot_envelope).put("envelope_in_Dxdot", c.envelope_in_Dxdot);
  std::string reasons;
  for (const auto& r : c.reasons) reasons += (reasons.empty() ? "" : "; ") + r;
  w.put("reasons", reasons.empty() ? std::string("none") : reasons);
}

inline PassivityCertificate read_certificate(std::istream& is) {
  const Report r = Report::parse(is);
  PassivityCertificate c;
  const auto n = static_cast<Eigen::Index>(r.number("n"));
  const VectorXd kd = r.vector("Kd"), kp = r.vector("Kp");
  if (kd.size() != n * n || kp.size() != n * n) throw std::runtime_error("certificate: gain matrix size mismatch");
  c.gains = GainSet(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(kd.data(), n, n),
                    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(kp.data(), n, n),
                    r.number("c"));
  c.verdict = r.flag("verdict");
  c.delta = r.number("delta");
  c.delta_bar = r.number("delta_bar");
  c.lambda_min = r.number("lambda_min");
  c.schur_witness = r.number("schur_witness");
  c.lambda_pd = r.flag("lambda_pd");
  c.storage_positive = r.flag("storage_positive");
  c.radius = r.number("radius");
  c.radius_sqrt = r.number("radius_sqrt");
  c.radius_linear = r.number("radius_linear");
  c.ball_in_Dx = r.flag("ball_in_Dx");
  c.kd_bar = r.number("kd_bar");
  c.kp_bar = r.number("kp_bar");
  c.caps_valid = r.flag("caps_valid");
  c.caps_satisfied = r.flag("caps_satisfied");
  c.required_xdot = r.number("required_xdot");
  c.required_xdot_in_Dxdot = r.flag("required_xdot_in_Dxdot");
  c.xdot_envelope = r.number("xdot_envelope");
  c.envelope_in_Dxdot = r.flag("envelope_in_Dxdot");
  if (r.text("reasons") != "none") {
    std::string rest = r.text("reasons");
    for (std::size_t pos; (pos = rest.find("; ")) != std::string::npos; rest.erase(0, pos + 2))
      c.reasons.push_back(rest.substr(0, pos));
    c.reasons.push_back(rest);
  }
  return c;
}

}  // namespace gpsp
