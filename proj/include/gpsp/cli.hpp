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

// Pipeline commands behind the gpsp tool. Each returns an exit code; artifacts are
// written through a temporary file and renamed, so a failed command leaves no partial output.

#pragma once

#include <gpsp/config.hpp>
#include <gpsp/dynamics.hpp>
#include <gpsp/error_bound.hpp>
#include <gpsp/passivation.hpp>
#include <gpsp/report.hpp>
#include <gpsp/verification.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpsp {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitCertification = 2,
  kExitAudit = 3,
  kExitMissingArtifact = 4,
};

/// A prerequisite file does not exist.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& path) : std::runtime_error("missing artifact '" + path + "'"), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Input and output locations. Empty `out` means the command's default name.
struct Paths {
  std::string data = "training.csv";
  std::string model = "model.gp";
  std::string bound = "bound.txt";
  std::string gains;  // synthesized gains report; empty -> gains from config
  std::string cert = "certificate.txt";
  std::string out;
};

namespace detail {

inline std::ifstream open_artifact(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return in;
}

template <class F>
void write_artifact(const std::string& path, F&& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
    body(os);
    os.flush();
    if (!os) {
      std::remove(tmp.c_str());
      throw std::runtime_error("write failed for '" + path + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string or_default(const std::string& path, const char* fallback) { return path.empty() ? fallback : path; }

inline DuffingOscillator plant(const RunConfig& cfg) { return DuffingOscillator(cfg.system.params); }

inline GPModel read_model(const std::string& path) {
  auto in = open_artifact(path);
  return GPModel::read(in);
}

inline PassivityCertificate read_cert(const std::string& path) {
  auto in = open_artifact(path);
  return read_certificate(in);
}

inline void write_gains(std::ostream& os, const GainSet& g) {
  ReportWriter w(os);
  w.comment("gpsp gains v1");
  w.put("n", static_cast<long long>(g.n()));
  w.put("c", g.c).put("Kd", g.Kd, true).put("Kp", g.Kp, true);
  w.put("lambda_min", lambda_min_eig(g));
}

inline GainSet read_gains(std::istream& is) {
  const Report r = Report::parse(is);
  const auto n = static_cast<Eigen::Index>(r.number("n"));
  const VectorXd kd = r.vector("Kd"), kp = r.vector("Kp");
  if (kd.size() != n * n || kp.size() != n * n) throw std::runtime_error("gains: matrix size mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return {Eigen::Map<const RowMajor>(kd.data(), n, n), Eigen::Map<const RowMajor>(kp.data(), n, n), r.number("c")};
}

inline GainSet resolve_gains(const RunConfig& cfg, const Paths& paths) {
  if (!paths.gains.empty()) {
    auto in = open_artifact(paths.gains);
    return read_gains(in);
  }
  if (cfg.gains.mode == GainMode::kSynthesize)
    return synthesize_gains(cfg.gains.c, cfg.gains.lambda_target, MatrixXd::Constant(1, 1, cfg.gains.Kd),
                            MatrixXd::Constant(1, 1, cfg.gains.Kp));
  return cfg.fixed_gains();
}

inline ExternalInput external_input(const RunConfig& cfg) {
  if (cfg.sim.input == InputKind::kSine) return sine_input(1, cfg.sim.input_amplitude, cfg.sim.input_omega);
  return zero_input(1);
}

inline std::vector<State> initial_states(const RunConfig& cfg, const GainSet& g) {
  if (!cfg.sim.x0.empty()) {
    std::vector<State> out;
    for (const auto& [a, b] : cfg.sim.x0) out.emplace_back(VectorXd::Constant(1, a), VectorXd::Constant(1, b));
    return out;
  }
  const DomainSpec dom = cfg.domain_spec();
  return sample_sublevel_states(g, dom.states, sublevel_level(g, dom, cfg.sim.sublevel_margin), cfg.sim.trajectories, cfg.seed);
}

/// Calls f(model) with the compensator selected by sim.compensator.
template <class F>
auto with_compensator(const RunConfig& cfg, const Paths& paths, F&& f) {
  const DuffingOscillator sys = plant(cfg);
  switch (cfg.sim.compensator) {
    case Compensator::kPerfect:
      return f(PerfectCompensator<DuffingOscillator>(sys));
    case Compensator::kAdversarial:
      return f(OffsetModel<PerfectCompensator<DuffingOscillator>>(PerfectCompensator<DuffingOscillator>(sys),
                                                                   VectorXd::Constant(1, cfg.sim.adversarial_offset)));
    case Compensator::kGp:
    default:
      return f(read_model(paths.model));
  }
}

/// Sample index from which the trajectory stays inside the ball, or -1.
inline long ball_entry_index(const Trajectory& tr, double radius) {
  long entry = -1;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (tr.states[k].norm() <= radius) {
      if (entry < 0) entry = static_cast<long>(k);
    } else {
      entry = -1;
    }
  }
  return entry;
}

}  // namespace detail

inline int cmd_gen_data(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "training.csv");
  const auto gen = generate_training_data(detail::plant(cfg), cfg.domain_spec(), cfg.gp.m, cfg.noise_vector(), cfg.seed,
                                          cfg.target_sign());
  detail::write_artifact(out, [&](std::ostream& os) { write_training_csv(os, gen.data); });
  log << "wrote " << gen.data.m() << " training points to " << out << " (lattice";
  for (int c : gen.lattice) log << ' ' << c;
  log << ")\n";
  return kExitOk;
}

inline int cmd_train(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "model.gp");
  auto in = detail::open_artifact(paths.data);
  const TrainingSet data = read_training_csv(in, cfg.noise_vector());
  if (data.d() != 3) throw std::runtime_error(paths.data + ": expected a scalar plant (4 columns)");
  std::vector<Hyperparameters> hypers;
  std::vector<double> lml;
  if (cfg.gp.hyper == HyperMode::kOptimize) {
    const auto opt = optimize_hyperparameters(data, cfg.optimizer());
    hypers = opt.hypers;
    lml = opt.log_likelihood;
    if (opt.warning) log << "warning: optimizer did not improve on its initial guess for some output\n";
  } else {
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      hypers.push_back(cfg.fixed_hyperparameters());
      lml.push_back(log_marginal_likelihood(data, hypers.back(), i, false).value);
    }
  }
  const GPModel model = GPModel::fit(data, hypers);
  detail::write_artifact(out, [&](std::ostream& os) { model.write(os); });
  log << std::setprecision(6);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double sq = 0.0;
    for (Eigen::Index j = 0; j < data.m(); ++j) {
      const double r = model.predict_mean(i, data.inputs.col(j)) - data.targets(j, i);
      sq += r * r;
    }
    const auto& h = model.output(i).hyper;
    log << "output " << i << ": lml " << lml[static_cast<std::size_t>(i)] << ", sf2 " << h.signal_variance << ", ell "
        << h.lengthscales.transpose() << ", sn " << h.noise_std << ", residual rms "
        << std::sqrt(sq / static_cast<double>(data.m())) << " (noise " << data.noise_std(i) << ")\n";
  }
  log << "wrote model to " << out << "\n";
  return kExitOk;
}

inline int cmd_bound(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "bound.txt");
  const GPModel model = detail::read_model(paths.model);
  const auto b = compute_error_bound(model, cfg.domain_spec(), cfg.bound_config());
  detail::write_artifact(out, [&](std::ostream& os) { write_bound_report(os, b); });
  log << std::setprecision(6) << "delta_bar " << b.delta_bar << " at " << b.argmax.transpose() << " (rkhs "
      << b.rkhs_norms.transpose() << ", gamma " << b.gammas.transpose() << ", Delta " << b.delta_vec.transpose() << ")\n";
  log << "wrote bound to " << out << "\n";
  return kExitOk;
}

inline int cmd_synth_gains(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "gains.txt");
  const GainSet g = synthesize_gains(cfg.gains.c, cfg.gains.lambda_target, MatrixXd::Constant(1, 1, cfg.gains.Kd),
                                     MatrixXd::Constant(1, 1, cfg.gains.Kp));
  detail::write_artifact(out, [&](std::ostream& os) { detail::write_gains(os, g); });
  log << std::setprecision(6) << "Kd " << g.Kd(0, 0) << ", Kp " << g.Kp(0, 0) << ", lambda_min " << lambda_min_eig(g)
      << "\nwrote gains to " << out << "\n";
  return kExitOk;
}

inline int cmd_certify(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "certificate.txt");
  const GainSet g = detail::resolve_gains(cfg, paths);
  double delta_bar = 0.0, delta = cfg.bound.delta;
  if (cfg.bound.delta_bar_override) {
    delta_bar = *cfg.bound.delta_bar_override;
    if (std::filesystem::exists(paths.bound)) {
      std::ifstream in(paths.bound);
      log << "computed delta_bar " << read_bound_report(in).delta_bar << " replaced by override " << delta_bar << "\n";
    }
  } else {
    auto in = detail::open_artifact(paths.bound);
    const auto b = read_bound_report(in);
    delta_bar = b.delta_bar;
    delta = b.delta;
  }
  const auto cert = certify(delta_bar, delta, g, cfg.domain_spec(), cfg.caps());
  detail::write_artifact(out, [&](std::ostream& os) { write_certificate(os, cert); });
  log << std::setprecision(6) << "lambda_min " << cert.lambda_min << ", radius " << cert.radius << ", verdict "
      << (cert.verdict ? "pass" : "fail") << "\n";
  for (const auto& r : cert.reasons) log << "reason: " << r << "\n";
  log << "wrote certificate to " << out << "\n";
  return cert.verdict ? kExitOk : kExitCertification;
}

inline int cmd_simulate(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string dir = detail::or_default(paths.out, "trajectories");
  const PassivityCertificate cert = detail::read_cert(paths.cert);
  const DomainSpec dom = cfg.domain_spec();
  const auto x0 = detail::initial_states(cfg, cert.gains);
  std::vector<Trajectory> runs;
  detail::with_compensator(cfg, paths, [&](const auto& model) {
    SimOptions opt;
    opt.loop = cfg.loop_options();
    opt.domain = &dom;
    for (const auto& x : x0)
      runs.push_back(simulate(detail::plant(cfg), model, cert.gains, detail::external_input(cfg), x, cfg.sim.T, cfg.sim.dt, opt));
    return 0;
  });
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < runs.size(); ++k) {
    std::ostringstream name;
    name << dir << "/traj_" << std::setw(3) << std::setfill('0') << k << ".csv";
    detail::write_artifact(name.str(), [&](std::ostream& os) { write_trajectory_csv(os, runs[k]); });
    log << std::setprecision(6) << name.str() << ": x0 " << runs[k].states.front().stacked().transpose() << ", final |x| "
        << runs[k].states.back().norm() << ", nonconverged steps " << runs[k].nonconverged_steps << "\n";
  }
  return kExitOk;
}

inline int cmd_verify(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "audit.txt");
  const PassivityCertificate cert = detail::read_cert(paths.cert);
  const DomainSpec dom = cfg.domain_spec();
  const DuffingOscillator sys = detail::plant(cfg);
  const auto x0 = detail::initial_states(cfg, cert.gains);

  AuditReport traj_rep, grid_rep;
  long in_ball = 0, trajectories = 0;
  detail::with_compensator(cfg, paths, [&](const auto& model) {
    SimOptions opt;
    opt.loop = cfg.loop_options();
    opt.domain = &dom;
    std::vector<AuditSample> samples;
    for (const auto& x : x0) {
      const auto tr = simulate(sys, model, cert.gains, detail::external_input(cfg), x, cfg.sim.T, cfg.sim.dt, opt);
      const auto s = samples_from_trajectory(tr);
      samples.insert(samples.end(), s.begin(), s.end());
      ++trajectories;
      in_ball += detail::ball_entry_index(tr, cert.radius) >= 0;
    }
    traj_rep = semipassivity_audit(samples, cert, dom, {cfg.audit.tolerance, true});
    const auto grid = samples_from_grid(sys, model, cert.gains, dom.states, {cfg.audit.grid, cfg.audit.grid}, cfg.loop_options());
    // corner states can demand xdot2 outside D_xdot; containment is a trajectory property
    grid_rep = semipassivity_audit(grid, cert, dom, {cfg.audit.tolerance, false});
    return 0;
  });

  std::optional<CoverageReport> coverage;
  if (cfg.sim.compensator == Compensator::kGp && cfg.audit.coverage_points > 0 && std::filesystem::exists(paths.bound)) {
    std::ifstream bin(paths.bound);
    const auto b = read_bound_report(bin);
    const GPModel model = detail::read_model(paths.model);
    const Box box = dom.model_domain();
    coverage = model_error_empirical(model, sys, b.delta_vec, cert.delta_bar,
                                     random_queries(box, cfg.audit.coverage_points, sub_seed(cfg.seed, "coverage")), box);
  }

  const bool verdict = traj_rep.verdict && grid_rep.verdict && in_ball == trajectories;
  detail::write_artifact(out, [&](std::ostream& os) {
    ReportWriter w(os);
    w.comment("gpsp semi-passivity audit v1");
    w.comment("thresholds are tool policy: pass iff violation_fraction <= 1 - delta in both audits,");
    w.comment("every trajectory keeps xdot2 in D_xdot and ends inside the certificate ball");
    w.put("verdict", verdict).put("certificate_verdict", cert.verdict);
    w.put("trajectories", trajectories).put("trajectories_in_ball", in_ball);
    write_audit_report(os, traj_rep, nullptr, "trajectory.");
    write_audit_report(os, grid_rep, nullptr, "grid.");
    if (coverage) {
      w.put("coverage.points", coverage->points).put("coverage.error_coverage", coverage->coverage);
      w.put("coverage.max_model_error", coverage->max_error).put("coverage.max_pointwise_bound", coverage->max_bound);
      w.put("coverage.errors_above_delta_bar", coverage->above_delta_bar);
    }
  });
  log << std::setprecision(6) << "trajectory audit: " << traj_rep.checked << " checked, violation fraction "
      << traj_rep.violation_fraction << ", containment " << traj_rep.xdot_containment << "\n"
      << "grid audit: " << grid_rep.checked << " checked, violation fraction " << grid_rep.violation_fraction
      << ", unresolved " << grid_rep.unresolved << "\n"
      << "trajectories ending in B_r: " << in_ball << "/" << trajectories << "\n";
  if (coverage)
    log << "model error: max " << coverage->max_error << ", above delta_bar " << coverage->above_delta_bar << "/"
        << coverage->points << "\n";
  log << "verdict " << (verdict ? "pass" : "fail") << "\nwrote audit to " << out << "\n";
  return verdict ? kExitOk : kExitAudit;
}

inline int cmd_field(const RunConfig& cfg, const Paths& paths, std::ostream& log) {
  const std::string out = detail::or_default(paths.out, "field.csv");
  const Box box = Box::uniform(2, cfg.field.min, cfg.field.max);
  const std::vector<int> counts{cfg.field.count, cfg.field.count};
  const DuffingOscillator sys = detail::plant(cfg);
  std::vector<FieldRow> rows;
  if (cfg.field.mode == FieldMode::kOpenLoop) {
    rows = vector_field(sys, PerfectCompensator<DuffingOscillator>(sys), cfg.fixed_gains(), box, counts, FieldMode::kOpenLoop);
  } else {
    const PassivityCertificate cert = detail::read_cert(paths.cert);
    rows = detail::with_compensator(cfg, paths, [&](const auto& model) {
      return vector_field(sys, model, cert.gains, box, counts, FieldMode::kClosedLoop, cfg.loop_options());
    });
  }
  detail::write_artifact(out, [&](std::ostream& os) { write_field_csv(os, rows); });
  log << "wrote " << rows.size() << " field rows to " << out << "\n";
  return kExitOk;
}

}  // namespace gpsp
