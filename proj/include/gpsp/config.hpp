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

// Run configuration: sectioned key = value text, flag overrides, validation by key path.

#pragma once

#include <gpsp/dynamics.hpp>
#include <gpsp/error_bound.hpp>
#include <gpsp/gp_regression.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpsp {

/// Bad or unknown configuration entry. The message starts with the key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HyperMode { kOptimize, kFixed };
enum class GainMode { kFixed, kSynthesize };
enum class Compensator { kGp, kPerfect, kAdversarial };
enum class InputKind { kZero, kSine };

/// Defaults reproduce the Duffing benchmark: 720 lattice points, c = 0.5, Kd = 0.9, Kp = 1.
struct RunConfig {
  std::uint64_t seed = 1;

  struct {
    std::string name = "duffing";
    DuffingParams params;
    bool paper_literal_sign = false;
  } system;

  struct {
    double x_min = -2.0, x_max = 2.0;
    double xdot_min = -2.55, xdot_max = 4.55;
    double u_ex_max = 0.1;
  } domain;

  struct {
    long m = 720;
    double noise = 0.01;
    HyperMode hyper = HyperMode::kOptimize;
    double signal_variance = 1.0;
    std::vector<double> lengthscales{1.0, 1.0, 1.0};
    double noise_std = 0.01;
    int restarts = 5;
    int max_iterations = 500;
    double signal_ratio_cap = 100.0;
  } gp;

  struct {
    double delta = 0.95;
    std::optional<double> rkhs_norm;  // empty -> data surrogate
    int grid_resolution = 25;
    int gamma_resolution = 12;
    std::optional<double> delta_bar_override = 0.045;  // empty -> computed bound
  } bound;

  struct {
    GainMode mode = GainMode::kFixed;
    double Kd = 0.9, Kp = 1.0, c = 0.5;
    double lambda_target = 0.2;
    double kd_bar = 0.9, kp_bar = 0.254;
  } gains;

  struct {
    int trajectories = 20;
    std::vector<std::pair<double, double>> x0;  // empty -> sampled from a storage sublevel set
    double sublevel_margin = 0.9;
    double T = 30.0, dt = 0.01;
    LoopMode loop = LoopMode::kFixedPoint;
    double loop_tolerance = 1e-10;
    int loop_max_iterations = 50;
    InputKind input = InputKind::kZero;
    double input_amplitude = 0.1, input_omega = 1.0;
    Compensator compensator = Compensator::kGp;
    double adversarial_offset = 0.45;
  } sim;

  struct {
    double tolerance = 1e-3;
    int grid = 50;
    long coverage_points = 2000;
  } audit;

  struct {
    double min = -4.0, max = 4.0;
    int count = 21;
    FieldMode mode = FieldMode::kOpenLoop;
  } field;

  DomainSpec domain_spec() const {
    return DomainSpec::uniform(1, domain.x_min, domain.x_max, domain.xdot_min, domain.xdot_max, domain.u_ex_max);
  }
  GainSet fixed_gains() const { return GainSet::scalar(gains.Kd, gains.Kp, gains.c); }
  GainCaps caps() const { return {gains.kd_bar, gains.kp_bar}; }
  VectorXd noise_vector() const { return VectorXd::Constant(1, gp.noise); }
  TargetSign target_sign() const { return system.paper_literal_sign ? TargetSign::kPaperLiteral : TargetSign::kPlus; }
  LoopOptions loop_options() const { return {sim.loop, sim.loop_tolerance, sim.loop_max_iterations}; }

  OptimizerConfig optimizer() const {
    OptimizerConfig o;
    o.restarts = gp.restarts;
    o.max_iterations = gp.max_iterations;
    o.signal_ratio_cap = gp.signal_ratio_cap;
    o.seed = sub_seed(seed, "optimizer");
    return o;
  }
  BoundConfig bound_config() const {
    BoundConfig b;
    b.delta = bound.delta;
    if (bound.rkhs_norm) b.rkhs_norms = {*bound.rkhs_norm};
    b.grid_resolution = bound.grid_resolution;
    b.gamma_resolution = bound.gamma_resolution;
    return b;
  }
  Hyperparameters fixed_hyperparameters() const {
    return {gp.signal_variance, Eigen::Map<const VectorXd>(gp.lengthscales.data(), 3), gp.noise_std};
  }
};

namespace detail {

namespace pt = boost::property_tree;

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

template <>
inline bool parse_scalar<bool>(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(parse_scalar<double>(key, tok));
  return out;
}

class ConfigReader {
 public:
  explicit ConfigReader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return *v;
  }
  template <class T>
  void read(const std::string& key, T& target) {
    if (auto v = raw(key)) target = parse_scalar<T>(key, *v);
  }
  template <class E>
  void read_enum(const std::string& key, E& target, std::initializer_list<std::pair<const char*, E>> names) {
    const auto v = raw(key);
    if (!v) return;
    std::string allowed;
    for (const auto& [name, value] : names) {
      if (*v == name) {
        target = value;
        return;
      }
      allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    }
    throw ConfigError(key + ": expected one of " + allowed + ", got '" + *v + "'");
  }
  /// `none` clears the optional.
  void read_optional(const std::string& key, std::optional<double>& target) {
    const auto v = raw(key);
    if (!v) return;
    if (*v == "none") target.reset();
    else target = parse_scalar<double>(key, *v);
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (!body.data().empty()) throw ConfigError(section + ": key outside any section");
      for (const auto& [key, value] : body) {
        const std::string path = section + "." + key;
        if (!seen_.count(path)) throw ConfigError(path + ": unknown key");
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> seen_;
};

inline void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace detail

/// Throws ConfigError naming the first offending key.
inline void validate(const RunConfig& c) {
  using detail::check;
  check(c.system.name == "duffing", "system.name", "only 'duffing' is available");
  check(c.domain.x_min < 0.0 && c.domain.x_max > 0.0, "domain.x_min", "state box must contain the origin");
  check(c.domain.xdot_min < 0.0 && c.domain.xdot_max > 0.0, "domain.xdot_min", "acceleration box must contain 0");
  check(c.domain.u_ex_max >= 0.0, "domain.u_ex_max", "must be >= 0");
  check(c.gp.m >= 1, "gp.m", "must be >= 1");
  check(c.gp.noise > 0.0, "gp.noise", "must be > 0");
  check(c.gp.lengthscales.size() == 3, "gp.lengthscales", "needs 3 values (xdot2 x1 x2)");
  for (double l : c.gp.lengthscales) check(l > 0.0, "gp.lengthscales", "must be positive");
  check(c.gp.signal_variance > 0.0, "gp.signal_variance", "must be > 0");
  check(c.gp.noise_std > 0.0, "gp.noise_std", "must be > 0");
  check(c.gp.restarts >= 1, "gp.restarts", "must be >= 1");
  check(c.gp.max_iterations >= 1, "gp.max_iterations", "must be >= 1");
  check(c.gp.signal_ratio_cap > 0.0, "gp.signal_ratio_cap", "must be > 0");
  check(c.bound.delta > 0.0 && c.bound.delta < 1.0, "bound.delta", "must lie in (0, 1)");
  check(!c.bound.rkhs_norm || *c.bound.rkhs_norm >= 0.0, "bound.rkhs_norm", "must be >= 0");
  check(c.bound.grid_resolution >= 1, "bound.grid_resolution", "must be >= 1");
  check(c.bound.gamma_resolution >= 1, "bound.gamma_resolution", "must be >= 1");
  check(!c.bound.delta_bar_override || *c.bound.delta_bar_override >= 0.0, "bound.delta_bar_override", "must be >= 0");
  check(c.gains.Kd > 0.0, "gains.Kd", "must be > 0");
  check(c.gains.Kp > 0.0, "gains.Kp", "must be > 0");
  check(c.gains.c > 0.0, "gains.c", "must be > 0");
  check(c.gains.lambda_target >= 0.0, "gains.lambda_target", "must be >= 0");
  check(c.sim.trajectories >= 0, "sim.trajectories", "must be >= 0");
  check(c.sim.sublevel_margin > 0.0 && c.sim.sublevel_margin <= 1.0, "sim.sublevel_margin", "must lie in (0, 1]");
  check(c.sim.T > 0.0, "sim.T", "must be > 0");
  check(c.sim.dt > 0.0 && c.sim.dt <= c.sim.T, "sim.dt", "must lie in (0, T]");
  check(c.sim.loop_tolerance > 0.0, "sim.loop_tolerance", "must be > 0");
  check(c.sim.loop_max_iterations >= 1, "sim.loop_max_iterations", "must be >= 1");
  check(c.audit.tolerance >= 0.0, "audit.tolerance", "must be >= 0");
  check(c.audit.grid >= 1, "audit.grid", "must be >= 1");
  check(c.audit.coverage_points >= 0, "audit.coverage_points", "must be >= 0");
  check(c.field.min < c.field.max, "field.min", "must be below field.max");
  check(c.field.count >= 1, "field.count", "must be >= 1");
}

/// Parse INI text, apply `section.key=value` overrides (overrides win), validate.
inline RunConfig parse_config(std::istream& is, const std::vector<std::string>& overrides = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(o + ": override must look like section.key=value");
    const std::string key = o.substr(0, eq);
    if (key.find('.') == std::string::npos) throw ConfigError(key + ": override key needs a section");
    tree.put(pt::ptree::path_type(key, '.'), o.substr(eq + 1));
  }

  RunConfig c;
  detail::ConfigReader r(tree);
  r.read("run.seed", c.seed);
  r.read("system.name", c.system.name);
  r.read("system.alpha", c.system.params.alpha);
  r.read("system.beta", c.system.params.beta);
  r.read("system.gamma", c.system.params.gamma_damp);
  r.read("system.paper_literal_sign", c.system.paper_literal_sign);
  r.read("domain.x_min", c.domain.x_min);
  r.read("domain.x_max", c.domain.x_max);
  r.read("domain.xdot_min", c.domain.xdot_min);
  r.read("domain.xdot_max", c.domain.xdot_max);
  r.read("domain.u_ex_max", c.domain.u_ex_max);
  r.read("gp.m", c.gp.m);
  r.read("gp.noise", c.gp.noise);
  r.read_enum("gp.hyperparameters", c.gp.hyper, {{"optimize", HyperMode::kOptimize}, {"fixed", HyperMode::kFixed}});
  r.read("gp.signal_variance", c.gp.signal_variance);
  if (auto v = r.raw("gp.lengthscales")) c.gp.lengthscales = detail::parse_list("gp.lengthscales", *v);
  r.read("gp.noise_std", c.gp.noise_std);
  r.read("gp.restarts", c.gp.restarts);
  r.read("gp.max_iterations", c.gp.max_iterations);
  r.read("gp.signal_ratio_cap", c.gp.signal_ratio_cap);
  r.read("bound.delta", c.bound.delta);
  if (auto v = r.raw("bound.rkhs_norm")) {
    if (*v == "surrogate") c.bound.rkhs_norm.reset();
    else c.bound.rkhs_norm = detail::parse_scalar<double>("bound.rkhs_norm", *v);
  }
  r.read("bound.grid_resolution", c.bound.grid_resolution);
  r.read("bound.gamma_resolution", c.bound.gamma_resolution);
  r.read_optional("bound.delta_bar_override", c.bound.delta_bar_override);
  r.read_enum("gains.mode", c.gains.mode, {{"fixed", GainMode::kFixed}, {"synthesize", GainMode::kSynthesize}});
  r.read("gains.Kd", c.gains.Kd);
  r.read("gains.Kp", c.gains.Kp);
  r.read("gains.c", c.gains.c);
  r.read("gains.lambda_target", c.gains.lambda_target);
  r.read("gains.kd_bar", c.gains.kd_bar);
  r.read("gains.kp_bar", c.gains.kp_bar);
  r.read("sim.trajectories", c.sim.trajectories);
  if (auto v = r.raw("sim.x0"); v && *v != "sublevel") {
    // "x1 x2; x1 x2; ..."
    std::istringstream is2(*v);
    std::string item;
    c.sim.x0.clear();
    while (std::getline(is2, item, ';')) {
      const auto p = detail::parse_list("sim.x0", item);
      if (p.size() != 2) throw ConfigError("sim.x0: each state needs two numbers, got '" + item + "'");
      c.sim.x0.emplace_back(p[0], p[1]);
    }
    if (c.sim.x0.empty()) throw ConfigError("sim.x0: empty state list");
  }
  r.read("sim.sublevel_margin", c.sim.sublevel_margin);
  r.read("sim.T", c.sim.T);
  r.read("sim.dt", c.sim.dt);
  r.read_enum("sim.loop", c.sim.loop, {{"fixed-point", LoopMode::kFixedPoint}, {"delayed", LoopMode::kDelayed}});
  r.read("sim.loop_tolerance", c.sim.loop_tolerance);
  r.read("sim.loop_max_iterations", c.sim.loop_max_iterations);
  r.read_enum("sim.input", c.sim.input, {{"zero", InputKind::kZero}, {"sine", InputKind::kSine}});
  r.read("sim.input_amplitude", c.sim.input_amplitude);
  r.read("sim.input_omega", c.sim.input_omega);
  r.read_enum("sim.compensator", c.sim.compensator,
              {{"gp", Compensator::kGp}, {"perfect", Compensator::kPerfect}, {"adversarial", Compensator::kAdversarial}});
  r.read("sim.adversarial_offset", c.sim.adversarial_offset);
  r.read("audit.tolerance", c.audit.tolerance);
  r.read("audit.grid", c.audit.grid);
  r.read("audit.coverage_points", c.audit.coverage_points);
  r.read("field.min", c.field.min);
  r.read("field.max", c.field.max);
  r.read("field.count", c.field.count);
  r.read_enum("field.mode", c.field.mode, {{"open", FieldMode::kOpenLoop}, {"closed", FieldMode::kClosedLoop}});
  r.reject_unknown();
  validate(c);
  return c;
}

/// Empty path -> built-in defaults (overrides still apply).
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  if (path.empty()) {
    std::istringstream empty;
    return parse_config(empty, overrides);
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  return parse_config(in, overrides);
}

}  // namespace gpsp
