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

// Plants of the form x1' = x2, x2' = f(x, u) with an invertible input map, the
// composite law u = u_c + u_gp - u_ex, and fixed-step RK4 closed-loop simulation.

#pragma once

#include <gpsp/domain.hpp>
#include <gpsp/gp_regression.hpp>
#include <gpsp/passivation.hpp>
#include <gpsp/random.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gpsp {

/// Forward map xdot2 = f(x, u) and its inverse u = f^{-1}(x, xdot2).
template <typename S>
concept SecondOrderSystem = requires(const S& s, const State& x, const VectorXd& v) {
  { s.n() } -> std::convertible_to<Eigen::Index>;
  { s.accel(x, v) } -> std::convertible_to<VectorXd>;
  { s.input_for(x, v) } -> std::convertible_to<VectorXd>;
};

/// Anything that predicts a mean at a (xdot2; x1; x2) query.
template <typename M>
concept MeanModel = requires(const M& m, const VectorXd& q) {
  { m.predict_mean(q) } -> std::convertible_to<VectorXd>;
};

struct DuffingParams {
  double alpha = -0.1;
  double beta = -0.1;
  double gamma_damp = 0.1;
};

/// xdot2 = cbrt(u) - gamma x2 - alpha x1 - beta x1^3 + 1, cbrt being the real signed root.
class DuffingOscillator {
 public:
  DuffingOscillator() = default;
  explicit DuffingOscillator(DuffingParams p) : p_(p) {}

  Eigen::Index n() const { return 1; }
  const DuffingParams& params() const { return p_; }

  double drift(double x1, double x2) const { return -p_.gamma_damp * x2 - p_.alpha * x1 - p_.beta * x1 * x1 * x1 + 1.0; }

  double f(double x1, double x2, double u) const { return std::cbrt(u) + drift(x1, x2); }
  double f_inverse(double x1, double x2, double xdot2) const {
    const double r = xdot2 - drift(x1, x2);
    return r * r * r;
  }

  VectorXd accel(const State& x, const VectorXd& u) const {
    require(x.n() == 1 && u.size() == 1, "DuffingOscillator: scalar plant");
    return VectorXd::Constant(1, f(x.x1(0), x.x2(0), u(0)));
  }
  VectorXd input_for(const State& x, const VectorXd& xdot2) const {
    require(x.n() == 1 && xdot2.size() == 1, "DuffingOscillator: scalar plant");
    return VectorXd::Constant(1, f_inverse(x.x1(0), x.x2(0), xdot2(0)));
  }

 private:
  DuffingParams p_;
};

inline double duffing_f(const State& x, double u, const DuffingParams& p = {}) {
  return DuffingOscillator(p).f(x.x1(0), x.x2(0), u);
}
inline double duffing_f_inverse(const State& x, double xdot2, const DuffingParams& p = {}) {
  return DuffingOscillator(p).f_inverse(x.x1(0), x.x2(0), xdot2);
}

/// y_ex = c x1 + x2
inline VectorXd passive_output(const State& x, double c) { return c * x.x1 + x.x2; }

/// u_c = Kd x2 + Kp x1
inline VectorXd pd_control(const State& x, const GainSet& g) {
  require(x.n() == g.n(), "pd_control: state/gain dimension mismatch");
  return g.Kd * x.x2 + g.Kp * x.x1;
}

/// Unknown-function value the model learns: f^{-1}(x, xdot2) + xdot2.
template <SecondOrderSystem S>
VectorXd true_compensation(const S& sys, const State& x, const VectorXd& xdot2) {
  return sys.input_for(x, xdot2) + xdot2;
}

/// Model stub returning the exact compensation term (zero model error).
template <SecondOrderSystem S>
class PerfectCompensator {
 public:
  explicit PerfectCompensator(S sys) : sys_(std::move(sys)) {}
  VectorXd predict_mean(const VectorXd& q) const {
    const Eigen::Index n = sys_.n();
    require(q.size() == 3 * n, "PerfectCompensator: query must be (xdot2; x1; x2)");
    return true_compensation(sys_, State(q.segment(n, n), q.tail(n)), q.head(n));
  }

 private:
  S sys_;
};

/// Wraps a model and shifts its mean by a constant vector.
template <MeanModel M>
class OffsetModel {
 public:
  OffsetModel(M base, VectorXd offset) : base_(std::move(base)), offset_(std::move(offset)) {}
  VectorXd predict_mean(const VectorXd& q) const { return base_.predict_mean(q) + offset_; }

 private:
  M base_;
  VectorXd offset_;
};

/// Lattice node counts per axis with product closest to m (exact when possible), most
/// balanced among ties; larger counts go to wider axes.
inline std::vector<int> lattice_shape(long m, const Eigen::Ref<const VectorXd>& axis_ranges) {
  require(m >= 1, "lattice_shape: m must be >= 1");
  const int d = static_cast<int>(axis_ranges.size());
  require(d >= 1, "lattice_shape: need at least one axis");
  std::vector<int> best, cur;
  long best_err = std::numeric_limits<long>::max();
  double best_ratio = std::numeric_limits<double>::infinity();
  // nondecreasing tuples with product <= 2m
  std::function<void(int, long, int)> rec = [&](int depth, long prod, int lo) {
    if (depth == d) {
      const long err = std::labs(prod - m);
      const double ratio = static_cast<double>(cur.back()) / cur.front();
      if (err < best_err || (err == best_err && ratio < best_ratio)) {
        best_err = err;
        best_ratio = ratio;
        best = cur;
      }
      return;
    }
    for (int a = lo; prod * a <= 2 * m; ++a) {
      // remaining axes take at least `a` each
      long min_rest = prod;
      for (int r = depth; r < d && min_rest <= 2 * m; ++r) min_rest *= a;
      if (min_rest > 2 * m) break;
      cur.push_back(a);
      rec(depth + 1, prod * a, a);
      cur.pop_back();
    }
  };
  rec(0, 1, 1);
  std::vector<int> order(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) order[static_cast<std::size_t>(k)] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return axis_ranges(a) > axis_ranges(b); });
  std::vector<int> counts(static_cast<std::size_t>(d));
  for (int r = 0; r < d; ++r) counts[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = best[static_cast<std::size_t>(d - 1 - r)];
  return counts;
}

enum class TargetSign {
  kPlus,          // y = u + xdot2 (closes the loop consistently)
  kPaperLiteral,  // y = u - xdot2
};

struct GeneratedData {
  TrainingSet data;
  std::vector<int> lattice;
  long requested = 0;
};

/// Regular lattice over D_xdot x D_x; targets f^{-1}(x, xdot2) +/- xdot2 plus seeded Gaussian noise.
template <SecondOrderSystem S>
GeneratedData generate_training_data(const S& sys, const DomainSpec& domain, long m, const VectorXd& noise_std,
                                     std::uint64_t seed, TargetSign sign = TargetSign::kPlus) {
  domain.validate();
  const Eigen::Index n = sys.n();
  require(domain.n() == n, "generate_training_data: domain/system dimension mismatch");
  require(noise_std.size() == n && (noise_std.array() >= 0.0).all(), "generate_training_data: noise_std per output, >= 0");
  const Box box = domain.model_domain();
  GeneratedData out;
  out.requested = m;
  out.lattice = lattice_shape(m, box.upper - box.lower);
  const auto nodes = regular_grid(box, out.lattice);
  const auto count = static_cast<Eigen::Index>(nodes.size());
  out.data.inputs.resize(3 * n, count);
  out.data.targets.resize(count, n);
  out.data.noise_std = noise_std;
  Rng rng = make_rng(seed, "training-noise");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < count; ++j) {
    const VectorXd& q = nodes[static_cast<std::size_t>(j)];
    const VectorXd a = q.head(n);
    const State x(q.segment(n, n), q.tail(n));
    const VectorXd u = sys.input_for(x, a);
    const VectorXd clean = sign == TargetSign::kPlus ? VectorXd(u + a) : VectorXd(u - a);
    out.data.inputs.col(j) = q;
    for (Eigen::Index i = 0; i < n; ++i) out.data.targets(j, i) = clean(i) + noise_std(i) * normal(rng);
  }
  return out;
}

struct FeedForward {
  VectorXd u_gp;
  bool outside_domain = false;  // query left D_xdot x D_x: bound no longer applies
};

template <MeanModel M>
FeedForward gp_feedforward(const M& model, const State& x, const VectorXd& xdot2_est, const DomainSpec* domain = nullptr) {
  FeedForward out;
  const VectorXd q = stack_query(xdot2_est, x);
  out.u_gp = model.predict_mean(q);
  if (domain) out.outside_domain = !domain->model_domain().contains(q);
  return out;
}

enum class LoopMode {
  kFixedPoint,  // resolve xdot2 <-> u_gp consistently at every RK4 stage
  kDelayed,     // use the previous step's xdot2 for the model query
};

struct LoopOptions {
  LoopMode mode = LoopMode::kFixedPoint;
  double tolerance = 1e-10;
  int max_iterations = 50;
};

/// Mean plus its rounding floor when the model reports one (GPModel does), zero otherwise.
template <MeanModel M>
std::pair<VectorXd, double> mean_with_rounding(const M& model, const VectorXd& q) {
  if constexpr (requires { model.predict_mean_rounded(q); }) {
    auto r = model.predict_mean_rounded(q);
    return {std::move(r.mean), r.rounding.size() ? r.rounding.template lpNorm<Eigen::Infinity>() : 0.0};
  } else {
    return {model.predict_mean(q), 0.0};
  }
}

struct LoopSolution {
  VectorXd xdot2;  // plant acceleration under the applied input
  VectorXd u, u_c, u_gp, u_ex;
  int iterations = 0;
  bool converged = true;
};

/// Consistent (xdot2, u) at a fixed state. Iterates a <- a + f^{-1}(x, a) - u(a), i.e. the
/// closed-loop form a = f~(x, a) - mu(x, a) - u_c + u_ex, whose slope is the model-error slope.
/// Converged when the update is below tolerance * (1 + |a|) plus twice the mean's rounding floor.
template <SecondOrderSystem S, MeanModel M>
LoopSolution solve_algebraic_loop(const S& sys, const M& model, const GainSet& g, const VectorXd& u_ex, const State& x,
                                  const VectorXd& seed, const LoopOptions& opt) {
  LoopSolution s;
  s.u_c = pd_control(x, g);
  s.u_ex = u_ex;
  VectorXd a = seed;
  if (opt.mode == LoopMode::kDelayed) {
    s.u_gp = model.predict_mean(stack_query(a, x));
  } else {
    s.converged = false;
    for (s.iterations = 1; s.iterations <= opt.max_iterations; ++s.iterations) {
      const auto [u_gp, rounding] = mean_with_rounding(model, stack_query(a, x));
      const VectorXd next = a + sys.input_for(x, a) - (s.u_c + u_gp - u_ex);
      if (!next.allFinite()) break;
      const double step = (next - a).lpNorm<Eigen::Infinity>();
      a = next;
      // below the model's own rounding noise no further progress is measurable
      if (step <= opt.tolerance * (1.0 + a.lpNorm<Eigen::Infinity>()) + 2.0 * rounding) {
        s.converged = true;
        break;
      }
    }
    s.iterations = std::min(s.iterations, opt.max_iterations);
    s.u_gp = model.predict_mean(stack_query(a, x));
  }
  s.u = s.u_c + s.u_gp - u_ex;
  s.xdot2 = sys.accel(x, s.u);
  return s;
}

struct StepResult {
  State next;
  LoopSolution at_start;  // channels at the step's initial state
  VectorXd xdot2_carry;   // seed for the next step
  bool converged = true;
};

/// One classical RK4 step of x1' = x2, x2' = f(x, u_c + u_gp - u_ex).
template <SecondOrderSystem S, MeanModel M>
StepResult closed_loop_step(const S& sys, const M& model, const GainSet& g, const VectorXd& u_ex, const State& x,
                            const VectorXd& xdot2_prev, double dt, const LoopOptions& opt = {}) {
  require(dt > 0.0, "closed_loop_step: dt must be positive");
  StepResult r;
  VectorXd seed = xdot2_prev;
  const VectorXd held = xdot2_prev;  // delayed mode query
  auto deriv = [&](const State& xs, LoopSolution* keep) {
    const LoopSolution sol = solve_algebraic_loop(sys, model, g, u_ex, xs, opt.mode == LoopMode::kDelayed ? held : seed, opt);
    r.converged = r.converged && sol.converged;
    if (opt.mode == LoopMode::kFixedPoint) seed = sol.xdot2;
    if (keep) *keep = sol;
    return std::pair<VectorXd, VectorXd>{xs.x2, sol.xdot2};
  };
  const auto [k1p, k1v] = deriv(x, &r.at_start);
  const State s2(x.x1 + 0.5 * dt * k1p, x.x2 + 0.5 * dt * k1v);
  const auto [k2p, k2v] = deriv(s2, nullptr);
  const State s3(x.x1 + 0.5 * dt * k2p, x.x2 + 0.5 * dt * k2v);
  const auto [k3p, k3v] = deriv(s3, nullptr);
  const State s4(x.x1 + dt * k3p, x.x2 + dt * k3v);
  const auto [k4p, k4v] = deriv(s4, nullptr);
  r.next = State(x.x1 + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p), x.x2 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v));
  r.xdot2_carry = r.at_start.xdot2;
  return r;
}

using ExternalInput = std::function<VectorXd(double t, const State& x)>;

inline ExternalInput zero_input(Eigen::Index n) {
  return [n](double, const State&) { return VectorXd::Zero(n); };
}

/// u_ex(t) = amplitude * sin(omega t) on every channel.
inline ExternalInput sine_input(Eigen::Index n, double amplitude, double omega) {
  return [=](double t, const State&) { return VectorXd::Constant(n, amplitude * std::sin(omega * t)); };
}

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<VectorXd> xdot2, u, u_c, u_gp, u_ex;
  std::vector<double> V;
  std::vector<char> loop_converged;
  bool exited_safety_box = false;
  int nonconverged_steps = 0;
  int outside_model_domain = 0;

  std::size_t size() const { return times.size(); }
};

struct SimOptions {
  LoopOptions loop;
  std::optional<Box> safety_box;  // stop when the stacked (x1; x2) leaves it
  const DomainSpec* domain = nullptr;
};

/// Fixed-step simulation from x0 over [0, T]. Channels are recorded at every grid time.
template <SecondOrderSystem S, MeanModel M>
Trajectory simulate(const S& sys, const M& model, const GainSet& g, const ExternalInput& u_ex, const State& x0, double T,
                    double dt, const SimOptions& opt = {}) {
  require(T > 0.0 && dt > 0.0, "simulate: T and dt must be positive");
  require(x0.n() == sys.n() && g.n() == sys.n(), "simulate: dimension mismatch");
  const auto steps = static_cast<long>(std::llround(T / dt));
  Trajectory tr;
  tr.times.reserve(static_cast<std::size_t>(steps + 1));
  const bool storage_ok = g.storage_positive();
  State x = x0;
  // nominal PD response seeds the first loop solve
  VectorXd carry = u_ex(0.0, x0) - pd_control(x0, g);
  auto record = [&](double t, const LoopSolution& sol) {
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.xdot2.push_back(sol.xdot2);
    tr.u.push_back(sol.u);
    tr.u_c.push_back(sol.u_c);
    tr.u_gp.push_back(sol.u_gp);
    tr.u_ex.push_back(sol.u_ex);
    tr.V.push_back(storage_ok ? storage_value(x, g) : std::numeric_limits<double>::quiet_NaN());
    tr.loop_converged.push_back(sol.converged);
    if (opt.domain && !opt.domain->model_domain().contains(stack_query(sol.xdot2, x))) ++tr.outside_model_domain;
  };
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (opt.safety_box && !opt.safety_box->contains(x.stacked())) {
      tr.exited_safety_box = true;
      break;
    }
    const VectorXd uex = u_ex(t, x);
    if (k == steps) {
      const auto sol = solve_algebraic_loop(sys, model, g, uex, x, carry, opt.loop);
      if (!sol.converged) ++tr.nonconverged_steps;
      record(t, sol);
      break;
    }
    const StepResult st = closed_loop_step(sys, model, g, uex, x, carry, dt, opt.loop);
    if (!st.converged) ++tr.nonconverged_steps;
    record(t, st.at_start);
    x = st.next;
    carry = st.xdot2_carry;
    if (!x.x1.allFinite() || !x.x2.allFinite()) {
      tr.exited_safety_box = true;
      break;
    }
  }
  return tr;
}

/// Largest level rho such that {V <= rho} stays inside D_x and the nominal demand
/// |Kd x2 + Kp x1| stays inside D_xdot, scaled by `margin`. Uses max_{x'Px <= 2 rho} w'x = sqrt(2 rho w'P^{-1}w).
inline double sublevel_level(const GainSet& g, const DomainSpec& domain, double margin = 0.9) {
  require(margin > 0.0 && margin <= 1.0, "sublevel_level: margin must lie in (0, 1]");
  require(g.storage_positive(), "sublevel_level: requires lambda_min(Kp) > c^2");
  const Eigen::Index n = g.n();
  require(domain.n() == n, "sublevel_level: domain/gain dimension mismatch");
  MatrixXd P(2 * n, 2 * n);  // V = x'Px / 2 in stacked (x1; x2)
  P << g.Kp, g.c * MatrixXd::Identity(n, n), g.c * MatrixXd::Identity(n, n), MatrixXd::Identity(n, n);
  const Eigen::LLT<MatrixXd> llt(P);
  double rho = std::numeric_limits<double>::infinity();
  auto limit = [&](const VectorXd& w, double reach) {
    require(reach > 0.0, "sublevel_level: domain must contain the origin in its interior");
    rho = std::min(rho, reach * reach / (2.0 * w.dot(llt.solve(w))));
  };
  for (Eigen::Index k = 0; k < 2 * n; ++k)
    limit(VectorXd::Unit(2 * n, k), std::min(-domain.states.lower(k), domain.states.upper(k)));
  for (Eigen::Index i = 0; i < n; ++i) {
    VectorXd w(2 * n);
    w << g.Kp.row(i).transpose(), g.Kd.row(i).transpose();
    limit(w, std::min(-domain.accelerations.lower(i), domain.accelerations.upper(i)));
  }
  return margin * rho;
}

/// Rejection-sampled states with V(x) <= rho, drawn uniformly from `box`.
inline std::vector<State> sample_sublevel_states(const GainSet& g, const Box& box, double rho, int count, std::uint64_t seed) {
  require(count >= 0 && rho > 0.0, "sample_sublevel_states: need count >= 0 and rho > 0");
  require(box.dim() == 2 * g.n(), "sample_sublevel_states: box must be 2n-dimensional");
  Rng rng = make_rng(seed, "initial-states");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<State> out;
  VectorXd p(box.dim());
  for (long tries = 0; static_cast<int>(out.size()) < count; ++tries) {
    if (tries > 1000L * (count + 1)) throw std::runtime_error("sample_sublevel_states: acceptance rate too low");
    for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = box.lower(k) + u(rng) * (box.upper(k) - box.lower(k));
    const State x = State::from_stacked(p);
    if (storage_value(x, g) <= rho) out.push_back(x);
  }
  return out;
}

enum class FieldMode { kOpenLoop, kClosedLoop };

struct FieldRow {
  State x;
  VectorXd xdot1, xdot2;
  bool converged = true;  // closed-loop algebraic loop resolved
};

/// Vector field (x1, x2) -> (x1', x2') at grid nodes of the state box.
template <SecondOrderSystem S, MeanModel M>
std::vector<FieldRow> vector_field(const S& sys, const M& model, const GainSet& g, const Box& state_box,
                                   const std::vector<int>& counts, FieldMode mode, const LoopOptions& loop = {}) {
  require(state_box.dim() == 2 * sys.n(), "vector_field: state box must be 2n-dimensional");
  std::vector<FieldRow> rows;
  for (const auto& node : regular_grid(state_box, counts)) {
    const State x = State::from_stacked(node);
    FieldRow row{x, x.x2, VectorXd(), true};
    if (mode == FieldMode::kOpenLoop) {
      row.xdot2 = sys.accel(x, VectorXd::Zero(sys.n()));
    } else {
      const VectorXd zero = VectorXd::Zero(sys.n());
      const auto sol = solve_algebraic_loop(sys, model, g, zero, x, VectorXd(-pd_control(x, g)), loop);
      row.xdot2 = sol.xdot2;
      row.converged = sol.converged;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {
inline void csv_header_block(std::ostream& os, const std::string& name, Eigen::Index n, bool& first) {
  for (Eigen::Index i = 1; i <= n; ++i) {
    os << (first ? "" : ",") << name << '_' << i;
    first = false;
  }
}
inline void csv_values(std::ostream& os, const VectorXd& v, bool& first) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    os << (first ? "" : ",") << v(i);
    first = false;
  }
}
}  // namespace detail

/// Columns: t, x1_*, x2_*, xdot2_*, u_*, u_c_*, u_gp_*, u_ex_*, V.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  if (tr.size() == 0) return;
  const Eigen::Index n = tr.states.front().n();
  os << "t";
  bool first = false;
  for (const char* name : {"x1", "x2", "xdot2", "u", "u_c", "u_gp", "u_ex"}) detail::csv_header_block(os, name, n, first);
  os << ",V\n";
  const auto old = os.precision();
  os << std::setprecision(17);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << tr.times[k];
    first = false;
    for (const VectorXd* v : {&tr.states[k].x1, &tr.states[k].x2, &tr.xdot2[k], &tr.u[k], &tr.u_c[k], &tr.u_gp[k], &tr.u_ex[k]})
      detail::csv_values(os, *v, first);
    os << ',' << tr.V[k] << '\n';
  }
  os.precision(old);
}

/// Columns: x1_*, x2_*, xdot1_*, xdot2_*.
inline void write_field_csv(std::ostream& os, const std::vector<FieldRow>& rows) {
  if (rows.empty()) return;
  const Eigen::Index n = rows.front().x.n();
  bool first = true;
  for (const char* name : {"x1", "x2", "xdot1", "xdot2"}) detail::csv_header_block(os, name, n, first);
  os << '\n';
  const auto old = os.precision();
  os << std::setprecision(17);
  for (const auto& r : rows) {
    first = true;
    for (const VectorXd* v : {&r.x.x1, &r.x.x2, &r.xdot1, &r.xdot2}) detail::csv_values(os, *v, first);
    os << '\n';
  }
  os.precision(old);
}

/// Columns: xdot2_*, x1_*, x2_*, y_*.
inline void write_training_csv(std::ostream& os, const TrainingSet& data) {
  const Eigen::Index n = data.n();
  bool first = true;
  for (const char* name : {"xdot2", "x1", "x2", "y"}) detail::csv_header_block(os, name, n, first);
  os << '\n';
  const auto old = os.precision();
  os << std::setprecision(17);
  for (Eigen::Index j = 0; j < data.m(); ++j) {
    first = true;
    detail::csv_values(os, data.inputs.col(j), first);
    detail::csv_values(os, data.targets.row(j).transpose(), first);
    os << '\n';
  }
  os.precision(old);
}

/// Parse a training CSV written by write_training_csv. Errors name the 1-based line.
inline TrainingSet read_training_csv(std::istream& is, const VectorXd& noise_std) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("training CSV: empty file (line 1)");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (columns % 4 != 0) throw std::runtime_error("training CSV line 1: expected 4n columns");
  const Eigen::Index n = columns / 4;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const auto comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size()) throw std::runtime_error("training CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      vals.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (static_cast<Eigen::Index>(vals.size()) != columns)
      throw std::runtime_error("training CSV line " + std::to_string(lineno) + ": expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(vals));
  }
  require(noise_std.size() == n, "training CSV: noise_std must have one entry per output");
  TrainingSet data;
  data.inputs.resize(3 * n, static_cast<Eigen::Index>(rows.size()));
  data.targets.resize(static_cast<Eigen::Index>(rows.size()), n);
  data.noise_std = noise_std;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    for (Eigen::Index k = 0; k < 3 * n; ++k) data.inputs(k, jj) = rows[j][static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < n; ++i) data.targets(jj, i) = rows[j][static_cast<std::size_t>(3 * n + i)];
  }
  data.validate();
  return data;
}

}  // namespace gpsp
