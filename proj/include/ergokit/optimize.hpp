#pragma once

// Constrained posture optimization.
//
// Online correction maximizes comfort(q) = -risk(q) while the hand stays on
// its current pose/twist; the constraint enters as an exterior penalty
//   F(q) = -risk(q) - mu * max(0, |dev(q)|^2_S - eps).
// Initial-posture and reconfiguration problems optimize a single posture q0
// whose resolved-rate rollout along a hand velocity profile is scored.

#include <chrono>
#include <memory>
#include <optional>

#include "ergokit/datagen.hpp"
#include "ergokit/kinematics.hpp"
#include "ergokit/rules.hpp"
#include "ergokit/surrogate.hpp"

namespace ergokit {

enum class Backend { Discrete, Surrogate };

inline std::string_view to_string(Backend b) { return b == Backend::Discrete ? "discrete" : "surrogate"; }

inline Backend parse_backend(std::string_view s) {
  if (s == "discrete") return Backend::Discrete;
  if (s == "surrogate") return Backend::Surrogate;
  fail(ErrorKind::Config, "unknown backend '" + std::string(s) + "'");
}

// Risk model used as the (negated) comfort term.
struct ComfortObjective {
  Scheme scheme = Scheme::Rula;
  Backend backend = Backend::Surrogate;
  std::shared_ptr<const SurrogateModel> model;
  TaskContext ctx;

  static ComfortObjective discrete(Scheme s, TaskContext ctx = {}) { return {s, Backend::Discrete, nullptr, ctx}; }

  static ComfortObjective surrogate(std::shared_ptr<const SurrogateModel> m, TaskContext ctx = {}) {
    if (!m) fail(ErrorKind::Config, "surrogate backend needs a model");
    return {m->spec.scheme, Backend::Surrogate, std::move(m), ctx};
  }

  BodyMode mode() const { return scheme_mode(scheme); }

  void validate() const {
    ctx.validate();
    if (backend == Backend::Surrogate) {
      if (!model) fail(ErrorKind::Config, "surrogate backend needs a model");
      if (model->spec.scheme != scheme)
        fail(ErrorKind::Config, "objective scheme " + std::string(to_string(scheme)) + " does not match the model's " +
                                    std::string(to_string(model->spec.scheme)));
    }
  }

  // Worksheet score under the objective's scheme (Table C for the REBA surrogate).
  int discrete_score(const Posture& q) const {
    return scheme == Scheme::Rula ? rula_score(q, ctx).value : score(scheme, q, ctx).value;
  }

  double risk(const Posture& q) const {
    return backend == Backend::Surrogate ? forward(*model, q, ctx) : static_cast<double>(discrete_score(q));
  }

  double risk_and_gradient(const Posture& q, Vec& grad) const {
    if (backend != Backend::Surrogate) fail(ErrorKind::Unsupported, "the discrete scorer has no gradient");
    double v = 0.0;
    grad = grad_wrt_posture(*model, q, ctx, &v);
    return v;
  }
};

struct ConstraintConfig {
  Mat12 weight = default_deviation_weight();
  double epsilon = 1e-4;
  JointSet joints;
  BodyDimensions dims;

  static ConstraintConfig defaults(BodyMode mode) {
    ConstraintConfig c;
    c.joints = JointSet::defaults(mode);
    return c;
  }

  void validate() const {
    if (!(epsilon > 0.0)) fail(ErrorKind::Config, "constraint epsilon must be > 0");
    if (!weight.allFinite() || (weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      fail(ErrorKind::Config, "constraint weight must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat12> es(weight, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12) fail(ErrorKind::Config, "constraint weight must be positive semi-definite");
    joints.validate();
    dims.validate();
  }
};

enum class Method { ProjectedGradient, Cem };

inline std::string_view to_string(Method m) { return m == Method::Cem ? "cem" : "grad"; }

inline Method parse_method(std::string_view s) {
  if (s == "grad" || s == "projected-gradient") return Method::ProjectedGradient;
  if (s == "cem") return Method::Cem;
  fail(ErrorKind::Config, "unknown method '" + std::string(s) + "'");
}

struct SolverConfig {
  Method method = Method::ProjectedGradient;
  // projected gradient
  double step = 0.05;
  double max_step = 1.0;
  int max_iterations = 100;
  double tolerance = 1e-4;
  double armijo = 1e-4;
  // cem
  int population = 1000;
  double elite_fraction = 0.1;
  int cem_iterations = 30;
  double initial_std = 0.3;
  // initial-posture problem: extra starts drawn uniformly in ROM and projected onto the anchor pose
  int restarts = 0;
  // projected gradient: the penalty weight grows from mu_initial to mu by mu_growth per warm-started stage
  double mu_initial = 1.0;
  double mu_growth = 10.0;
  // shared
  double mu = 1e3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool restore_feasibility = true;
  bool verify_discrete = true;
  bool record_timing = false;

  void validate() const {
    if (!(step > 0.0) || !(max_step >= step)) fail(ErrorKind::Config, "step sizes must satisfy 0 < step <= max_step");
    if (max_iterations < 1) fail(ErrorKind::Config, "max_iterations must be >= 1");
    if (!(tolerance > 0.0)) fail(ErrorKind::Config, "tolerance must be > 0");
    if (population < 8) fail(ErrorKind::Config, "CEM population must be >= 8");
    if (!(elite_fraction > 0.0 && elite_fraction < 1.0)) fail(ErrorKind::Config, "elite fraction must lie in (0, 1)");
    if (static_cast<int>(elite_fraction * population) < 1) fail(ErrorKind::Config, "CEM elite set would be empty");
    if (cem_iterations < 1) fail(ErrorKind::Config, "CEM iterations must be >= 1");
    if (restarts < 0) fail(ErrorKind::Config, "restarts must be >= 0");
    if (!(initial_std > 0.0)) fail(ErrorKind::Config, "CEM initial std must be > 0");
    if (!(mu >= 0.0)) fail(ErrorKind::Config, "penalty weight must be >= 0");
    if (!(mu_initial > 0.0)) fail(ErrorKind::Config, "initial penalty weight must be > 0");
    if (!(mu_growth > 1.0)) fail(ErrorKind::Config, "penalty growth factor must be > 1");
    if (workers < 1) fail(ErrorKind::Config, "workers must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Generic box-constrained maximization

struct Problem {
  std::function<double(const Vec&)> value;
  std::function<double(const Vec&, Vec&)> value_and_gradient;  // optional
  std::function<bool(const Vec&)> feasible;                   // optional, reporting only
  Vec lower, upper;
};

struct IterationRecord {
  int iteration = 0;
  double best_value = 0.0;
  bool feasible = false;
  double wall_seconds = 0.0;
};

struct SolveResult {
  Vec x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> history;
  std::optional<Vec> feasible_x;  // best evaluated point that passed Problem::feasible
  double feasible_value = -HUGE_VAL;

  void offer(const Problem& p, const Vec& xc, double v) {
    if (p.feasible && std::isfinite(v) && v > feasible_value && p.feasible(xc)) {
      feasible_x = xc;
      feasible_value = v;
    }
  }
};

namespace opt_detail {

inline Vec project(const Vec& x, const Vec& lo, const Vec& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return on_ ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count() : 0.0;
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace opt_detail

// Projected gradient ascent with Armijo backtracking along the projection arc.
inline SolveResult projected_gradient_solve(const Problem& p, const Vec& x0, const SolverConfig& cfg) {
  if (!p.value_and_gradient) fail(ErrorKind::Unsupported, "projected gradient needs an objective gradient");
  opt_detail::Stopwatch clock(cfg.record_timing);
  SolveResult r;
  r.x = opt_detail::project(x0, p.lower, p.upper);
  Vec g;
  r.value = p.value_and_gradient(r.x, g);
  r.offer(p, r.x, r.value);
  double step = cfg.step;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    r.iterations = it;
    bool moved = false;
    double moved_norm = 0.0;
    while (step >= 1e-12) {
      const Vec xn = opt_detail::project(r.x + step * g, p.lower, p.upper);
      const Vec d = xn - r.x;
      if (d.norm() == 0.0) break;
      const double vn = p.value(xn);
      if (std::isfinite(vn) && vn >= r.value + cfg.armijo * g.dot(d)) {
        r.x = xn;
        moved_norm = d.norm();
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (moved) {
      r.value = p.value_and_gradient(r.x, g);
      r.offer(p, r.x, r.value);
    }
    r.history.push_back({it, r.value, p.feasible ? p.feasible(r.x) : true, clock.seconds()});
    if (!moved || moved_norm < cfg.tolerance) {
      r.converged = true;
      break;
    }
    step = std::min(step * 2.0, cfg.max_step);
  }
  return r;
}

// Cross-entropy method over a diagonal Gaussian truncated to the box.
inline SolveResult cem_solve(const Problem& p, const Vec& mean0, const SolverConfig& cfg) {
  cfg.validate();
  opt_detail::Stopwatch clock(cfg.record_timing);
  const Eigen::Index n = mean0.size();
  const auto pop = static_cast<std::size_t>(cfg.population);
  const auto elites = static_cast<std::size_t>(cfg.elite_fraction * cfg.population);
  Rng rng(derive_seed(cfg.seed, "cem"));
  Vec mean = opt_detail::project(mean0, p.lower, p.upper);
  Vec sd = Vec::Constant(n, cfg.initial_std);

  SolveResult r;
  r.x = mean;
  r.value = p.value(mean);
  r.offer(p, r.x, r.value);
  std::vector<Vec> samples(pop, Vec(n));
  std::vector<double> values(pop);
  std::vector<std::size_t> order(pop);
  for (int it = 1; it <= cfg.cem_iterations; ++it) {
    for (auto& s : samples)
      for (Eigen::Index j = 0; j < n; ++j) {
        double x = 0.0;
        int tries = 0;
        do {
          x = mean[j] + sd[j] * rng.normal();
        } while ((x < p.lower[j] || x > p.upper[j]) && ++tries < 64);
        if (tries >= 64) x = rng.uniform(p.lower[j], p.upper[j]);
        s[j] = x;
      }
    parallel_for(pop, cfg.workers, [&](std::size_t i) { values[i] = p.value(samples[i]); });
    std::iota(order.begin(), order.end(), 0);
    // Ties break by sample index so the elite set is deterministic.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(elites), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double va = std::isfinite(values[a]) ? values[a] : -HUGE_VAL;
                        const double vb = std::isfinite(values[b]) ? values[b] : -HUGE_VAL;
                        return va != vb ? va > vb : a < b;
                      });
    if (std::isfinite(values[order[0]]) && values[order[0]] > r.value) {
      r.value = values[order[0]];
      r.x = samples[order[0]];
    }
    for (std::size_t k = 0; k < elites && values[order[k]] > r.feasible_value; ++k)
      if (p.feasible && p.feasible(samples[order[k]])) {
        r.offer(p, samples[order[k]], values[order[k]]);
        break;
      }
    Vec m = Vec::Zero(n), v = Vec::Zero(n);
    for (std::size_t k = 0; k < elites; ++k) m += samples[order[k]];
    m /= static_cast<double>(elites);
    for (std::size_t k = 0; k < elites; ++k) v += (samples[order[k]] - m).cwiseAbs2();
    mean = m;
    sd = (v / static_cast<double>(elites)).cwiseSqrt().cwiseMax(1e-9);
    r.iterations = it;
    r.history.push_back({it, r.value, p.feasible ? p.feasible(r.x) : true, clock.seconds()});
  }
  r.converged = true;
  return r;
}

inline SolveResult solve(const Problem& p, const Vec& x0, const SolverConfig& cfg) {
  cfg.validate();
  return cfg.method == Method::Cem ? cem_solve(p, x0, cfg) : projected_gradient_solve(p, x0, cfg);
}

// Penalty weights visited by solve_continued. CEM uses mu directly.
inline std::vector<double> penalty_schedule(const SolverConfig& cfg) {
  std::vector<double> s;
  if (cfg.method == Method::ProjectedGradient)
    for (double m = cfg.mu_initial; m < cfg.mu; m *= cfg.mu_growth) s.push_back(m);
  s.push_back(cfg.mu);
  return s;
}

// Solves the problem family problem_at(mu) over the penalty schedule, warm-starting each stage.
// Feasible points score -risk at every weight, so the best feasible point is tracked across stages.
inline SolveResult solve_continued(const std::function<Problem(double)>& problem_at, const Vec& x0,
                                   const SolverConfig& cfg) {
  SolveResult total;
  total.x = x0;
  double elapsed = 0.0;
  for (double mu : penalty_schedule(cfg)) {
    SolveResult r = solve(problem_at(mu), total.x, cfg);
    for (IterationRecord rec : r.history) {
      rec.iteration += total.iterations;
      rec.wall_seconds += elapsed;
      total.history.push_back(rec);
    }
    if (!r.history.empty()) elapsed = total.history.back().wall_seconds;
    total.iterations += r.iterations;
    if (r.feasible_x && r.feasible_value > total.feasible_value) {
      total.feasible_x = std::move(r.feasible_x);
      total.feasible_value = r.feasible_value;
    }
    total.x = std::move(r.x);
    total.value = r.value;
    total.converged = r.converged;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Online correction

// Smallest risk decrease that counts as an improvement over the start.
inline constexpr double kImprovementTolerance = 1e-9;

inline double penalty(double dev_sq, double eps) { return std::max(0.0, dev_sq - eps); }

inline double penalized_objective(const Posture& q, const InteractionState& target, const ComfortObjective& obj,
                                  const ConstraintConfig& cc, double mu, const Vec& qdot = {}) {
  const Vec v = qdot.size() ? qdot : Vec::Zero(static_cast<Eigen::Index>(q.size()));
  const Deviation d = pose_deviation(q, v, target, cc.weight, cc.joints, cc.dims, false);
  return -obj.risk(q) - mu * penalty(d.weighted_sq, cc.epsilon);
}

struct OptimizeResult {
  Posture posture;
  bool feasible = false;
  bool fell_back = false;
  double deviation_sq = 0.0;
  double risk_start = 0.0;
  double risk_final = 0.0;
  int discrete_start = 0;
  int discrete_final = 0;
  SolveResult solve;
};

namespace opt_detail {

inline void check_start(const Posture& q, const ComfortObjective& obj, const ConstraintConfig& cc,
                        const SolverConfig& cfg) {
  obj.validate();
  cc.validate();
  cfg.validate();
  if (cfg.method == Method::ProjectedGradient && obj.backend == Backend::Discrete)
    fail(ErrorKind::Unsupported, "projected gradient requires the surrogate backend (the discrete scorer is not differentiable)");
  q.validate();
  if (q.mode != obj.mode()) fail(ErrorKind::Mode, "posture mode does not match the objective scheme");
  if (!cc.joints.contains(q)) fail(ErrorKind::Input, "start posture is outside the range of motion");
}

inline Problem online_problem(const InteractionState& target, const ComfortObjective& obj, const ConstraintConfig& cc,
                              double mu, const Vec& qdot, BodyMode mode) {
  Problem p;
  p.lower = cc.joints.lower();
  p.upper = cc.joints.upper();
  p.value = [=, &obj, &cc](const Vec& x) { return penalized_objective({x, mode}, target, obj, cc, mu, qdot); };
  if (obj.backend == Backend::Surrogate)
    p.value_and_gradient = [=, &obj, &cc](const Vec& x, Vec& g) {
      const Posture q{x, mode};
      const Deviation d = pose_deviation(q, qdot, target, cc.weight, cc.joints, cc.dims, true);
      Vec gr;
      const double risk = obj.risk_and_gradient(q, gr);
      g = -gr;
      const double pen = penalty(d.weighted_sq, cc.epsilon);
      if (pen > 0.0) g -= mu * d.gradient;
      return -risk - mu * pen;
    };
  p.feasible = [=, &cc](const Vec& x) {
    return pose_deviation({x, mode}, qdot, target, cc.weight, cc.joints, cc.dims, false).weighted_sq <= cc.epsilon;
  };
  return p;
}

}  // namespace opt_detail

inline OptimizeResult optimize_online(const Posture& q_t, const InteractionState& target, const ComfortObjective& obj,
                                      const ConstraintConfig& cc, const SolverConfig& cfg, const Vec& joint_velocity = {}) {
  opt_detail::check_start(q_t, obj, cc, cfg);
  target.validate();
  const Vec qdot = joint_velocity.size() ? joint_velocity : Vec::Zero(static_cast<Eigen::Index>(q_t.size()));
  if (static_cast<std::size_t>(qdot.size()) != q_t.size()) fail(ErrorKind::Input, "joint velocity length mismatch");
  auto dev = [&](const Posture& q) {
    return pose_deviation(q, qdot, target, cc.weight, cc.joints, cc.dims, false).weighted_sq;
  };

  const Problem p = opt_detail::online_problem(target, obj, cc, cfg.mu, qdot, q_t.mode);
  OptimizeResult out;
  out.solve = solve_continued(
      [&](double mu) { return opt_detail::online_problem(target, obj, cc, mu, qdot, q_t.mode); }, q_t.angles, cfg);
  Posture cand{out.solve.x, q_t.mode};
  if (cfg.restore_feasibility && dev(cand) > cc.epsilon) {
    const Posture fixed = solve_ik(cand, target, cc.joints, cc.dims);
    if (dev(fixed) < dev(cand)) cand = fixed;
  }
  if (dev(cand) > cc.epsilon && out.solve.feasible_x) cand = Posture{*out.solve.feasible_x, q_t.mode};

  out.risk_start = obj.risk(q_t);
  out.discrete_start = obj.discrete_score(q_t);
  const bool start_feasible = dev(q_t) <= cc.epsilon;
  const double cand_dev = dev(cand);
  const double cand_risk = obj.risk(cand);
  bool accept = false;
  if (start_feasible) {
    accept = cand_dev <= cc.epsilon && cand_risk < out.risk_start - kImprovementTolerance &&
             (!cfg.verify_discrete || obj.discrete_score(cand) <= out.discrete_start);
  } else {
    accept = p.value(cand.angles) > p.value(q_t.angles);
  }
  out.posture = accept ? cand : q_t;
  out.fell_back = !accept;
  out.deviation_sq = dev(out.posture);
  out.feasible = out.deviation_sq <= cc.epsilon;
  out.risk_final = obj.risk(out.posture);
  out.discrete_final = obj.discrete_score(out.posture);
  return out;
}

// Joint whose risk gradient has the largest magnitude, and the descent direction for it.
struct GradientHint {
  std::size_t joint = 0;
  double gradient = 0.0;
  double direction = 0.0;  // -sign(gradient)
};

inline GradientHint gradient_hint(const SurrogateModel& m, const Posture& q, const TaskContext& ctx) {
  const Vec g = grad_wrt_posture(m, q, ctx);
  Eigen::Index k = 0;
  g.cwiseAbs().maxCoeff(&k);
  return {static_cast<std::size_t>(k), g[k], g[k] > 0 ? -1.0 : (g[k] < 0 ? 1.0 : 0.0)};
}

// ---------------------------------------------------------------------------
// Velocity profiles and the initial-posture problem

using Twist = Vec6;  // [linear; angular]

struct ReferenceProfile {
  double dt = 0.05;
  std::vector<Twist> velocity;          // x_hat_0 .. x_hat_{T-1}
  std::vector<InteractionState> pose;   // integrated poses, T + 1 entries

  std::size_t steps() const { return velocity.size(); }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::Input, "profile time step must be positive");
    if (pose.size() != velocity.size() + 1) fail(ErrorKind::Input, "profile needs one more pose than velocity samples");
    for (const auto& v : velocity)
      if (!v.allFinite()) fail(ErrorKind::Input, "profile velocities must be finite");
    for (const auto& s : pose) {
      if (!s.position.allFinite()) fail(ErrorKind::Input, "profile poses must be finite");
      s.validate();
    }
  }

  // Integrates twists from a start pose with the exponential map.
  static ReferenceProfile integrate(const InteractionState& start, const std::vector<Twist>& velocity, double dt) {
    ReferenceProfile p;
    p.dt = dt;
    p.velocity = velocity;
    InteractionState s = start;
    s.linear_velocity.setZero();
    s.angular_velocity.setZero();
    p.pose.push_back(s);
    for (const auto& v : velocity) {
      s.position += v.head<3>() * dt;
      const Vec3 w = v.tail<3>() * dt;
      if (w.norm() > 0) s.orientation = (Quat(Eigen::AngleAxisd(w.norm(), w.normalized())) * s.orientation).normalized();
      p.pose.push_back(s);
    }
    p.validate();
    return p;
  }

  ReferenceProfile tail(std::size_t from) const {
    if (from > steps()) fail(ErrorKind::Input, "pause index is past the end of the profile");
    ReferenceProfile p;
    p.dt = dt;
    p.velocity.assign(velocity.begin() + static_cast<std::ptrdiff_t>(from), velocity.end());
    p.pose.assign(pose.begin() + static_cast<std::ptrdiff_t>(from), pose.end());
    return p;
  }
};

struct Rollout {
  std::vector<Posture> postures;  // q_0 .. q_{T-1}; a single posture when T = 0
  std::vector<double> residual_sq;
  bool finite = true;
};

inline constexpr double kRolloutDamping = 1e-3;

namespace opt_detail {

inline Mat6 velocity_weight(const Mat12& W) { return W.bottomRightCorner<6, 6>(); }

}  // namespace opt_detail

// Resolved-rate rollout q_{t+1} = clamp(q_t + dt * J^+(q_t) x_hat_t).
inline Rollout rollout(const ReferenceProfile& prof, const Posture& q0, const ConstraintConfig& cc) {
  Rollout r;
  const Mat6 Wv = opt_detail::velocity_weight(cc.weight);
  Posture q = q0;
  r.postures.push_back(q);
  for (std::size_t t = 0; t < prof.steps(); ++t) {
    const Mat6X J = jacobian(q, cc.joints, cc.dims);
    Posture next = q;
    next.angles += prof.dt * dls_solve(J, prof.velocity[t], kRolloutDamping);
    if (!next.angles.allFinite()) {
      r.finite = false;
      return r;
    }
    next = clamp_to_rom(next, cc.joints);
    const Vec6 res = prof.velocity[t] - J * ((next.angles - q.angles) / prof.dt);
    r.residual_sq.push_back(res.dot(Wv * res));
    q = next;
    if (t + 1 < prof.steps()) r.postures.push_back(q);
  }
  return r;
}

inline double rollout_comfort(const Rollout& r, const ComfortObjective& obj) {
  double s = 0.0;
  for (const auto& q : r.postures) s -= obj.risk(q);
  return s;
}

inline constexpr double kNonFinitePenalty = 1e9;

struct InitialObjective {
  const ReferenceProfile* profile;
  const ComfortObjective* obj;
  const ConstraintConfig* cc;
  double mu;
  BodyMode mode;

  double scale() const { return 1.0 / static_cast<double>(std::max<std::size_t>(1, profile->steps())); }

  InteractionState anchor() const { return profile->pose.front(); }

  double anchor_deviation(const Vec& x) const {
    return pose_deviation({x, mode}, Vec::Zero(x.size()), anchor(), cc->weight, cc->joints, cc->dims, false).weighted_sq;
  }

  double value(const Vec& x) const {
    const Posture q0{x, mode};
    const Rollout r = rollout(*profile, q0, *cc);
    if (!r.finite) return -kNonFinitePenalty;
    double pen = 0.0;
    for (double e : r.residual_sq) pen += penalty(e, cc->epsilon);
    const double v = scale() * (rollout_comfort(r, *obj) - mu * pen) - mu * penalty(anchor_deviation(x), cc->epsilon);
    return std::isfinite(v) ? v : -kNonFinitePenalty;
  }

  // Forward sensitivities S_t = dq_t/dq0 through the DLS rollout.
  double value_and_gradient(const Vec& x, Vec& grad) const {
    const auto n = x.size();
    const auto N = static_cast<std::size_t>(n);
    const Mat6 Wv = opt_detail::velocity_weight(cc->weight);
    const double lam2 = kRolloutDamping * kRolloutDamping;
    Posture q{x, mode};
    Mat S = Mat::Identity(n, n);
    Vec gsum = Vec::Zero(n);
    double comfort = 0.0, pen = 0.0;
    const std::size_t T = profile->steps();
    auto add_comfort = [&](const Posture& p, const Mat& Sp) {
      Vec gr;
      comfort -= obj->risk_and_gradient(p, gr);
      gsum -= Sp.transpose() * gr;
    };
    add_comfort(q, S);
    for (std::size_t t = 0; t < T; ++t) {
      const ChainState cs = chain_state(q, cc->joints, cc->dims);
      const Mat6X J = jacobian_from_state(cs, N);
      const auto dJ = jacobian_derivatives(cs, N);
      const Eigen::Matrix<double, 6, 6> A = J * J.transpose() + lam2 * Eigen::Matrix<double, 6, 6>::Identity();
      const auto Af = A.ldlt();
      const Vec6 y = Af.solve(profile->velocity[t]);
      const Vec g = J.transpose() * y;
      Mat G(n, n);
      for (std::size_t k = 0; k < N; ++k) {
        const Vec6 dy = -Af.solve(dJ[k] * (J.transpose() * y) + J * (dJ[k].transpose() * y));
        G.col(static_cast<Eigen::Index>(k)) = dJ[k].transpose() * y + J.transpose() * dy;
      }
      Posture next = q;
      next.angles += profile->dt * g;
      if (!next.angles.allFinite()) {
        grad = Vec::Zero(n);
        return -kNonFinitePenalty;
      }
      Mat Sn = (Mat::Identity(n, n) + profile->dt * G) * S;
      for (std::size_t i = 0; i < N; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (next[i] < cc->joints[i].lo || next[i] > cc->joints[i].hi) Sn.row(ii).setZero();
      }
      next = clamp_to_rom(next, cc->joints);
      const Vec v = (next.angles - q.angles) / profile->dt;
      const Vec6 res = profile->velocity[t] - J * v;
      const double e = res.dot(Wv * res);
      if (e > cc->epsilon) {
        pen += e - cc->epsilon;
        Mat6X D(6, n);
        for (std::size_t k = 0; k < N; ++k) D.col(static_cast<Eigen::Index>(k)) = dJ[k] * v;
        const Mat dres = -D * S - J * ((Sn - S) / profile->dt);
        gsum -= mu * 2.0 * dres.transpose() * (Wv * res);
      }
      q = next;
      S = std::move(Sn);
      if (t + 1 < T) add_comfort(q, S);
    }
    const Deviation ad = pose_deviation({x, mode}, Vec::Zero(n), anchor(), cc->weight, cc->joints, cc->dims, true);
    grad = scale() * gsum;
    double v = scale() * (comfort - mu * pen);
    if (ad.weighted_sq > cc->epsilon) {
      v -= mu * (ad.weighted_sq - cc->epsilon);
      grad -= mu * ad.gradient;
    }
    if (!std::isfinite(v) || !grad.allFinite()) {
      grad = Vec::Zero(n);
      return -kNonFinitePenalty;
    }
    return v;
  }

  bool feasible(const Vec& x) const {
    const Posture q0{x, mode};
    const Rollout r = rollout(*profile, q0, *cc);
    if (!r.finite) return false;
    for (double e : r.residual_sq)
      if (e > cc->epsilon) return false;
    return pose_deviation(q0, Vec::Zero(x.size()), anchor(), cc->weight, cc->joints, cc->dims, false).weighted_sq <=
           cc->epsilon;
  }
};

struct InitialResult {
  Posture q0;
  Rollout trajectory;
  double comfort_sum = 0.0;  // sum of -risk over the rollout
  bool feasible = false;
  bool fell_back = false;
  SolveResult solve;
};

inline InitialResult optimize_initial(const ReferenceProfile& profile, const Posture& q0_guess,
                                      const ComfortObjective& obj, const ConstraintConfig& cc, const SolverConfig& cfg) {
  opt_detail::check_start(q0_guess, obj, cc, cfg);
  profile.validate();
  const InitialObjective io{&profile, &obj, &cc, cfg.mu, q0_guess.mode};
  auto problem_at = [&](double mu) {
    auto o = std::make_shared<const InitialObjective>(InitialObjective{&profile, &obj, &cc, mu, q0_guess.mode});
    Problem p;
    p.lower = cc.joints.lower();
    p.upper = cc.joints.upper();
    p.value = [o](const Vec& x) { return o->value(x); };
    if (obj.backend == Backend::Surrogate)
      p.value_and_gradient = [o](const Vec& x, Vec& g) { return o->value_and_gradient(x, g); };
    p.feasible = [o](const Vec& x) { return o->feasible(x); };
    return p;
  };

  auto candidate = [&](const SolveResult& sr) {
    Posture c{sr.x, q0_guess.mode};
    if (cfg.restore_feasibility && !io.feasible(c.angles)) {
      const Posture fixed = solve_ik(c, io.anchor(), cc.joints, cc.dims);
      if (io.anchor_deviation(fixed.angles) < io.anchor_deviation(c.angles)) c = fixed;
    }
    if (!io.feasible(c.angles) && sr.feasible_x) c = Posture{*sr.feasible_x, q0_guess.mode};
    return c;
  };

  InitialResult out;
  out.solve = solve_continued(problem_at, q0_guess.angles, cfg);
  Posture cand = candidate(out.solve);
  Rng rng(derive_seed(cfg.seed, "restarts"));
  for (int k = 0; k < cfg.restarts; ++k) {
    Posture g = Posture::zero(q0_guess.mode);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = rng.uniform(cc.joints[j].lo, cc.joints[j].hi);
    g = solve_ik(g, io.anchor(), cc.joints, cc.dims, {}, 100);
    if (!io.feasible(g.angles)) continue;
    SolveResult sr = solve_continued(problem_at, g.angles, cfg);
    const Posture c = candidate(sr);
    if (io.feasible(c.angles) && (!io.feasible(cand.angles) || io.value(c.angles) > io.value(cand.angles))) {
      cand = c;
      out.solve = std::move(sr);
    }
  }
  const bool guess_feasible = io.feasible(q0_guess.angles);
  const bool cand_feasible = io.feasible(cand.angles);
  bool accept = io.value(cand.angles) > io.value(q0_guess.angles);
  if (guess_feasible) {
    const Rollout rc = rollout(profile, cand, cc), rg = rollout(profile, q0_guess, cc);
    accept = cand_feasible && rollout_comfort(rc, obj) > rollout_comfort(rg, obj) + kImprovementTolerance;
    if (accept && cfg.verify_discrete) {
      int dc = 0, dg = 0;
      for (const auto& q : rc.postures) dc += obj.discrete_score(q);
      for (const auto& q : rg.postures) dg += obj.discrete_score(q);
      accept = dc <= dg;
    }
  }
  out.q0 = accept ? cand : q0_guess;
  out.fell_back = !accept;
  out.trajectory = rollout(profile, out.q0, cc);
  out.comfort_sum = rollout_comfort(out.trajectory, obj);
  out.feasible = io.feasible(out.q0.angles);
  return out;
}

// Re-plans the posture at a pause index: the initial-posture problem on the profile tail.
inline InitialResult optimize_reconfigure(const ReferenceProfile& profile, std::size_t t_p, const Posture& q_at_pause,
                                          const ComfortObjective& obj, const ConstraintConfig& cc,
                                          const SolverConfig& cfg) {
  profile.validate();
  return optimize_initial(profile.tail(t_p), q_at_pause, obj, cc, cfg);
}

// ---------------------------------------------------------------------------
// Run report: header + CSV (iteration, best value, feasible, wall time)

inline constexpr int kRunReportVersion = 1;

inline void write_run_report(std::ostream& out, const SolveResult& r, Header h) {
  h.set("iterations", std::to_string(r.iterations));
  h.set("final_value", format_exact(r.value));
  h.write(out);
  out << "iteration,best_value,feasible,wall_seconds\n";
  for (const auto& rec : r.history)
    out << rec.iteration << ',' << format_exact(rec.best_value) << ',' << (rec.feasible ? 1 : 0) << ','
        << format_exact(rec.wall_seconds) << '\n';
}

}  // namespace ergokit
