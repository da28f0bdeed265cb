#pragma once

// Simulated teleoperation tasks. A "human" follows a closed-form hand path by
// resolved-rate motion from an awkward start posture; at each step the online
// optimizer suggests a posture and the human adopts a fraction alpha of it.

#include "ergokit/optimize.hpp"

namespace ergokit {

struct Trajectory {
  std::string task;
  double dt = 0.05;
  std::vector<Posture> postures;
  std::vector<InteractionState> states;

  std::size_t size() const { return postures.size(); }

  void validate(const JointSet& joints) const {
    if (postures.empty()) fail(ErrorKind::Input, "trajectory is empty");
    if (states.size() != postures.size()) fail(ErrorKind::Input, "trajectory states and postures differ in length");
    if (!(dt > 0.0)) fail(ErrorKind::Input, "trajectory time step must be positive");
    for (const auto& q : postures)
      if (!joints.contains(q)) fail(ErrorKind::Input, "trajectory posture outside the range of motion");
  }
};

inline constexpr std::array<std::string_view, 4> kTaskNames = {"push", "lateral_reach", "overhead_lift", "valve_arc"};

struct TaskShape {
  std::array<double, 11> start_deg;
  double duration = 5.0;
};

// Minimum-jerk progress s(tau) and ds/dtau.
inline double min_jerk(double tau) { return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau); }
inline double min_jerk_rate(double tau) { return 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau); }

inline TaskShape task_shape(std::string_view name) {
  //                                   trunk        neck  shoulder        elbow  wrist      knee
  if (name == "push") return {{25, 0, 5, 25, 60, 10, 0, 105, 20, 5, 40}, 5.0};
  if (name == "lateral_reach") return {{30, 0, 0, 25, 45, 30, 10, 110, -20, 5, 50}, 5.0};
  if (name == "overhead_lift") return {{20, 5, -5, -5, 60, 25, -10, 120, 25, -5, 65}, 5.0};
  if (name == "valve_arc") return {{35, -8, -10, 28, 55, 20, 20, 95, -25, -8, 70}, 6.0};
  fail(ErrorKind::Config, "unknown task '" + std::string(name) + "'");
}

// Hand twist at time t for a task (pelvis frame).
inline Twist task_twist(std::string_view name, double t, double duration) {
  const double tau = std::clamp(t / duration, 0.0, 1.0);
  const double rate = min_jerk_rate(tau) / duration;
  Twist v = Twist::Zero();
  if (name == "push") {
    v[0] = 0.20 * rate;
  } else if (name == "lateral_reach") {
    v[1] = -0.10 * rate;
    v[0] = 0.03 * rate;
  } else if (name == "overhead_lift") {
    v[2] = 0.15 * rate;
  } else if (name == "valve_arc") {
    // 60 degree turn of a 0.08 m valve rim about the forward axis.
    const double radius = 0.08, sweep = std::numbers::pi / 3;
    const double phi = sweep * min_jerk(tau), w = sweep * rate;
    v[1] = -radius * std::sin(phi) * w;
    v[2] = radius * std::cos(phi) * w;
    v[3] = w;
  } else {
    fail(ErrorKind::Config, "unknown task '" + std::string(name) + "'");
  }
  return v;
}

inline Posture task_start(std::string_view name, BodyMode mode) {
  const TaskShape s = task_shape(name);
  Posture q = Posture::zero(mode);
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = deg2rad(s.start_deg[j]);
  return q;
}

inline ReferenceProfile task_profile(std::string_view name, const Posture& start, const ConstraintConfig& cc,
                                     double dt = 0.05) {
  const TaskShape s = task_shape(name);
  const auto steps = static_cast<std::size_t>(std::llround(s.duration / dt));
  std::vector<Twist> v;
  v.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) v.push_back(task_twist(name, (static_cast<double>(t) + 0.5) * dt, s.duration));
  return ReferenceProfile::integrate(forward_kinematics(start, cc.joints, cc.dims), v, dt);
}

// Playback trajectory: resolved-rate motion of the start posture along the task profile.
inline Trajectory make_task(std::string_view name, BodyMode mode, const ConstraintConfig& cc, double dt = 0.05) {
  const Posture start = clamp_to_rom(task_start(name, mode), cc.joints);
  const ReferenceProfile prof = task_profile(name, start, cc, dt);
  Trajectory tr;
  tr.task = std::string(name);
  tr.dt = dt;
  Posture q = start;
  for (std::size_t t = 0; t <= prof.steps(); ++t) {
    InteractionState s = forward_kinematics(q, cc.joints, cc.dims);
    if (t < prof.steps()) {
      s.linear_velocity = prof.velocity[t].head<3>();
      s.angular_velocity = prof.velocity[t].tail<3>();
    }
    tr.postures.push_back(q);
    tr.states.push_back(s);
    if (t == prof.steps()) break;
    Posture next = q;
    next.angles += dt * dls_solve(jacobian(q, cc.joints, cc.dims), prof.velocity[t], kRolloutDamping);
    q = clamp_to_rom(next, cc.joints);
  }
  tr.validate(cc.joints);
  return tr;
}

// q_current + alpha (q_star - q_current), projected onto the range of motion.
inline Posture apply_correction(const Posture& q_current, const Posture& q_star, double alpha, const JointSet& joints) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::Config, "acceptance alpha must lie in [0, 1]");
  if (q_current.size() != q_star.size()) fail(ErrorKind::Input, "posture lengths differ");
  Posture out = q_current;
  out.angles += alpha * (q_star.angles - q_current.angles);
  return clamp_to_rom(out, joints);
}

struct StepLog {
  Posture posture;
  int discrete = 0;
  double continuous = 0.0;
  bool corrected = false;
  int optimal_discrete = 0;     // score of the suggested posture
  double optimal_continuous = 0.0;
  bool solver_failed = false;
  double wall_seconds = 0.0;
};

struct RunOptions {
  double alpha = 0.75;
  double kappa = 0.5;  // seconds added per radian of adopted correction
  bool record_timing = false;
};

struct RunResult {
  std::string task;
  double alpha = 0.0;
  std::vector<StepLog> steps;
  double nominal_time = 0.0;
  double completion_time = 0.0;
  double correction_total = 0.0;
  std::vector<std::string> failures;

  double mean_discrete() const {
    double s = 0.0;
    for (const auto& x : steps) s += x.discrete;
    return steps.empty() ? 0.0 : s / static_cast<double>(steps.size());
  }
};

namespace sim_detail {

inline StepLog score_step(const Posture& q, const ComfortObjective& obj, const SurrogateModel& monitor) {
  StepLog l;
  l.posture = q;
  l.discrete = obj.discrete_score(q);
  l.continuous = forward(monitor, q, obj.ctx);
  l.optimal_discrete = l.discrete;
  l.optimal_continuous = l.continuous;
  return l;
}

}  // namespace sim_detail

// Scores of the uncorrected trajectory.
inline RunResult playback(const Trajectory& traj, const ComfortObjective& obj, const SurrogateModel& monitor) {
  RunResult r;
  r.task = traj.task;
  for (const auto& q : traj.postures) r.steps.push_back(sim_detail::score_step(q, obj, monitor));
  r.nominal_time = r.completion_time = static_cast<double>(traj.size()) * traj.dt;
  return r;
}

inline RunResult run_task(const Trajectory& traj, const ComfortObjective& obj, const ConstraintConfig& cc,
                          const SolverConfig& solver, const RunOptions& opt, const SurrogateModel& monitor) {
  traj.validate(cc.joints);
  if (!(opt.alpha >= 0.0 && opt.alpha <= 1.0)) fail(ErrorKind::Config, "acceptance alpha must lie in [0, 1]");
  if (!(opt.kappa >= 0.0)) fail(ErrorKind::Config, "completion-time coefficient must be >= 0");
  RunResult r;
  r.task = traj.task;
  r.alpha = opt.alpha;
  r.nominal_time = static_cast<double>(traj.size()) * traj.dt;
  Vec offset = Vec::Zero(static_cast<Eigen::Index>(traj.postures.front().size()));
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    InteractionState target = traj.states[t];
    target.linear_velocity.setZero();
    target.angular_velocity.setZero();
    Posture current = traj.postures[t];
    if (!offset.isZero(0.0)) {
      current.angles += offset;
      current = solve_ik(clamp_to_rom(current, cc.joints), target, cc.joints, cc.dims);
    }
    StepLog log = sim_detail::score_step(current, obj, monitor);
    if (opt.alpha > 0.0) {
      try {
        SolverConfig sc = solver;
        sc.seed = derive_seed(solver.seed, traj.task + "/" + std::to_string(t));
        const OptimizeResult o = optimize_online(current, target, obj, cc, sc);
        const Posture corrected = apply_correction(current, o.posture, opt.alpha, cc.joints);
        const double moved = (corrected.angles - current.angles).norm();
        log.optimal_discrete = o.discrete_final;
        log.optimal_continuous = forward(monitor, o.posture, obj.ctx);
        if (moved > 0.0) {
          const StepLog c = sim_detail::score_step(corrected, obj, monitor);
          log.posture = corrected;
          log.discrete = c.discrete;
          log.continuous = c.continuous;
          log.corrected = true;
          r.correction_total += moved;
        }
      } catch (const Error& e) {
        log.solver_failed = true;
        r.failures.push_back("step " + std::to_string(t) + ": " + e.what());
      }
    }
    offset = log.posture.angles - traj.postures[t].angles;
    if (opt.record_timing) log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.steps.push_back(std::move(log));
  }
  r.completion_time = r.nominal_time + opt.kappa * r.correction_total;
  return r;
}

// Fraction of steps whose rounded continuous score equals the discrete score.
struct Agreement {
  std::size_t steps = 0;
  std::size_t exact = 0;
  std::size_t within_one = 0;
  std::map<int, std::size_t> deviation_histogram;  // rounded - discrete

  double exact_rate() const { return steps ? static_cast<double>(exact) / static_cast<double>(steps) : 0.0; }
  double within_one_rate() const { return steps ? static_cast<double>(within_one) / static_cast<double>(steps) : 0.0; }

  void add(const Agreement& o) {
    steps += o.steps;
    exact += o.exact;
    within_one += o.within_one;
    for (const auto& [k, v] : o.deviation_histogram) deviation_histogram[k] += v;
  }
};

inline Agreement agreement(const RunResult& r, Scheme scheme) {
  Agreement a;
  for (const auto& s : r.steps) {
    const int d = round_score(s.continuous, scheme) - s.discrete;
    ++a.steps;
    a.exact += d == 0;
    a.within_one += std::abs(d) <= 1;
    ++a.deviation_histogram[d];
  }
  return a;
}

// ---------------------------------------------------------------------------
// Box-plot statistics (quartiles by linear interpolation between order statistics)

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::size_t count = 0;
};

inline double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) fail(ErrorKind::Input, "box statistics of an empty series");
  std::sort(v.begin(), v.end());
  return {v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back(), v.size()};
}

struct SummaryRow {
  std::string task;
  std::string variant;
  std::string series;  // "optimal" or "corrected"
  BoxStats stats;
};

struct LabeledRun {
  std::string variant;
  RunResult run;
};

inline std::vector<SummaryRow> summarize_runs(const std::vector<LabeledRun>& runs) {
  std::vector<SummaryRow> rows;
  for (const auto& lr : runs) {
    std::vector<double> opt, cor;
    for (const auto& s : lr.run.steps) {
      opt.push_back(s.optimal_discrete);
      cor.push_back(s.discrete);
    }
    if (opt.empty()) continue;
    rows.push_back({lr.run.task, lr.variant, "optimal", box_stats(opt)});
    rows.push_back({lr.run.task, lr.variant, "corrected", box_stats(cor)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr int kSimReportVersion = 1;

inline void write_run(std::ostream& out, const RunResult& r, Header h) {
  h.set("task", r.task);
  h.set("alpha", format_exact(r.alpha));
  h.set("steps", std::to_string(r.steps.size()));
  h.set("nominal_time", format_exact(r.nominal_time));
  h.set("completion_time", format_exact(r.completion_time));
  h.set("mean_discrete", format_exact(r.mean_discrete()));
  h.set("solver_failures", std::to_string(r.failures.size()));
  h.write(out);
  const std::size_t n = r.steps.empty() ? 0 : r.steps.front().posture.size();
  out << "step";
  for (std::size_t j = 0; j < n; ++j) out << ",q" << j + 1;
  out << ",discrete,continuous,corrected,optimal_discrete,optimal_continuous,solver_failed,wall_seconds\n";
  for (std::size_t t = 0; t < r.steps.size(); ++t) {
    const auto& s = r.steps[t];
    out << t;
    for (std::size_t j = 0; j < n; ++j) out << ',' << format_exact(s.posture[j]);
    out << ',' << s.discrete << ',' << format_exact(s.continuous) << ',' << (s.corrected ? 1 : 0) << ','
        << s.optimal_discrete << ',' << format_exact(s.optimal_continuous) << ',' << (s.solver_failed ? 1 : 0) << ','
        << format_exact(s.wall_seconds) << '\n';
  }
}

inline void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows, Header h) {
  h.write(out);
  out << "task,variant,series,count,min,q1,median,q3,max\n";
  for (const auto& r : rows)
    out << r.task << ',' << r.variant << ',' << r.series << ',' << r.stats.count << ',' << format_exact(r.stats.min)
        << ',' << format_exact(r.stats.q1) << ',' << format_exact(r.stats.median) << ',' << format_exact(r.stats.q3)
        << ',' << format_exact(r.stats.max) << '\n';
}

}  // namespace ergokit
