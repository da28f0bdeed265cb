// Acceptance suite: one PASS/FAIL line per criterion, artifacts under --out.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "ergokit/sim.hpp"
#include "worksheet_fixtures.hpp"

using namespace ergokit;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  Verdict(int i, std::string n) : id(i), name(std::move(n)) {}
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::string fixed(double x, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Scorer oracle equivalence

Verdict scorer_fixtures() {
  Verdict v{1, "scorer oracle equivalence"};
  std::set<int> rula_seen, reba_seen;
  int total = 0, matched = 0;
  std::string misses;
  for (const auto& f : worksheet::rula_fixtures()) {
    ++total;
    const int got = rula_score(f.q, f.ctx).value;
    if (got == f.expected) {
      ++matched;
      rula_seen.insert(got);
    } else {
      misses += std::string(" rula:") + f.name;
    }
  }
  for (const auto& f : worksheet::reba_table_c_fixtures()) {
    ++total;
    const int got = reba_table_c(f.q, f.ctx).value;
    if (got == f.expected) {
      ++matched;
      reba_seen.insert(got);
    } else {
      misses += std::string(" reba:") + f.name;
    }
  }
  v.pass = total >= 20 && matched == total && rula_seen.size() == 7 && reba_seen.size() == 12;
  v.detail = std::to_string(matched) + "/" + std::to_string(total) + " fixtures match; RULA values covered " +
             std::to_string(rula_seen.size()) + "/7, Table C values covered " + std::to_string(reba_seen.size()) +
             "/12" + misses;
  return v;
}

// ---------------------------------------------------------------------------
// 2. Surrogate fidelity

struct Fidelity {
  std::shared_ptr<const SurrogateModel> model;
  AccuracyReport report;
  DatasetSplit data;
};

void print_confusion(std::ostream& os, const AccuracyReport& r) {
  const auto k = r.counts.rows();
  os << "      label\\pred";
  for (Eigen::Index j = 0; j < k; ++j) os << std::setw(7) << r.lo + j;
  os << '\n';
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r.counts.row(i).sum() == 0) continue;
    os << std::setw(16) << r.lo + i;
    for (Eigen::Index j = 0; j < k; ++j) os << std::setw(7) << fixed(r.confusion(i, j), 3);
    os << '\n';
  }
}

Fidelity fidelity(Scheme scheme, std::uint64_t seed, const fs::path& out, bool reuse) {
  const std::size_t n = 200000;
  const auto joints = JointSet::defaults(scheme_mode(scheme));
  const auto postures = sample_postures(n, seed, joints);
  auto samples = label_dataset(postures, std::vector<TaskContext>(n), scheme, default_workers());
  std::vector<int> classes;
  for (const auto& [c, cnt] : histogram(samples)) classes.push_back(c);
  BalanceOptions bo;
  bo.policy = BalancePolicy::TargetHistogram;
  bo.target = uniform_target(classes, n);
  samples = balance(samples, bo, seed, joints);

  Fidelity f;
  f.data = split(samples, SplitFractions{}, seed);
  const fs::path model_path = out / (std::string(to_string(scheme)) + "_surrogate.bin");
  const ModelSpec spec = ModelSpec::for_scheme(scheme);
  if (reuse && fs::exists(model_path)) {
    f.model = std::make_shared<const SurrogateModel>(load_model(model_path.string(), spec));
    std::cout << "  reusing " << model_path.string() << '\n';
  } else {
    TrainConfig cfg;
    cfg.seed = seed;
    std::cout << "  training " << to_string(scheme) << " surrogate on " << f.data.train.size() << " samples ("
              << cfg.epochs << " epochs, batch " << cfg.batch_size << ", lr " << cfg.learning_rate << ")\n";
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult tr = train(f.data.train, f.data.val, spec, cfg, [&](int epoch, double tl, double vl, const SurrogateModel&) {
      if (epoch % 25 == 0 || epoch == 1)
        std::cout << "    epoch " << epoch << " train " << fixed(tl, 5) << " val " << fixed(vl, 5) << " ("
                  << fixed(seconds_since(t0), 0) << " s)" << std::endl;
    });
    save_model(model_path.string(), tr.model, "acceptance");
    std::ofstream loss(out / (std::string(to_string(scheme)) + "_loss.csv"));
    loss << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < tr.train_loss.size(); ++e)
      loss << e + 1 << ',' << format_exact(tr.train_loss[e]) << ',' << format_exact(tr.val_loss[e]) << '\n';
    f.model = std::make_shared<const SurrogateModel>(std::move(tr.model));
  }
  f.report = accuracy(*f.model, f.data.test);
  std::ofstream cm(out / (std::string(to_string(scheme)) + "_confusion.csv"));
  cm << "label";
  for (Eigen::Index j = 0; j < f.report.counts.cols(); ++j) cm << ",pred" << f.report.lo + j;
  cm << '\n';
  for (Eigen::Index i = 0; i < f.report.counts.rows(); ++i) {
    cm << f.report.lo + i;
    for (Eigen::Index j = 0; j < f.report.counts.cols(); ++j) cm << ',' << f.report.counts(i, j);
    cm << '\n';
  }
  std::cout << "  " << to_string(scheme) << " held-out accuracy " << fixed(100 * f.report.accuracy, 2) << "% on "
            << f.data.test.size() << " samples, min diagonal " << fixed(f.report.min_diagonal(), 3) << '\n';
  print_confusion(std::cout, f.report);
  return f;
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness

double kink_distance(const SurrogateModel& m, const Vec& x) {
  double best = std::numeric_limits<double>::infinity();
  Vec a = x;
  Mat dz_dx = Mat::Identity(x.size(), x.size());
  for (std::size_t l = 0; l + 1 < m.layers(); ++l) {
    const Vec z = m.weights[l] * a + m.biases[l];
    const Mat dz = m.weights[l] * dz_dx;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double g = dz.row(i).norm();
      if (g > 0) best = std::min(best, std::abs(z[i]) / g);
    }
    const Vec mask = (z.array() > 0).cast<double>();
    a = z.cwiseMax(0.0);
    dz_dx = mask.asDiagonal() * dz;
  }
  return best;
}

struct GradientCheck {
  double worst = 0.0;
  double worst_clear = 0.0;  // over points at least one finite-difference step from every kink
  int skipped = 0;
  int within_step = 0;  // checked points closer to a kink than the finite-difference step
};

GradientCheck check_gradient(const SurrogateModel& m, std::uint64_t seed, int points) {
  const auto joints = JointSet::defaults(m.spec.mode());
  const double h = 1e-5;
  GradientCheck c;
  int checked = 0;
  std::uint64_t batch = 0;
  while (checked < points) {
    for (const auto& q : sample_postures(64, derive_seed(seed, "grad/" + std::to_string(batch++)), joints)) {
      if (checked == points) break;
      const double kink = kink_distance(m, encode_input(q, {}, m.spec));
      if (kink < 1e-6) {
        ++c.skipped;
        continue;
      }
      const Vec g = grad_wrt_posture(m, q, {});
      Vec fd(g.size());
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        Posture a = q, b = q;
        a[static_cast<std::size_t>(j)] += h;
        b[static_cast<std::size_t>(j)] -= h;
        fd[j] = (forward(m, a, {}) - forward(m, b, {})) / (2 * h);
      }
      const double err = (g - fd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-12);
      c.worst = std::max(c.worst, err);
      if (kink < h) ++c.within_step;
      else c.worst_clear = std::max(c.worst_clear, err);
      ++checked;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// 4. FK / Jacobian

Vec3 vee(const Mat3& S) { return {0.5 * (S(2, 1) - S(1, 2)), 0.5 * (S(0, 2) - S(2, 0)), 0.5 * (S(1, 0) - S(0, 1))}; }

double worst_jacobian_error(BodyMode mode, std::uint64_t seed) {
  const auto js = JointSet::defaults(mode);
  const BodyDimensions d;
  const double h = 1e-6;
  double worst = 0.0;
  for (const auto& q : sample_postures(100, seed, js)) {
    const Mat6X J = jacobian(q, js, d);
    const Mat3 R = chain_state(q, js, d).hand_rotation;
    for (std::size_t k = 0; k < q.size(); ++k) {
      Posture a = q, b = q;
      a[k] += h;
      b[k] -= h;
      const auto sa = chain_state(a, js, d), sb = chain_state(b, js, d);
      Vec6 col;
      col.head<3>() = (sa.hand_position - sb.hand_position) / (2 * h);
      col.tail<3>() = vee((sa.hand_rotation - sb.hand_rotation) / (2 * h) * R.transpose());
      worst = std::max(worst, (J.col(static_cast<Eigen::Index>(k)) - col).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// 5. Optimization efficacy

InteractionState static_target(const Posture& q, const ConstraintConfig& cc) {
  InteractionState s = forward_kinematics(q, cc.joints, cc.dims);
  s.linear_velocity.setZero();
  s.angular_velocity.setZero();
  return s;
}

std::vector<Posture> high_risk_starts(std::size_t count, std::uint64_t seed, const ConstraintConfig& cc) {
  std::vector<Posture> out;
  std::uint64_t batch = 0;
  while (out.size() < count)
    for (const auto& q : sample_postures(256, derive_seed(seed, "starts/" + std::to_string(batch++)), cc.joints))
      if (out.size() < count && rula_score(q, {}).value >= 5) out.push_back(q);
  return out;
}

// Grid over trunk flexion, trunk twist and neck flexion; the arm re-solves IK to keep the hand in place.
int best_on_slice(const Posture& q, const InteractionState& target, const ConstraintConfig& cc) {
  const std::size_t slice[3] = {joint::TrunkFlexion, joint::TrunkTwist, joint::NeckFlexion};
  const std::vector<std::size_t> locked = {joint::TrunkFlexion, joint::TrunkTwist, joint::NeckFlexion,
                                           joint::TrunkSideBend};
  int best = rula_score(q, {}).value;
  for (int a = 0; a <= 8; ++a)
    for (int b = 0; b <= 8; ++b)
      for (int c = 0; c <= 8; ++c) {
        Posture g = q;
        const int idx[3] = {a, b, c};
        for (int k = 0; k < 3; ++k) {
          const auto& j = cc.joints[slice[k]];
          g[slice[k]] = j.lo + (j.hi - j.lo) * idx[k] / 8.0;
        }
        g = solve_ik(g, target, cc.joints, cc.dims, locked, 100);
        const double dev = pose_deviation(g, Vec::Zero(10), target, cc.weight, cc.joints, cc.dims, false).weighted_sq;
        if (dev <= cc.epsilon && cc.joints.contains(g)) best = std::min(best, rula_score(g, {}).value);
      }
  return best;
}

Verdict efficacy(const std::shared_ptr<const SurrogateModel>& model) {
  Verdict v{5, "optimization efficacy"};
  const auto cc = ConstraintConfig::defaults(BodyMode::Upper);
  const auto obj = ComfortObjective::surrogate(model);
  const auto starts = high_risk_starts(200, 505, cc);
  int reduced = 0, worse = 0, infeasible = 0;
  for (const auto& q : starts) {
    const OptimizeResult r = optimize_online(q, static_target(q, cc), obj, cc, SolverConfig{});
    if (!r.feasible) ++infeasible;
    if (r.feasible && r.discrete_final <= r.discrete_start - 1) ++reduced;
    if (r.discrete_final > r.discrete_start || r.risk_final > r.risk_start) ++worse;
  }
  int oracle_better = 0;
  const int oracle_n = 20;
  for (int i = 0; i < oracle_n; ++i)
    oracle_better += best_on_slice(starts[static_cast<std::size_t>(i)], static_target(starts[static_cast<std::size_t>(i)], cc), cc) <
                     rula_score(starts[static_cast<std::size_t>(i)], {}).value;
  const double rate = static_cast<double>(reduced) / static_cast<double>(starts.size());
  v.pass = rate >= 0.80 && worse == 0 && infeasible == 0;
  v.detail = "score reduced by >= 1 in " + fixed(100 * rate, 1) + "% of " + std::to_string(starts.size()) +
             " starts (need 80%), worse results " + std::to_string(worse) + ", infeasible " + std::to_string(infeasible) +
             "; slice grid finds a better feasible posture for " + std::to_string(oracle_better) + "/" +
             std::to_string(oracle_n) + " instances";
  return v;
}

// ---------------------------------------------------------------------------
// 6. Solver-speed ratio

Verdict speed_ratio(const std::shared_ptr<const SurrogateModel>& model) {
  Verdict v{6, "solver-speed ratio"};
  const auto cc = ConstraintConfig::defaults(BodyMode::Upper);
  const auto obj = ComfortObjective::surrogate(model);
  SolverConfig cem;
  cem.method = Method::Cem;
  cem.population = 10000;
  const SolverConfig grad;
  std::vector<double> ratios;
  double cem_total = 0, grad_total = 0;
  for (const auto& q : high_risk_starts(5, 606, cc)) {
    const auto target = static_target(q, cc);
    auto t0 = std::chrono::steady_clock::now();
    for (int rep = 0; rep < 20; ++rep) optimize_online(q, target, obj, cc, grad);
    const double g = seconds_since(t0) / 20;
    t0 = std::chrono::steady_clock::now();
    optimize_online(q, target, obj, cc, cem);
    const double c = seconds_since(t0);
    ratios.push_back(c / g);
    cem_total += c;
    grad_total += g;
  }
  const double median = box_stats(ratios).median;
  v.pass = median >= 100.0;
  v.detail = "median CEM/gradient wall-time ratio " + fixed(median, 1) + " (need >= 100); mean CEM " +
             fixed(cem_total / 5, 3) + " s, mean gradient " + fixed(1e3 * grad_total / 5, 3) + " ms";
  return v;
}

// ---------------------------------------------------------------------------
// 7 and 8. Simulated tasks

std::string run_report(const RunResult& r) {
  std::ostringstream os;
  Header h("ergokit-sim", kSimReportVersion);
  stamp_provenance(h, "acceptance", "", 0);
  write_run(os, r, h);
  return os.str();
}

std::pair<Verdict, Verdict> simulated_tasks(const std::shared_ptr<const SurrogateModel>& model, const fs::path& out) {
  Verdict tracking{7, "continuity and tracking"};
  Verdict acceptance{8, "correction acceptance"};
  const auto cc = ConstraintConfig::defaults(BodyMode::Upper);
  struct Variant {
    const char* name;
    Method method;
    ComfortObjective obj;
  };
  const Variant variants[] = {
      {"grad-surrogate", Method::ProjectedGradient, ComfortObjective::surrogate(model)},
      {"cem-surrogate", Method::Cem, ComfortObjective::surrogate(model)},
      {"cem-discrete", Method::Cem, ComfortObjective::discrete(Scheme::Rula)},
  };
  Agreement total;
  bool all_lower = true, all_identical = true;
  std::string per_task;
  fs::create_directories(out / "sim");
  for (const auto& var : variants) {
    per_task += std::string(" [") + var.name + "]";
    SolverConfig cfg;
    cfg.method = var.method;
    for (auto name : kTaskNames) {
      const Trajectory tr = make_task(name, BodyMode::Upper, cc);
      RunOptions zero, some;
      zero.alpha = 0.0;
      some.alpha = 0.75;
      const RunResult r0 = run_task(tr, var.obj, cc, cfg, zero, *model);
      const RunResult r1 = run_task(tr, var.obj, cc, cfg, some, *model);
      const RunResult play = playback(tr, var.obj, *model);
      const std::string rep0 = run_report(r0);
      all_identical = all_identical && rep0 == run_report(play);
      all_lower = all_lower && r1.mean_discrete() < r0.mean_discrete();
      const std::string stem = std::string(name) + "__" + var.name;
      std::ofstream(out / "sim" / (stem + "__alpha0.csv")) << rep0;
      std::ofstream(out / "sim" / (stem + "__alpha0.75.csv")) << run_report(r1);
      const Agreement a0 = agreement(r0, Scheme::Rula), a1 = agreement(r1, Scheme::Rula);
      total.add(a0);
      total.add(a1);
      per_task += " " + std::string(name) + " " + fixed(r0.mean_discrete(), 3) + "->" + fixed(r1.mean_discrete(), 3) +
                  " (time " + fixed(r0.completion_time, 2) + "->" + fixed(r1.completion_time, 2) + " s)";
      std::cout << "  " << var.name << " " << name << ": agreement " << fixed(100 * a0.exact_rate(), 2)
                << "% (alpha 0), " << fixed(100 * a1.exact_rate(), 2) << "% (alpha 0.75); mean RULA "
                << fixed(r0.mean_discrete(), 3) << " -> " << fixed(r1.mean_discrete(), 3) << '\n';
    }
  }
  std::string hist;
  for (const auto& [k, c] : total.deviation_histogram) hist += " " + std::to_string(k) + ":" + std::to_string(c);
  tracking.pass = total.exact_rate() >= 0.97 && total.within_one_rate() >= 0.999;
  tracking.detail = "rounded surrogate equals discrete score on " + fixed(100 * total.exact_rate(), 2) + "% of " +
                    std::to_string(total.steps) + " steps (need 97%), |deviation| <= 1 on " +
                    fixed(100 * total.within_one_rate(), 2) + "% (need 99.9%); histogram" + hist;
  acceptance.pass = all_lower && all_identical;
  acceptance.detail = std::string("mean RULA alpha 0 -> 0.75:") + per_task + "; alpha 0 identical to playback: " +
                      (all_identical ? "yes" : "no");
  return {tracking, acceptance};
}

// ---------------------------------------------------------------------------
// 9. Reproducibility through the command-line pipeline

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict reproducibility(const std::string& cli, const fs::path& out) {
  Verdict v{9, "reproducibility"};
  const std::string steps[] = {
      "gen --scheme rula --n 50000 --seed 21 --workers 0 --out data.csv",
      "train --data data.csv --epochs 5 --batch 512 --out model.bin --loss loss.csv --confusion confusion.csv",
      "assess --model model.bin --input data.csv --out scores.csv",
      "optimize --problem online --method grad --model model.bin --task push --step 60 --out online.csv",
      "optimize --problem initial --method cem --population 300 --model model.bin --task lateral_reach --out initial.csv",
      "optimize --problem reconfigure --method grad --restarts 4 --model model.bin --task valve_arc --step 40 "
      "--out reconfigure.csv",
      "sim --model model.bin --variants grad-surrogate,cem-surrogate,cem-discrete --population 200 "
      "--cem_iterations 10 --workers 0 --out_dir sim",
  };
  const fs::path root = out / "pipeline";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    for (const auto& s : steps) {
      const std::string cmd =
          "cd '" + (root / run).string() + "' && '" + cli + "' " + s + " > stdout.txt 2> stderr.txt";
      if (shell(cmd) != 0) {
        v.detail = std::string("run ") + run + " failed at: " + s;
        return v;
      }
      fs::rename(root / run / "stdout.txt", root / run / ("log_" + s.substr(0, s.find(' ')) + ".txt"));
    }
  }
  std::size_t files = 0, identical = 0;
  std::string differ;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    if (rel.string().starts_with("log_") || rel == "stderr.txt") continue;
    ++files;
    if (slurp(e.path()) == slurp(root / "b" / rel))
      ++identical;
    else
      differ += " " + rel.string();
  }
  v.pass = files >= 10 && identical == files;
  v.detail = std::to_string(identical) + "/" + std::to_string(files) +
             " pipeline artifacts byte-identical across two runs (gen, train, assess, optimize x3, sim)" + differ;
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergokit acceptance suite"};
  std::string out_dir = "acceptance";
  std::string cli_path =
#ifdef ERGOKIT_CLI
      ERGOKIT_CLI;
#else
      "ergokit";
#endif
  std::vector<int> only;
  bool reuse = false;
  app.add_option("--out", out_dir, "artifact directory");
  app.add_option("--cli", cli_path, "ergokit executable used by the pipeline check");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_flag("--reuse-models", reuse, "load surrogates saved by a previous run instead of training");
  CLI11_PARSE(app, argc, argv);

  const fs::path out(out_dir);
  fs::create_directories(out);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  const bool needs_rula = wanted(2) || wanted(3) || wanted(5) || wanted(6) || wanted(7) || wanted(8);

  std::vector<Verdict> verdicts;
  auto timed = [&](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v = fn();
    v.seconds = seconds_since(t0);
    verdicts.push_back(v);
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << v.id << " (" << v.name << "): " << v.detail << " ["
              << fixed(v.seconds, 1) << " s]" << std::endl;
  };

  try {
    if (wanted(1)) timed(scorer_fixtures);

    Fidelity rula, reba;
    if (needs_rula) {
      const auto t0 = std::chrono::steady_clock::now();
      rula = fidelity(Scheme::Rula, 2, out, reuse);
      if (wanted(2) || wanted(3)) reba = fidelity(Scheme::RebaTableC, 3, out, reuse);
      if (wanted(2)) {
        Verdict v{2, "surrogate fidelity"};
        v.pass = rula.report.accuracy >= 0.97 && reba.report.accuracy >= 0.96;
        v.detail = "held-out accuracy DULA-analogue " + fixed(100 * rula.report.accuracy, 2) +
                   "% (need 97%), DEBA-analogue " + fixed(100 * reba.report.accuracy, 2) +
                   "% (need 96%); min diagonal " + fixed(rula.report.min_diagonal(), 3) + " / " +
                   fixed(reba.report.min_diagonal(), 3);
        v.seconds = seconds_since(t0);
        verdicts.push_back(v);
        std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion 2 (" << v.name << "): " << v.detail << " ["
                  << fixed(v.seconds, 1) << " s]" << std::endl;
      }
    }
    if (wanted(3))
      timed([&] {
        Verdict v{3, "gradient correctness"};
        const GradientCheck a = check_gradient(*rula.model, 31, 100);
        const GradientCheck b = check_gradient(*reba.model, 32, 100);
        v.pass = a.worst < 1e-4 && b.worst < 1e-4;
        v.detail = "max relative error " + format_double(a.worst, 3) + " (DULA), " + format_double(b.worst, 3) +
                   " (DEBA) over 100 points each (need < 1e-4); " + std::to_string(a.skipped + b.skipped) +
                   " points within 1e-6 of a kink skipped; " + std::to_string(a.within_step + b.within_step) +
                   " checked points lie closer to a kink than the 1e-5 step, excluding them the max is " +
                   format_double(a.worst_clear, 3) + " (DULA), " + format_double(b.worst_clear, 3) + " (DEBA)";
        return v;
      });
    if (wanted(4))
      timed([] {
        Verdict v{4, "FK/Jacobian correctness"};
        const double a = worst_jacobian_error(BodyMode::Upper, 41), b = worst_jacobian_error(BodyMode::Full, 42);
        v.pass = a < 1e-5 && b < 1e-5;
        v.detail = "max abs error " + format_double(a, 3) + " (upper), " + format_double(b, 3) +
                   " (full) over 100 postures each (need < 1e-5)";
        return v;
      });
    if (wanted(5)) timed([&] { return efficacy(rula.model); });
    if (wanted(6)) timed([&] { return speed_ratio(rula.model); });
    if (wanted(7) || wanted(8)) {
      const auto t0 = std::chrono::steady_clock::now();
      auto [tracking, acceptance] = simulated_tasks(rula.model, out);
      for (Verdict* v : {&tracking, &acceptance}) {
        if (!wanted(v->id)) continue;
        v->seconds = seconds_since(t0);
        verdicts.push_back(*v);
        std::cout << (v->pass ? "PASS" : "FAIL") << "  criterion " << v->id << " (" << v->name << "): " << v->detail
                  << " [" << fixed(v->seconds, 1) << " s]" << std::endl;
      }
    }
    if (wanted(9)) timed([&] { return reproducibility(cli_path, out); });
  } catch (const Error& e) {
    std::cerr << "acceptance aborted: " << e.what() << '\n';
    return 2;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  std::ofstream summary(out / "summary.txt");
  int passed = 0;
  std::cout << "\nacceptance summary\n";
  for (const auto& v : verdicts) {
    passed += v.pass;
    const std::string line =
        std::string(v.pass ? "PASS" : "FAIL") + "  criterion " + std::to_string(v.id) + " (" + v.name + ")";
    std::cout << line << '\n';
    summary << line << ": " << v.detail << '\n';
  }
  std::cout << passed << "/" << verdicts.size() << " criteria passed\n";
  return passed == static_cast<int>(verdicts.size()) ? 0 : 1;
}
