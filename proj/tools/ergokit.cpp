// ergokit command-line driver: gen, train, assess, optimize, sim, xval.
//
// Every command resolves its parameters as defaults < --config file < flags,
// prints the resolved configuration to stderr, and writes versioned artifacts.
// Failures print one machine-readable line and exit with a per-kind code.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ergokit/datagen.hpp"
#include "ergokit/optimize.hpp"
#include "ergokit/sim.hpp"
#include "ergokit/surrogate.hpp"

namespace fs = std::filesystem;
using namespace ergokit;

namespace {

enum class KeyKind { Value, Path };

struct Key {
  std::string name;
  std::string def;
  std::string help;
  KeyKind kind = KeyKind::Value;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Version: return 4;
    case ErrorKind::Format: return 5;
    case ErrorKind::Mode:
    case ErrorKind::Input: return 6;
    case ErrorKind::Unsupported: return 7;
    case ErrorKind::Unsatisfiable: return 8;
    case ErrorKind::Divergence: return 9;
  }
  return 1;
}

// Resolved key/value parameters of one command.
class Params {
 public:
  Params(std::string command, std::vector<Key> keys) : command_(std::move(command)), keys_(std::move(keys)) {}

  const std::vector<Key>& keys() const { return keys_; }
  std::map<std::string, std::string>& flags() { return flags_; }

  void resolve(const std::string& config_path, const std::map<std::string, CLI::Option*>& opts) {
    for (const auto& k : keys_) values_[k.name] = k.def;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) fail(ErrorKind::Io, "cannot open config file " + config_path);
      const Header h = Header::read(in, "ergokit-config", 1, true);
      for (const auto& [k, v] : h.entries()) {
        if (!values_.contains(k)) fail(ErrorKind::Config, "unknown config key '" + k + "' for command " + command_);
        values_[k] = v;
      }
    }
    for (const auto& [name, opt] : opts)
      if (opt->count() > 0) values_[name] = flags_[name];
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  long long integer(const std::string& key, long long lo = std::numeric_limits<long long>::min()) const {
    long long v = 0;
    try {
      v = parse_int(str(key));
    } catch (const Error&) {
      bad(key, "expected an integer");
    }
    if (v < lo) bad(key, "must be >= " + std::to_string(lo));
    return v;
  }

  double real(const std::string& key) const {
    try {
      return parse_double(str(key));
    } catch (const Error&) {
      bad(key, "expected a number");
    }
  }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    bad(key, "expected 0 or 1");
  }

  std::string path(const std::string& key, bool required = true) const {
    const auto& v = str(key);
    if (required && v.empty()) bad(key, "a path is required");
    return v;
  }

  template <typename Fn>
  auto parsed(const std::string& key, Fn&& fn) const -> decltype(fn(std::string_view{})) {
    try {
      return fn(str(key));
    } catch (const Error& e) {
      bad(key, e.what());
    }
  }

  [[noreturn]] void bad(const std::string& key, const std::string& why) const {
    fail(ErrorKind::Config, "invalid value '" + str(key) + "' for key '" + key + "': " + why);
  }

  // Value keys only, so output file names do not enter artifact hashes.
  std::string hashed_text() const {
    std::string s = command_ + "\n";
    for (const auto& k : keys_)
      if (k.kind == KeyKind::Value) s += k.name + "=" + values_.at(k.name) + "\n";
    return s;
  }

  void print(std::ostream& out) const {
    out << "# ergokit " << command_ << " resolved config\n";
    for (const auto& k : keys_) out << "#   " << k.name << "=" << values_.at(k.name) << "\n";
  }

 private:
  std::string command_;
  std::vector<Key> keys_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, std::string> values_;
};

std::size_t workers_from(const Params& p) {
  const auto w = p.integer("workers", 0);
  return w == 0 ? default_workers() : static_cast<std::size_t>(w);
}

Constants constants_from(const Params& p, BodyMode mode) {
  const std::string path = p.path("constants", false);
  if (path.empty()) return {JointSet::defaults(mode), BodyDimensions{}};
  return load_constants(path, mode);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  for (auto part : split_view(s, sep))
    if (!part.empty()) out.emplace_back(part);
  return out;
}

std::vector<Key> context_keys() {
  return {{"load_kg", "0", "handled load in kg"},
          {"load_type", "intermittent", "static|intermittent|repeated|shock"},
          {"motion_frequency", "0", "actions per minute"},
          {"coupling", "good", "good|fair|poor|unacceptable"},
          {"arm_supported", "0", "arm supported or person leaning"},
          {"legs_supported", "1", "legs and feet supported"},
          {"static", "0", "posture held longer than one minute"},
          {"repeated", "0", "action repeated more than 4 times per minute"},
          {"rapid", "0", "rapid large range changes"}};
}

TaskContext context_from(const Params& p) {
  TaskContext c;
  c.load_kg = p.real("load_kg");
  c.load_type = static_cast<LoadType>(p.parsed("load_type", [](std::string_view s) { return parse_enum(s, kLoadTypeNames, "load type"); }));
  c.motion_frequency = p.real("motion_frequency");
  c.coupling = static_cast<Coupling>(p.parsed("coupling", [](std::string_view s) { return parse_enum(s, kCouplingNames, "coupling"); }));
  c.arm_supported = p.flag("arm_supported");
  c.legs_supported = p.flag("legs_supported");
  c.posture_static_over_1min = p.flag("static");
  c.repeated_4x_per_min = p.flag("repeated");
  c.rapid_large_range_change = p.flag("rapid");
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("invalid task context: ") + e.what());
  }
  return c;
}

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  return out;
}

void print_confusion(std::ostream& out, const AccuracyReport& a) {
  out << "confusion (rows = label, columns = rounded prediction, row-normalized)\n      ";
  for (Eigen::Index j = 0; j < a.confusion.cols(); ++j) out << std::setw(7) << a.lo + j;
  out << "\n";
  for (Eigen::Index i = 0; i < a.confusion.rows(); ++i) {
    if (a.counts.row(i).sum() == 0) continue;
    out << std::setw(6) << a.lo + i;
    for (Eigen::Index j = 0; j < a.confusion.cols(); ++j) out << std::setw(7) << std::fixed << std::setprecision(3) << a.confusion(i, j);
    out << "\n";
  }
  out << std::defaultfloat;
}

void write_confusion_csv(std::ostream& out, const AccuracyReport& a, Header h) {
  h.set("accuracy", format_exact(a.accuracy));
  h.set("min_diagonal", format_exact(a.min_diagonal()));
  h.write(out);
  out << "label";
  for (Eigen::Index j = 0; j < a.confusion.cols(); ++j) out << ",p" << a.lo + j;
  out << ",count\n";
  for (Eigen::Index i = 0; i < a.confusion.rows(); ++i) {
    out << a.lo + i;
    for (Eigen::Index j = 0; j < a.confusion.cols(); ++j) out << ',' << format_exact(a.confusion(i, j));
    out << ',' << a.counts.row(i).sum() << '\n';
  }
}

ModelSpec spec_from(const Params& p, Scheme scheme) {
  ModelSpec spec = ModelSpec::for_scheme(scheme, p.flag("task_params"));
  if (const auto& h = p.str("hidden"); !h.empty()) {
    spec.hidden.clear();
    for (const auto& w : split_list(h, ',')) spec.hidden.push_back(static_cast<int>(p.parsed("hidden", [&](std::string_view) { return parse_int(w); })));
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("invalid value for key 'hidden': ") + e.what());
  }
  return spec;
}

TrainConfig train_config_from(const Params& p) {
  TrainConfig cfg;
  cfg.epochs = static_cast<int>(p.integer("epochs", 1));
  cfg.learning_rate = p.real("lr");
  if (!(cfg.learning_rate > 0)) p.bad("lr", "must be > 0");
  cfg.batch_size = static_cast<int>(p.integer("batch", 1));
  cfg.optimizer = p.parsed("optimizer", parse_optimizer);
  cfg.momentum = p.real("momentum");
  cfg.seed = static_cast<std::uint64_t>(p.integer("seed", 0));
  return cfg;
}

Scheme training_scheme(Scheme s) {
  if (s == Scheme::Reba)
    fail(ErrorKind::Config, "surrogates learn rula or reba-table-c labels; regenerate the dataset with --scheme reba-table-c");
  return s;
}

Header artifact_header(const std::string& kind, int version, const std::string& command, const Params& p,
                       std::uint64_t seed) {
  Header h(kind, version);
  stamp_provenance(h, command, p.hashed_text(), seed);
  return h;
}

// ---------------------------------------------------------------------------

int cmd_gen(const Params& p) {
  const Scheme scheme = p.parsed("scheme", parse_scheme);
  const auto n = static_cast<std::size_t>(p.integer("n", 1));
  const auto seed = static_cast<std::uint64_t>(p.integer("seed", 0));
  const std::string ctx_mode = p.str("context");
  if (ctx_mode != "neutral" && ctx_mode != "random") p.bad("context", "expected neutral or random");
  const std::string policy = p.str("balance");
  const auto target = static_cast<std::size_t>(p.integer("target", 0));
  SplitFractions fr;
  {
    const auto parts = split_list(p.str("split"), ',');
    if (parts.size() != 3) p.bad("split", "expected three comma-separated fractions");
    fr = {p.parsed("split", [&](std::string_view) { return parse_double(parts[0]); }),
          p.parsed("split", [&](std::string_view) { return parse_double(parts[1]); }),
          p.parsed("split", [&](std::string_view) { return parse_double(parts[2]); })};
    try {
      fr.validate();
    } catch (const Error& e) {
      p.bad("split", e.what());
    }
  }
  const Constants k = constants_from(p, scheme_mode(scheme));
  const std::size_t workers = workers_from(p);

  const auto postures = sample_postures(n, seed, k.joints);
  const auto ctxs = ctx_mode == "random" ? sample_contexts(n, seed) : std::vector<TaskContext>(n);
  auto samples = label_dataset(postures, ctxs, scheme, workers);
  const Histogram raw = histogram(samples);
  if (policy != "none") {
    BalanceOptions bo;
    bo.policy = p.parsed("balance", parse_balance_policy);
    if (bo.policy == BalancePolicy::TargetHistogram) {
      if (target == 0) p.bad("target", "target-histogram balancing needs a total sample count");
      std::vector<int> classes;
      for (const auto& [c, cnt] : raw) classes.push_back(c);
      bo.target = uniform_target(classes, target);
    } else if (target != 0) {
      p.bad("target", "only used with balance=target-histogram");
    }
    samples = balance(samples, bo, seed, k.joints);
  }

  Dataset d;
  d.meta.scheme = scheme;
  d.meta.seed = seed;
  d.meta.split = fr;
  d.meta.command = "gen";
  d.meta.config = p.hashed_text();
  d.meta.extra = {{"raw_count", std::to_string(n)},
                  {"raw_histogram", histogram_string(raw)},
                  {"context", ctx_mode},
                  {"balance", policy}};
  d.samples = std::move(samples);
  const std::string out_path = p.path("out");
  auto out = open_out(out_path);
  write_dataset(out, d);
  std::cout << "wrote " << d.samples.size() << " samples to " << out_path << "\n"
            << "raw histogram      " << histogram_string(raw) << "\n"
            << "balanced histogram " << histogram_string(histogram(d.samples)) << "\n";
  return 0;
}

int cmd_train(const Params& p) {
  const Dataset d = read_dataset(p.path("data"));
  const Scheme scheme = training_scheme(d.meta.scheme);
  const ModelSpec spec = spec_from(p, scheme);
  const TrainConfig cfg = train_config_from(p);
  const DatasetSplit sp = split(d.samples, d.meta.split, d.meta.seed);
  if (sp.train.empty()) fail(ErrorKind::Input, "the training split is empty");
  std::cout << "train " << sp.train.size() << "  val " << sp.val.size() << "  test " << sp.test.size() << "\n";

  const int every = std::max(1, cfg.epochs / 20);
  const TrainResult res = train(sp.train, sp.val, spec, cfg, [&](int e, double tl, double vl, const SurrogateModel&) {
    if (e == 1 || e % every == 0 || e == cfg.epochs)
      std::cout << "epoch " << e << "  train_loss " << format_double(tl, 6) << "  val_loss " << format_double(vl, 6) << std::endl;
  });

  const std::string model_path = p.path("out");
  {
    auto out = open_out(model_path);
    save_model(out, res.model, "train", p.hashed_text());
  }
  {
    auto out = open_out(p.path("loss"));
    Header h = artifact_header("ergokit-loss", 1, "train", p, cfg.seed);
    h.write(out);
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < res.train_loss.size(); ++e)
      out << e + 1 << ',' << format_exact(res.train_loss[e]) << ','
          << (e < res.val_loss.size() ? format_exact(res.val_loss[e]) : std::string("nan")) << '\n';
  }
  const auto& eval_set = sp.test.empty() ? sp.val : sp.test;
  if (!eval_set.empty()) {
    const AccuracyReport a = accuracy(res.model, eval_set);
    std::cout << "held-out accuracy " << format_double(a.accuracy, 6) << " on " << eval_set.size()
              << " samples  (minimum diagonal " << format_double(a.min_diagonal(), 4) << ")\n";
    print_confusion(std::cout, a);
    if (const auto cpath = p.path("confusion", false); !cpath.empty()) {
      auto out = open_out(cpath);
      write_confusion_csv(out, a, artifact_header("ergokit-confusion", 1, "train", p, cfg.seed));
    }
  }
  std::cout << "wrote model " << model_path << "\n";
  return 0;
}

struct AssessInput {
  Scheme scheme = Scheme::Rula;
  std::vector<LabeledSample> samples;
  bool labeled = false;
};

// A dataset file from gen, or a plain CSV whose header is q1..qn with optional context columns.
AssessInput read_assess_input(const std::string& path, const ModelSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  AssessInput a;
  a.scheme = spec.scheme;
  if (in.peek() == 'e') {
    Dataset d = read_dataset(in);
    if (d.meta.scheme != spec.scheme)
      fail(ErrorKind::Mode, "dataset scheme " + std::string(to_string(d.meta.scheme)) + " does not match the model");
    a.samples = std::move(d.samples);
    a.labeled = true;
    return a;
  }
  const BodyMode mode = spec.mode();
  const std::size_t n = joint_count(mode);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, path + ": empty posture file");
  std::string qcols;
  for (std::size_t j = 0; j < n; ++j) qcols += (j ? ",q" : "q") + std::to_string(j + 1);
  const bool with_ctx = line == csv_columns(mode);
  if (!with_ctx && line != qcols) fail(ErrorKind::Format, path + ": expected columns '" + qcols + "' (optionally followed by the context columns)");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_view(line, ',');
    if (f.size() != (with_ctx ? n + 9 : n)) fail(ErrorKind::Format, path + ": row " + std::to_string(lineno) + " has the wrong field count");
    Posture q = Posture::zero(mode);
    for (std::size_t j = 0; j < n; ++j) q[j] = parse_double(f[j], "angle");
    const TaskContext c = with_ctx ? parse_context_fields(f, n) : TaskContext{};
    a.samples.push_back({q, c, score(spec.scheme, q, c)});
  }
  return a;
}

int cmd_assess(const Params& p) {
  const SurrogateModel m = load_model(p.path("model"));
  const AssessInput in = read_assess_input(p.path("input"), m.spec);
  if (in.samples.empty()) fail(ErrorKind::Input, "no postures to assess");
  const Vec pred = predict(m, in.samples);
  auto out = open_out(p.path("out"));
  Header h = artifact_header("ergokit-assessment", 1, "assess", p, 0);
  h.set("scheme", std::string(to_string(m.spec.scheme)));
  h.set("count", std::to_string(in.samples.size()));
  h.write(out);
  out << "index,discrete,continuous,rounded,deviation" << (in.labeled ? ",label" : "") << "\n";
  std::size_t self = 0, agree = 0;
  std::map<int, std::size_t> dev_hist;
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    const auto& s = in.samples[i];
    const int discrete = score(in.scheme, s.posture, s.ctx).value;
    const double cont = pred[static_cast<Eigen::Index>(i)];
    const int rounded = round_score(cont, in.scheme);
    self += discrete == s.label.value;
    agree += rounded == discrete;
    ++dev_hist[rounded - discrete];
    out << i << ',' << discrete << ',' << format_exact(cont) << ',' << rounded << ',' << rounded - discrete;
    if (in.labeled) out << ',' << s.label.value;
    out << '\n';
  }
  const double N = static_cast<double>(in.samples.size());
  std::cout << "assessed " << in.samples.size() << " postures\n";
  if (in.labeled) std::cout << "discrete scorer vs stored labels " << format_double(self / N, 6) << "\n";
  std::cout << "rounded surrogate vs discrete scorer " << format_double(agree / N, 6) << "\n"
            << "deviation histogram";
  for (const auto& [d, c] : dev_hist) std::cout << "  " << d << ":" << c;
  std::cout << "\n";
  return 0;
}

SolverConfig solver_from(const Params& p, Method method) {
  SolverConfig s;
  s.method = method;
  s.step = p.real("step_size");
  s.max_iterations = static_cast<int>(p.integer("max_iterations", 1));
  s.tolerance = p.real("tolerance");
  s.population = static_cast<int>(p.integer("population", 8));
  s.elite_fraction = p.real("elite");
  s.cem_iterations = static_cast<int>(p.integer("cem_iterations", 1));
  s.initial_std = p.real("initial_std");
  s.restarts = static_cast<int>(p.integer("restarts", 0));
  s.mu_initial = p.real("mu_initial");
  s.mu_growth = p.real("mu_growth");
  s.mu = p.real("mu");
  s.seed = static_cast<std::uint64_t>(p.integer("seed", 0));
  s.workers = workers_from(p);
  s.record_timing = p.flag("timing");
  try {
    s.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("invalid solver settings: ") + e.what());
  }
  return s;
}

std::vector<Key> solver_keys() {
  return {{"seed", "1", "solver seed"},
          {"step_size", "0.05", "initial projected-gradient step"},
          {"max_iterations", "100", "projected-gradient iteration cap"},
          {"tolerance", "1e-4", "projected-gradient stopping tolerance"},
          {"population", "1000", "CEM population"},
          {"elite", "0.1", "CEM elite fraction"},
          {"cem_iterations", "30", "CEM iterations"},
          {"initial_std", "0.3", "CEM initial standard deviation (rad)"},
          {"restarts", "0", "extra random starts for the initial and reconfigure problems"},
          {"mu_initial", "1", "first penalty weight of the projected-gradient continuation"},
          {"mu_growth", "10", "penalty weight growth factor per continuation stage"},
          {"mu", "1000", "constraint penalty weight"},
          {"epsilon", "1e-4", "interaction-constraint tolerance"},
          {"workers", "1", "evaluation workers for CEM (0 = all cores)"},
          {"timing", "0", "record wall-clock times in reports"}};
}

// Objective from --model / --backend / --scheme; the model (when given) fixes the scheme.
ComfortObjective objective_from(const Params& p, std::shared_ptr<const SurrogateModel> model, Backend backend) {
  const TaskContext ctx = context_from(p);
  if (backend == Backend::Surrogate) {
    if (!model) p.bad("model", "the surrogate backend needs a model");
    return ComfortObjective::surrogate(std::move(model), ctx);
  }
  Scheme s = model ? model->spec.scheme : p.parsed("scheme", parse_scheme);
  if (s == Scheme::Reba) s = Scheme::RebaTableC;
  return ComfortObjective::discrete(s, ctx);
}

std::shared_ptr<const SurrogateModel> maybe_model(const Params& p) {
  const auto path = p.path("model", false);
  if (path.empty()) return nullptr;
  return std::make_shared<const SurrogateModel>(load_model(path));
}

std::string posture_string(const Posture& q) {
  std::string s;
  for (std::size_t j = 0; j < q.size(); ++j) s += (j ? "," : "") + format_exact(q[j]);
  return s;
}

std::string task_from(const Params& p) {
  const std::string t = p.str("task");
  for (auto name : kTaskNames)
    if (name == t) return t;
  p.bad("task", "expected push, lateral_reach, overhead_lift or valve_arc");
}

int cmd_optimize(const Params& p) {
  const std::string problem = p.str("problem");
  if (problem != "online" && problem != "initial" && problem != "reconfigure") p.bad("problem", "expected online, initial or reconfigure");
  const Method method = p.parsed("method", parse_method);
  const Backend backend = p.parsed("backend", parse_backend);
  const auto model = maybe_model(p);
  const ComfortObjective obj = objective_from(p, model, backend);
  const SolverConfig sc = solver_from(p, method);
  const Constants k = constants_from(p, obj.mode());
  ConstraintConfig cc{default_deviation_weight(), p.real("epsilon"), k.joints, k.dims};
  cc.validate();
  const std::string task = task_from(p);
  const double dt = p.real("dt");
  if (!(dt > 0)) p.bad("dt", "must be > 0");
  const auto step = static_cast<std::size_t>(p.integer("step", 0));

  Header h = artifact_header("ergokit-run", kRunReportVersion, "optimize", p, sc.seed);
  h.set("problem", problem);
  h.set("method", std::string(to_string(method)));
  h.set("backend", std::string(to_string(backend)));
  h.set("scheme", std::string(to_string(obj.scheme)));
  h.set("task", task);
  SolveResult solve_result;
  if (problem == "online") {
    const Trajectory tr = make_task(task, obj.mode(), cc, dt);
    if (step >= tr.size()) p.bad("step", "beyond the task length " + std::to_string(tr.size()));
    InteractionState target = tr.states[step];
    target.linear_velocity.setZero();
    target.angular_velocity.setZero();
    const OptimizeResult r = optimize_online(tr.postures[step], target, obj, cc, sc);
    h.set("step", std::to_string(step));
    h.set("risk_start", format_exact(r.risk_start));
    h.set("risk_final", format_exact(r.risk_final));
    h.set("discrete_start", std::to_string(r.discrete_start));
    h.set("discrete_final", std::to_string(r.discrete_final));
    h.set("feasible", r.feasible ? "1" : "0");
    h.set("fell_back", r.fell_back ? "1" : "0");
    h.set("deviation_sq", format_exact(r.deviation_sq));
    h.set("posture", posture_string(r.posture));
    std::cout << "discrete " << r.discrete_start << " -> " << r.discrete_final << "  risk " << format_double(r.risk_start, 6)
              << " -> " << format_double(r.risk_final, 6) << "  feasible " << r.feasible << "  fell_back " << r.fell_back << "\n";
    solve_result = r.solve;
  } else {
    const Posture start = task_start(task, obj.mode());
    const ReferenceProfile prof = task_profile(task, start, cc, dt);
    const bool initial = problem == "initial";
    Posture guess = start;
    if (!initial) {
      if (step >= prof.steps()) p.bad("step", "pause index beyond the profile length " + std::to_string(prof.steps()));
      guess = rollout(prof, start, cc).postures[step];
    }
    const InitialResult r = initial ? optimize_initial(prof, guess, obj, cc, sc) : optimize_reconfigure(prof, step, guess, obj, cc, sc);
    const Rollout before = rollout(initial ? prof : prof.tail(step), guess, cc);
    int d_before = 0, d_after = 0;
    for (const auto& q : before.postures) d_before += obj.discrete_score(q);
    for (const auto& q : r.trajectory.postures) d_after += obj.discrete_score(q);
    h.set("step", std::to_string(initial ? 0 : step));
    h.set("comfort_start", format_exact(rollout_comfort(before, obj)));
    h.set("comfort_final", format_exact(r.comfort_sum));
    h.set("discrete_sum_start", std::to_string(d_before));
    h.set("discrete_sum_final", std::to_string(d_after));
    h.set("feasible", r.feasible ? "1" : "0");
    h.set("fell_back", r.fell_back ? "1" : "0");
    h.set("posture", posture_string(r.q0));
    std::cout << "summed discrete risk " << d_before << " -> " << d_after << " over " << r.trajectory.postures.size()
              << " steps  feasible " << r.feasible << "  fell_back " << r.fell_back << "\n";
    solve_result = r.solve;
  }
  auto out = open_out(p.path("out"));
  write_run_report(out, solve_result, h);
  return 0;
}

struct Variant {
  std::string name;
  Method method;
  Backend backend;
};

Variant parse_variant(std::string_view s) {
  if (s == "grad-surrogate") return {"grad-surrogate", Method::ProjectedGradient, Backend::Surrogate};
  if (s == "cem-surrogate") return {"cem-surrogate", Method::Cem, Backend::Surrogate};
  if (s == "cem-discrete") return {"cem-discrete", Method::Cem, Backend::Discrete};
  fail(ErrorKind::Config, "unknown variant '" + std::string(s) + "' (grad-surrogate, cem-surrogate, cem-discrete)");
}

int cmd_sim(const Params& p) {
  const auto model = std::make_shared<const SurrogateModel>(load_model(p.path("model")));
  const TaskContext ctx = context_from(p);
  const BodyMode mode = model->spec.mode();
  const Constants k = constants_from(p, mode);
  ConstraintConfig cc{default_deviation_weight(), p.real("epsilon"), k.joints, k.dims};
  cc.validate();
  const double dt = p.real("dt");
  if (!(dt > 0)) p.bad("dt", "must be > 0");

  std::vector<std::string> tasks;
  if (p.str("tasks") == "all") {
    for (auto t : kTaskNames) tasks.emplace_back(t);
  } else {
    tasks = split_list(p.str("tasks"), ',');
    for (const auto& t : tasks)
      if (std::find(kTaskNames.begin(), kTaskNames.end(), t) == kTaskNames.end()) p.bad("tasks", "unknown task '" + t + "'");
  }
  std::vector<double> alphas;
  for (const auto& a : split_list(p.str("alphas"), ',')) {
    const double v = p.parsed("alphas", [&](std::string_view) { return parse_double(a); });
    if (!(v >= 0 && v <= 1)) p.bad("alphas", "each alpha must lie in [0, 1]");
    alphas.push_back(v);
  }
  std::vector<Variant> variants;
  for (const auto& v : split_list(p.str("variants"), ',')) variants.push_back(p.parsed("variants", [&](std::string_view) { return parse_variant(v); }));
  if (tasks.empty() || alphas.empty() || variants.empty()) fail(ErrorKind::Config, "tasks, alphas and variants must be non-empty");

  RunOptions ro;
  ro.kappa = p.real("kappa");
  ro.record_timing = p.flag("timing");
  const fs::path dir = p.path("out_dir");
  fs::create_directories(dir);

  std::vector<LabeledRun> runs;
  Agreement total;
  for (const auto& task : tasks) {
    const Trajectory tr = make_task(task, mode, cc, dt);
    for (const auto& v : variants) {
      const ComfortObjective obj = v.backend == Backend::Surrogate
                                       ? ComfortObjective::surrogate(model, ctx)
                                       : ComfortObjective::discrete(model->spec.scheme, ctx);
      const SolverConfig sc = solver_from(p, v.method);
      for (double alpha : alphas) {
        ro.alpha = alpha;
        const RunResult r = run_task(tr, obj, cc, sc, ro, *model);
        Header h = artifact_header("ergokit-sim", kSimReportVersion, "sim", p, sc.seed);
        h.set("variant", v.name);
        h.set("scheme", std::string(to_string(model->spec.scheme)));
        const std::string file = task + "__" + v.name + "__alpha" + format_exact(alpha) + ".csv";
        auto out = open_out((dir / file).string());
        write_run(out, r, h);
        const Agreement a = agreement(r, model->spec.scheme);
        total.add(a);
        std::cout << std::left << std::setw(14) << task << std::setw(16) << v.name << "alpha " << std::setw(5) << alpha
                  << " mean discrete " << std::setw(9) << format_double(r.mean_discrete(), 5) << " completion "
                  << std::setw(8) << format_double(r.completion_time, 5) << " agreement " << format_double(a.exact_rate(), 5)
                  << (r.failures.empty() ? "" : "  solver failures " + std::to_string(r.failures.size())) << "\n"
                  << std::right;
        runs.push_back({v.name + "@" + format_exact(alpha), r});
      }
    }
  }
  {
    auto out = open_out((dir / "summary.csv").string());
    write_summary(out, summarize_runs(runs), artifact_header("ergokit-sim-summary", kSimReportVersion, "sim", p, 0));
  }
  std::cout << "surrogate/scorer agreement " << format_double(total.exact_rate(), 6) << " exact, "
            << format_double(total.within_one_rate(), 6) << " within one, over " << total.steps << " steps\n";
  return 0;
}

int cmd_xval(const Params& p) {
  const Dataset d = read_dataset(p.path("data"));
  const Scheme scheme = training_scheme(d.meta.scheme);
  const int folds = static_cast<int>(p.integer("folds", 2));
  const TrainConfig cfg = train_config_from(p);
  const bool tp = p.flag("task_params");
  std::vector<ModelSpec> specs;
  const auto candidates = p.str("architectures");
  if (candidates.empty()) {
    specs.push_back(ModelSpec::for_scheme(scheme, tp));
  } else {
    for (const auto& arch : split_list(candidates, ';')) {
      ModelSpec s = ModelSpec::for_scheme(scheme, tp);
      s.hidden.clear();
      for (const auto& w : split_list(arch, ','))
        s.hidden.push_back(static_cast<int>(p.parsed("architectures", [&](std::string_view) { return parse_int(w); })));
      try {
        s.validate();
      } catch (const Error& e) {
        p.bad("architectures", e.what());
      }
      specs.push_back(s);
    }
  }
  auto out = open_out(p.path("out"));
  Header h = artifact_header("ergokit-xval", 1, "xval", p, cfg.seed);
  h.set("folds", std::to_string(folds));
  h.write(out);
  out << "architecture,fold,accuracy\n";
  for (const auto& s : specs) {
    const auto acc = cross_validate(d.samples, s, cfg, folds, cfg.seed);
    const std::string name = model_io::widths_string(s.hidden);
    double mean = 0;
    for (std::size_t f = 0; f < acc.size(); ++f) {
      out << '"' << name << "\"," << f + 1 << ',' << format_exact(acc[f]) << '\n';
      mean += acc[f] / static_cast<double>(acc.size());
    }
    out << '"' << name << "\",mean," << format_exact(mean) << '\n';
    std::cout << "hidden " << name << "  mean accuracy " << format_double(mean, 6) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct Command {
  std::string name;
  std::string help;
  std::vector<Key> keys;
  int (*run)(const Params&);
};

std::vector<Command> commands() {
  const std::vector<Key> train_keys = {{"epochs", "200", "training epochs"},
                                       {"lr", "0.001", "learning rate"},
                                       {"batch", "1024", "mini-batch size"},
                                       {"optimizer", "adam", "adam|sgd"},
                                       {"momentum", "0.9", "sgd momentum"},
                                       {"seed", "1", "initialization and batch-order seed"},
                                       {"task_params", "1", "feed the task context to the network"}};
  auto concat = [](std::vector<Key> a, const std::vector<Key>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  std::vector<Command> cs;
  cs.push_back({"gen", "sample, label, balance and write a posture dataset",
                {{"scheme", "rula", "rula|reba|reba-table-c"},
                 {"n", "200000", "number of uniformly sampled postures"},
                 {"seed", "1", "dataset seed"},
                 {"context", "neutral", "neutral (default task context) or random (sampled per posture)"},
                 {"balance", "oversample-to-max", "oversample-to-max|cap-to-min|target-histogram|none"},
                 {"target", "0", "total size of the uniform target histogram (target-histogram only)"},
                 {"split", "0.8,0.1,0.1", "train,val,test fractions"},
                 {"constants", "", "joint/ROM constants file (empty = built-in)", KeyKind::Path},
                 {"workers", "0", "labeling workers (0 = all cores)"},
                 {"out", "dataset.csv", "dataset file", KeyKind::Path}},
                cmd_gen});
  cs.push_back({"train", "train a surrogate on a dataset and report held-out accuracy",
                concat({{"data", "", "dataset file", KeyKind::Path},
                        {"out", "model.bin", "model file", KeyKind::Path},
                        {"loss", "loss.csv", "loss-curve file", KeyKind::Path},
                        {"confusion", "", "optional confusion-matrix file", KeyKind::Path},
                        {"hidden", "", "hidden widths (empty = 124,124,124,7 or 12)"}},
                       train_keys),
                cmd_train});
  cs.push_back({"assess", "score postures with the discrete scorer and a surrogate",
                {{"model", "", "model file", KeyKind::Path},
                 {"input", "", "dataset file or posture CSV", KeyKind::Path},
                 {"out", "scores.csv", "score file", KeyKind::Path}},
                cmd_assess});
  cs.push_back({"optimize", "solve one posture-optimization instance on a synthetic task",
                concat(concat({{"problem", "online", "online|initial|reconfigure"},
                               {"method", "grad", "grad|cem"},
                               {"backend", "surrogate", "surrogate|discrete"},
                               {"model", "", "model file (surrogate backend)", KeyKind::Path},
                               {"scheme", "rula", "scheme for the discrete backend without a model"},
                               {"task", "push", "push|lateral_reach|overhead_lift|valve_arc"},
                               {"step", "0", "trajectory index (online) or pause index (reconfigure)"},
                               {"dt", "0.05", "time step in seconds"},
                               {"constants", "", "joint/ROM constants file (empty = built-in)", KeyKind::Path},
                               {"out", "run.csv", "run report", KeyKind::Path}},
                              solver_keys()),
                       context_keys()),
                cmd_optimize});
  cs.push_back({"sim", "run the simulated-human tasks across acceptance values and solver variants",
                concat(concat({{"model", "", "model file", KeyKind::Path},
                               {"tasks", "all", "comma-separated task names or all"},
                               {"alphas", "0,0.75", "comma-separated acceptance values"},
                               {"variants", "grad-surrogate", "grad-surrogate,cem-surrogate,cem-discrete"},
                               {"kappa", "0.5", "seconds added per radian of adopted correction"},
                               {"dt", "0.05", "time step in seconds"},
                               {"constants", "", "joint/ROM constants file (empty = built-in)", KeyKind::Path},
                               {"out_dir", "sim", "report directory", KeyKind::Path}},
                              solver_keys()),
                       context_keys()),
                cmd_sim});
  cs.push_back({"xval", "k-fold cross-validation of candidate architectures",
                concat({{"data", "", "dataset file", KeyKind::Path},
                        {"folds", "5", "number of folds"},
                        {"architectures", "", "';'-separated hidden-width lists (empty = default)"},
                        {"out", "xval.csv", "fold-accuracy table", KeyKind::Path}},
                       train_keys),
                cmd_xval});
  return cs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergokit: ergonomic risk scoring, surrogates and posture optimization"};
  app.require_subcommand(1);
  const auto cmds = commands();
  std::vector<std::unique_ptr<Params>> params;
  std::vector<std::map<std::string, CLI::Option*>> opts(cmds.size());
  std::vector<std::string> config_paths(cmds.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    params.push_back(std::make_unique<Params>(cmds[i].name, cmds[i].keys));
    auto* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    sub->add_option("--config", config_paths[i], "key=value config file (first line: ergokit-config 1)");
    for (const auto& k : cmds[i].keys) {
      const std::string help = k.help + (k.def.empty() ? "" : " [" + k.def + "]");
      opts[i][k.name] = sub->add_option("--" + k.name, params[i]->flags()[k.name], help);
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error kind=config exit=2 message=\"" << e.what() << "\"\n";
    return 2;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      params[i]->resolve(config_paths[i], opts[i]);
      params[i]->print(std::cerr);
      return cmds[i].run(*params[i]);
    } catch (const Error& e) {
      std::cerr << "error kind=" << to_string(e.kind()) << " exit=" << exit_code(e.kind()) << " message=\"" << e.what() << "\"\n";
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "error kind=internal exit=1 message=\"" << e.what() << "\"\n";
      return 1;
    }
  }
  return 1;
}
