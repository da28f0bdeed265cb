#pragma once

// Posture/context sampling, labeling, class balancing, stratified splitting
// and dataset persistence.

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>
#include <vector>

#include "ergokit/artifact.hpp"
#include "ergokit/kinematics.hpp"
#include "ergokit/rng.hpp"
#include "ergokit/rules.hpp"

namespace ergokit {

inline constexpr int kDatasetVersion = 1;
inline constexpr double kMaxLoadKg = 15.0;
inline constexpr double kMaxMotionFrequency = 10.0;

struct LabeledSample {
  Posture posture;
  TaskContext ctx;
  DiscreteScore label;

  bool operator==(const LabeledSample&) const = default;
};

using Histogram = std::map<int, std::size_t>;

inline Histogram histogram(const std::vector<LabeledSample>& samples) {
  Histogram h;
  for (const auto& s : samples) ++h[s.label.value];
  return h;
}

// Deterministic Fisher-Yates shuffle.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

inline std::vector<Posture> sample_postures(std::size_t n, std::uint64_t seed, const JointSet& joints) {
  if (n == 0) fail(ErrorKind::Config, "sample count must be >= 1");
  Rng rng(derive_seed(seed, "postures"));
  std::vector<Posture> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Posture q = Posture::zero(joints.mode());
    for (std::size_t j = 0; j < joints.size(); ++j)
      q[j] = std::clamp(quantize9(rng.uniform(joints[j].lo, joints[j].hi)), joints[j].lo, joints[j].hi);
    out.push_back(std::move(q));
  }
  return out;
}

inline std::vector<TaskContext> sample_contexts(std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::Config, "sample count must be >= 1");
  Rng rng(derive_seed(seed, "contexts"));
  std::vector<TaskContext> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TaskContext c;
    c.load_kg = quantize9(rng.uniform(0.0, kMaxLoadKg));
    c.load_type = static_cast<LoadType>(rng.below(4));
    c.motion_frequency = quantize9(rng.uniform(0.0, kMaxMotionFrequency));
    c.coupling = static_cast<Coupling>(rng.below(4));
    c.arm_supported = rng.coin();
    c.legs_supported = rng.coin();
    c.posture_static_over_1min = rng.coin();
    c.repeated_4x_per_min = rng.coin();
    c.rapid_large_range_change = rng.coin();
    out.push_back(c);
  }
  return out;
}

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Runs fn(i) for i in [0, n) across workers; each index is written by exactly one worker.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline std::vector<LabeledSample> label_dataset(const std::vector<Posture>& postures,
                                                const std::vector<TaskContext>& ctxs, Scheme scheme,
                                                std::size_t workers = 1) {
  if (postures.size() != ctxs.size()) fail(ErrorKind::Input, "posture and context counts differ");
  std::vector<LabeledSample> out(postures.size());
  parallel_for(postures.size(), workers, [&](std::size_t i) {
    out[i] = LabeledSample{postures[i], ctxs[i], score(scheme, postures[i], ctxs[i])};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Balancing

enum class BalancePolicy { OversampleToMax, CapToMin, TargetHistogram };

inline BalancePolicy parse_balance_policy(std::string_view s) {
  if (s == "oversample-to-max") return BalancePolicy::OversampleToMax;
  if (s == "cap-to-min") return BalancePolicy::CapToMin;
  if (s == "target-histogram") return BalancePolicy::TargetHistogram;
  fail(ErrorKind::Config, "unknown balance policy '" + std::string(s) + "'");
}

inline std::string_view to_string(BalancePolicy p) {
  switch (p) {
    case BalancePolicy::OversampleToMax: return "oversample-to-max";
    case BalancePolicy::CapToMin: return "cap-to-min";
    case BalancePolicy::TargetHistogram: return "target-histogram";
  }
  return "?";
}

struct BalanceOptions {
  BalancePolicy policy = BalancePolicy::OversampleToMax;
  Histogram target;                      // TargetHistogram only
  double jitter = deg2rad(0.5);          // half-width of the uniform per-joint jitter
  int max_jitter_attempts = 64;          // before falling back to an exact duplicate
};

// Uniform target histogram with `total` samples spread over the given classes.
inline Histogram uniform_target(const std::vector<int>& classes, std::size_t total) {
  Histogram t;
  if (classes.empty()) return t;
  const std::size_t k = classes.size();
  for (std::size_t i = 0; i < k; ++i) t[classes[i]] = total / k + (i < total % k ? 1 : 0);
  return t;
}

inline std::vector<LabeledSample> balance(const std::vector<LabeledSample>& samples, const BalanceOptions& opt,
                                          std::uint64_t seed, const JointSet& joints) {
  if (samples.empty()) fail(ErrorKind::Input, "cannot balance an empty sample set");
  Rng rng(derive_seed(seed, "balance"));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label.value].push_back(i);

  Histogram target;
  switch (opt.policy) {
    case BalancePolicy::OversampleToMax: {
      std::size_t mx = 0;
      for (const auto& [c, idx] : by_class) mx = std::max(mx, idx.size());
      for (const auto& [c, idx] : by_class) target[c] = mx;
      break;
    }
    case BalancePolicy::CapToMin: {
      std::size_t mn = samples.size();
      for (const auto& [c, idx] : by_class) mn = std::min(mn, idx.size());
      for (const auto& [c, idx] : by_class) target[c] = mn;
      break;
    }
    case BalancePolicy::TargetHistogram:
      target = opt.target;
      for (const auto& [c, n] : target)
        if (n > 0 && !by_class.contains(c))
          fail(ErrorKind::Unsatisfiable, "balance policy demands label " + std::to_string(c) +
                                              " which is absent from the input");
      break;
  }

  std::vector<LabeledSample> out;
  for (const auto& [c, want] : target) {
    auto it = by_class.find(c);
    if (it == by_class.end()) continue;
    std::vector<std::size_t> idx = it->second;
    if (want <= idx.size()) {
      shuffle_in_place(idx, rng);
      idx.resize(want);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) out.push_back(samples[i]);
      continue;
    }
    for (auto i : idx) out.push_back(samples[i]);
    const Scheme scheme = samples[idx.front()].label.scheme;
    for (std::size_t k = idx.size(); k < want; ++k) {
      const LabeledSample& src = samples[idx[rng.below(idx.size())]];
      LabeledSample dup = src;
      bool ok = false;
      for (int attempt = 0; attempt < opt.max_jitter_attempts && !ok; ++attempt) {
        Posture q = src.posture;
        for (std::size_t j = 0; j < q.size(); ++j)
          q[j] = std::clamp(quantize9(q[j] + rng.uniform(-opt.jitter, opt.jitter)), joints[j].lo, joints[j].hi);
        if (score(scheme, q, src.ctx) == src.label) {
          dup.posture = std::move(q);
          ok = true;
        }
      }
      out.push_back(std::move(dup));
    }
  }
  shuffle_in_place(out, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Stratified split

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      fail(ErrorKind::Config, "split fractions must be non-negative and sum to 1");
  }
};

struct DatasetSplit {
  std::vector<LabeledSample> train, val, test;
};

inline DatasetSplit split(const std::vector<LabeledSample>& samples, const SplitFractions& f, std::uint64_t seed) {
  f.validate();
  Rng rng(derive_seed(seed, "split"));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label.value].push_back(i);
  std::vector<int> assign(samples.size(), 2);
  for (auto& [c, idx] : by_class) {
    shuffle_in_place(idx, rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(f.train * n));
    const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(f.val * n)));
    for (std::size_t k = 0; k < idx.size(); ++k) assign[idx[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
  }
  DatasetSplit out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (assign[i] == 0 ? out.train : assign[i] == 1 ? out.val : out.test).push_back(samples[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: header block + CSV body. Angles in radians, 9 significant digits.

struct DatasetMeta {
  Scheme scheme = Scheme::Rula;
  std::size_t count = 0;
  Histogram histogram;
  std::uint64_t seed = 0;
  int constants_version = kConstantsVersion;
  SplitFractions split;
  std::string command = "gen";
  std::string config;  // resolved config text, hashed into the header
  std::vector<std::pair<std::string, std::string>> extra;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<LabeledSample> samples;

  bool operator==(const Dataset& o) const {
    return meta.scheme == o.meta.scheme && meta.seed == o.meta.seed && samples == o.samples;
  }
};

inline std::string histogram_string(const Histogram& h) {
  std::string s;
  for (const auto& [k, v] : h) {
    if (!s.empty()) s += ',';
    s += std::to_string(k) + ':' + std::to_string(v);
  }
  return s;
}

inline Histogram parse_histogram(std::string_view s) {
  Histogram h;
  if (s.empty()) return h;
  for (auto item : split_view(s, ',')) {
    const auto parts = split_view(item, ':');
    if (parts.size() != 2) fail(ErrorKind::Format, "malformed histogram entry");
    h[static_cast<int>(parse_int(parts[0]))] = static_cast<std::size_t>(parse_int(parts[1]));
  }
  return h;
}

inline std::string csv_columns(BodyMode mode) {
  std::string s;
  for (std::size_t i = 0; i < joint_count(mode); ++i) s += "q" + std::to_string(i + 1) + ",";
  return s +
         "load_kg,load_type,motion_frequency,coupling,arm_supported,legs_supported,static,repeated,rapid";
}

inline void write_context_csv(std::ostream& out, const TaskContext& c) {
  out << format_double(c.load_kg, 9) << ',' << kLoadTypeNames[static_cast<std::size_t>(c.load_type)] << ','
      << format_double(c.motion_frequency, 9) << ',' << kCouplingNames[static_cast<std::size_t>(c.coupling)] << ','
      << int(c.arm_supported) << ',' << int(c.legs_supported) << ',' << int(c.posture_static_over_1min) << ','
      << int(c.repeated_4x_per_min) << ',' << int(c.rapid_large_range_change);
}

template <std::size_t N>
inline std::size_t parse_enum(std::string_view s, const std::array<std::string_view, N>& names, std::string_view what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return i;
  fail(ErrorKind::Format, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

inline bool parse_flag(std::string_view s) {
  if (s == "0") return false;
  if (s == "1") return true;
  fail(ErrorKind::Format, "expected 0/1, found '" + std::string(s) + "'");
}

// Parses the 9 context columns starting at fields[offset].
inline TaskContext parse_context_fields(const std::vector<std::string_view>& f, std::size_t o) {
  TaskContext c;
  c.load_kg = parse_double(f[o], "load_kg");
  c.load_type = static_cast<LoadType>(parse_enum(f[o + 1], kLoadTypeNames, "load type"));
  c.motion_frequency = parse_double(f[o + 2], "motion_frequency");
  c.coupling = static_cast<Coupling>(parse_enum(f[o + 3], kCouplingNames, "coupling"));
  c.arm_supported = parse_flag(f[o + 4]);
  c.legs_supported = parse_flag(f[o + 5]);
  c.posture_static_over_1min = parse_flag(f[o + 6]);
  c.repeated_4x_per_min = parse_flag(f[o + 7]);
  c.rapid_large_range_change = parse_flag(f[o + 8]);
  c.validate();
  return c;
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
  Header h("ergokit-dataset", kDatasetVersion);
  stamp_provenance(h, d.meta.command, d.meta.config, d.meta.seed);
  h.set("scheme", std::string(to_string(d.meta.scheme)));
  h.set("mode", std::string(to_string(scheme_mode(d.meta.scheme))));
  h.set("count", std::to_string(d.samples.size()));
  h.set("histogram", histogram_string(histogram(d.samples)));
  h.set("constants_version", std::to_string(d.meta.constants_version));
  h.set("split", format_double(d.meta.split.train) + "," + format_double(d.meta.split.val) + "," +
                     format_double(d.meta.split.test));
  for (const auto& [k, v] : d.meta.extra) h.set(k, v);
  h.write(out);
  const BodyMode mode = scheme_mode(d.meta.scheme);
  out << csv_columns(mode) << ",label\n";
  for (const auto& s : d.samples) {
    if (s.posture.mode != mode) fail(ErrorKind::Mode, "sample posture mode does not match dataset scheme");
    for (std::size_t j = 0; j < s.posture.size(); ++j) out << format_double(s.posture[j], 9) << ',';
    write_context_csv(out, s.ctx);
    out << ',' << s.label.value << '\n';
  }
}

inline void write_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write dataset " + path);
  write_dataset(out, d);
}

// Reads a dataset; with verify_labels every sample is re-scored against its label.
inline Dataset read_dataset(std::istream& in, bool verify_labels = false) {
  const Header h = Header::read(in, "ergokit-dataset", kDatasetVersion);
  Dataset d;
  d.meta.scheme = parse_scheme(h.get("scheme"));
  d.meta.seed = static_cast<std::uint64_t>(std::stoull(h.get("seed")));
  d.meta.command = h.get("command");
  d.meta.constants_version = static_cast<int>(parse_int(h.get("constants_version")));
  if (d.meta.constants_version != kConstantsVersion)
    fail(ErrorKind::Version, "dataset built with constants version " + std::to_string(d.meta.constants_version));
  {
    const auto parts = split_view(h.get("split"), ',');
    if (parts.size() != 3) fail(ErrorKind::Format, "malformed split fractions");
    d.meta.split = {parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2])};
  }
  const auto count = static_cast<std::size_t>(parse_int(h.get("count")));
  const Histogram declared = parse_histogram(h.get("histogram"));
  for (const auto& [k, v] : h.entries())
    if (k != "scheme" && k != "seed" && k != "command" && k != "constants_version" && k != "split" && k != "count" &&
        k != "histogram" && k != "config_hash" && k != "mode")
      d.meta.extra.emplace_back(k, v);

  const BodyMode mode = scheme_mode(d.meta.scheme);
  const std::size_t n = joint_count(mode);
  std::string line;
  if (!std::getline(in, line) || line != csv_columns(mode) + ",label") fail(ErrorKind::Format, "dataset: bad column header");
  d.samples.reserve(count);
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_view(line, ',');
    if (f.size() != n + 10) fail(ErrorKind::Format, "dataset row " + std::to_string(lineno) + ": wrong field count");
    Posture q = Posture::zero(mode);
    for (std::size_t j = 0; j < n; ++j) q[j] = parse_double(f[j], "angle");
    LabeledSample s{std::move(q), parse_context_fields(f, n),
                    DiscreteScore(static_cast<int>(parse_int(f[n + 9], "label")), d.meta.scheme)};
    if (verify_labels && score(d.meta.scheme, s.posture, s.ctx) != s.label)
      fail(ErrorKind::Format, "dataset row " + std::to_string(lineno) + ": stored label does not match the scorer");
    d.samples.push_back(std::move(s));
  }
  if (d.samples.size() != count)
    fail(ErrorKind::Format, "dataset declares " + std::to_string(count) + " samples, found " + std::to_string(d.samples.size()));
  d.meta.count = count;
  d.meta.histogram = histogram(d.samples);
  if (d.meta.histogram != declared) fail(ErrorKind::Format, "dataset histogram does not match its header");
  return d;
}

inline Dataset read_dataset(const std::string& path, bool verify_labels = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open dataset " + path);
  return read_dataset(in, verify_labels);
}

}  // namespace ergokit
