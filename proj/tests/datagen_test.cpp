#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "ergokit/datagen.hpp"

using namespace ergokit;

namespace {

std::vector<LabeledSample> labeled(std::size_t n, std::uint64_t seed, Scheme s = Scheme::Rula) {
  const auto joints = JointSet::defaults(scheme_mode(s));
  const auto q = sample_postures(n, seed, joints);
  return label_dataset(q, std::vector<TaskContext>(n), s);
}

// Picks `count` samples carrying label `value`.
std::vector<LabeledSample> take_label(const std::vector<LabeledSample>& pool, int value, std::size_t count) {
  std::vector<LabeledSample> out;
  for (const auto& s : pool)
    if (s.label.value == value && out.size() < count) out.push_back(s);
  return out;
}

bool same_multiset(std::vector<LabeledSample> a, std::vector<LabeledSample> b) {
  auto key = [](const LabeledSample& s) {
    return std::vector<double>(s.posture.angles.data(), s.posture.angles.data() + s.posture.angles.size());
  };
  auto less = [&](const LabeledSample& x, const LabeledSample& y) { return key(x) < key(y); };
  std::sort(a.begin(), a.end(), less);
  std::sort(b.begin(), b.end(), less);
  return a == b;
}

}  // namespace

TEST(SamplePostures, DeterministicAndInsideRom) {
  const auto joints = JointSet::defaults(BodyMode::Full);
  const auto a = sample_postures(2000, 11, joints);
  const auto b = sample_postures(2000, 11, joints);
  const auto c = sample_postures(2000, 12, joints);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& q : a) {
    ASSERT_EQ(q.mode, BodyMode::Full);
    for (std::size_t j = 0; j < q.size(); ++j) {
      EXPECT_GE(q[j], joints[j].lo);
      EXPECT_LE(q[j], joints[j].hi);
    }
  }
}

TEST(SamplePostures, PerJointMeanNearRomMidpoint) {
  const auto joints = JointSet::defaults(BodyMode::Full);
  const std::size_t n = 100000;
  const auto qs = sample_postures(n, 5, joints);
  for (std::size_t j = 0; j < joints.size(); ++j) {
    double mean = 0;
    for (const auto& q : qs) mean += q[j];
    mean /= static_cast<double>(n);
    const double width = joints[j].hi - joints[j].lo;
    const double sigma_mean = width / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    EXPECT_LT(std::abs(mean - 0.5 * (joints[j].lo + joints[j].hi)), 3.0 * sigma_mean) << kJointNames[j];
  }
}

TEST(SamplePostures, RejectsZeroCount) {
  EXPECT_THROW(sample_postures(0, 1, JointSet::defaults(BodyMode::Upper)), Error);
  EXPECT_THROW(sample_contexts(0, 1), Error);
}

TEST(SampleContexts, CoversEveryCategoryAndLoadRange) {
  const auto a = sample_contexts(10000, 3);
  EXPECT_EQ(a, sample_contexts(10000, 3));
  std::set<int> load_types, couplings;
  std::set<bool> flags[5];
  for (const auto& c : a) {
    EXPECT_GE(c.load_kg, 0.0);
    EXPECT_LE(c.load_kg, 15.0);
    EXPECT_GE(c.motion_frequency, 0.0);
    load_types.insert(static_cast<int>(c.load_type));
    couplings.insert(static_cast<int>(c.coupling));
    flags[0].insert(c.arm_supported);
    flags[1].insert(c.legs_supported);
    flags[2].insert(c.posture_static_over_1min);
    flags[3].insert(c.repeated_4x_per_min);
    flags[4].insert(c.rapid_large_range_change);
  }
  EXPECT_EQ(load_types.size(), 4u);
  EXPECT_EQ(couplings.size(), 4u);
  for (const auto& f : flags) EXPECT_EQ(f.size(), 2u);
}

TEST(LabelDataset, ParallelMatchesSerialAndScorer) {
  const auto joints = JointSet::defaults(BodyMode::Full);
  const auto qs = sample_postures(3000, 9, joints);
  const auto cs = sample_contexts(3000, 9);
  const auto serial = label_dataset(qs, cs, Scheme::Reba, 1);
  const auto parallel = label_dataset(qs, cs, Scheme::Reba, 4);
  EXPECT_EQ(serial, parallel);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].posture, qs[i]);
    EXPECT_EQ(serial[i].label, reba_score(qs[i], cs[i]));
  }
  EXPECT_THROW(label_dataset(qs, std::vector<TaskContext>(10), Scheme::Reba), Error);
}

TEST(LabelDataset, ExtremeRulaLabelsAreRare) {
  const Histogram h = histogram(labeled(100000, 21));
  auto count = [&](int k) { return h.contains(k) ? h.at(k) : std::size_t{0}; };
  const std::size_t common = std::min({count(3), count(4), count(5)});
  for (int rare : {1, 2, 6, 7}) EXPECT_LT(count(rare), common) << "label " << rare;
}

TEST(Balance, CapToMinEqualizesClasses) {
  const auto pool = labeled(4000, 2);
  auto input = take_label(pool, 3, 10);
  const auto b = take_label(pool, 5, 4);
  input.insert(input.end(), b.begin(), b.end());
  ASSERT_EQ(input.size(), 14u);
  BalanceOptions opt;
  opt.policy = BalancePolicy::CapToMin;
  const auto out = balance(input, opt, 1, JointSet::defaults(BodyMode::Upper));
  EXPECT_EQ(histogram(out), (Histogram{{3, 4}, {5, 4}}));
}

TEST(Balance, CapToMinOfBalancedSetIsPermutation) {
  const auto pool = labeled(4000, 4);
  auto input = take_label(pool, 3, 6);
  const auto b = take_label(pool, 4, 6);
  input.insert(input.end(), b.begin(), b.end());
  BalanceOptions opt;
  opt.policy = BalancePolicy::CapToMin;
  const auto out = balance(input, opt, 8, JointSet::defaults(BodyMode::Upper));
  EXPECT_TRUE(same_multiset(input, out));
}

TEST(Balance, OversampleKeepsLabelsTrueToScorer) {
  const auto joints = JointSet::defaults(BodyMode::Upper);
  const auto input = labeled(5000, 6);
  const auto out = balance(input, {}, 6, joints);
  const Histogram h = histogram(out);
  const std::size_t mx = std::max_element(h.begin(), h.end(), [](auto& a, auto& b) { return a.second < b.second; })->second;
  for (const auto& [label, n] : h) EXPECT_EQ(n, mx) << label;
  for (const auto& s : out) {
    EXPECT_EQ(rula_score(s.posture, s.ctx), s.label);
    for (std::size_t j = 0; j < s.posture.size(); ++j) {
      EXPECT_GE(s.posture[j], joints[j].lo);
      EXPECT_LE(s.posture[j], joints[j].hi);
    }
  }
  EXPECT_EQ(out, balance(input, {}, 6, joints));
}

TEST(Balance, TargetHistogramIsExactAndAbsentClassIsUnsatisfiable) {
  const auto joints = JointSet::defaults(BodyMode::Upper);
  const auto input = labeled(5000, 7);
  BalanceOptions opt;
  opt.policy = BalancePolicy::TargetHistogram;
  opt.target = {{3, 500}, {4, 20}, {7, 300}};
  EXPECT_EQ(histogram(balance(input, opt, 1, joints)), opt.target);

  opt.target = {{1, 5}, {3, 5}};
  ASSERT_FALSE(histogram(input).contains(1));
  try {
    balance(input, opt, 1, joints);
    FAIL() << "expected an unsatisfiable-policy error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unsatisfiable);
  }
}

TEST(Split, StratifiedDisjointAndExhaustive) {
  const auto input = labeled(20000, 13);
  const auto sp = split(input, {0.8, 0.1, 0.1}, 2);
  std::vector<LabeledSample> all = sp.train;
  all.insert(all.end(), sp.val.begin(), sp.val.end());
  all.insert(all.end(), sp.test.begin(), sp.test.end());
  EXPECT_TRUE(same_multiset(all, input));

  const Histogram hin = histogram(input), htr = histogram(sp.train), hva = histogram(sp.val), hte = histogram(sp.test);
  for (const auto& [label, n] : hin) {
    const double N = static_cast<double>(n);
    EXPECT_NEAR(static_cast<double>(htr.contains(label) ? htr.at(label) : 0), 0.8 * N, 1.0) << label;
    EXPECT_NEAR(static_cast<double>(hva.contains(label) ? hva.at(label) : 0), 0.1 * N, 1.0) << label;
  }
  // Per-label proportions in each part stay within one percentage point of the input.
  for (const auto* part : {&sp.train, &sp.val, &sp.test}) {
    const Histogram hp = histogram(*part);
    for (const auto& [label, n] : hin) {
      const double want = static_cast<double>(n) / static_cast<double>(input.size());
      const double got = static_cast<double>(hp.contains(label) ? hp.at(label) : 0) / static_cast<double>(part->size());
      EXPECT_NEAR(got, want, 0.01) << label;
    }
  }
  const auto again = split(input, {0.8, 0.1, 0.1}, 2);
  EXPECT_EQ(again.train, sp.train);
  EXPECT_EQ(again.test, sp.test);
}

TEST(Split, ThousandSamplesGiveEightyTenTen) {
  const auto sp = split(labeled(1000, 17), {0.8, 0.1, 0.1}, 1);
  const std::size_t strata = histogram(labeled(1000, 17)).size();
  EXPECT_NEAR(static_cast<double>(sp.train.size()), 800.0, static_cast<double>(strata));
  EXPECT_NEAR(static_cast<double>(sp.val.size()), 100.0, static_cast<double>(strata));
  EXPECT_NEAR(static_cast<double>(sp.test.size()), 100.0, static_cast<double>(strata));
  EXPECT_THROW(split(labeled(10, 1), {0.5, 0.5, 0.5}, 1), Error);
}

namespace {

Dataset small_dataset(Scheme s) {
  Dataset d;
  d.meta.scheme = s;
  d.meta.seed = 99;
  const auto mode = scheme_mode(s);
  const auto qs = sample_postures(300, 99, JointSet::defaults(mode));
  d.samples = label_dataset(qs, sample_contexts(300, 99), s);
  return d;
}

std::string serialize(const Dataset& d) {
  std::ostringstream os;
  write_dataset(os, d);
  return os.str();
}

ErrorKind read_error(const std::string& text) {
  std::istringstream is(text);
  try {
    read_dataset(is);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "read_dataset accepted a damaged file";
  return ErrorKind::Input;
}

}  // namespace

TEST(DatasetFile, RoundTripIsExact) {
  for (Scheme s : {Scheme::Rula, Scheme::Reba, Scheme::RebaTableC}) {
    const Dataset d = small_dataset(s);
    const std::string text = serialize(d);
    std::istringstream is(text);
    const Dataset back = read_dataset(is, true);
    EXPECT_EQ(back, d);
    EXPECT_EQ(back.meta.scheme, s);
    EXPECT_EQ(back.meta.seed, 99u);
    EXPECT_EQ(serialize(back), text);
  }
}

TEST(DatasetFile, DamagedFilesAreRejected) {
  const std::string text = serialize(small_dataset(Scheme::Rula));
  EXPECT_EQ(read_error("ergokit-datasat 1\n" + text.substr(text.find('\n') + 1)), ErrorKind::Format);
  EXPECT_EQ(read_error("ergokit-dataset 2\n" + text.substr(text.find('\n') + 1)), ErrorKind::Version);
  EXPECT_EQ(read_error(text.substr(0, text.size() - 40)), ErrorKind::Format);

  std::string wrong_hist = text;
  const auto pos = wrong_hist.find("histogram=") + 10;
  wrong_hist.insert(pos, "1:3,");
  EXPECT_EQ(read_error(wrong_hist), ErrorKind::Format);

  std::string wrong_constants = text;
  wrong_constants.replace(wrong_constants.find("constants_version=1"), 19, "constants_version=7");
  EXPECT_EQ(read_error(wrong_constants), ErrorKind::Version);
}

TEST(DatasetFile, RelabelingDetectsTamperedLabel) {
  const Dataset d = small_dataset(Scheme::Rula);
  std::string text = serialize(d);
  std::istringstream ok(text);
  EXPECT_NO_THROW(read_dataset(ok, true));

  // Rewrite the label of the first body row to a different value.
  const auto body = text.find('\n', text.find("\n---\n") + 5) + 1;
  const auto eol = text.find('\n', body);
  const auto comma = text.rfind(',', eol);
  const int old = std::stoi(text.substr(comma + 1, eol - comma - 1));
  const int fresh = old == 7 ? 6 : old + 1;
  text.replace(comma + 1, eol - comma - 1, std::to_string(fresh));
  // Keep the histogram consistent so only the relabel check can object.
  Histogram h = histogram(d.samples);
  --h[old];
  if (h[old] == 0) h.erase(old);
  ++h[fresh];
  const auto hp = text.find("histogram=") + 10;
  text.replace(hp, text.find('\n', hp) - hp, histogram_string(h));
  std::istringstream bad(text);
  try {
    read_dataset(bad, true);
    FAIL() << "tampered label accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
  }
}
