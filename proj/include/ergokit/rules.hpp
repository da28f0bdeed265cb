#pragma once

// Rule-based RULA and REBA worksheet scoring.
//
// Every threshold band is closed below and open above, [lo, hi), applied to
// the signed angle in degrees unless the criterion is symmetric (wrist
// flexion/extension, deviation, twist/side-bend, shoulder rotation), in which
// case it applies to the magnitude. A posture counts as "upright"/"neutral"
// within +-5 degrees.
//
// Joint to worksheet mapping (no forearm pronation or neck twist joints exist
// in the chain, so wrist twist is always "mid-range" and the neck has no
// twist/side-bend adjustment):
//   shoulder abduction >= 20 deg : arm abducted        (RULA/REBA upper arm +1)
//   shoulder abduction >= 90 deg : shoulder raised     (RULA/REBA upper arm +1)
//   |shoulder rotation| >= 45 deg: RULA lower arm working across midline / out to side;
//                                  REBA upper arm rotated
//   |wrist deviation|  >= 10 deg : wrist bent from midline / deviated

#include <algorithm>
#include <array>
#include <string>

#include "ergokit/core.hpp"

namespace ergokit {

enum class LoadType { Static, Intermittent, Repeated, Shock };
enum class Coupling { Good, Fair, Poor, Unacceptable };

inline constexpr std::array<std::string_view, 4> kLoadTypeNames = {"static", "intermittent", "repeated", "shock"};
inline constexpr std::array<std::string_view, 4> kCouplingNames = {"good", "fair", "poor", "unacceptable"};

struct TaskContext {
  double load_kg = 0.0;
  LoadType load_type = LoadType::Intermittent;
  double motion_frequency = 0.0;  // actions per minute
  Coupling coupling = Coupling::Good;
  bool arm_supported = false;
  bool legs_supported = true;
  bool posture_static_over_1min = false;
  bool repeated_4x_per_min = false;
  bool rapid_large_range_change = false;

  void validate() const {
    if (!std::isfinite(load_kg) || load_kg < 0.0) fail(ErrorKind::Input, "load_kg must be finite and >= 0");
    if (!std::isfinite(motion_frequency) || motion_frequency < 0.0)
      fail(ErrorKind::Input, "motion_frequency must be finite and >= 0");
    if (static_cast<int>(load_type) < 0 || static_cast<int>(load_type) > 3) fail(ErrorKind::Input, "invalid load type");
    if (static_cast<int>(coupling) < 0 || static_cast<int>(coupling) > 3) fail(ErrorKind::Input, "invalid coupling");
  }

  bool operator==(const TaskContext&) const = default;
};

struct DiscreteScore {
  int value = 1;
  Scheme scheme = Scheme::Rula;

  DiscreteScore() = default;
  DiscreteScore(int v, Scheme s) : value(v), scheme(s) {
    const auto r = score_range(s);
    if (v < r.lo || v > r.hi)
      fail(ErrorKind::Input, "score " + std::to_string(v) + " outside " + std::string(to_string(s)) + " range");
  }
  bool operator==(const DiscreteScore&) const = default;
};

namespace rules_detail {

// RULA Table A: [upper arm 1..6][lower arm 1..3][wrist 1..4 x twist 1..2]
inline constexpr int kRulaTableA[6][3][8] = {
    {{1, 2, 2, 2, 2, 3, 3, 3}, {2, 2, 2, 2, 3, 3, 3, 3}, {2, 3, 3, 3, 3, 3, 4, 4}},
    {{2, 3, 3, 3, 3, 4, 4, 4}, {3, 3, 3, 3, 3, 4, 4, 4}, {3, 4, 4, 4, 4, 4, 5, 5}},
    {{3, 3, 4, 4, 4, 4, 5, 5}, {3, 4, 4, 4, 4, 4, 5, 5}, {4, 4, 4, 4, 4, 5, 5, 5}},
    {{4, 4, 4, 4, 4, 5, 5, 5}, {4, 4, 4, 4, 4, 5, 5, 5}, {4, 4, 4, 5, 5, 5, 6, 6}},
    {{5, 5, 5, 5, 5, 6, 6, 7}, {5, 6, 6, 6, 6, 7, 7, 7}, {6, 6, 6, 7, 7, 7, 7, 8}},
    {{7, 7, 7, 7, 7, 8, 8, 9}, {8, 8, 8, 8, 8, 9, 9, 9}, {9, 9, 9, 9, 9, 9, 9, 9}},
};

// RULA Table B: [neck 1..6][trunk 1..6 x legs 1..2]
inline constexpr int kRulaTableB[6][12] = {
    {1, 3, 2, 3, 3, 4, 5, 5, 6, 6, 7, 7}, {2, 3, 2, 3, 4, 5, 5, 5, 6, 7, 7, 7},
    {3, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 7}, {5, 5, 5, 6, 6, 7, 7, 7, 7, 7, 8, 8},
    {7, 7, 7, 7, 7, 8, 8, 8, 8, 8, 8, 8}, {8, 8, 8, 8, 8, 8, 8, 9, 9, 9, 9, 9},
};

// RULA Table C: [wrist/arm score 1..8+][neck/trunk/leg score 1..7+]
inline constexpr int kRulaTableC[8][7] = {
    {1, 2, 3, 3, 4, 5, 5}, {2, 2, 3, 4, 4, 5, 5}, {3, 3, 3, 4, 4, 5, 6}, {3, 3, 3, 4, 5, 6, 6},
    {4, 4, 4, 5, 6, 7, 7}, {4, 4, 5, 6, 6, 7, 7}, {5, 5, 6, 6, 7, 7, 7}, {5, 5, 6, 7, 7, 7, 7},
};

// REBA Table A: [trunk 1..5][neck 1..3 x legs 1..4]
inline constexpr int kRebaTableA[5][12] = {
    {1, 2, 3, 4, 1, 2, 3, 4, 3, 3, 5, 6}, {2, 3, 4, 5, 3, 4, 5, 6, 4, 5, 6, 7},
    {2, 4, 5, 6, 4, 5, 6, 7, 5, 6, 7, 8}, {3, 5, 6, 7, 5, 6, 7, 8, 6, 7, 8, 9},
    {4, 6, 7, 8, 6, 7, 8, 9, 7, 8, 9, 9},
};

// REBA Table B: [upper arm 1..6][lower arm 1..2 x wrist 1..3]
inline constexpr int kRebaTableB[6][6] = {
    {1, 2, 2, 1, 2, 3}, {1, 2, 3, 2, 3, 4}, {3, 4, 5, 4, 5, 5},
    {4, 5, 5, 5, 6, 7}, {6, 7, 8, 7, 8, 8}, {7, 8, 8, 8, 9, 9},
};

// REBA Table C: [score A 1..12][score B 1..12]
inline constexpr int kRebaTableC[12][12] = {
    {1, 1, 1, 2, 3, 3, 4, 5, 6, 7, 7, 7},
    {1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 7, 8},
    {2, 3, 3, 3, 4, 5, 6, 7, 7, 8, 8, 8},
    {3, 4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9},
    {4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9, 9},
    {6, 6, 6, 7, 8, 8, 9, 9, 10, 10, 10, 10},
    {7, 7, 7, 8, 9, 9, 9, 10, 10, 11, 11, 11},
    {8, 8, 8, 9, 10, 10, 10, 10, 10, 11, 11, 11},
    {9, 9, 9, 10, 10, 10, 11, 11, 11, 12, 12, 12},
    {10, 10, 10, 11, 11, 11, 11, 12, 12, 12, 12, 12},
    {11, 11, 11, 11, 12, 12, 12, 12, 12, 12, 12, 12},
    {12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12},
};

// Worksheet thresholds, degrees.
inline constexpr double kNeutral = 5.0;
inline constexpr double kAbducted = 20.0;
inline constexpr double kRaised = 90.0;
inline constexpr double kRotated = 45.0;
inline constexpr double kDeviated = 10.0;
inline constexpr double kTrunkTwisted = 10.0;
inline constexpr double kTrunkSideBent = 10.0;

// Index of the [lo, hi) band containing x; edges ascending.
template <std::size_t N>
inline int band(double x, const std::array<double, N>& edges) {
  int b = 0;
  for (double e : edges) {
    if (x >= e) ++b;
    else break;
  }
  return b;
}

struct Degrees {
  double trunk_flex, trunk_side, trunk_twist, neck, sh_flex, sh_abd, sh_rot, elbow, wrist_flex, wrist_dev, knee;
};

// Snapped to 1e-9 deg so that a threshold given in degrees survives the
// radian round trip (deg2rad(20) converts back to 19.999999999999996).
inline double snapped_degrees(double rad) { return std::nearbyint(rad2deg(rad) * 1e9) * 1e-9; }

inline Degrees to_degrees(const Posture& q) {
  Degrees d{};
  d.trunk_flex = snapped_degrees(q[0]);
  d.trunk_side = snapped_degrees(q[1]);
  d.trunk_twist = snapped_degrees(q[2]);
  d.neck = snapped_degrees(q[3]);
  d.sh_flex = snapped_degrees(q[4]);
  d.sh_abd = snapped_degrees(q[5]);
  d.sh_rot = snapped_degrees(q[6]);
  d.elbow = snapped_degrees(q[7]);
  d.wrist_flex = snapped_degrees(q[8]);
  d.wrist_dev = snapped_degrees(q[9]);
  d.knee = q.size() > 10 ? snapped_degrees(q[10]) : 0.0;
  return d;
}

inline void check(const Posture& q, const TaskContext& ctx, BodyMode expected, std::string_view who) {
  if (q.mode != expected)
    fail(ErrorKind::Mode, std::string(who) + " requires a " + std::string(to_string(expected)) + "-body posture");
  q.validate();
  ctx.validate();
}

// Upper-arm base score shared by both worksheets.
inline int upper_arm_base(double flex) {
  static constexpr std::array<double, 4> edges = {-20.0, 20.0, 45.0, 90.0};
  static constexpr std::array<int, 5> score = {2, 1, 2, 3, 4};
  return score[static_cast<std::size_t>(band(flex, edges))];
}

inline int lower_arm_base(double elbow) { return (elbow >= 60.0 && elbow < 100.0) ? 1 : 2; }

}  // namespace rules_detail

struct RulaBreakdown {
  int upper_arm = 0;
  int lower_arm = 0;
  int wrist = 0;
  int wrist_twist = 0;
  int table_a = 0;
  int muscle_use = 0;
  int force_load = 0;
  int wrist_arm = 0;  // Table A + muscle + force
  int neck = 0;
  int trunk = 0;
  int legs = 0;
  int table_b = 0;
  int neck_trunk_leg = 0;  // Table B + muscle + force
  int table_c = 0;
  int final_score = 0;
};

// RULA muscle-use adder: posture held static or action repeated >= 4/min.
inline int rula_muscle_use(const TaskContext& ctx) {
  return (ctx.posture_static_over_1min || ctx.motion_frequency >= 4.0) ? 1 : 0;
}

// RULA force/load adder.
inline int rula_force_load(const TaskContext& ctx) {
  if (ctx.load_type == LoadType::Shock) return 3;
  if (ctx.load_kg < 2.0) return 0;
  if (ctx.load_kg < 10.0) return ctx.load_type == LoadType::Intermittent ? 1 : 2;
  return 3;
}

inline RulaBreakdown rula_breakdown(const Posture& q, const TaskContext& ctx) {
  using namespace rules_detail;
  check(q, ctx, BodyMode::Upper, "RULA");
  const Degrees d = to_degrees(q);
  RulaBreakdown b;

  int ua = upper_arm_base(d.sh_flex);
  if (d.sh_abd >= kAbducted) ++ua;
  if (d.sh_abd >= kRaised) ++ua;
  if (ctx.arm_supported) --ua;
  b.upper_arm = std::clamp(ua, 1, 6);

  b.lower_arm = lower_arm_base(d.elbow) + (std::abs(d.sh_rot) >= kRotated ? 1 : 0);

  static constexpr std::array<double, 2> wrist_edges = {kNeutral, 15.0};
  b.wrist = 1 + band(std::abs(d.wrist_flex), wrist_edges) + (std::abs(d.wrist_dev) >= kDeviated ? 1 : 0);
  b.wrist_twist = 1;

  b.table_a = kRulaTableA[b.upper_arm - 1][b.lower_arm - 1][(b.wrist - 1) * 2 + (b.wrist_twist - 1)];
  b.muscle_use = rula_muscle_use(ctx);
  b.force_load = rula_force_load(ctx);
  b.wrist_arm = b.table_a + b.muscle_use + b.force_load;

  static constexpr std::array<double, 3> neck_edges = {0.0, 10.0, 20.0};
  static constexpr std::array<int, 4> neck_score = {4, 1, 2, 3};
  b.neck = neck_score[static_cast<std::size_t>(band(d.neck, neck_edges))];

  static constexpr std::array<double, 4> trunk_edges = {-kNeutral, kNeutral, 20.0, 60.0};
  static constexpr std::array<int, 5> trunk_score = {2, 1, 2, 3, 4};
  int tr = trunk_score[static_cast<std::size_t>(band(d.trunk_flex, trunk_edges))];
  if (std::abs(d.trunk_twist) >= kTrunkTwisted) ++tr;
  if (std::abs(d.trunk_side) >= kTrunkSideBent) ++tr;
  b.trunk = std::min(tr, 6);

  b.legs = ctx.legs_supported ? 1 : 2;
  b.table_b = kRulaTableB[b.neck - 1][(b.trunk - 1) * 2 + (b.legs - 1)];
  b.neck_trunk_leg = b.table_b + b.muscle_use + b.force_load;

  b.table_c = kRulaTableC[std::min(b.wrist_arm, 8) - 1][std::min(b.neck_trunk_leg, 7) - 1];
  b.final_score = b.table_c;
  return b;
}

inline DiscreteScore rula_score(const Posture& q, const TaskContext& ctx) {
  return {rula_breakdown(q, ctx).final_score, Scheme::Rula};
}

struct RebaBreakdown {
  int trunk = 0;
  int neck = 0;
  int legs = 0;
  int table_a = 0;
  int load = 0;
  int score_a = 0;
  int upper_arm = 0;
  int lower_arm = 0;
  int wrist = 0;
  int table_b = 0;
  int coupling = 0;
  int score_b = 0;
  int table_c = 0;
  int activity = 0;
  int final_score = 0;
};

inline int reba_load(const TaskContext& ctx) {
  int s = ctx.load_kg < 5.0 ? 0 : (ctx.load_kg < 10.0 ? 1 : 2);
  if (ctx.load_type == LoadType::Shock) ++s;
  return s;
}

inline int reba_activity(const TaskContext& ctx) {
  return int(ctx.posture_static_over_1min) + int(ctx.repeated_4x_per_min) + int(ctx.rapid_large_range_change);
}

inline RebaBreakdown reba_breakdown(const Posture& q, const TaskContext& ctx) {
  using namespace rules_detail;
  check(q, ctx, BodyMode::Full, "REBA");
  const Degrees d = to_degrees(q);
  RebaBreakdown b;

  static constexpr std::array<double, 5> trunk_edges = {-20.0, -kNeutral, kNeutral, 20.0, 60.0};
  static constexpr std::array<int, 6> trunk_score = {3, 2, 1, 2, 3, 4};
  b.trunk = trunk_score[static_cast<std::size_t>(band(d.trunk_flex, trunk_edges))] +
            ((std::abs(d.trunk_twist) >= kTrunkTwisted || std::abs(d.trunk_side) >= kTrunkSideBent) ? 1 : 0);

  b.neck = (d.neck >= 0.0 && d.neck < 20.0) ? 1 : 2;

  static constexpr std::array<double, 2> knee_edges = {30.0, 60.0};
  b.legs = (ctx.legs_supported ? 1 : 2) + band(d.knee, knee_edges);

  b.table_a = kRebaTableA[b.trunk - 1][(b.neck - 1) * 4 + (b.legs - 1)];
  b.load = reba_load(ctx);
  b.score_a = b.table_a + b.load;

  int ua = upper_arm_base(d.sh_flex);
  if (d.sh_abd >= kAbducted || std::abs(d.sh_rot) >= kRotated) ++ua;
  if (d.sh_abd >= kRaised) ++ua;
  if (ctx.arm_supported) --ua;
  b.upper_arm = std::clamp(ua, 1, 6);
  b.lower_arm = lower_arm_base(d.elbow);
  b.wrist = (std::abs(d.wrist_flex) < 15.0 ? 1 : 2) + (std::abs(d.wrist_dev) >= kDeviated ? 1 : 0);

  b.table_b = kRebaTableB[b.upper_arm - 1][(b.lower_arm - 1) * 3 + (b.wrist - 1)];
  b.coupling = static_cast<int>(ctx.coupling);
  b.score_b = b.table_b + b.coupling;

  b.table_c = kRebaTableC[b.score_a - 1][b.score_b - 1];
  b.activity = reba_activity(ctx);
  b.final_score = std::min(b.table_c + b.activity, 15);
  return b;
}

inline DiscreteScore reba_table_c(const Posture& q, const TaskContext& ctx) {
  return {reba_breakdown(q, ctx).table_c, Scheme::RebaTableC};
}

// Final REBA score from a Table C value and the activity flags.
inline int reba_from_table_c(int table_c, const TaskContext& ctx) { return std::min(table_c + reba_activity(ctx), 15); }

inline DiscreteScore reba_score(const Posture& q, const TaskContext& ctx) {
  return {reba_breakdown(q, ctx).final_score, Scheme::Reba};
}

// Label used for datasets and surrogate training: RULA, or REBA up to Table C.
inline DiscreteScore score(Scheme s, const Posture& q, const TaskContext& ctx) {
  switch (s) {
    case Scheme::Rula: return rula_score(q, ctx);
    case Scheme::Reba: return reba_score(q, ctx);
    case Scheme::RebaTableC: return reba_table_c(q, ctx);
  }
  fail(ErrorKind::Config, "unknown scheme");
}

}  // namespace ergokit
