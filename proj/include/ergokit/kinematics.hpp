#pragma once

// Parametric human kinematic chain: pelvis-fixed base, right arm to the hand
// (interaction point). Neck and knee are leaves of the tree and do not move
// the hand; their Jacobian columns are identically zero.

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ergokit/core.hpp"

namespace ergokit {

namespace joint {
inline constexpr std::size_t TrunkFlexion = 0;
inline constexpr std::size_t TrunkSideBend = 1;
inline constexpr std::size_t TrunkTwist = 2;
inline constexpr std::size_t NeckFlexion = 3;
inline constexpr std::size_t ShoulderFlexion = 4;
inline constexpr std::size_t ShoulderAbduction = 5;
inline constexpr std::size_t ShoulderRotation = 6;  // internal rotation positive
inline constexpr std::size_t ElbowFlexion = 7;
inline constexpr std::size_t WristFlexion = 8;     // flexion positive, extension negative
inline constexpr std::size_t WristDeviation = 9;   // ulnar positive, radial negative
inline constexpr std::size_t KneeFlexion = 10;
}  // namespace joint

inline constexpr std::array<std::string_view, 11> kJointNames = {
    "trunk_flexion",      "trunk_side_bend",   "trunk_twist",    "neck_flexion",
    "shoulder_flexion",   "shoulder_abduction", "shoulder_rotation", "elbow_flexion",
    "wrist_flexion",      "wrist_deviation",   "knee_flexion"};

struct JointDescriptor {
  std::string name;
  Vec3 axis;
  double lo = 0.0;  // rad
  double hi = 0.0;  // rad
};

class JointSet {
 public:
  JointSet() = default;
  JointSet(std::vector<JointDescriptor> joints, BodyMode mode) : joints_(std::move(joints)), mode_(mode) {
    validate();
  }

  // Built-in constants (version 1). Identical to data/constants_v1.txt.
  static JointSet defaults(BodyMode mode) {
    struct Row {
      double ax, ay, az, lo, hi;
    };
    static constexpr std::array<Row, 11> rows = {{
        {0, 1, 0, -10, 45},    // trunk flexion
        {1, 0, 0, -15, 15},    // trunk side bend
        {0, 0, 1, -20, 20},    // trunk twist
        {0, 1, 0, -5, 30},     // neck flexion
        {0, -1, 0, -30, 100},  // shoulder flexion
        {-1, 0, 0, -20, 60},   // shoulder abduction
        {0, 0, 1, -60, 50},    // shoulder internal rotation
        {0, -1, 0, 20, 140},   // elbow flexion
        {1, 0, 0, -45, 45},    // wrist flexion / extension
        {0, 1, 0, -15, 20},    // wrist ulnar / radial deviation
        {0, 1, 0, 0, 90},      // knee flexion
    }};
    std::vector<JointDescriptor> js;
    for (std::size_t i = 0; i < joint_count(mode); ++i) {
      const auto& r = rows[i];
      js.push_back({std::string(kJointNames[i]), Vec3(r.ax, r.ay, r.az), deg2rad(r.lo), deg2rad(r.hi)});
    }
    return JointSet(std::move(js), mode);
  }

  BodyMode mode() const { return mode_; }
  std::size_t size() const { return joints_.size(); }
  const JointDescriptor& operator[](std::size_t i) const { return joints_[i]; }
  const std::vector<JointDescriptor>& joints() const { return joints_; }

  Vec lower() const {
    Vec v(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) v[static_cast<Eigen::Index>(i)] = joints_[i].lo;
    return v;
  }
  Vec upper() const {
    Vec v(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) v[static_cast<Eigen::Index>(i)] = joints_[i].hi;
    return v;
  }

  // Upper-body view of a full-body set (drops the knee).
  JointSet upper_body() const {
    if (mode_ == BodyMode::Upper) return *this;
    std::vector<JointDescriptor> js(joints_.begin(), joints_.begin() + 10);
    return JointSet(std::move(js), BodyMode::Upper);
  }

  bool contains(const Posture& p) const {
    if (p.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (p[i] < joints_[i].lo || p[i] > joints_[i].hi) return false;
    return true;
  }

  void validate() const {
    if (joints_.size() != joint_count(mode_))
      fail(ErrorKind::Input, "joint set has " + std::to_string(joints_.size()) + " joints, expected " +
                                 std::to_string(joint_count(mode_)));
    for (const auto& j : joints_) {
      if (!(j.lo < j.hi)) fail(ErrorKind::Input, "joint " + j.name + ": lower bound must be below upper bound");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) fail(ErrorKind::Input, "joint " + j.name + ": axis is not unit length");
    }
  }

 private:
  std::vector<JointDescriptor> joints_;
  BodyMode mode_ = BodyMode::Upper;
};

struct BodyDimensions {
  double pelvis_to_chest = 0.25;
  double chest_to_neck = 0.20;
  double neck_to_head = 0.20;
  double shoulder_offset = 0.18;
  double upper_arm = 0.30;
  double forearm = 0.26;
  double hand = 0.09;
  double thigh = 0.43;
  double shank = 0.42;

  void validate() const {
    const std::array<double, 9> v = {pelvis_to_chest, chest_to_neck, neck_to_head, shoulder_offset, upper_arm,
                                     forearm,         hand,          thigh,        shank};
    for (double x : v)
      if (!(x > 0.0) || !std::isfinite(x)) fail(ErrorKind::Input, "body segment lengths must be positive");
  }

  // Upper bound on the distance from the pelvis origin to the hand.
  double reach_bound() const {
    return pelvis_to_chest + chest_to_neck + shoulder_offset + upper_arm + forearm + hand;
  }
};

struct InteractionState {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();

  void validate() const {
    if (std::abs(orientation.norm() - 1.0) > 1e-9) fail(ErrorKind::Input, "interaction orientation is not a unit quaternion");
  }
};

// World-frame joint axes and pivot points along the hand chain, plus the hand frame.
struct ChainState {
  std::array<Vec3, 11> axis;
  std::array<Vec3, 11> pivot;
  Vec3 hand_position;
  Mat3 hand_rotation;
};

inline constexpr bool in_hand_chain(std::size_t j) { return j != joint::NeckFlexion && j != joint::KneeFlexion; }

namespace detail {

inline void check_inputs(const Posture& q, const JointSet& joints, const BodyDimensions& dims) {
  q.validate();
  if (q.mode != joints.mode())
    fail(ErrorKind::Mode, "posture mode " + std::string(to_string(q.mode)) + " does not match joint set mode " +
                              std::string(to_string(joints.mode())));
  dims.validate();
}

inline Mat3 rot(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis).toRotationMatrix(); }

}  // namespace detail

inline ChainState chain_state(const Posture& q, const JointSet& joints, const BodyDimensions& dims) {
  detail::check_inputs(q, joints, dims);
  ChainState s;
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  auto joint_at = [&](std::size_t j) {
    s.axis[j] = R * joints[j].axis;
    s.pivot[j] = p;
    R = R * detail::rot(joints[j].axis, q[j]);
  };
  joint_at(joint::TrunkFlexion);
  joint_at(joint::TrunkSideBend);
  joint_at(joint::TrunkTwist);
  const Mat3 R_trunk = R;

  // Neck branch: pivot at the top of the chest segment.
  s.axis[joint::NeckFlexion] = R_trunk * joints[joint::NeckFlexion].axis;
  s.pivot[joint::NeckFlexion] = R_trunk * Vec3(0, 0, dims.pelvis_to_chest + dims.chest_to_neck);

  p = R_trunk * Vec3(0, -dims.shoulder_offset, dims.pelvis_to_chest + dims.chest_to_neck);
  joint_at(joint::ShoulderFlexion);
  joint_at(joint::ShoulderAbduction);
  joint_at(joint::ShoulderRotation);
  p += R * Vec3(0, 0, -dims.upper_arm);
  joint_at(joint::ElbowFlexion);
  p += R * Vec3(0, 0, -dims.forearm);
  joint_at(joint::WristFlexion);
  joint_at(joint::WristDeviation);
  s.hand_position = p + R * Vec3(0, 0, -dims.hand);
  s.hand_rotation = R;

  // Knee branch hangs below the pelvis on the right hip.
  s.axis[joint::KneeFlexion] = joints.size() > joint::KneeFlexion ? joints[joint::KneeFlexion].axis : Vec3::UnitY();
  s.pivot[joint::KneeFlexion] = Vec3(0, -dims.shoulder_offset * 0.5, -dims.thigh);
  return s;
}

// Pose of the hand in the pelvis frame (velocities zero).
inline InteractionState forward_kinematics(const Posture& q, const JointSet& joints, const BodyDimensions& dims) {
  const ChainState s = chain_state(q, joints, dims);
  InteractionState out;
  out.position = s.hand_position;
  out.orientation = Quat(s.hand_rotation).normalized();
  return out;
}

inline Mat6X jacobian_from_state(const ChainState& s, std::size_t n) {
  Mat6X J = Mat6X::Zero(6, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    if (!in_hand_chain(j)) continue;
    const auto c = static_cast<Eigen::Index>(j);
    J.block<3, 1>(0, c) = s.axis[j].cross(s.hand_position - s.pivot[j]);
    J.block<3, 1>(3, c) = s.axis[j];
  }
  return J;
}

// Geometric Jacobian of the hand: rows [linear; angular], columns in joint order.
inline Mat6X jacobian(const Posture& q, const JointSet& joints, const BodyDimensions& dims) {
  return jacobian_from_state(chain_state(q, joints, dims), q.size());
}

// Partial derivatives dJ/dq_k, one 6 x n matrix per joint k.
inline std::vector<Mat6X> jacobian_derivatives(const ChainState& s, std::size_t n) {
  std::vector<Mat6X> dJ(n, Mat6X::Zero(6, static_cast<Eigen::Index>(n)));
  for (std::size_t k = 0; k < n; ++k) {
    if (!in_hand_chain(k)) continue;
    const Vec3& zk = s.axis[k];
    for (std::size_t j = 0; j < n; ++j) {
      if (!in_hand_chain(j)) continue;
      const Vec3& zj = s.axis[j];
      const Vec3 lever = s.hand_position - s.pivot[j];
      Vec3 dz = Vec3::Zero();
      Vec3 dlever;
      if (k <= j) {
        dz = zk.cross(zj);
        dlever = zk.cross(lever);
      } else {
        dlever = zk.cross(s.hand_position - s.pivot[k]);
      }
      const auto c = static_cast<Eigen::Index>(j);
      dJ[k].block<3, 1>(0, c) = dz.cross(lever) + zj.cross(dlever);
      dJ[k].block<3, 1>(3, c) = dz;
    }
  }
  return dJ;
}

// Box projection onto the range of motion.
inline Posture clamp_to_rom(const Posture& q, const JointSet& joints) {
  if (q.size() != joints.size()) fail(ErrorKind::Input, "posture / joint set length mismatch");
  Posture out = q;
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = std::clamp(q[i], joints[i].lo, joints[i].hi);
  return out;
}

// ---------------------------------------------------------------------------
// Pose/twist deviation  dev = [p - p*; e_o; v - v*; w - w*]  with the weighted
// squared norm dev' S dev. e_o = 0.5 * sum_i (r*_i x r_i) over rotation columns.

using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;

struct Deviation {
  Vec12 error;
  double weighted_sq = 0.0;
  Vec gradient;  // d(weighted_sq)/dq, filled when requested
};

inline Deviation pose_deviation(const Posture& q, const Vec& qdot, const InteractionState& target, const Mat12& weight,
                                const JointSet& joints, const BodyDimensions& dims, bool with_gradient) {
  const std::size_t n = q.size();
  if (static_cast<std::size_t>(qdot.size()) != n) fail(ErrorKind::Input, "joint velocity length mismatch");
  const ChainState s = chain_state(q, joints, dims);
  const Mat6X J = jacobian_from_state(s, n);
  const Mat3 Rt = target.orientation.toRotationMatrix();
  const Mat3& R = s.hand_rotation;

  Deviation d;
  d.error.segment<3>(0) = s.hand_position - target.position;
  Vec3 eo = Vec3::Zero();
  for (int i = 0; i < 3; ++i) eo += Rt.col(i).cross(R.col(i));
  d.error.segment<3>(3) = 0.5 * eo;
  const Vec6 twist = J * qdot;
  d.error.segment<3>(6) = twist.head<3>() - target.linear_velocity;
  d.error.segment<3>(9) = twist.tail<3>() - target.angular_velocity;
  const Vec12 We = weight * d.error;
  d.weighted_sq = d.error.dot(We);

  if (with_gradient) {
    Eigen::Matrix<double, 12, Eigen::Dynamic> Jd(12, static_cast<Eigen::Index>(n));
    Jd.setZero();
    Jd.topRows<3>() = J.topRows<3>();
    for (std::size_t k = 0; k < n; ++k) {
      if (!in_hand_chain(k)) continue;
      Vec3 de = Vec3::Zero();
      for (int i = 0; i < 3; ++i) de += Rt.col(i).cross(s.axis[k].cross(R.col(i)));
      Jd.block<3, 1>(3, static_cast<Eigen::Index>(k)) = 0.5 * de;
    }
    if (!qdot.isZero(0.0)) {
      const auto dJ = jacobian_derivatives(s, n);
      for (std::size_t k = 0; k < n; ++k) Jd.block<6, 1>(6, static_cast<Eigen::Index>(k)) = dJ[k] * qdot;
    }
    d.gradient = 2.0 * Jd.transpose() * We;
  }
  return d;
}

// Default weighting: identity with orientation rows weighted 0.1.
inline Mat12 default_deviation_weight() {
  Mat12 W = Mat12::Identity();
  for (int i = 3; i < 6; ++i) W(i, i) = 0.1;
  return W;
}

// Damped least-squares solution of J x = v.
inline Vec dls_solve(const Mat6X& J, const Vec6& v, double damping) {
  const Eigen::Matrix<double, 6, 6> A = J * J.transpose() + damping * damping * Eigen::Matrix<double, 6, 6>::Identity();
  return J.transpose() * A.ldlt().solve(v);
}

// Iterative DLS inverse kinematics on the hand pose, holding the listed joints fixed.
// Returns the posture reached; the caller checks the residual.
inline Posture solve_ik(Posture q, const InteractionState& target, const JointSet& joints, const BodyDimensions& dims,
                        const std::vector<std::size_t>& locked = {}, int iterations = 50, double damping = 1e-3,
                        double orientation_weight = std::sqrt(0.1)) {
  for (int it = 0; it < iterations; ++it) {
    const ChainState s = chain_state(q, joints, dims);
    Mat6X J = jacobian_from_state(s, q.size());
    const Mat3 Rt = target.orientation.toRotationMatrix();
    Vec3 eo = Vec3::Zero();
    for (int i = 0; i < 3; ++i) eo += s.hand_rotation.col(i).cross(Rt.col(i));
    Vec6 e;
    e.head<3>() = target.position - s.hand_position;
    e.tail<3>() = 0.5 * eo * orientation_weight;
    J.bottomRows<3>() *= orientation_weight;
    for (std::size_t j : locked) J.col(static_cast<Eigen::Index>(j)).setZero();
    if (e.norm() < 1e-12) break;
    Vec dq = dls_solve(J, e, damping);
    q.angles += dq;
    q = clamp_to_rom(q, joints);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Constants file: first line "ergokit-constants 1"; joint lines
// "name axis_x axis_y axis_z lo_deg hi_deg"; dimension lines "dim name meters".

inline constexpr int kConstantsVersion = 1;

struct Constants {
  JointSet joints;
  BodyDimensions dims;
};

inline double& dimension_ref(BodyDimensions& d, const std::string& name) {
  if (name == "pelvis_to_chest") return d.pelvis_to_chest;
  if (name == "chest_to_neck") return d.chest_to_neck;
  if (name == "neck_to_head") return d.neck_to_head;
  if (name == "shoulder_offset") return d.shoulder_offset;
  if (name == "upper_arm") return d.upper_arm;
  if (name == "forearm") return d.forearm;
  if (name == "hand") return d.hand;
  if (name == "thigh") return d.thigh;
  if (name == "shank") return d.shank;
  fail(ErrorKind::Format, "unknown body dimension '" + name + "'");
}

inline Constants parse_constants(std::istream& in, BodyMode mode) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, "constants file is empty");
  {
    std::istringstream hs(line);
    std::string tag;
    int version = 0;
    if (!(hs >> tag >> version) || tag != "ergokit-constants") fail(ErrorKind::Format, "constants file: bad header line");
    if (version != kConstantsVersion)
      fail(ErrorKind::Version, "constants file version " + std::to_string(version) + ", expected " +
                                   std::to_string(kConstantsVersion));
  }
  std::vector<JointDescriptor> js;
  BodyDimensions dims;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    if (name == "dim") {
      std::string dname;
      double value = 0;
      if (!(ls >> dname >> value)) fail(ErrorKind::Format, "constants line " + std::to_string(lineno) + ": bad dim entry");
      dimension_ref(dims, dname) = value;
      continue;
    }
    double ax, ay, az, lo, hi;
    if (!(ls >> ax >> ay >> az >> lo >> hi)) fail(ErrorKind::Format, "constants line " + std::to_string(lineno) + ": expected 6 fields");
    const std::size_t idx = js.size();
    if (idx >= kJointNames.size() || name != kJointNames[idx])
      fail(ErrorKind::Format, "constants line " + std::to_string(lineno) + ": unexpected joint '" + name + "'");
    js.push_back({name, Vec3(ax, ay, az), deg2rad(lo), deg2rad(hi)});
  }
  if (js.size() < joint_count(mode)) fail(ErrorKind::Format, "constants file lists too few joints");
  js.resize(joint_count(mode));
  dims.validate();
  return {JointSet(std::move(js), mode), dims};
}

inline Constants load_constants(const std::string& path, BodyMode mode) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open constants file " + path);
  return parse_constants(in, mode);
}

}  // namespace ergokit
