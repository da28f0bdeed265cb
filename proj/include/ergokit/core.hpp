#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ergokit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Quat = Eigen::Quaterniond;

enum class ErrorKind {
  Input,        // shape / dimension mismatch, NaN input
  Mode,         // upper-body vs full-body mismatch
  Config,       // invalid configuration value
  Io,           // missing or unreadable file
  Format,       // corrupt artifact
  Version,      // artifact version mismatch
  Unsupported,  // invalid combination (e.g. gradient solver + discrete backend)
  Unsatisfiable,
  Divergence,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input: return "input";
    case ErrorKind::Mode: return "mode";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Version: return "version";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Unsatisfiable: return "unsatisfiable";
    case ErrorKind::Divergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

enum class BodyMode { Upper, Full };

inline constexpr std::size_t joint_count(BodyMode m) { return m == BodyMode::Upper ? 10 : 11; }

inline std::string_view to_string(BodyMode m) { return m == BodyMode::Upper ? "upper" : "full"; }

enum class Scheme { Rula, Reba, RebaTableC };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::Rula: return "rula";
    case Scheme::Reba: return "reba";
    case Scheme::RebaTableC: return "reba-table-c";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "rula") return Scheme::Rula;
  if (s == "reba") return Scheme::Reba;
  if (s == "reba-table-c" || s == "reba_table_c") return Scheme::RebaTableC;
  fail(ErrorKind::Config, "unknown scheme '" + std::string(s) + "'");
}

struct ScoreRange {
  int lo;
  int hi;
};

inline constexpr ScoreRange score_range(Scheme s) {
  switch (s) {
    case Scheme::Rula: return {1, 7};
    case Scheme::Reba: return {1, 15};
    case Scheme::RebaTableC: return {1, 12};
  }
  return {1, 1};
}

// Body mode whose posture a scheme consumes.
inline constexpr BodyMode scheme_mode(Scheme s) { return s == Scheme::Rula ? BodyMode::Upper : BodyMode::Full; }

inline constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Angle/velocity vectors tagged with the body mode they belong to.
struct Posture {
  Vec angles;
  BodyMode mode = BodyMode::Upper;

  Posture() = default;
  Posture(Vec a, BodyMode m) : angles(std::move(a)), mode(m) {}

  static Posture zero(BodyMode m) { return {Vec::Zero(static_cast<Eigen::Index>(joint_count(m))), m}; }

  std::size_t size() const { return static_cast<std::size_t>(angles.size()); }
  double operator[](std::size_t i) const { return angles[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return angles[static_cast<Eigen::Index>(i)]; }

  void validate() const {
    if (size() != joint_count(mode))
      fail(ErrorKind::Input, "posture has " + std::to_string(size()) + " angles, " + std::string(to_string(mode)) +
                                 "-body mode expects " + std::to_string(joint_count(mode)));
    if (!angles.allFinite()) fail(ErrorKind::Input, "posture contains non-finite angles");
  }

  bool operator==(const Posture& o) const { return mode == o.mode && angles == o.angles; }
};

struct PostureVelocity {
  Vec rates;
};

}  // namespace ergokit
