#pragma once

// Text header grammar shared by every artifact and by CLI config files:
//
//   <kind> <version>          e.g. "ergokit-dataset 1"
//   key=value                 one per line, '#' starts a comment
//   ---                       end of header (artifacts only)
//
// Numbers are written with std::to_chars so output is locale independent.

#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ergokit/core.hpp"
#include "ergokit/rng.hpp"

namespace ergokit {

inline constexpr std::string_view kHeaderEnd = "---";

// Ordered key/value block; insertion order is kept so files are byte-stable.
class Header {
 public:
  Header() = default;
  Header(std::string kind, int version) : kind_(std::move(kind)), version_(version) {}

  const std::string& kind() const { return kind_; }
  int version() const { return version_; }

  void set(const std::string& key, const std::string& value) {
    for (auto& kv : entries_)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    entries_.emplace_back(key, value);
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  const std::string& get(const std::string& key) const {
    const auto* v = find(key);
    if (!v) fail(ErrorKind::Format, kind_ + ": missing header key '" + key + "'");
    return *v;
  }

  std::optional<std::string> get_opt(const std::string& key) const {
    const auto* v = find(key);
    return v ? std::optional<std::string>(*v) : std::nullopt;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Serialized key=value lines, used to derive config hashes.
  std::string body() const {
    std::string s;
    for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
    return s;
  }

  void write(std::ostream& out, bool terminate = true) const {
    out << kind_ << ' ' << version_ << '\n' << body();
    if (terminate) out << kHeaderEnd << '\n';
  }

  // Reads through the terminating "---" (or EOF when allow_eof).
  static Header read(std::istream& in, const std::string& expected_kind, int expected_version, bool allow_eof = false) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Format, expected_kind + ": empty file");
    std::istringstream first(line);
    std::string kind;
    int version = 0;
    if (!(first >> kind >> version)) fail(ErrorKind::Format, expected_kind + ": malformed version line");
    if (kind != expected_kind) fail(ErrorKind::Format, "expected a " + expected_kind + " file, found '" + kind + "'");
    if (version != expected_version)
      fail(ErrorKind::Version, expected_kind + " version " + std::to_string(version) + " is not supported (expected " +
                                   std::to_string(expected_version) + ")");
    Header h(kind, version);
    bool terminated = false;
    while (std::getline(in, line)) {
      if (line == kHeaderEnd) {
        terminated = true;
        break;
      }
      if (auto c = line.find('#'); c != std::string::npos) line.erase(c);
      while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t')) line.pop_back();
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0) fail(ErrorKind::Format, expected_kind + ": malformed header line '" + line + "'");
      h.set(line.substr(0, eq), line.substr(eq + 1));
    }
    if (!terminated && !allow_eof) fail(ErrorKind::Format, expected_kind + ": header is not terminated");
    return h;
  }

 private:
  const std::string* find(const std::string& key) const {
    for (const auto& kv : entries_)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  std::string kind_;
  int version_ = 0;
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::string format_double(double x, int significant = 17) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, significant);
  return std::string(buf, res.ptr);
}

// Shortest representation that round-trips.
inline std::string format_exact(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what = "number") {
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::Format, "cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  return x;
}

inline long long parse_int(std::string_view s, std::string_view what = "integer") {
  long long x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::Format, "cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  return x;
}

// Rounds to the value that a 9-significant-digit decimal round trip produces.
inline double quantize9(double x) { return parse_double(format_double(x, 9)); }

inline std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

// Provenance keys every artifact carries.
inline void stamp_provenance(Header& h, const std::string& command, const std::string& resolved_config,
                             std::uint64_t seed) {
  h.set("command", command);
  h.set("config_hash", hex64(fnv1a(resolved_config)));
  h.set("seed", std::to_string(seed));
}

}  // namespace ergokit
