#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "nubound/error.hpp"

namespace nubound {

/// Paired scalar observations (X_i, Z_i).
struct JointSample {
  std::vector<double> x;
  std::vector<double> z;

  std::size_t size() const { return x.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::Io, "cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads a two-column CSV with header `x,z`.
inline JointSample read_joint_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, "empty input");
  if (detail::trim(line) != "x,z") throw Error(ErrorCode::Io, "expected header 'x,z'");
  JointSample s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto comma = t.find(',');
    if (comma == std::string_view::npos || t.find(',', comma + 1) != std::string_view::npos) {
      throw Error(ErrorCode::Io, "line " + std::to_string(lineno) + ": expected two fields");
    }
    s.x.push_back(detail::parse_double(t.substr(0, comma)));
    s.z.push_back(detail::parse_double(t.substr(comma + 1)));
  }
  return s;
}

inline JointSample read_joint_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_joint_csv(in);
}

inline void write_joint_csv(std::ostream& out, const JointSample& s) {
  out << "x,z\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << detail::format_double(s.x[i]) << ',' << detail::format_double(s.z[i]) << '\n';
  }
}

}  // namespace nubound
