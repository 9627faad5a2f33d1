#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <type_traits>

#include "rloc/error.hpp"

namespace rloc {

inline std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Shortest round-trip decimal form, locale-independent ("3", "0.3",
/// "1e-06"). Everything written to result files goes through this so output
/// is byte-stable and parses back to the identical double.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Fixed-precision form for plot coordinates.
inline std::string fmt_fixed(double v, int precision) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed,
                    precision);
  return std::string(buf, res.ptr);
}

template <typename T>
inline bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if constexpr (std::is_floating_point_v<T>) {
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc{} && res.ptr == end;
  } else {
    // Permit a leading '+' which from_chars rejects for integers.
    if (!s.empty() && s.front() == '+') ++begin;
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc{} && res.ptr == end;
  }
}

}  // namespace rloc
