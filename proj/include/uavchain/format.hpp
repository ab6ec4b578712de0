#pragma once

// Number rendering shared by the trace and the exporters: 17 significant
// digits, which round-trips every double.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <system_error>

namespace uavchain {

inline void append_double(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += std::isnan(v) ? "NaN" : (v > 0 ? "Infinity" : "-Infinity");
    return;
  }
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, end);
}

inline std::string format_double(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

inline void append_uint(std::string& out, std::uint64_t v) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

}  // namespace uavchain
