#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace dlm {

// Linear-interpolation quantile (type 7) of an unsorted sample. q in [0,1].
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Population standard deviation, scaled to survive extreme magnitudes.
inline double pop_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double max_dev = 0.0;
  for (double x : v) max_dev = std::max(max_dev, std::fabs(x - m));
  if (max_dev == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) {
    const double d = (x - m) / max_dev;
    s += d * d;
  }
  return max_dev * std::sqrt(s / static_cast<double>(v.size()));
}

inline double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

// Shortest round-trip decimal form; deterministic and parse-exact.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return std::string(buf);
}

}  // namespace dlm
