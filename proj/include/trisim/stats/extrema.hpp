#ifndef TRISIM_STATS_EXTREMA_HPP
#define TRISIM_STATS_EXTREMA_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trisim/error.hpp"
#include "trisim/trajectory.hpp"

namespace trisim {

enum class ExtremaKind { maxima, minima };

inline std::string to_string(ExtremaKind k) { return k == ExtremaKind::maxima ? "maxima" : "minima"; }

inline ExtremaKind parse_extrema_kind(std::string_view s) {
  if (s == "maxima" || s == "max") return ExtremaKind::maxima;
  if (s == "minima" || s == "min") return ExtremaKind::minima;
  throw ValidationError("extrema kind must be 'maxima' or 'minima', got '" + std::string(s) + "'");
}

struct ExtremaPoint {
  double time;
  double value;
  friend bool operator==(const ExtremaPoint&, const ExtremaPoint&) = default;
};

struct ExtremaSequence {
  ExtremaKind kind = ExtremaKind::maxima;
  std::vector<ExtremaPoint> points;
  friend bool operator==(const ExtremaSequence&, const ExtremaSequence&) = default;
};

struct ExtremaOptions {
  std::size_t smoothing_window = 1;  // odd
  double min_separation = 0.0;
};

/// Centered moving average; near the ends the window shrinks symmetrically.
inline std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw ValidationError("smoothing window must be odd and at least 1");
  const std::size_t n = v.size();
  if (window == 1) return {v.begin(), v.end()};
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    double sum = 0.0;
    for (std::size_t j = i - h; j <= i + h; ++j) sum += v[j];
    out[i] = sum / static_cast<double>(2 * h + 1);
  }
  return out;
}

namespace detail {

// Strict interior maxima of s; a flat top counts once, at its middle sample.
inline std::vector<std::size_t> strict_maxima(const std::vector<double>& s) {
  std::vector<std::size_t> idx;
  const std::size_t n = s.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    if (s[i] > s[i - 1]) {
      std::size_t j = i;
      while (j + 1 < n && s[j + 1] == s[i]) ++j;
      if (j + 1 < n && s[j + 1] < s[i]) idx.push_back(i + (j - i) / 2);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return idx;
}

}  // namespace detail

/// Local extrema of a sampled series. Values are smoothed before locating
/// extrema; reported values are the raw samples at the located indices.
inline ExtremaSequence detect_extrema(std::span<const double> times, std::span<const double> values, ExtremaKind kind,
                                      const ExtremaOptions& opt = {}) {
  if (times.size() != values.size()) throw ValidationError("times and values differ in length");
  if (opt.smoothing_window == 0 || opt.smoothing_window % 2 == 0)
    throw ValidationError("smoothing window must be odd and at least 1");
  if (!(opt.min_separation >= 0.0)) throw ValidationError("min_separation must be non-negative");
  if (values.size() < opt.smoothing_window) throw ValidationError("series is shorter than the smoothing window");

  std::vector<double> s = moving_average(values, opt.smoothing_window);
  if (kind == ExtremaKind::minima)
    for (double& x : s) x = -x;

  ExtremaSequence out{kind, {}};
  std::vector<std::size_t> kept;
  for (std::size_t i : detail::strict_maxima(s)) {
    if (!kept.empty() && times[i] - times[kept.back()] < opt.min_separation) {
      if (s[i] > s[kept.back()]) kept.back() = i;
      continue;
    }
    kept.push_back(i);
  }
  for (std::size_t i : kept) out.points.push_back({times[i], values[i]});
  return out;
}

inline ExtremaSequence detect_extrema(const Trajectory& traj, std::string_view species, ExtremaKind kind,
                                      const ExtremaOptions& opt = {}) {
  const std::vector<double> v = traj.column(std::string(species));
  return detect_extrema(traj.times(), v, kind, opt);
}

}  // namespace trisim

#endif  // TRISIM_STATS_EXTREMA_HPP
