#ifndef TRISIM_STATS_TESTS_HPP
#define TRISIM_STATS_TESTS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "trisim/error.hpp"

namespace trisim {

struct RankSumResult {
  double U = 0.0;  // Mann-Whitney U of the first sample
  double z = 0.0;
  double p_two_sided = 1.0;
  bool exact = false;
};

struct WelchResult {
  double mean_diff = 0.0;  // mean(x) - mean(y)
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

struct KsResult {
  double D = 0.0;
  double p_value = 1.0;
};

namespace detail {

inline double normal_sf(double z) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), z));
}

// Midranks (1-based) of the pooled sample and the tie term sum(t^3 - t).
inline std::vector<double> midranks(const std::vector<double>& pooled, double& tie_term) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(n);
  tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  return rank;
}

// Number of arrangements giving each U value for sample sizes m, n.
inline std::vector<double> mann_whitney_counts(std::size_t m, std::size_t n) {
  // f[m][n][u] = f[m-1][n][u-n] + f[m][n-1][u]
  std::vector<std::vector<std::vector<double>>> f(m + 1, std::vector<std::vector<double>>(n + 1));
  for (std::size_t i = 0; i <= m; ++i)
    for (std::size_t j = 0; j <= n; ++j) {
      auto& cur = f[i][j];
      cur.assign(i * j + 1, 0.0);
      if (i == 0 || j == 0) {
        cur[0] = 1.0;
        continue;
      }
      for (std::size_t u = 0; u <= i * j; ++u) {
        double c = 0.0;
        if (u >= j && u - j < f[i - 1][j].size()) c += f[i - 1][j][u - j];
        if (u < f[i][j - 1].size()) c += f[i][j - 1][u];
        cur[u] = c;
      }
    }
  return f[m][n];
}

}  // namespace detail

enum class RankSumMethod { automatic, exact, normal };

/// Wilcoxon rank-sum / Mann-Whitney test. Automatic: exact when the pooled
/// size is at most 12 and there are no ties; otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
/// Forcing exact with ties is rejected.
inline RankSumResult wilcoxon_rank_sum(std::span<const double> xs, std::span<const double> ys,
                                       RankSumMethod method = RankSumMethod::automatic) {
  if (xs.empty() || ys.empty()) throw ValidationError("rank-sum test needs two non-empty samples");
  const std::size_t m = xs.size(), n = ys.size(), N = m + n;
  std::vector<double> pooled(xs.begin(), xs.end());
  pooled.insert(pooled.end(), ys.begin(), ys.end());
  for (double v : pooled)
    if (std::isnan(v)) throw ValidationError("rank-sum test input contains NaN");
  double tie_term = 0.0;
  const auto rank = detail::midranks(pooled, tie_term);
  double rx = 0.0;
  for (std::size_t i = 0; i < m; ++i) rx += rank[i];
  const double md = static_cast<double>(m), nd = static_cast<double>(n), Nd = static_cast<double>(N);

  RankSumResult out;
  out.U = rx - md * (md + 1.0) / 2.0;
  const double mean = md * nd / 2.0;
  const double var = md * nd / 12.0 * ((Nd + 1.0) - tie_term / (Nd * (Nd - 1.0)));
  out.z = var > 0.0 ? (out.U - mean) / std::sqrt(var) : 0.0;

  if (method == RankSumMethod::exact && tie_term != 0.0)
    throw ValidationError("exact rank-sum distribution needs samples without ties");
  if (method == RankSumMethod::exact && N > 40) throw ValidationError("exact rank-sum limited to 40 pooled values");
  if (method == RankSumMethod::exact || (method == RankSumMethod::automatic && N <= 12 && tie_term == 0.0)) {
    const auto counts = detail::mann_whitney_counts(m, n);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(out.U));
    double lower = 0.0, upper = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k <= u) lower += counts[k];
      if (k >= u) upper += counts[k];
    }
    out.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    out.exact = true;
    return out;
  }
  if (!(var > 0.0)) {
    out.p_two_sided = 1.0;
    return out;
  }
  const double dev = std::max(0.0, std::abs(out.U - mean) - 0.5);
  out.p_two_sided = std::min(1.0, 2.0 * detail::normal_sf(dev / std::sqrt(var)));
  return out;
}

/// Welch's unequal-variance t test.
inline WelchResult welch_t_test(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() < 2 || ys.size() < 2) throw ValidationError("Welch t test needs at least two values per sample");
  auto moments = [](std::span<const double> v, double& mean, double& var) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    var = ss / static_cast<double>(v.size() - 1);
  };
  double mx, vx, my, vy;
  moments(xs, mx, vx);
  moments(ys, my, vy);
  WelchResult out;
  out.mean_diff = mx - my;
  const double sx = vx / static_cast<double>(xs.size()), sy = vy / static_cast<double>(ys.size());
  const double se2 = sx + sy;
  if (!(se2 > 0.0)) {
    out.t = out.mean_diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), out.mean_diff);
    out.df = static_cast<double>(xs.size() + ys.size() - 2);
    out.p_two_sided = out.mean_diff == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = out.mean_diff / std::sqrt(se2);
  out.df = se2 * se2 /
           (sx * sx / static_cast<double>(xs.size() - 1) + sy * sy / static_cast<double>(ys.size() - 1));
  const boost::math::students_t_distribution<double> dist(out.df);
  out.p_two_sided = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t))));
  return out;
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic distribution and
/// Stephens' small-sample correction.
inline KsResult ks_two_sample(std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty() || ys.empty()) throw ValidationError("KS test needs two non-empty samples");
  std::vector<double> a(xs.begin(), xs.end()), b(ys.begin(), ys.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult out;
  out.D = d;
  const double en = std::sqrt(na * nb / (na + nb));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  if (lambda < 1e-3) {
    out.p_value = 1.0;
    return out;
  }
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  out.p_value = std::clamp(2.0 * sum, 0.0, 1.0);
  return out;
}

}  // namespace trisim

#endif  // TRISIM_STATS_TESTS_HPP
