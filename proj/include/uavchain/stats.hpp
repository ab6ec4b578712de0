#pragma once

// One-way ANOVA with F-distribution tail probabilities, and nearest-rank
// percentiles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace uavchain::stats {

class AnovaError : public std::runtime_error {
 public:
  enum class Kind { DegenerateGroups, InsufficientSamples };
  AnovaError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0) || std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast below the mean; use the symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(F <= f) for the F distribution with (d1, d2) degrees of freedom.
inline double f_cdf(double f, double d1, double d2) {
  if (!(f > 0)) return 0.0;
  if (std::isinf(f)) return 1.0;
  return incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2));
}

/// P(F > f), evaluated directly rather than as 1 - cdf to keep small tails accurate.
inline double f_survival(double f, double d1, double d2) {
  if (!(f > 0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

struct AnovaResult {
  double f_statistic = 0.0;
  double p_value = 1.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  double ss_total = 0.0;
  std::vector<double> group_means;
  std::vector<std::size_t> group_sizes;
};

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) {
    throw AnovaError(AnovaError::Kind::InsufficientSamples, "anova needs at least two groups");
  }
  AnovaResult r;
  std::size_t total_n = 0;
  double grand_sum = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw AnovaError(AnovaError::Kind::InsufficientSamples, "every group needs at least two samples");
    double sum = 0.0;
    for (double v : g) sum += v;
    r.group_means.push_back(sum / static_cast<double>(g.size()));
    r.group_sizes.push_back(g.size());
    total_n += g.size();
    grand_sum += sum;
  }
  const double grand_mean = grand_sum / static_cast<double>(total_n);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double dm = r.group_means[i] - grand_mean;
    r.ss_between += static_cast<double>(groups[i].size()) * dm * dm;
    for (double v : groups[i]) {
      const double dw = v - r.group_means[i];
      r.ss_within += dw * dw;
      const double dt = v - grand_mean;
      r.ss_total += dt * dt;
    }
  }
  r.df_between = groups.size() - 1;
  r.df_within = total_n - groups.size();
  if (r.ss_within == 0.0) {
    throw AnovaError(AnovaError::Kind::DegenerateGroups, "within-group variance is zero in every group");
  }
  const double ms_between = r.ss_between / static_cast<double>(r.df_between);
  const double ms_within = r.ss_within / static_cast<double>(r.df_within);
  r.f_statistic = ms_between / ms_within;
  r.p_value = std::clamp(f_survival(r.f_statistic, static_cast<double>(r.df_between), static_cast<double>(r.df_within)),
                         0.0, 1.0);
  return r;
}

/// Nearest-rank percentile of already sorted data: the element at rank
/// ceil(p/100 * N), with rank 1 for p = 0. NaN for empty input.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

inline double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return percentile_sorted(values, p);
}

struct Summary {
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double p25 = std::numeric_limits<double>::quiet_NaN();
  double p75 = std::numeric_limits<double>::quiet_NaN();
  double p95 = std::numeric_limits<double>::quiet_NaN();
  double p99 = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();

  bool no_data() const noexcept { return count == 0; }
  double iqr() const noexcept { return p75 - p25; }
};

inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.median = percentile_sorted(values, 50);
  s.p25 = percentile_sorted(values, 25);
  s.p75 = percentile_sorted(values, 75);
  s.p95 = percentile_sorted(values, 95);
  s.p99 = percentile_sorted(values, 99);
  s.min = values.front();
  s.max = values.back();
  return s;
}

}  // namespace uavchain::stats
