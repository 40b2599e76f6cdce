#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mupm/error.hpp"
#include "mupm/io.hpp"
#include "mupm/linalg.hpp"
#include "mupm/regression.hpp"

namespace mupm {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  require(a > 0 && b > 0, ErrorCode::kInvalidArgument, "incomplete beta needs a, b > 0");
  require(x >= 0.0 && x <= 1.0, ErrorCode::kInvalidArgument, "incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

inline double f_cdf(double f, double d1, double d2) {
  require(d1 > 0 && d2 > 0, ErrorCode::kInvalidArgument, "F distribution needs positive dfs");
  if (f <= 0.0) return 0.0;
  if (std::isinf(f)) return 1.0;
  return regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2));
}

// Upper tail, computed directly to avoid cancellation near 1.
inline double f_survival(double f, double d1, double d2) {
  require(d1 > 0 && d2 > 0, ErrorCode::kInvalidArgument, "F distribution needs positive dfs");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

struct AnovaResult {
  double f_statistic = 0.0;
  double p_value = 1.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  std::vector<double> group_means;
  std::vector<std::size_t> group_sizes;
};

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  require(groups.size() >= 2, ErrorCode::kInvalidArgument, "ANOVA needs at least 2 groups");
  AnovaResult res;
  std::size_t total = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    require(g.size() >= 2, ErrorCode::kInvalidArgument, "each ANOVA group needs >= 2 values");
    const double m = mean(g);
    res.group_means.push_back(m);
    res.group_sizes.push_back(g.size());
    total += g.size();
    grand += m * static_cast<double>(g.size());
  }
  grand /= static_cast<double>(total);
  double ss_between = 0.0, ss_within = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double dm = res.group_means[i] - grand;
    ss_between += static_cast<double>(groups[i].size()) * dm * dm;
    for (double v : groups[i]) {
      const double d = v - res.group_means[i];
      ss_within += d * d;
    }
  }
  res.df_between = groups.size() - 1;
  res.df_within = total - groups.size();
  const double ms_between = ss_between / static_cast<double>(res.df_between);
  const double ms_within = ss_within / static_cast<double>(res.df_within);
  if (ms_within == 0.0) {
    require(ms_between > 0.0, ErrorCode::kDegenerateGroups, "all values are identical");
    res.f_statistic = std::numeric_limits<double>::infinity();
    res.p_value = 0.0;
    return res;
  }
  res.f_statistic = ms_between / ms_within;
  res.p_value = f_survival(res.f_statistic, static_cast<double>(res.df_between),
                           static_cast<double>(res.df_within));
  return res;
}

// One ANOVA per coefficient, across conditions; each condition holds its
// repeated (fold) fits.
inline std::array<AnovaResult, 3> coefficient_anova(
    const std::vector<std::vector<MupmFit>>& conditions) {
  require(conditions.size() >= 2, ErrorCode::kInvalidArgument, "need at least 2 conditions");
  std::array<AnovaResult, 3> out;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::vector<double>> groups;
    for (const auto& fits : conditions) {
      require(fits.size() >= 2, ErrorCode::kInvalidArgument,
              "each condition needs at least 2 fits");
      std::vector<double> g;
      for (const auto& f : fits) g.push_back(f.beta[c]);
      groups.push_back(std::move(g));
    }
    const bool constant = std::all_of(groups.begin(), groups.end(), [&](const auto& g) {
      return std::all_of(g.begin(), g.end(), [&](double v) { return v == groups[0][0]; });
    });
    if (constant) {
      // Identical coefficients everywhere: no evidence of a difference.
      AnovaResult r;
      r.df_between = groups.size() - 1;
      for (const auto& g : groups) {
        r.group_means.push_back(g.front());
        r.group_sizes.push_back(g.size());
        r.df_within += g.size();
      }
      r.df_within -= groups.size();
      out[c] = r;
      continue;
    }
    out[c] = anova_oneway(groups);
  }
  return out;
}

inline json anova_to_json(const AnovaResult& r) {
  json j;
  j["f_statistic"] = std::isinf(r.f_statistic) ? json("inf") : json(r.f_statistic);
  j["p_value"] = r.p_value;
  j["df_between"] = r.df_between;
  j["df_within"] = r.df_within;
  j["group_means"] = r.group_means;
  j["group_sizes"] = r.group_sizes;
  return j;
}

}  // namespace mupm
