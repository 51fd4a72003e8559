#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kda/error.hpp"

namespace kda::stats {

// Undefined entries are NaN throughout; analyses drop them pairwise.

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-tailed, Student-t with n - 2 df
  std::size_t n = 0;
  std::size_t dropped = 0;  // pairs removed because either side was NaN
};

PearsonResult pearson(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y);

/// Two-tailed p-value of a correlation r over n pairs.
double correlation_p_value(double r, std::size_t n);

/// "**" below 0.01, "*" below 0.05, else "".
std::string stars(double p_value);

/// r rounded to `digits` decimals without trailing zeros, plus stars: "0.8**".
std::string format_starred(double r, double p_value, int digits = 2);

// ---------------------------------------------------------------------------
// Agreement

template <class Label>
double cohens_kappa(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) throw analysis_error("kappa needs equal-length rating lists");
  if (a.empty()) throw analysis_error("kappa needs at least one rating");
  std::map<Label, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    marginals[a[i]].first += 1.0;
    marginals[b[i]].second += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double p_o = agree / n;
  double p_e = 0.0;
  for (const auto& [label, counts] : marginals) p_e += (counts.first / n) * (counts.second / n);
  if (p_e >= 1.0) {
    if (p_o >= 1.0) return 1.0;
    throw analysis_error("degenerate marginals");
  }
  return (p_o - p_e) / (1.0 - p_e);
}

struct PairwiseKappa {
  double mean = 0.0;
  std::vector<double> values;  // pairs (0,1), (0,2), ..., (n-2,n-1)
};

/// Mean kappa over every unordered rater pair.
template <class Label>
PairwiseKappa mean_pairwise_kappa(const std::vector<std::vector<Label>>& raters) {
  if (raters.size() < 2) throw analysis_error("pairwise kappa needs at least 2 raters");
  PairwiseKappa out;
  for (std::size_t i = 0; i < raters.size(); ++i)
    for (std::size_t j = i + 1; j < raters.size(); ++j)
      out.values.push_back(cohens_kappa<Label>(raters[i], raters[j]));
  double sum = 0.0;
  for (double v : out.values) sum += v;
  out.mean = sum / static_cast<double>(out.values.size());
  return out;
}

// ---------------------------------------------------------------------------
// Regression

struct BandPoint {
  double x = 0.0;
  double fit = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
  double residual_se = 0.0;
  double x_mean = 0.0;
  double sxx = 0.0;
  double t_critical = 0.0;  // two-sided 95% quantile, n - 2 df

  double predict(double x) const { return intercept + slope * x; }
  /// 95% confidence band of the mean prediction at x.
  BandPoint band(double x) const;
  std::vector<BandPoint> band(std::span<const double> xs) const;
};

/// Ordinary least squares of y on x; NaN pairs dropped.
LinearFit linear_regression(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y);

// ---------------------------------------------------------------------------
// Acceptance curve

struct AcceptancePoint {
  double threshold = 0.0;
  std::optional<double> rate;  // undefined when support is 0
  std::size_t support = 0;
  std::size_t accepted = 0;
};

/// Items with a NaN score are ignored.
std::vector<AcceptancePoint> acceptance_curve(const Eigen::Ref<const Eigen::ArrayXd>& scores,
                                              const std::vector<bool>& accept, std::span<const double> thresholds);

/// lo, lo + step, ..., hi (inclusive), rounded to 12 decimals so 0.1 * 3 == 0.3.
std::vector<double> threshold_grid(double lo = 0.0, double hi = 1.0, double step = 0.1);

}  // namespace kda::stats
