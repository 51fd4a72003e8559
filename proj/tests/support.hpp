#pragma once

// Shared fixtures and scalar reference implementations for tests.

#include <cmath>
#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kda/kda.hpp"
#include "kda/metric_table.hpp"
#include "kda/response_matrix.hpp"
#include "kda/simulator.hpp"

namespace kda::testing {

/// One-item matrix with solvers "s0", "s1", ...; binary entries follow p > 0.5.
inline ResponseMatrix one_item_matrix(const std::vector<double>& p_without, const std::vector<double>& p_with,
                                      const std::string& item = "q") {
  std::vector<SolverRef> solvers;
  for (std::size_t j = 0; j < p_without.size(); ++j) solvers.push_back({"s" + std::to_string(j), "mock:uniform", {}, ""});
  ResponseMatrix m = ResponseMatrix::zeros(solvers, {item});
  for (std::size_t j = 0; j < p_without.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    m.p_correct_without(r, 0) = p_without[j];
    m.p_correct_with(r, 0) = p_with[j];
    m.r_without(r, 0) = p_without[j] > 0.5;
    m.r_with(r, 0) = p_with[j] > 0.5;
  }
  return m;
}

/// Plain-loop conditional answerability: sum(w * c) / sum(w), nullopt when
/// sum(w) <= floor.
inline std::optional<double> reference_kda(const std::vector<double>& wrong_without,
                                           const std::vector<double>& correct_with, double floor = 0.0) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < wrong_without.size(); ++j) {
    num += wrong_without[j] * correct_with[j];
    den += wrong_without[j];
  }
  if (!(den > floor)) return std::nullopt;
  return num / den;
}

/// Reference product-moment correlation by two-pass sums.
inline double reference_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// n items with latent quality q ~ U[0,1]: KDA columns are q plus modest
/// noise, n-gram columns carry a weak trace of q under heavy independent
/// noise, and expert labels are synthesized around q.
inline stats::MetricTable synthetic_metric_table(std::size_t n, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("t-" + std::to_string(i));
  auto table = stats::MetricTable::empty(ids, {"kda_cont", "kda_disc", "bleu", "rouge_l", "meteor"});
  auto rng = sim::stream(seed, "metric-table");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double q = u(rng);
    table.gold_kda(r) = q;
    table.metrics(r, 0) = clamp01(q + 0.1 * n01(rng));
    table.metrics(r, 1) = clamp01(q + 0.15 * n01(rng));
    for (Eigen::Index c = 2; c < 5; ++c) table.metrics(r, c) = clamp01(0.1 * q + 0.5 * u(rng));
    sim::SyntheticQuestionProfile profile;
    profile.item_id = ids[i];
    table.labels[i] = sim::synthesize_labels(profile, q, seed).labels;
  }
  return table;
}

}  // namespace kda::testing
