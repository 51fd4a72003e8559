#include "kda/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "kda/error.hpp"
#include "kda/stats.hpp"

namespace kda::stats {

std::string_view to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::kda_only: return "kda_only";
    case FeatureSet::others_only: return "others_only";
    case FeatureSet::combined: return "combined";
  }
  return "";
}

FeatureSet parse_feature_set(std::string_view text) {
  if (text == "kda_only") return FeatureSet::kda_only;
  if (text == "others_only") return FeatureSet::others_only;
  if (text == "combined") return FeatureSet::combined;
  throw input_error("unknown feature set '" + std::string(text) + "'");
}

std::vector<std::string> feature_columns(FeatureSet set) {
  switch (set) {
    case FeatureSet::kda_only: return {"kda_cont", "kda_disc"};
    case FeatureSet::others_only: return {"bleu", "rouge_l", "meteor"};
    case FeatureSet::combined: return {"kda_cont", "kda_disc", "bleu", "rouge_l", "meteor"};
  }
  return {};
}

int DecisionTree::depth() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    deepest = std::max(deepest, level[k]);
    if (nodes[k].feature >= 0) {
      level[static_cast<std::size_t>(nodes[k].left)] = level[k] + 1;
      level[static_cast<std::size_t>(nodes[k].right)] = level[k] + 1;
    }
  }
  return deepest;
}

Eigen::ArrayXd ForestModel::predict(const Eigen::ArrayXXd& X) const {
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(X.row(i));
    out(i) = sum / static_cast<double>(trees.size());
  }
  return out;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

// Impurity of a node from its count, sum and sum of squares. Gini for 0/1
// targets is 2 p (1 - p); variance is sum of squared deviations over n.
double impurity(ForestMode mode, double n, double sum, double sumsq) {
  if (n <= 0.0) return 0.0;
  const double mean = sum / n;
  if (mode == ForestMode::binary) return 2.0 * mean * (1.0 - mean);
  return std::max(0.0, sumsq / n - mean * mean);
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::ArrayXXd& X, const Eigen::ArrayXd& y, ForestMode mode, int max_depth, std::mt19937_64& rng)
      : X_(X), y_(y), mode_(mode), max_depth_(max_depth), rng_(rng) {}

  DecisionTree build(std::vector<Eigen::Index> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<Eigen::Index> rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (auto r : rows) sum += y_(r);
    tree_.nodes[static_cast<std::size_t>(id)].value = sum / static_cast<double>(rows.size());
    if (depth >= max_depth_ || rows.size() < 2) return id;

    const Split best = choose(rows);
    if (best.feature < 0) return id;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (X_(r, best.feature) <= best.threshold ? left : right).push_back(r);
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // sqrt(p) candidates first; the remaining features are tried only if none
  // of those can split.
  Split choose(const std::vector<Eigen::Index>& rows) {
    const auto p = static_cast<std::size_t>(X_.cols());
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const std::size_t mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(p))));

    Split best;
    for (std::size_t k = 0; k < p; ++k) {
      if (k == mtry && best.feature >= 0) break;
      consider(rows, order[k], best);
    }
    return best;
  }

  void consider(const std::vector<Eigen::Index>& rows, int feature, Split& best) const {
    std::vector<Eigen::Index> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return X_(a, feature) < X_(b, feature); });
    const double n = static_cast<double>(sorted.size());
    double total = 0.0, total_sq = 0.0;
    for (auto r : sorted) {
      total += y_(r);
      total_sq += y_(r) * y_(r);
    }
    const double parent = impurity(mode_, n, total, total_sq);
    double left = 0.0, left_sq = 0.0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const double v = y_(sorted[i]);
      left += v;
      left_sq += v * v;
      const double a = X_(sorted[i], feature);
      const double b = X_(sorted[i + 1], feature);
      if (!(a < b)) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = n - nl;
      const double child = (nl * impurity(mode_, nl, left, left_sq) +
                            nr * impurity(mode_, nr, total - left, total_sq - left_sq)) / n;
      const double gain = parent - child;
      if (gain > best.gain + 1e-15) {
        double threshold = a + (b - a) / 2.0;
        if (!(threshold < b)) threshold = a;
        best = {feature, threshold, gain};
      }
    }
  }

  const Eigen::ArrayXXd& X_;
  const Eigen::ArrayXd& y_;
  ForestMode mode_;
  int max_depth_;
  std::mt19937_64& rng_;
  DecisionTree tree_;
};

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(1, threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) fn(i);
    });
}

struct Complete {
  Eigen::ArrayXXd X;
  Eigen::ArrayXd y;
  std::size_t dropped = 0;
};

Complete complete_rows(const MetricTable& table, FeatureSet set, std::string_view target) {
  const Eigen::ArrayXXd X = table.metrics_for(feature_columns(set));
  const Eigen::ArrayXd y = table.target(target);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (X.row(i).isFinite().all() && std::isfinite(y(i))) keep.push_back(i);
  Complete out;
  out.X.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.X.row(static_cast<Eigen::Index>(k)) = X.row(keep[k]);
    out.y(static_cast<Eigen::Index>(k)) = y(keep[k]);
  }
  out.dropped = static_cast<std::size_t>(X.rows()) - keep.size();
  return out;
}

}  // namespace

ForestModel forest_fit(const Eigen::ArrayXXd& X, const Eigen::ArrayXd& y, ForestMode mode, const ForestParams& params,
                       std::vector<std::string> feature_names) {
  if (X.rows() != y.size()) throw analysis_error("forest: feature and target rows differ");
  if (X.rows() == 0 || X.cols() == 0) throw analysis_error("forest: empty training data");
  if (!X.isFinite().all() || !y.isFinite().all()) throw analysis_error("forest: undefined values in training data");
  if (params.n_trees == 0 || params.max_depth < 1) throw input_error("forest: n_trees and max_depth must be positive");
  if (mode == ForestMode::binary && !((y == 0.0) || (y == 1.0)).all())
    throw analysis_error("forest: binary targets must be 0 or 1");
  if (y.maxCoeff() == y.minCoeff()) throw analysis_error("forest: target needs at least 2 distinct values");
  bool splittable = false;
  for (Eigen::Index j = 0; j < X.cols(); ++j) splittable |= X.col(j).maxCoeff() > X.col(j).minCoeff();
  if (!splittable) throw analysis_error("no usable splits");

  ForestModel model;
  model.max_depth = params.max_depth;
  model.n_trees = params.n_trees;
  model.seed = params.seed;
  model.mode = mode;
  model.features = std::move(feature_names);
  model.trees.resize(params.n_trees);
  parallel_for(params.n_trees, params.threads, [&](std::size_t t) {
    std::mt19937_64 rng(derive(params.seed, t));
    std::uniform_int_distribution<Eigen::Index> pick(0, X.rows() - 1);
    std::vector<Eigen::Index> sample(static_cast<std::size_t>(X.rows()));
    for (auto& s : sample) s = pick(rng);
    model.trees[t] = TreeBuilder(X, y, mode, params.max_depth, rng).build(std::move(sample));
  });
  return model;
}

ForestModel forest_fit(const MetricTable& table, FeatureSet set, std::string_view target, const ForestParams& params) {
  Complete data = complete_rows(table, set, target);
  const ForestMode mode = is_binary_target(target) ? ForestMode::binary : ForestMode::regression;
  return forest_fit(data.X, data.y, mode, params, feature_columns(set));
}

CvResult cv_correlation(const Eigen::ArrayXXd& X, const Eigen::ArrayXd& y, ForestMode mode,
                        const CvProtocol& protocol) {
  if (protocol.folds < 2 || protocol.trials == 0) throw input_error("cv: need at least 2 folds and 1 trial");
  const auto n = static_cast<std::size_t>(y.size());
  if (n < protocol.folds) throw analysis_error("cv: fewer rows than folds");

  // Stratum of each row, in ascending key order.
  std::map<long, std::vector<Eigen::Index>> strata;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    strata[protocol.stratified ? std::lround(y(row)) : 0].push_back(row);
  }
  if (protocol.stratified) {
    bool ok = true;
    for (const auto& [key, rows] : strata) ok &= rows.size() >= protocol.folds;
    if (!ok) {
      std::string sizes;
      for (const auto& [key, rows] : strata)
        sizes += (sizes.empty() ? "" : ", ") + std::to_string(key) + ": " + std::to_string(rows.size());
      throw analysis_error("stratification impossible with " + std::to_string(protocol.folds) +
                           " folds; stratum sizes {" + sizes + "}");
    }
  }

  CvResult result;
  result.rows = n;
  result.trial_pearson.assign(protocol.trials, 0.0);
  std::vector<int> degenerate(protocol.trials, 0);

  for (std::size_t trial = 0; trial < protocol.trials; ++trial) {
    std::mt19937_64 rng(derive(protocol.seed, 0x7472ULL, trial));
    std::vector<std::size_t> fold(n);
    std::size_t offset = 0;
    for (auto [key, rows] : strata) {
      std::shuffle(rows.begin(), rows.end(), rng);
      for (auto r : rows) fold[static_cast<std::size_t>(r)] = offset++ % protocol.folds;
    }

    Eigen::ArrayXd predictions(static_cast<Eigen::Index>(n));
    for (std::size_t f = 0; f < protocol.folds; ++f) {
      std::vector<Eigen::Index> train, test;
      for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
      Eigen::ArrayXXd X_train(static_cast<Eigen::Index>(train.size()), X.cols());
      Eigen::ArrayXd y_train(static_cast<Eigen::Index>(train.size()));
      for (std::size_t k = 0; k < train.size(); ++k) {
        X_train.row(static_cast<Eigen::Index>(k)) = X.row(train[k]);
        y_train(static_cast<Eigen::Index>(k)) = y(train[k]);
      }
      ForestParams params = protocol.forest;
      params.seed = derive(protocol.seed, trial + 1, f + 1);
      const ForestModel model = forest_fit(X_train, y_train, mode, params);
      Eigen::ArrayXXd X_test(static_cast<Eigen::Index>(test.size()), X.cols());
      for (std::size_t k = 0; k < test.size(); ++k) X_test.row(static_cast<Eigen::Index>(k)) = X.row(test[k]);
      const Eigen::ArrayXd p = model.predict(X_test);
      for (std::size_t k = 0; k < test.size(); ++k) predictions(test[k]) = p(static_cast<Eigen::Index>(k));
    }

    if (predictions.maxCoeff() == predictions.minCoeff()) {
      degenerate[trial] = 1;
      result.trial_pearson[trial] = 0.0;
    } else {
      result.trial_pearson[trial] = pearson(predictions, y).r;
    }
  }

  const Eigen::Map<const Eigen::ArrayXd> r(result.trial_pearson.data(), static_cast<Eigen::Index>(protocol.trials));
  result.mean_test_pearson = r.mean();
  result.std = std::sqrt((r - result.mean_test_pearson).square().mean());
  result.degenerate_trials = static_cast<std::size_t>(std::accumulate(degenerate.begin(), degenerate.end(), 0));
  return result;
}

CvResult cv_correlation(const MetricTable& table, FeatureSet set, std::string_view target, const CvProtocol& protocol) {
  Complete data = complete_rows(table, set, target);
  const ForestMode mode = is_binary_target(target) ? ForestMode::binary : ForestMode::regression;
  CvResult result = cv_correlation(data.X, data.y, mode, protocol);
  result.dropped_rows = data.dropped;
  return result;
}

}  // namespace kda::stats
