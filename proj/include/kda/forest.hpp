#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kda/metric_table.hpp"

namespace kda::stats {

enum class FeatureSet { kda_only, others_only, combined };

std::string_view to_string(FeatureSet set);
FeatureSet parse_feature_set(std::string_view text);

/// Metric columns fed to the forest for a feature set.
std::vector<std::string> feature_columns(FeatureSet set);

/// Binary mode: Gini splits, leaf value = share of positives.
/// Regression mode: variance-reduction splits, leaf value = mean.
enum class ForestMode { regression, binary };

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int depth() const;
  template <class Row>
  double predict(const Row& x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const TreeNode& n = nodes[static_cast<std::size_t>(k)];
      k = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }
};

struct ForestParams {
  std::size_t n_trees = 100;
  int max_depth = 2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  int max_depth = 2;
  std::size_t n_trees = 0;
  std::uint64_t seed = 0;
  ForestMode mode = ForestMode::regression;
  std::vector<std::string> features;

  /// Mean of tree outputs, one per row of X.
  Eigen::ArrayXd predict(const Eigen::ArrayXXd& X) const;
};

/// Bagged trees with sqrt(p) candidate features per split. Every feature
/// column must be finite. Throws analysis error "no usable splits" when all
/// features are constant, or when fewer than 2 distinct target values exist.
ForestModel forest_fit(const Eigen::ArrayXXd& X, const Eigen::ArrayXd& y, ForestMode mode, const ForestParams& params,
                       std::vector<std::string> feature_names = {});

/// Rows with an undefined feature or target are dropped.
ForestModel forest_fit(const MetricTable& table, FeatureSet set, std::string_view target, const ForestParams& params);

struct CvProtocol {
  std::size_t folds = 4;
  std::size_t trials = 10;
  bool stratified = true;
  std::uint64_t seed = 0;
  ForestParams forest;
};

struct CvResult {
  double mean_test_pearson = 0.0;
  double std = 0.0;  // population sd over trials
  std::vector<double> trial_pearson;
  std::size_t rows = 0;
  std::size_t dropped_rows = 0;
  std::size_t degenerate_trials = 0;  // constant predictions, counted as r = 0
};

/// Repeated k-fold CV: Pearson between pooled out-of-fold predictions and
/// targets, per trial. Strata are target values rounded to integers.
CvResult cv_correlation(const MetricTable& table, FeatureSet set, std::string_view target, const CvProtocol& protocol);
CvResult cv_correlation(const Eigen::ArrayXXd& X, const Eigen::ArrayXd& y, ForestMode mode, const CvProtocol& protocol);

}  // namespace kda::stats
