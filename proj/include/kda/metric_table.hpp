#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kda/csv.hpp"
#include "kda/model.hpp"

namespace kda::stats {

/// Per-item metric values plus optional quality labels and gold KDA.
/// Undefined values are NaN, never zero.
struct MetricTable {
  std::vector<std::string> item_ids;
  std::vector<std::string> metric_names;
  Eigen::ArrayXXd metrics;  // items x metrics
  std::vector<std::optional<QualityLabels>> labels;
  Eigen::ArrayXd gold_kda;  // NaN where absent

  static MetricTable empty(std::vector<std::string> item_ids, std::vector<std::string> metric_names);

  Eigen::Index rows() const { return static_cast<Eigen::Index>(item_ids.size()); }
  std::optional<Eigen::Index> metric_index(std::string_view name) const;
  bool has_labels() const;
  bool has_gold() const;

  /// Metric column by name; throws input error "missing column 'x'".
  Eigen::ArrayXd metric(std::string_view name) const;
  Eigen::ArrayXXd metrics_for(const std::vector<std::string>& names) const;

  /// Analysis targets: "likert", "accept" (0/1), "flaw_count", "gold_kda",
  /// a flaw name (0/1: any rater named it), or any metric column.
  /// Rows without labels yield NaN. Throws input error for unknown names.
  Eigen::ArrayXd target(std::string_view name) const;

  /// Sizes agree and every row has at least one defined metric.
  void check() const;
};

/// Targets that take only the values 0 and 1.
bool is_binary_target(std::string_view name);

/// Wide CSV: item_id, metric columns, then optional likert, flaw count columns
/// (one per flaw name) and gold_kda. Empty cells are undefined.
MetricTable metric_table_from_csv(const CsvTable& csv);
CsvTable to_csv(const MetricTable& table);

}  // namespace kda::stats
