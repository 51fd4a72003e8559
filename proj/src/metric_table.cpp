#include "kda/metric_table.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kda/error.hpp"

namespace kda::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<Flaw> flaw_named(std::string_view name) {
  for (Flaw f : kAllFlaws)
    if (to_string(f) == name) return f;
  return std::nullopt;
}

bool is_label_column(std::string_view name) {
  return name == "item_id" || name == "likert" || name == "accept" || name == "gold_kda" ||
         flaw_named(name).has_value();
}

}  // namespace

MetricTable MetricTable::empty(std::vector<std::string> item_ids, std::vector<std::string> metric_names) {
  MetricTable t;
  const auto n = static_cast<Eigen::Index>(item_ids.size());
  t.metrics = Eigen::ArrayXXd::Constant(n, static_cast<Eigen::Index>(metric_names.size()), kNaN);
  t.gold_kda = Eigen::ArrayXd::Constant(n, kNaN);
  t.labels.resize(item_ids.size());
  t.item_ids = std::move(item_ids);
  t.metric_names = std::move(metric_names);
  return t;
}

std::optional<Eigen::Index> MetricTable::metric_index(std::string_view name) const {
  auto it = std::find(metric_names.begin(), metric_names.end(), name);
  if (it == metric_names.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - metric_names.begin());
}

bool MetricTable::has_labels() const {
  return std::any_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
}

bool MetricTable::has_gold() const { return gold_kda.isFinite().any(); }

Eigen::ArrayXd MetricTable::metric(std::string_view name) const {
  auto index = metric_index(name);
  if (!index) throw input_error("missing column '" + std::string(name) + "'");
  return metrics.col(*index);
}

Eigen::ArrayXXd MetricTable::metrics_for(const std::vector<std::string>& names) const {
  Eigen::ArrayXXd out(rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = metric(names[j]);
  return out;
}

bool is_binary_target(std::string_view name) { return name == "accept" || flaw_named(name).has_value(); }

Eigen::ArrayXd MetricTable::target(std::string_view name) const {
  if (name == "gold_kda") {
    if (!has_gold()) throw input_error("missing column 'gold_kda'");
    return gold_kda;
  }
  auto flaw = flaw_named(name);
  if (name == "likert" || name == "accept" || name == "flaw_count" || flaw) {
    if (!has_labels()) throw input_error("missing column '" + std::string(name) + "'");
    Eigen::ArrayXd out(rows());
    for (Eigen::Index i = 0; i < rows(); ++i) {
      const auto& l = labels[static_cast<std::size_t>(i)];
      if (!l) out(i) = kNaN;
      else if (name == "likert") out(i) = l->likert();
      else if (name == "accept") out(i) = l->accept() ? 1.0 : 0.0;
      else if (name == "flaw_count") out(i) = l->total_flaws();
      else out(i) = l->flaw_count(*flaw) > 0 ? 1.0 : 0.0;
    }
    return out;
  }
  return metric(name);
}

void MetricTable::check() const {
  const auto n = rows();
  if (metrics.rows() != n || metrics.cols() != static_cast<Eigen::Index>(metric_names.size()) ||
      gold_kda.size() != n || labels.size() != item_ids.size())
    throw input_error("metric table: inconsistent sizes");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!metrics.row(i).isFinite().any())
      throw input_error("metric table: item '" + item_ids[static_cast<std::size_t>(i)] + "' has no defined metric");
}

MetricTable metric_table_from_csv(const CsvTable& csv) {
  const std::size_t id_col = csv.require_column("item_id");
  std::vector<std::size_t> metric_cols;
  std::vector<std::string> metric_names;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (is_label_column(csv.header[c])) continue;
    metric_cols.push_back(c);
    metric_names.push_back(csv.header[c]);
  }
  std::vector<std::string> ids;
  for (const auto& row : csv.rows) ids.push_back(row[id_col]);
  MetricTable t = MetricTable::empty(ids, metric_names);

  auto cell = [&](std::size_t r, std::size_t c) -> double {
    const std::string& text = csv.rows[r][c];
    if (text.empty()) return kNaN;
    auto v = parse_real(text);
    if (!v) throw input_error("row " + std::to_string(r + 2) + ": column '" + csv.header[c] + "' is not a number");
    return *v;
  };

  const auto likert_col = csv.column("likert");
  const auto gold_col = csv.column("gold_kda");
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    for (std::size_t j = 0; j < metric_cols.size(); ++j) t.metrics(i, static_cast<Eigen::Index>(j)) = cell(r, metric_cols[j]);
    if (gold_col) t.gold_kda(i) = cell(r, *gold_col);
    if (likert_col && !csv.rows[r][*likert_col].empty()) {
      std::array<int, kFlawCount> flaws{};
      for (Flaw f : kAllFlaws)
        if (auto c = csv.column(to_string(f)); c && !csv.rows[r][*c].empty())
          flaws[static_cast<std::size_t>(f)] = static_cast<int>(cell(r, *c));
      t.labels[r] = QualityLabels(cell(r, *likert_col), flaws);
    }
  }
  t.check();
  return t;
}

CsvTable to_csv(const MetricTable& table) {
  CsvTable csv;
  csv.header.push_back("item_id");
  for (const auto& m : table.metric_names) csv.header.push_back(m);
  const bool labels = table.has_labels();
  if (labels) {
    csv.header.push_back("likert");
    for (Flaw f : kAllFlaws) csv.header.emplace_back(to_string(f));
  }
  const bool gold = table.has_gold();
  if (gold) csv.header.push_back("gold_kda");

  auto real = [](double v) { return std::isfinite(v) ? format_real(v) : std::string(); };
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    std::vector<std::string> row{table.item_ids[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < table.metrics.cols(); ++j) row.push_back(real(table.metrics(i, j)));
    if (labels) {
      const auto& l = table.labels[static_cast<std::size_t>(i)];
      row.push_back(l ? format_real(l->likert()) : "");
      for (Flaw f : kAllFlaws) row.push_back(l ? std::to_string(l->flaw_count(f)) : "");
    }
    if (gold) row.push_back(real(table.gold_kda(i)));
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

}  // namespace kda::stats
