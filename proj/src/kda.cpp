#include "kda/kda.hpp"

#include <fstream>
#include <iterator>

#include "json.hpp"
#include "kda/csv.hpp"
#include "kda/error.hpp"

namespace kda {

using nlohmann::json;

std::string_view to_string(KdaKind kind) {
  switch (kind) {
    case KdaKind::human: return "human";
    case KdaKind::disc: return "disc";
    case KdaKind::cont: return "cont";
  }
  return "cont";
}

// ---------------------------------------------------------------------------

HumanResponseTable HumanResponseTable::zeros(std::vector<std::string> participants,
                                             std::vector<std::string> items) {
  HumanResponseTable t;
  t.participants = std::move(participants);
  t.items = std::move(items);
  const auto rows = static_cast<Eigen::Index>(t.participants.size());
  const auto cols = static_cast<Eigen::Index>(t.items.size());
  t.correct_without = BinaryMatrix::Zero(rows, cols);
  t.correct_with = BinaryMatrix::Zero(rows, cols);
  t.observed_without = MaskMatrix::Constant(rows, cols, true);
  t.observed_with = MaskMatrix::Constant(rows, cols, true);
  return t;
}

Eigen::Index HumanResponseTable::item_index(const std::string& item_id) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i] == item_id) return static_cast<Eigen::Index>(i);
  throw input_error("unknown item '" + item_id + "'");
}

void HumanResponseTable::check() const {
  const auto rows = static_cast<Eigen::Index>(participants.size());
  const auto cols = static_cast<Eigen::Index>(items.size());
  auto same = [&](const auto& m) { return m.rows() == rows && m.cols() == cols; };
  if (!same(correct_without) || !same(correct_with) || !same(observed_without) || !same(observed_with))
    throw input_error("invalid response table: component shapes differ");
  if ((correct_without.array() > 1).any() || (correct_with.array() > 1).any())
    throw input_error("invalid response table: entry outside {0,1}");
}

std::string to_json(const HumanResponseTable& table) {
  auto rows = [](const auto& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(static_cast<int>(m(r, c)));
      out.push_back(std::move(row));
    }
    return out;
  };
  json j = {{"participants", table.participants},
            {"items", table.items},
            {"correct_without", rows(table.correct_without)},
            {"correct_with", rows(table.correct_with)},
            {"observed_without", rows(table.observed_without)},
            {"observed_with", rows(table.observed_with)}};
  return j.dump(1);
}

HumanResponseTable human_table_from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    auto t = HumanResponseTable::zeros(j.at("participants").get<std::vector<std::string>>(),
                                       j.at("items").get<std::vector<std::string>>());
    auto fill = [&](const char* key, auto& m) {
      if (!j.contains(key)) return;
      const auto& rows = j.at(key);
      if (static_cast<Eigen::Index>(rows.size()) != m.rows())
        throw input_error(std::string("invalid response table: '") + key + "' has wrong row count");
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != m.cols())
          throw input_error(std::string("invalid response table: '") + key + "' has wrong column count");
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          const int v = row[static_cast<std::size_t>(c)].get<int>();
          if (v != 0 && v != 1) throw input_error("invalid response table: entry outside {0,1}");
          m(r, c) = static_cast<typename std::decay_t<decltype(m)>::Scalar>(v);
        }
      }
    };
    fill("correct_without", t.correct_without);
    fill("correct_with", t.correct_with);
    fill("observed_without", t.observed_without);
    fill("observed_with", t.observed_with);
    return t;
  } catch (const json::exception& e) {
    throw input_error(std::string("invalid response table file: ") + e.what());
  }
}

void write_human_table_json(const std::string& path, const HumanResponseTable& table) {
  write_text(path, to_json(table) + "\n");
}

HumanResponseTable read_human_table_json(const std::string& path) {
  return human_table_from_json(read_text(path));
}

// ---------------------------------------------------------------------------

SubmetricSpec SubmetricSpec::kda_small() {
  return {SubmetricName::kda_small, "KDA_small", {"T5-cbqa-small", "ALbert-xl", "MPNet", "SciBert"}};
}

SubmetricSpec SubmetricSpec::kda_large() {
  return {SubmetricName::kda_large,
          "KDA_large",
          {"T5-cbqa-small", "T5-cbqa-large", "ALbert-xl", "MPNet", "SciBert", "bert-base",
           "BioBert-base", "Roberta-base", "Roberta-large", "XLNet-large"}};
}

SubmetricSpec SubmetricSpec::all(const ResponseMatrix& matrix) {
  SubmetricSpec spec{SubmetricName::custom, "all", {}};
  for (const auto& s : matrix.solvers) spec.solver_names.push_back(s.name);
  return spec;
}

SubmetricSpec SubmetricSpec::custom(std::string label, std::vector<std::string> solver_names) {
  return {SubmetricName::custom, std::move(label), std::move(solver_names)};
}

SubmetricSpec SubmetricSpec::named(const std::string& label, const ResponseMatrix& matrix) {
  if (label == "KDA_small") return kda_small();
  if (label == "KDA_large") return kda_large();
  if (label == "all") return all(matrix);
  throw input_error("unknown sub-metric '" + label + "'");
}

std::vector<Eigen::Index> SubmetricSpec::resolve(const ResponseMatrix& matrix) const {
  if (solver_names.empty()) throw input_error("sub-metric '" + label + "' has no solvers");
  std::vector<Eigen::Index> rows;
  rows.reserve(solver_names.size());
  for (const auto& name : solver_names) {
    try {
      rows.push_back(matrix.solver_index(name));
    } catch (const Error&) {
      throw input_error("unknown solver in subset '" + label + "': '" + name + "'");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

KdaScore kda_human(const HumanResponseTable& table, const std::string& item_id) {
  table.check();
  const Eigen::Index c = table.item_index(item_id);
  const Eigen::VectorXd used = (table.observed_without.col(c).array() && table.observed_with.col(c).array())
                                   .cast<double>()
                                   .matrix();
  const Eigen::VectorXd wrong_without =
      used.array() * (1.0 - table.correct_without.col(c).cast<double>().array());
  return conditional_answerability(wrong_without, table.correct_with.col(c).cast<double>(), KdaKind::human);
}

namespace {

std::vector<Eigen::Index> rows_for(const ResponseMatrix& matrix, const std::optional<SubmetricSpec>& subset) {
  if (subset) return subset->resolve(matrix);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(matrix.n_solvers()));
  for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = static_cast<Eigen::Index>(j);
  return rows;
}

}  // namespace

KdaScore kda_disc(const ResponseMatrix& matrix, const std::string& item_id,
                  const std::optional<SubmetricSpec>& subset) {
  const Eigen::Index c = matrix.item_index(item_id);
  const auto rows = rows_for(matrix, subset);
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd wrong_without(n), correct_with(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = rows[static_cast<std::size_t>(k)];
    const bool used = matrix.observed(j, c);
    wrong_without(k) = used ? 1.0 - static_cast<double>(matrix.r_without(j, c)) : 0.0;
    correct_with(k) = static_cast<double>(matrix.r_with(j, c));
  }
  return conditional_answerability(wrong_without, correct_with, KdaKind::disc);
}

KdaScore kda_cont(const ResponseMatrix& matrix, const std::string& item_id,
                  const std::optional<SubmetricSpec>& subset) {
  const Eigen::Index c = matrix.item_index(item_id);
  const auto rows = rows_for(matrix, subset);
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd wrong_without(n), correct_with(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = rows[static_cast<std::size_t>(k)];
    const double p0 = matrix.p_correct_without(j, c);
    const double p1 = matrix.p_correct_with(j, c);
    if (!(p0 >= 0.0 && p0 <= 1.0 && p1 >= 0.0 && p1 <= 1.0))
      throw input_error("invalid matrix: probability outside [0,1] for solver '" +
                        matrix.solvers[static_cast<std::size_t>(j)].name + "', item '" + item_id + "'");
    const bool used = matrix.observed(j, c);
    wrong_without(k) = used ? 1.0 - p0 : 0.0;
    correct_with(k) = p1;
  }
  return conditional_answerability(wrong_without, correct_with, KdaKind::cont, kContinuousMassFloor);
}

std::vector<ScoreRow> score_batch(const ResponseMatrix& matrix, const std::vector<std::string>& item_ids,
                                  const std::vector<SubmetricSpec>& subsets) {
  std::vector<SubmetricSpec> effective = subsets;
  if (effective.empty()) effective.push_back(SubmetricSpec::all(matrix));
  for (const auto& s : effective) s.resolve(matrix);

  std::vector<ScoreRow> rows;
  rows.reserve(item_ids.size() * 2 * effective.size());
  for (const auto& id : item_ids) {
    for (const auto& subset : effective) {
      for (KdaKind kind : {KdaKind::disc, KdaKind::cont}) {
        ScoreRow row{id, kind, subset.label, KdaScore{std::nullopt, 0.0, kind}, {}};
        try {
          row.score = kind == KdaKind::disc ? kda_disc(matrix, id, subset) : kda_cont(matrix, id, subset);
        } catch (const Error& e) {
          row.error = e.what();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string score_table_csv(const std::vector<ScoreRow>& rows) {
  CsvTable table;
  table.header = {"item_id", "metric_kind", "subset", "value", "n_effective", "defined"};
  for (const auto& r : rows)
    table.rows.push_back({r.item_id, std::string(to_string(r.kind)), r.subset,
                          r.score.value ? format_real(*r.score.value) : std::string(),
                          format_real(r.score.n_effective), r.score.defined() ? "true" : "false"});
  return table.to_string();
}

std::string score_table_jsonl(const std::vector<ScoreRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    json j = {{"item_id", r.item_id},
              {"metric_kind", to_string(r.kind)},
              {"subset", r.subset},
              {"value", r.score.value ? json(*r.score.value) : json(nullptr)},
              {"n_effective", r.score.n_effective},
              {"defined", r.score.defined()}};
    if (!r.error.empty()) j["error"] = r.error;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ScoreRow> parse_score_table_csv(const std::string& text) {
  const CsvTable table = parse_csv(text);
  const auto c_item = table.require_column("item_id");
  const auto c_kind = table.require_column("metric_kind");
  const auto c_subset = table.require_column("subset");
  const auto c_value = table.require_column("value");
  const auto c_n = table.require_column("n_effective");
  std::vector<ScoreRow> rows;
  for (const auto& fields : table.rows) {
    ScoreRow row;
    row.item_id = fields[c_item];
    const auto& kind = fields[c_kind];
    if (kind == "disc") row.kind = KdaKind::disc;
    else if (kind == "cont") row.kind = KdaKind::cont;
    else if (kind == "human") row.kind = KdaKind::human;
    else throw input_error("unknown metric_kind '" + kind + "'");
    row.subset = fields[c_subset];
    row.score.kind = row.kind;
    row.score.value = parse_real(fields[c_value]);
    row.score.n_effective = parse_real(fields[c_n]).value_or(0.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace kda
