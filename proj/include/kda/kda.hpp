#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kda/response_matrix.hpp"

namespace kda {

enum class KdaKind { human, disc, cont };
std::string_view to_string(KdaKind kind);

/// A knowledge-dependent answerability score. `value` is absent when the
/// conditioning mass `n_effective` is zero (nobody answered wrong without the
/// fact); undefined is never conflated with 0.
struct KdaScore {
  std::optional<double> value;
  double n_effective = 0.0;
  KdaKind kind = KdaKind::cont;

  bool defined() const { return value.has_value(); }
};

/// Below this conditioning mass a continuous score is undefined.
inline constexpr double kContinuousMassFloor = 1e-12;

/// The shared estimator behind every KDA variant:
///
///   sum_j w_j * c_j / sum_j w_j
///
/// where w_j is the (probability of) being wrong without the fact and c_j the
/// (probability of) being right with it. Binary inputs give the empirical
/// conditional frequency; probabilistic inputs give the weighted mean.
template <typename DerivedW, typename DerivedC>
KdaScore conditional_answerability(const Eigen::DenseBase<DerivedW>& wrong_without,
                                   const Eigen::DenseBase<DerivedC>& correct_with, KdaKind kind,
                                   double mass_floor = 0.0) {
  eigen_assert(wrong_without.size() == correct_with.size());
  const double mass = static_cast<double>(wrong_without.sum());
  KdaScore score{std::nullopt, mass, kind};
  if (!(mass > mass_floor)) {
    score.n_effective = std::max(mass, 0.0);
    return score;
  }
  const double gained =
      static_cast<double>((wrong_without.derived().array() * correct_with.derived().array()).sum());
  score.value = std::clamp(gained / mass, 0.0, 1.0);
  return score;
}

// ---------------------------------------------------------------------------

/// Per-participant binary correctness before and after seeing the fact.
/// Rows are participants, columns items. A participant contributes to an
/// item only when both of its responses are observed.
struct HumanResponseTable {
  std::vector<std::string> participants;
  std::vector<std::string> items;
  BinaryMatrix correct_without;
  BinaryMatrix correct_with;
  MaskMatrix observed_without;
  MaskMatrix observed_with;

  static HumanResponseTable zeros(std::vector<std::string> participants, std::vector<std::string> items);
  Eigen::Index item_index(const std::string& item_id) const;
  void check() const;
};

std::string to_json(const HumanResponseTable& table);
HumanResponseTable human_table_from_json(const std::string& text);
void write_human_table_json(const std::string& path, const HumanResponseTable& table);
HumanResponseTable read_human_table_json(const std::string& path);

enum class SubmetricName { kda_small, kda_large, custom };

/// A named solver subset. `label` is the subset column in score tables.
struct SubmetricSpec {
  SubmetricName name = SubmetricName::custom;
  std::string label;
  std::vector<std::string> solver_names;

  /// T5-cbqa-small, ALbert-xl, MPNet, SciBert.
  static SubmetricSpec kda_small();
  /// The ten-model subset that adds the larger checkpoints.
  static SubmetricSpec kda_large();
  static SubmetricSpec all(const ResponseMatrix& matrix);
  static SubmetricSpec custom(std::string label, std::vector<std::string> solver_names);
  /// "KDA_small", "KDA_large", or "all" (resolved against `matrix`).
  static SubmetricSpec named(const std::string& label, const ResponseMatrix& matrix);

  /// Throws input error when empty or naming a solver absent from `matrix`.
  std::vector<Eigen::Index> resolve(const ResponseMatrix& matrix) const;
};

KdaScore kda_human(const HumanResponseTable& table, const std::string& item_id);
KdaScore kda_disc(const ResponseMatrix& matrix, const std::string& item_id,
                  const std::optional<SubmetricSpec>& subset = std::nullopt);
KdaScore kda_cont(const ResponseMatrix& matrix, const std::string& item_id,
                  const std::optional<SubmetricSpec>& subset = std::nullopt);

struct ScoreRow {
  std::string item_id;
  KdaKind kind = KdaKind::cont;
  std::string subset;
  KdaScore score;
  std::string error;  // non-empty when the row could not be computed
};

/// One row per item x {disc, cont} x subset. Per-row failures are recorded in
/// the row; only unknown subset solvers abort the batch.
std::vector<ScoreRow> score_batch(const ResponseMatrix& matrix, const std::vector<std::string>& item_ids,
                                  const std::vector<SubmetricSpec>& subsets);

/// Long-format exports: item_id,metric_kind,subset,value,n_effective,defined.
std::string score_table_csv(const std::vector<ScoreRow>& rows);
std::string score_table_jsonl(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> parse_score_table_csv(const std::string& text);

}  // namespace kda
