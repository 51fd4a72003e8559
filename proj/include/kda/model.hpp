#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kda {

enum class DatasetTag { obqa, tabmcq, sciq, custom };
enum class Provenance { human, generated, synthetic };

std::string_view to_string(DatasetTag tag);
std::string_view to_string(Provenance provenance);
DatasetTag parse_dataset_tag(std::string_view text);
Provenance parse_provenance(std::string_view text);

/// A target fact: the statement an MCQ is meant to assess.
struct Fact {
  std::string id;
  std::string text;
  DatasetTag dataset_tag = DatasetTag::custom;

  friend bool operator==(const Fact&, const Fact&) = default;
};

/// One multiple-choice question. The answer is an index into `options`;
/// option order is significant and never rearranged.
struct McqItem {
  std::string id;
  std::string fact_id;
  std::string stem;
  std::vector<std::string> options;
  std::size_t answer_index = 0;
  Provenance provenance = Provenance::human;

  std::size_t distractor_count() const {
    return options.empty() ? 0 : options.size() - 1;
  }

  friend bool operator==(const McqItem&, const McqItem&) = default;
};

enum class Flaw { low_readability, multiple_answers, wrong_answer, irrelevancy, other };
inline constexpr std::size_t kFlawCount = 5;
inline constexpr std::array<Flaw, kFlawCount> kAllFlaws = {
    Flaw::low_readability, Flaw::multiple_answers, Flaw::wrong_answer,
    Flaw::irrelevancy, Flaw::other};

std::string_view to_string(Flaw flaw);
Flaw parse_flaw(std::string_view text);

/// Expert-style quality labels for one question. `likert` is the mean over
/// annotators on the 1..4 classroom-usability scale.
class QualityLabels {
 public:
  static constexpr double kAcceptThreshold = 2.5;

  QualityLabels() = default;
  explicit QualityLabels(double likert, std::array<int, kFlawCount> flaws = {});

  double likert() const { return likert_; }
  bool accept() const { return likert_ > kAcceptThreshold; }
  int flaw_count(Flaw flaw) const { return flaws_[static_cast<std::size_t>(flaw)]; }
  int total_flaws() const;
  const std::array<int, kFlawCount>& flaws() const { return flaws_; }

  friend bool operator==(const QualityLabels&, const QualityLabels&) = default;

 private:
  double likert_ = 1.0;
  std::array<int, kFlawCount> flaws_{};
};

// ---------------------------------------------------------------------------
// Validation. Violations are data; validate_* never throws on bad content.

enum class ViolationCode {
  empty_id,
  empty_stem,
  too_few_options,
  answer_out_of_range,
  duplicate_options,
  empty_option,
  empty_fact_text,
  duplicate_id,
};

struct Violation {
  ViolationCode code;
  std::string message;  // e.g. "answer out of range"

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationCode code) const;
};

ValidationResult validate_item(const McqItem& item);
ValidationResult validate_fact(const Fact& fact);
/// Checks per-record invariants plus id uniqueness across the corpus.
ValidationResult validate_corpus(const std::vector<McqItem>& items,
                                 const std::vector<Fact>& facts);

// ---------------------------------------------------------------------------
// Text hygiene shared by ingestion and the n-gram tokenizer.

/// Unicode NFC normalization. Invalid UTF-8 sequences become U+FFFD.
std::string nfc(std::string_view utf8);
/// Trims Unicode whitespace from both ends.
std::string trim(std::string_view utf8);
/// NFC + trim; the canonical form used for comparisons.
std::string canonical_text(std::string_view utf8);

// ---------------------------------------------------------------------------
// JSONL codec. One object per line; decode applies NFC to every text field.

std::string encode(const McqItem& item);
std::string encode(const Fact& fact);
std::string encode(const QualityLabels& labels);
McqItem decode_item(std::string_view line);
Fact decode_fact(std::string_view line);
QualityLabels decode_labels(std::string_view line);

std::vector<McqItem> read_items_jsonl(const std::string& path);
std::vector<Fact> read_facts_jsonl(const std::string& path);
void write_items_jsonl(const std::string& path, const std::vector<McqItem>& items);
void write_facts_jsonl(const std::string& path, const std::vector<Fact>& facts);

}  // namespace kda
