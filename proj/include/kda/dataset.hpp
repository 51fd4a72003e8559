#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kda/model.hpp"

namespace kda {

enum class CorpusFormat { jsonl_native, obqa_like, sciq_like, tabmcq_like };

std::string_view to_string(CorpusFormat format);
CorpusFormat parse_corpus_format(std::string_view text);

struct LoadedCorpus {
  std::vector<McqItem> items;
  std::vector<Fact> facts;
  std::vector<std::string> flagged;              // ids whose distractor count is not 3
  std::map<std::string, std::string> split_of;  // item id -> provided split name
};

/// Fact ids for adapted corpora: "f-" + first 16 hex digits of sha256 of
/// the canonical fact text.
std::string fact_id_for(std::string_view text);

/// Adapters, one JSON object per line:
///   jsonl_native  canonical items; facts from `facts_path`
///   obqa_like     {"id","question":{"stem","choices":[{"text","label"}]},"answerKey","fact1","split"?}
///   sciq_like     {"question","distractor1..3","correct_answer","support","split"?,"id"?}
///                 answer placed first, distractors after in source order
///   tabmcq_like   {"id"?,"question","options":[...],"answer_index"|"answer","fact","split"?}
/// Errors carry "path:line:". A record without fact text fails with "no fact".
LoadedCorpus load_corpus(const std::string& path, CorpusFormat format,
                         std::optional<DatasetTag> tag = std::nullopt,
                         const std::optional<std::string>& facts_path = std::nullopt);

inline constexpr std::string_view kRuleOfTheAbove = "of-the-above";
inline constexpr std::string_view kRuleDistractorCount = "distractor-count";

struct SplitSizes {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

struct CorpusManifest {
  std::string source_path;
  std::string dataset_tag;
  std::size_t raw = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> filtered_by_rule;
  std::size_t flagged_distractor_count = 0;
  std::array<double, 3> split_ratios{6.0, 1.0, 1.0};
  std::string split_strategy = "random";
  std::uint64_t seed = 0;
  std::optional<SplitSizes> split_sizes;
  std::vector<std::string> notes;

  std::string to_json() const;
};

struct Preprocessed {
  std::vector<McqItem> kept;
  std::map<std::string, std::size_t> filtered_by_rule;
  std::map<std::string, std::string> rule_of;  // dropped item id -> rule
};

/// Drops items whose stem or any option contains "of above" or "of the
/// above" (case-insensitive, whitespace-collapsed), then items with fewer
/// than 3 distractors. Order is preserved.
Preprocessed preprocess(const std::vector<McqItem>& items);

enum class SplitStrategy { provided, random };
SplitStrategy parse_split_strategy(std::string_view text);

struct Splits {
  std::vector<McqItem> train;
  std::vector<McqItem> valid;
  std::vector<McqItem> test;
};

/// Largest-remainder sizes for n items over the ratios; ties go to the
/// earlier split.
SplitSizes apportion(std::size_t n, const std::array<double, 3>& ratios);

/// Random: deterministic shuffle then apportioned slices. Provided: uses
/// `split_of` ("train", "valid"/"validation"/"dev", "test"). Any empty
/// split is an input error.
Splits split(const std::vector<McqItem>& items, const std::array<double, 3>& ratios, std::uint64_t seed,
             SplitStrategy strategy, const std::map<std::string, std::string>& split_of = {});

}  // namespace kda
