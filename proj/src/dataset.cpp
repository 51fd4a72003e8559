#include "kda/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "kda/digest.hpp"
#include "kda/error.hpp"

namespace kda {

using nlohmann::json;

std::string_view to_string(CorpusFormat format) {
  switch (format) {
    case CorpusFormat::jsonl_native: return "jsonl_native";
    case CorpusFormat::obqa_like: return "obqa_like";
    case CorpusFormat::sciq_like: return "sciq_like";
    case CorpusFormat::tabmcq_like: return "tabmcq_like";
  }
  return "";
}

CorpusFormat parse_corpus_format(std::string_view text) {
  if (text == "jsonl_native") return CorpusFormat::jsonl_native;
  if (text == "obqa_like") return CorpusFormat::obqa_like;
  if (text == "sciq_like") return CorpusFormat::sciq_like;
  if (text == "tabmcq_like") return CorpusFormat::tabmcq_like;
  throw input_error("unknown corpus format '" + std::string(text) + "'");
}

std::string fact_id_for(std::string_view text) { return "f-" + sha256_hex(canonical_text(text)).substr(0, 16); }

namespace {

std::string text_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw input_error(std::string("missing field '") + key + "'");
  return canonical_text(it->get<std::string>());
}

std::string fact_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw input_error("no fact");
  std::string text = canonical_text(it->get<std::string>());
  if (text.empty()) throw input_error("no fact");
  return text;
}

std::optional<std::string> optional_text(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw input_error(std::string("field '") + key + "' must be a string");
  return canonical_text(it->get<std::string>());
}

std::string padded_id(std::string_view prefix, std::size_t line) {
  std::string n = std::to_string(line);
  return std::string(prefix) + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
}

struct Record {
  McqItem item;
  std::optional<Fact> fact;  // adapted formats carry fact text inline
  std::optional<std::string> split;
};

Record adapt_obqa(const json& j, DatasetTag tag) {
  Record r;
  r.item.id = text_field(j, "id");
  auto q = j.find("question");
  if (q == j.end() || !q->is_object()) throw input_error("missing field 'question'");
  r.item.stem = text_field(*q, "stem");
  auto choices = q->find("choices");
  if (choices == q->end() || !choices->is_array()) throw input_error("missing field 'choices'");
  const std::string key = text_field(j, "answerKey");
  std::optional<std::size_t> answer;
  for (const auto& c : *choices) {
    if (text_field(c, "label") == key) answer = r.item.options.size();
    r.item.options.push_back(text_field(c, "text"));
  }
  if (!answer) throw input_error("answer key '" + key + "' matches no choice label");
  r.item.answer_index = *answer;
  const std::string fact = fact_field(j, "fact1");
  r.fact = Fact{fact_id_for(fact), fact, tag};
  r.split = optional_text(j, "split");
  return r;
}

Record adapt_sciq(const json& j, DatasetTag tag, std::size_t line) {
  Record r;
  r.item.id = optional_text(j, "id").value_or(padded_id("sciq-", line));
  r.item.stem = text_field(j, "question");
  r.item.options.push_back(text_field(j, "correct_answer"));
  for (const char* key : {"distractor1", "distractor2", "distractor3"})
    if (auto d = optional_text(j, key); d && !d->empty()) r.item.options.push_back(*d);
  r.item.answer_index = 0;
  const std::string fact = fact_field(j, "support");
  r.fact = Fact{fact_id_for(fact), fact, tag};
  r.split = optional_text(j, "split");
  return r;
}

Record adapt_tabmcq(const json& j, DatasetTag tag, std::size_t line) {
  Record r;
  r.item.id = optional_text(j, "id").value_or(padded_id("tabmcq-", line));
  r.item.stem = text_field(j, "question");
  auto options = j.find("options");
  if (options == j.end() || !options->is_array()) throw input_error("missing field 'options'");
  for (const auto& o : *options) {
    if (!o.is_string()) throw input_error("options must be strings");
    r.item.options.push_back(canonical_text(o.get<std::string>()));
  }
  if (auto a = j.find("answer_index"); a != j.end() && a->is_number_integer()) {
    const auto index = a->get<long long>();
    if (index < 0) throw input_error("answer out of range");
    r.item.answer_index = static_cast<std::size_t>(index);
  } else {
    const std::string answer = text_field(j, "answer");
    auto it = std::find(r.item.options.begin(), r.item.options.end(), answer);
    if (it == r.item.options.end()) throw input_error("answer text matches no option");
    r.item.answer_index = static_cast<std::size_t>(it - r.item.options.begin());
  }
  const std::string fact = fact_field(j, "fact");
  r.fact = Fact{fact_id_for(fact), fact, tag};
  r.split = optional_text(j, "split");
  return r;
}

DatasetTag default_tag(CorpusFormat format) {
  switch (format) {
    case CorpusFormat::obqa_like: return DatasetTag::obqa;
    case CorpusFormat::sciq_like: return DatasetTag::sciq;
    case CorpusFormat::tabmcq_like: return DatasetTag::tabmcq;
    case CorpusFormat::jsonl_native: return DatasetTag::custom;
  }
  return DatasetTag::custom;
}

std::string violations_text(const ValidationResult& v) {
  std::string out;
  for (const auto& violation : v.violations) out += (out.empty() ? "" : "; ") + violation.message;
  return out;
}

}  // namespace

LoadedCorpus load_corpus(const std::string& path, CorpusFormat format, std::optional<DatasetTag> tag,
                         const std::optional<std::string>& facts_path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open " + path);
  const DatasetTag dataset = tag.value_or(default_tag(format));

  LoadedCorpus corpus;
  std::map<std::string, std::size_t> fact_index;
  if (format == CorpusFormat::jsonl_native) {
    if (!facts_path) throw input_error(path + ": no fact file given for jsonl_native corpus");
    corpus.facts = read_facts_jsonl(*facts_path);
    for (std::size_t i = 0; i < corpus.facts.size(); ++i) fact_index.emplace(corpus.facts[i].id, i);
  }

  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    try {
      Record r;
      if (format == CorpusFormat::jsonl_native) {
        r.item = decode_item(line);
        if (!fact_index.contains(r.item.fact_id)) throw input_error("no fact with id '" + r.item.fact_id + "'");
      } else {
        json j;
        try {
          j = json::parse(line);
        } catch (const json::parse_error& e) {
          throw input_error(std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) throw input_error("record must be a JSON object");
        if (format == CorpusFormat::obqa_like) r = adapt_obqa(j, dataset);
        else if (format == CorpusFormat::sciq_like) r = adapt_sciq(j, dataset, line_no);
        else r = adapt_tabmcq(j, dataset, line_no);
        r.item.fact_id = r.fact->id;
        if (!fact_index.contains(r.fact->id)) {
          fact_index.emplace(r.fact->id, corpus.facts.size());
          corpus.facts.push_back(*r.fact);
        }
      }
      const ValidationResult v = validate_item(r.item);
      if (!v.ok()) throw input_error(violations_text(v));
      if (!seen_ids.insert(r.item.id).second) throw input_error("duplicate id '" + r.item.id + "'");
      if (r.item.distractor_count() != 3) corpus.flagged.push_back(r.item.id);
      if (r.split) corpus.split_of[r.item.id] = *r.split;
      corpus.items.push_back(std::move(r.item));
    } catch (const Error& e) {
      throw input_error(where + e.what());
    }
  }
  return corpus;
}

std::string CorpusManifest::to_json() const {
  json j;
  j["source_path"] = source_path;
  j["dataset_tag"] = dataset_tag;
  j["counts"] = {{"raw", raw}, {"kept", kept}, {"filtered_by_rule", filtered_by_rule}};
  j["flagged_distractor_count"] = flagged_distractor_count;
  j["split_ratios"] = split_ratios;
  j["split_strategy"] = split_strategy;
  j["seed"] = seed;
  if (split_sizes)
    j["split_sizes"] = {{"train", split_sizes->train}, {"valid", split_sizes->valid}, {"test", split_sizes->test}};
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

namespace {

std::string folded(std::string_view text) {
  std::string out;
  bool space = false;
  for (unsigned char c : canonical_text(text)) {
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

bool mentions_above(std::string_view text) {
  const std::string f = folded(text);
  return f.find("of above") != std::string::npos || f.find("of the above") != std::string::npos;
}

}  // namespace

Preprocessed preprocess(const std::vector<McqItem>& items) {
  Preprocessed out;
  out.filtered_by_rule[std::string(kRuleOfTheAbove)] = 0;
  out.filtered_by_rule[std::string(kRuleDistractorCount)] = 0;
  for (const auto& item : items) {
    std::optional<std::string_view> rule;
    if (mentions_above(item.stem) || std::any_of(item.options.begin(), item.options.end(), mentions_above))
      rule = kRuleOfTheAbove;
    else if (item.distractor_count() < 3)
      rule = kRuleDistractorCount;
    if (rule) {
      ++out.filtered_by_rule[std::string(*rule)];
      out.rule_of[item.id] = std::string(*rule);
    } else {
      out.kept.push_back(item);
    }
  }
  return out;
}

SplitStrategy parse_split_strategy(std::string_view text) {
  if (text == "provided") return SplitStrategy::provided;
  if (text == "random") return SplitStrategy::random;
  throw input_error("unknown split strategy '" + std::string(text) + "'");
}

SplitSizes apportion(std::size_t n, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw input_error("split ratios must be non-negative");
    total += r;
  }
  if (!(total > 0.0)) throw input_error("split ratios must not all be zero");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * ratios[i] / total;
    sizes[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return {sizes[0], sizes[1], sizes[2]};
}

Splits split(const std::vector<McqItem>& items, const std::array<double, 3>& ratios, std::uint64_t seed,
             SplitStrategy strategy, const std::map<std::string, std::string>& split_of) {
  Splits out;
  if (strategy == SplitStrategy::provided) {
    for (const auto& item : items) {
      auto it = split_of.find(item.id);
      if (it == split_of.end()) throw input_error("item '" + item.id + "' has no provided split");
      const std::string& s = it->second;
      if (s == "train") out.train.push_back(item);
      else if (s == "valid" || s == "validation" || s == "dev") out.valid.push_back(item);
      else if (s == "test") out.test.push_back(item);
      else throw input_error("item '" + item.id + "' has unknown split '" + s + "'");
    }
  } else {
    const SplitSizes sizes = apportion(items.size(), ratios);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const McqItem& item = items[order[k]];
      if (k < sizes.train) out.train.push_back(item);
      else if (k < sizes.train + sizes.valid) out.valid.push_back(item);
      else out.test.push_back(item);
    }
  }
  if (out.train.empty()) throw input_error("split 'train' is empty");
  if (out.valid.empty()) throw input_error("split 'valid' is empty");
  if (out.test.empty()) throw input_error("split 'test' is empty");
  return out;
}

}  // namespace kda
