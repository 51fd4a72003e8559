#include "kda/model.hpp"

#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "json.hpp"
#include "kda/error.hpp"

namespace kda {

using nlohmann::json;

std::string_view to_string(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::obqa: return "OBQA";
    case DatasetTag::tabmcq: return "TabMCQ";
    case DatasetTag::sciq: return "SciQ";
    case DatasetTag::custom: return "custom";
  }
  return "custom";
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::human: return "human";
    case Provenance::generated: return "generated";
    case Provenance::synthetic: return "synthetic";
  }
  return "human";
}

DatasetTag parse_dataset_tag(std::string_view text) {
  if (text == "OBQA") return DatasetTag::obqa;
  if (text == "TabMCQ") return DatasetTag::tabmcq;
  if (text == "SciQ") return DatasetTag::sciq;
  if (text == "custom") return DatasetTag::custom;
  throw input_error("unknown dataset_tag '" + std::string(text) + "'");
}

Provenance parse_provenance(std::string_view text) {
  if (text == "human") return Provenance::human;
  if (text == "generated") return Provenance::generated;
  if (text == "synthetic") return Provenance::synthetic;
  throw input_error("unknown provenance '" + std::string(text) + "'");
}

std::string_view to_string(Flaw flaw) {
  switch (flaw) {
    case Flaw::low_readability: return "low_readability";
    case Flaw::multiple_answers: return "multiple_answers";
    case Flaw::wrong_answer: return "wrong_answer";
    case Flaw::irrelevancy: return "irrelevancy";
    case Flaw::other: return "other";
  }
  return "other";
}

Flaw parse_flaw(std::string_view text) {
  for (Flaw f : kAllFlaws)
    if (to_string(f) == text) return f;
  throw input_error("unknown flaw label '" + std::string(text) + "'");
}

QualityLabels::QualityLabels(double likert, std::array<int, kFlawCount> flaws)
    : likert_(likert), flaws_(flaws) {
  if (!(likert >= 1.0 && likert <= 4.0))
    throw input_error("likert must lie in [1,4], got " + std::to_string(likert));
  for (int c : flaws)
    if (c < 0) throw input_error("flaw counts must be non-negative");
}

int QualityLabels::total_flaws() const {
  return std::accumulate(flaws_.begin(), flaws_.end(), 0);
}

bool ValidationResult::has(ViolationCode code) const {
  for (const auto& v : violations)
    if (v.code == code) return true;
  return false;
}

// ---------------------------------------------------------------------------

std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString normalized = normalizer->normalize(source, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string trim(std::string_view utf8) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  int32_t begin = 0;
  int32_t end = s.length();
  while (begin < end && u_isUWhiteSpace(s.char32At(begin))) begin = s.moveIndex32(begin, 1);
  while (end > begin) {
    int32_t prev = s.moveIndex32(end, -1);
    if (!u_isUWhiteSpace(s.char32At(prev))) break;
    end = prev;
  }
  std::string out;
  s.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

std::string canonical_text(std::string_view utf8) { return trim(nfc(utf8)); }

// ---------------------------------------------------------------------------

ValidationResult validate_item(const McqItem& item) {
  ValidationResult result;
  auto add = [&](ViolationCode code, std::string msg) {
    result.violations.push_back({code, std::move(msg)});
  };
  if (canonical_text(item.id).empty()) add(ViolationCode::empty_id, "empty id");
  if (canonical_text(item.stem).empty()) add(ViolationCode::empty_stem, "empty stem");
  if (item.options.size() < 2) add(ViolationCode::too_few_options, "fewer than 2 options");
  if (item.answer_index >= item.options.size())
    add(ViolationCode::answer_out_of_range, "answer out of range");

  std::set<std::string> seen;
  bool duplicate = false;
  bool empty = false;
  for (const auto& option : item.options) {
    std::string key = canonical_text(option);
    if (key.empty()) empty = true;
    if (!seen.insert(key).second) duplicate = true;
  }
  if (empty) add(ViolationCode::empty_option, "empty option");
  if (duplicate) add(ViolationCode::duplicate_options, "duplicate options");
  return result;
}

ValidationResult validate_fact(const Fact& fact) {
  ValidationResult result;
  if (canonical_text(fact.id).empty())
    result.violations.push_back({ViolationCode::empty_id, "empty id"});
  if (canonical_text(fact.text).empty())
    result.violations.push_back({ViolationCode::empty_fact_text, "empty fact text"});
  return result;
}

ValidationResult validate_corpus(const std::vector<McqItem>& items,
                                 const std::vector<Fact>& facts) {
  ValidationResult result;
  std::unordered_set<std::string> item_ids;
  for (const auto& item : items) {
    for (auto& v : validate_item(item).violations) {
      v.message = "item '" + item.id + "': " + v.message;
      result.violations.push_back(std::move(v));
    }
    if (!item_ids.insert(item.id).second)
      result.violations.push_back(
          {ViolationCode::duplicate_id, "duplicate item id '" + item.id + "'"});
  }
  std::unordered_set<std::string> fact_ids;
  for (const auto& fact : facts) {
    for (auto& v : validate_fact(fact).violations) {
      v.message = "fact '" + fact.id + "': " + v.message;
      result.violations.push_back(std::move(v));
    }
    if (!fact_ids.insert(fact.id).second)
      result.violations.push_back(
          {ViolationCode::duplicate_id, "duplicate fact id '" + fact.id + "'"});
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

json parse_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw input_error(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw input_error("expected a JSON object");
  return j;
}

template <typename T>
T required(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null())
    throw input_error(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw input_error(std::string("field '") + key + "' has the wrong type");
  }
}

std::string required_text(const json& j, const char* key) {
  return nfc(required<std::string>(j, key));
}

}  // namespace

std::string encode(const McqItem& item) {
  json j = {{"id", item.id},
            {"fact_id", item.fact_id},
            {"stem", item.stem},
            {"options", item.options},
            {"answer_index", item.answer_index},
            {"provenance", to_string(item.provenance)}};
  return j.dump();
}

std::string encode(const Fact& fact) {
  json j = {{"id", fact.id}, {"text", fact.text}, {"dataset_tag", to_string(fact.dataset_tag)}};
  return j.dump();
}

std::string encode(const QualityLabels& labels) {
  json flaws = json::object();
  for (Flaw f : kAllFlaws) flaws[std::string(to_string(f))] = labels.flaw_count(f);
  json j = {{"likert", labels.likert()}, {"accept", labels.accept()}, {"flaws", flaws}};
  return j.dump();
}

McqItem decode_item(std::string_view line) {
  json j = parse_object(line);
  McqItem item;
  item.id = required_text(j, "id");
  item.fact_id = required_text(j, "fact_id");
  item.stem = required_text(j, "stem");
  for (const auto& option : required<std::vector<std::string>>(j, "options"))
    item.options.push_back(nfc(option));
  auto answer = required<long long>(j, "answer_index");
  if (answer < 0) throw input_error("answer_index must be non-negative");
  item.answer_index = static_cast<std::size_t>(answer);
  item.provenance = j.contains("provenance")
                        ? parse_provenance(required<std::string>(j, "provenance"))
                        : Provenance::human;
  return item;
}

Fact decode_fact(std::string_view line) {
  json j = parse_object(line);
  Fact fact;
  fact.id = required_text(j, "id");
  fact.text = required_text(j, "text");
  fact.dataset_tag = j.contains("dataset_tag")
                         ? parse_dataset_tag(required<std::string>(j, "dataset_tag"))
                         : DatasetTag::custom;
  return fact;
}

QualityLabels decode_labels(std::string_view line) {
  json j = parse_object(line);
  std::array<int, kFlawCount> counts{};
  if (auto it = j.find("flaws"); it != j.end()) {
    for (const auto& [key, value] : it->items())
      counts[static_cast<std::size_t>(parse_flaw(key))] = value.get<int>();
  }
  QualityLabels labels(required<double>(j, "likert"), counts);
  if (auto it = j.find("accept"); it != j.end() && it->get<bool>() != labels.accept())
    throw input_error("accept flag disagrees with likert > 2.5 rule");
  return labels;
}

namespace {

template <typename T, typename Decode>
std::vector<T> read_jsonl(const std::string& path, Decode decode) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(decode(line));
    } catch (const Error& e) {
      throw input_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write '" + path + "'");
  for (const auto& r : records) out << encode(r) << '\n';
}

}  // namespace

std::vector<McqItem> read_items_jsonl(const std::string& path) {
  return read_jsonl<McqItem>(path, decode_item);
}

std::vector<Fact> read_facts_jsonl(const std::string& path) {
  return read_jsonl<Fact>(path, decode_fact);
}

void write_items_jsonl(const std::string& path, const std::vector<McqItem>& items) {
  write_jsonl(path, items);
}

void write_facts_jsonl(const std::string& path, const std::vector<Fact>& facts) {
  write_jsonl(path, facts);
}

}  // namespace kda
