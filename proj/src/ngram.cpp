#include "kda/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "kda/error.hpp"
#include "kda/model.hpp"

namespace kda::ngram {

TokenSequence tokenize(std::string_view text) {
  const std::string normalized = nfc(text);
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(normalized.data(), static_cast<int32_t>(normalized.size())));
  s.toLower(icu::Locale::getRoot());

  TokenSequence out;
  auto emit = [&](int32_t begin, int32_t end) {
    if (begin >= end) return;
    std::string token;
    s.tempSubStringBetween(begin, end).toUTF8String(token);
    out.tokens_.push_back(std::move(token));
  };

  int32_t i = 0;
  const int32_t n = s.length();
  while (i < n) {
    while (i < n && u_isUWhiteSpace(s.char32At(i))) i = s.moveIndex32(i, 1);
    if (i >= n) break;
    int32_t end = i;
    while (end < n && !u_isUWhiteSpace(s.char32At(end))) end = s.moveIndex32(end, 1);

    int32_t core_begin = i;
    while (core_begin < end && u_ispunct(s.char32At(core_begin))) {
      const int32_t next = s.moveIndex32(core_begin, 1);
      emit(core_begin, next);
      core_begin = next;
    }
    std::vector<std::pair<int32_t, int32_t>> trailing;
    int32_t core_end = end;
    while (core_end > core_begin) {
      const int32_t prev = s.moveIndex32(core_end, -1);
      if (!u_ispunct(s.char32At(prev))) break;
      trailing.emplace_back(prev, core_end);
      core_end = prev;
    }
    emit(core_begin, core_end);
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) emit(it->first, it->second);
    i = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Porter stemmer, original 1980 rule set.

namespace {

class PorterStemmer {
 public:
  explicit PorterStemmer(std::string word) : b_(std::move(word)), k_(static_cast<int>(b_.size()) - 1) {}

  std::string run() {
    if (k_ <= 1) return b_;
    step1ab();
    step1c();
    step2();
    step3();
    step4();
    step5();
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  bool cons(int i) const {
    switch (b_[static_cast<std::size_t>(i)]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !cons(i - 1);
      default: return true;
    }
  }

  // Number of VC sequences in b[0..j].
  int measure() const {
    int n = 0;
    int i = 0;
    for (;; ++i) {
      if (i > j_) return n;
      if (!cons(i)) break;
    }
    ++i;
    for (;;) {
      for (;; ++i) {
        if (i > j_) return n;
        if (cons(i)) break;
      }
      ++i;
      ++n;
      for (;; ++i) {
        if (i > j_) return n;
        if (!cons(i)) break;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool double_consonant(int j) const {
    return j >= 1 && b_[static_cast<std::size_t>(j)] == b_[static_cast<std::size_t>(j - 1)] && cons(j);
  }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = b_[static_cast<std::size_t>(i)];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view suffix) {
    const int length = static_cast<int>(suffix.size());
    if (length > k_ + 1) return false;
    if (std::string_view(b_).substr(static_cast<std::size_t>(k_ + 1 - length), suffix.size()) != suffix)
      return false;
    j_ = k_ - length;
    return true;
  }

  void set_to(std::string_view s) {
    b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
    k_ = j_ + static_cast<int>(s.size());
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void replace_if_measured(std::string_view s) {
    if (measure() > 0) set_to(s);
  }

  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  void step1ab() {
    if (at(k_) == 's') {
      if (ends("sses")) k_ -= 2;
      else if (ends("ies")) set_to("i");
      else if (at(k_ - 1) != 's') --k_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
    }
    if (ends("eed")) {
      if (measure() > 0) {
        --k_;
        b_.resize(static_cast<std::size_t>(k_ + 1));
      }
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
      if (ends("at")) set_to("ate");
      else if (ends("bl")) set_to("ble");
      else if (ends("iz")) set_to("ize");
      else if (double_consonant(k_)) {
        const char ch = at(k_);
        if (ch != 'l' && ch != 's' && ch != 'z') {
          --k_;
          b_.resize(static_cast<std::size_t>(k_ + 1));
        }
      } else {
        j_ = k_;
        if (measure() == 1 && cvc(k_)) set_to("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  void apply_first(std::initializer_list<std::pair<std::string_view, std::string_view>> rules) {
    for (const auto& [suffix, replacement] : rules) {
      if (ends(suffix)) {
        replace_if_measured(replacement);
        return;
      }
    }
  }

  void step2() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a': apply_first({{"ational", "ate"}, {"tional", "tion"}}); break;
      case 'c': apply_first({{"enci", "ence"}, {"anci", "ance"}}); break;
      case 'e': apply_first({{"izer", "ize"}}); break;
      case 'l':
        apply_first({{"abli", "able"}, {"alli", "al"}, {"entli", "ent"}, {"eli", "e"}, {"ousli", "ous"}});
        break;
      case 'o': apply_first({{"ization", "ize"}, {"ation", "ate"}, {"ator", "ate"}}); break;
      case 's':
        apply_first({{"alism", "al"}, {"iveness", "ive"}, {"fulness", "ful"}, {"ousness", "ous"}});
        break;
      case 't': apply_first({{"aliti", "al"}, {"iviti", "ive"}, {"biliti", "ble"}}); break;
      default: break;
    }
  }

  void step3() {
    switch (at(k_)) {
      case 'e': apply_first({{"icate", "ic"}, {"ative", ""}, {"alize", "al"}}); break;
      case 'i': apply_first({{"iciti", "ic"}}); break;
      case 'l': apply_first({{"ical", "ic"}, {"ful", ""}}); break;
      case 's': apply_first({{"ness", ""}}); break;
      default: break;
    }
  }

  void step4() {
    if (k_ < 1) return;
    bool matched = false;
    auto any = [&](std::initializer_list<std::string_view> suffixes) {
      for (auto s : suffixes)
        if (ends(s)) return true;
      return false;
    };
    switch (at(k_ - 1)) {
      case 'a': matched = any({"al"}); break;
      case 'c': matched = any({"ance", "ence"}); break;
      case 'e': matched = any({"er"}); break;
      case 'i': matched = any({"ic"}); break;
      case 'l': matched = any({"able", "ible"}); break;
      case 'n': matched = any({"ant", "ement", "ment", "ent"}); break;
      case 'o':
        if (ends("ion") && j_ >= 0 && (at(j_) == 's' || at(j_) == 't')) matched = true;
        else matched = ends("ou");
        break;
      case 's': matched = any({"ism"}); break;
      case 't': matched = any({"ate", "iti"}); break;
      case 'u': matched = any({"ous"}); break;
      case 'v': matched = any({"ive"}); break;
      case 'z': matched = any({"ize"}); break;
      default: break;
    }
    if (matched && measure() > 1) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
    }
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      const int a = measure();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (at(k_) == 'l' && double_consonant(k_) && measure() > 1) --k_;
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  std::string b_;
  int k_;
  int j_ = 0;
};

}  // namespace

std::string porter_stem(std::string_view word) {
  if (word.size() <= 2) return std::string(word);
  for (char c : word)
    if (c < 'a' || c > 'z') return std::string(word);
  return PorterStemmer(std::string(word)).run();
}

// ---------------------------------------------------------------------------

namespace {

using NgramCounts = std::map<std::string, int>;

NgramCounts count_ngrams(const TokenSequence& seq, int n) {
  NgramCounts counts;
  const auto len = static_cast<int>(seq.size());
  for (int i = 0; i + n <= len; ++i) {
    std::string key;
    for (int t = 0; t < n; ++t) {
      if (t) key += '\x1f';
      key += seq[static_cast<std::size_t>(i + t)];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuResult bleu(const TokenSequence& candidate, std::span<const TokenSequence> references, int max_order,
                Smoothing smoothing) {
  if (max_order < 1 || max_order > 4) throw input_error("BLEU order must be in 1..4");
  if (references.empty()) throw input_error("BLEU needs at least one reference");
  BleuResult result;
  if (candidate.empty()) {
    result.empty_candidate = true;
    result.precisions.assign(static_cast<std::size_t>(max_order), 0.0);
    return result;
  }

  const double c = static_cast<double>(candidate.size());
  std::size_t shortest = references.front().size();
  for (const auto& r : references) shortest = std::min(shortest, r.size());
  const double r = static_cast<double>(shortest);
  result.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);

  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= max_order; ++n) {
    const NgramCounts cand = count_ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references)
      for (const auto& [gram, count] : count_ngrams(ref, n)) max_ref[gram] = std::max(max_ref[gram], count);
    int clipped = 0;
    int total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) clipped += std::min(count, it->second);
    }
    double p = total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
    if (p == 0.0) {
      if (smoothing == Smoothing::none) zero = true;
      else p = 1e-9;
    }
    result.precisions.push_back(p);
    if (p > 0.0) log_sum += std::log(p);
  }
  result.score = zero ? 0.0 : result.brevity_penalty * std::exp(log_sum / max_order);
  return result;
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeL rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  RougeL out;
  if (candidate.empty() || reference.empty()) return out;
  const double l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0.0) return out;
  out.precision = l / static_cast<double>(candidate.size());
  out.recall = l / static_cast<double>(reference.size());
  out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Greedy alignment: repeatedly fix the longest run of consecutive matchable
// (candidate, reference) pairs, earliest candidate position first.
template <typename Match>
void align_stage(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                 std::vector<int>& cand_to_ref, std::vector<bool>& ref_used, Match match) {
  const int n = static_cast<int>(cand.size());
  const int m = static_cast<int>(ref.size());
  auto ok = [&](int i, int j) {
    return cand_to_ref[static_cast<std::size_t>(i)] < 0 && !ref_used[static_cast<std::size_t>(j)] &&
           match(cand[static_cast<std::size_t>(i)], ref[static_cast<std::size_t>(j)]);
  };
  for (;;) {
    int best_len = 0, best_i = -1, best_j = -1;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        int len = 0;
        while (i + len < n && j + len < m && ok(i + len, j + len)) ++len;
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    if (best_len == 0) return;
    for (int t = 0; t < best_len; ++t) {
      cand_to_ref[static_cast<std::size_t>(best_i + t)] = best_j + t;
      ref_used[static_cast<std::size_t>(best_j + t)] = true;
    }
  }
}

}  // namespace

MeteorResult meteor(const TokenSequence& candidate, const TokenSequence& reference, const MeteorParams& params) {
  MeteorResult out;
  if (candidate.empty() || reference.empty()) return out;
  const auto& cand = candidate.tokens();
  const auto& ref = reference.tokens();
  std::vector<int> cand_to_ref(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  align_stage(cand, ref, cand_to_ref, ref_used, [](const std::string& a, const std::string& b) { return a == b; });
  std::vector<std::string> cand_stems, ref_stems;
  for (const auto& t : cand) cand_stems.push_back(porter_stem(t));
  for (const auto& t : ref) ref_stems.push_back(porter_stem(t));
  align_stage(cand_stems, ref_stems, cand_to_ref, ref_used,
              [](const std::string& a, const std::string& b) { return a == b; });

  int previous = -2;
  for (int target : cand_to_ref) {
    if (target < 0) continue;
    ++out.matches;
    if (target != previous + 1) ++out.chunks;
    previous = target;
  }
  if (out.matches == 0) return out;

  const double m = static_cast<double>(out.matches);
  out.precision = m / static_cast<double>(cand.size());
  out.recall = m / static_cast<double>(ref.size());
  out.fmean = out.precision * out.recall / (params.alpha * out.precision + (1.0 - params.alpha) * out.recall);
  out.penalty = params.gamma * std::pow(static_cast<double>(out.chunks) / m, params.beta);
  out.score = out.fmean * (1.0 - out.penalty);
  return out;
}

// ---------------------------------------------------------------------------

NgramReport score_pair(std::string_view candidate, std::span<const std::string> references, Smoothing smoothing) {
  if (references.empty()) throw input_error("n-gram scoring needs at least one reference");
  const TokenSequence cand = tokenize(candidate);
  std::vector<TokenSequence> refs;
  for (const auto& r : references) refs.push_back(tokenize(r));

  NgramReport report;
  for (int n = 1; n <= 4; ++n) {
    const BleuResult b = bleu(cand, refs, n, smoothing);
    report.bleu[static_cast<std::size_t>(n - 1)] = b.score;
    report.empty_candidate = b.empty_candidate;
  }
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const double f1 = rouge_l(cand, refs[k]).f1;
    if (k == 0 || f1 > report.rouge_l_f1) {
      report.rouge_l_f1 = f1;
      report.best_rouge_reference = k;
    }
    const double met = meteor(cand, refs[k]).score;
    if (k == 0 || met > report.meteor) {
      report.meteor = met;
      report.best_meteor_reference = k;
    }
  }
  return report;
}

std::vector<double> distractor_slot_bleu(std::span<const std::string> generated, std::span<const std::string> gold,
                                         int order, Smoothing smoothing) {
  std::vector<TokenSequence> refs;
  for (const auto& g : gold) refs.push_back(tokenize(g));
  std::vector<double> out;
  for (const auto& d : generated) out.push_back(bleu(tokenize(d), refs, order, smoothing).score);
  return out;
}

double corpus_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace kda::ngram
