#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kda::ngram {

/// Lowercased, NFC-normalized tokens. Only `tokenize` constructs non-empty
/// sequences, so tokens are never empty.
class TokenSequence {
 public:
  TokenSequence() = default;

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
  friend TokenSequence tokenize(std::string_view text);

 private:
  std::vector<std::string> tokens_;
};

/// Lowercase, NFC, split on Unicode whitespace; leading and trailing
/// punctuation characters of each chunk become their own tokens.
TokenSequence tokenize(std::string_view text);

/// Porter (1980) suffix stripper for lowercase ASCII words. Non-ASCII or
/// short words are returned unchanged.
std::string porter_stem(std::string_view word);

enum class Smoothing { none, epsilon };

struct BleuResult {
  double score = 0.0;
  std::vector<double> precisions;  // one per order, after smoothing
  double brevity_penalty = 0.0;
  bool empty_candidate = false;
};

/// Sentence BLEU: clipped n-gram precisions against all references, uniform
/// geometric mean up to `max_order`, brevity penalty against the shortest
/// reference length. Epsilon smoothing replaces a zero precision by 1e-9.
BleuResult bleu(const TokenSequence& candidate, std::span<const TokenSequence> references,
                int max_order = 4, Smoothing smoothing = Smoothing::epsilon);

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);
RougeL rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct MeteorResult {
  double score = 0.0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
};

/// Exact then Porter-stem unigram alignment, F_mean = P R / (alpha P + (1 - alpha) R),
/// fragmentation penalty gamma (chunks / matches)^beta.
MeteorResult meteor(const TokenSequence& candidate, const TokenSequence& reference,
                    const MeteorParams& params = {});

struct NgramReport {
  std::array<double, 4> bleu{};  // orders 1..4
  double rouge_l_f1 = 0.0;
  double meteor = 0.0;
  bool empty_candidate = false;
  std::size_t best_rouge_reference = 0;
  std::size_t best_meteor_reference = 0;
};

/// Multi-reference report: BLEU clips against all references; ROUGE-L and
/// METEOR take the best single reference.
NgramReport score_pair(std::string_view candidate, std::span<const std::string> references,
                       Smoothing smoothing = Smoothing::epsilon);

/// Scores each generated distractor against the whole gold set as
/// multi-reference BLEU at `order`. One value per generated slot.
std::vector<double> distractor_slot_bleu(std::span<const std::string> generated,
                                         std::span<const std::string> gold, int order = 1,
                                         Smoothing smoothing = Smoothing::epsilon);

/// Plain mean of sentence-level values (0 for an empty list).
double corpus_mean(std::span<const double> values);

}  // namespace kda::ngram
