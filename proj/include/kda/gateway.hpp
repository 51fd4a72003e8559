#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kda/model.hpp"
#include "kda/response_matrix.hpp"

namespace kda {

enum class ProbeCondition { without_fact, with_fact };
std::string_view to_string(ProbeCondition condition);

/// Prompt rendering. Placeholders: {fact}, {stem}, {options}. Options are sent
/// to solvers structurally, so the default templates leave {options} out.
struct PromptTemplate {
  std::string id = "default";
  std::string question_only = "{stem}";
  std::string fact_prefixed = "{fact}\n{stem}";

  std::string render(const std::string& stem, std::span<const std::string> options,
                     const std::string* fact) const;
};

/// One scored query. `answer_index` never goes on the wire; only mock
/// profiles consult it.
struct Probe {
  std::string item_id;
  ProbeCondition condition = ProbeCondition::without_fact;
  std::string stem;
  std::optional<std::string> fact;
  std::vector<std::string> options;
  std::string rendered_text;
  std::size_t answer_index = 0;
};

/// Throws input error "fact mismatch" when fact->id != item.fact_id.
Probe build_probe(const McqItem& item, const Fact* fact, const PromptTemplate& tmpl);

/// A validated distribution over a question's options.
class OptionDistribution {
 public:
  static constexpr double kSumTolerance = 1e-6;

  /// Throws Error(backend, "protocol violation: ...") on bad input.
  static OptionDistribution make(std::vector<double> probs,
                                 std::optional<std::vector<double>> raw_scores = std::nullopt,
                                 std::optional<std::size_t> expected_options = std::nullopt);
  static OptionDistribution uniform(std::size_t n_options);
  static OptionDistribution point_mass(std::size_t n_options, std::size_t index);

  std::span<const double> probs() const { return probs_; }
  const std::optional<std::vector<double>>& raw_scores() const { return raw_scores_; }
  std::size_t size() const { return probs_.size(); }

  friend bool operator==(const OptionDistribution&, const OptionDistribution&) = default;

 private:
  std::vector<double> probs_;
  std::optional<std::vector<double>> raw_scores_;
};

enum class TieRule { lowest_index, highest_index, ties_incorrect };
TieRule parse_tie_rule(std::string_view text);

struct Correctness {
  int binary = 0;
  double p_correct = 0.0;
};

/// Argmax over raw scores when present, else probabilities.
Correctness correctness(const OptionDistribution& dist, std::size_t answer_index,
                        TieRule tie_rule = TieRule::lowest_index);

// ---------------------------------------------------------------------------
// Backends

class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual OptionDistribution score(const Probe& probe) = 0;
  /// True when scoring performs network I/O.
  virtual bool remote() const = 0;
};

using MockProfile = std::function<OptionDistribution(const Probe&)>;

/// Built-in profiles: uniform, oracle, adversary, knows-only-with-fact, hash.
void register_mock_profile(const std::string& name, MockProfile profile);
bool has_mock_profile(const std::string& name);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds connect_timeout{5};
  std::chrono::seconds read_timeout{120};
};

std::unique_ptr<SolverBackend> make_backend(const SolverRef& solver, const RetryPolicy& retry);

struct ModelInfo {
  std::string name;
  std::optional<std::int64_t> size_bytes;
};

/// GET {endpoint}/v1/models.
std::vector<ModelInfo> list_models(const std::string& endpoint, const RetryPolicy& retry = {});

/// Wire encoding of a probe (the /v1/score request body).
std::string score_request_body(const Probe& probe);
/// Parses and validates a /v1/score response body.
OptionDistribution parse_score_response(const std::string& body, std::size_t n_options);

// ---------------------------------------------------------------------------
// Cache

/// Content hash of (solver name, rendered probe, options).
std::string cache_key(const std::string& solver_name, const Probe& probe);

/// Thread-safe probe cache, optionally persisted as an append-only JSONL file.
/// A truncated trailing record (interrupted write) is ignored on load.
class ProbeCache {
 public:
  ProbeCache() = default;
  explicit ProbeCache(std::string path);

  std::optional<OptionDistribution> lookup(const std::string& key) const;
  void store(const std::string& key, const std::string& solver_name, const OptionDistribution& dist);
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, OptionDistribution> entries_;
};

// ---------------------------------------------------------------------------
// Gateway

class SolverPool {
 public:
  SolverPool() = default;
  explicit SolverPool(std::vector<SolverRef> solvers);  // throws on duplicate names

  const std::vector<SolverRef>& solvers() const { return solvers_; }
  const SolverRef& at(const std::string& name) const;
  std::size_t size() const { return solvers_.size(); }

 private:
  std::vector<SolverRef> solvers_;
};

class FactStore {
 public:
  FactStore() = default;
  explicit FactStore(const std::vector<Fact>& facts);

  const Fact* find(const std::string& id) const;
  std::size_t size() const { return facts_.size(); }

 private:
  std::unordered_map<std::string, Fact> facts_;
};

struct GatewayConfig {
  PromptTemplate prompt_template;
  /// Per solver family_tag overrides.
  std::map<std::string, PromptTemplate> family_templates;
  TieRule tie_rule = TieRule::lowest_index;
  RetryPolicy retry;
  std::size_t max_in_flight = 8;
  /// Largest tolerated fraction of failed cells before aborting.
  double max_failure_ratio = 0.0;

  const PromptTemplate& template_for(const SolverRef& solver) const;
};

struct CellFailure {
  std::string solver;
  std::string item;
  ProbeCondition condition;
  std::string message;
};

struct CompletenessReport {
  std::size_t cells = 0;
  std::size_t failed_cells = 0;
  std::size_t probes = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t remote_calls = 0;
  std::vector<CellFailure> failures;

  double failure_ratio() const { return cells == 0 ? 0.0 : double(failed_cells) / double(cells); }
  std::string to_json() const;
};

struct CollectedMatrix {
  ResponseMatrix matrix;
  CompletenessReport report;
};

class SolverGateway {
 public:
  SolverGateway(GatewayConfig config, std::shared_ptr<ProbeCache> cache);

  /// Cache-through scoring of one probe.
  OptionDistribution score_options(const SolverRef& solver, const Probe& probe);

  /// Scores every (solver, item) pair with and without its fact. Throws
  /// Error(incomplete_matrix) when the failure ratio exceeds the configured
  /// bound; otherwise failed cells are masked out and listed in the report.
  CollectedMatrix collect_matrix(const std::vector<McqItem>& items, const FactStore& facts,
                                 const SolverPool& pool);

  const GatewayConfig& config() const { return config_; }
  const ProbeCache& cache() const { return *cache_; }

 private:
  SolverBackend& backend_for(const SolverRef& solver);

  GatewayConfig config_;
  std::shared_ptr<ProbeCache> cache_;
  std::mutex backends_mutex_;
  std::map<std::string, std::unique_ptr<SolverBackend>> backends_;
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> remote_calls_{0};
};

}  // namespace kda
