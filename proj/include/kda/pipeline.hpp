#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kda/dataset.hpp"
#include "kda/gateway.hpp"
#include "kda/kda.hpp"
#include "kda/metric_table.hpp"
#include "kda/ngram.hpp"

namespace kda {

inline constexpr std::string_view kToolName = "kdaeval";
inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr const char* kCacheDirEnv = "KDA_CACHE_DIR";

struct ForestSettings {
  std::size_t n_trees = 100;
  int max_depth = 2;
  std::size_t folds = 4;
  std::size_t trials = 10;
};

struct AnalysisInputs {
  std::optional<std::string> metrics;  // wide metric CSV; replaces the joins below
  std::optional<std::string> scores;   // long score CSV from `score`
  std::optional<std::string> ngram;    // CSV from `ngram`
  std::optional<std::string> labels;   // JSONL {"item_id", "likert", "flaws"}
  std::optional<std::string> human;    // HumanResponseTable JSON, yields gold_kda
  int bleu_order = 1;                  // which BLEU column feeds "bleu"
};

struct RunConfig {
  // Ingestion
  std::optional<std::string> items;
  std::optional<std::string> facts;
  CorpusFormat format = CorpusFormat::jsonl_native;
  std::optional<DatasetTag> dataset_tag;
  bool preprocess = true;

  // Scoring
  std::vector<SolverRef> solvers;
  PromptTemplate prompt_template;
  TieRule tie_rule = TieRule::lowest_index;
  std::vector<SubmetricSpec> submetrics;  // empty: all solvers
  std::size_t max_in_flight = 8;
  double max_failure_ratio = 0.0;
  int retry_attempts = 3;
  int retry_backoff_ms = 250;
  std::optional<std::string> cache_dir;
  std::optional<std::string> matrix;  // precomputed ResponseMatrix JSON

  // Analysis
  AnalysisInputs analysis;
  ForestSettings forest;
  bool cross_validate = true;
  std::array<double, 3> thresholds{0.0, 1.0, 0.1};  // lo, hi, step

  std::uint64_t seed = 0;
  std::string output_dir = "out";

  /// Missing keys keep defaults; unknown keys are an input error.
  static RunConfig from_json(const std::string& text);
  std::string to_json() const;
  /// sha256 of the canonical JSON form.
  std::string hash() const;
};

RunConfig load_run_config(const std::string& path);

/// Written next to every run's outputs. No timestamps: equal manifests mean
/// equal outputs.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // file name -> sha256

  std::string to_json() const;
};

struct ScoreOutputs {
  std::vector<ScoreRow> rows;
  CompletenessReport report;
  CorpusManifest corpus;
  RunManifest manifest;
};

/// Ingest, collect (or load) the response matrix, score. Writes scores.csv,
/// scores.jsonl, matrix.json, completeness.json, corpus_manifest.json and
/// manifest.json into output_dir.
ScoreOutputs run_score(const RunConfig& config);

/// Joins the analysis inputs into one table keyed by item id. Score-table
/// columns are named "kda_cont"/"kda_disc" for the all-solver subset and
/// "kda_cont:<label>" otherwise.
stats::MetricTable assemble_metric_table(const AnalysisInputs& inputs);

/// Correlations with stars, CV table, acceptance curve and flaw regressions.
RunManifest run_correlate(const RunConfig& config);

/// Acceptance-curve table plus per-item drill-down; returns the rendered text.
std::string run_report(const RunConfig& config);

/// One drill-down line: item, metrics, labels, optional question text.
std::string drilldown_line(const std::string& item_id, const stats::MetricTable& table, Eigen::Index row,
                           const std::string* stem = nullptr);

// ---------------------------------------------------------------------------
// ngram

struct NgramRecord {
  std::string item_id;
  ngram::NgramReport report;
};

/// JSONL input, one record per line, either
///   {"item_id", "candidate", "references": [...]}  or
///   {"item_id", "generated": [...], "gold": [...]}  (slot-averaged).
std::vector<NgramRecord> score_ngram_file(const std::string& path, ngram::Smoothing smoothing);
std::string ngram_csv(const std::vector<NgramRecord>& records, bool percent = false);

// ---------------------------------------------------------------------------
// simulate

struct SimulateConfig {
  std::size_t n_questions = 200;
  std::size_t n_students = 500;
  std::size_t n_solvers = 20;
  double dependence_min = 0.0;
  double dependence_max = 1.0;
  std::size_t n_options = 4;
  double student_noise = 0.05;
  double solver_noise = 0.05;
  double solver_idiosyncrasy = 1.0;
  double solver_miscalibration = 0.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string output_dir = "sim";
};

/// Writes items.jsonl, facts.jsonl, matrix.json, human.json, labels.jsonl,
/// ground_truth.csv and manifest.json.
RunManifest run_simulate(const SimulateConfig& config);

// ---------------------------------------------------------------------------
// kappa / validate

/// CSV with one column per rater (an optional item_id column is ignored).
/// Writes nothing; returns the pairwise table as CSV text.
struct KappaSummary {
  double mean = 0.0;
  std::vector<std::string> raters;
  std::vector<std::array<std::string, 2>> pairs;
  std::vector<double> values;
  std::string csv() const;
};
KappaSummary kappa_from_csv(const std::string& path);

struct ValidationReport {
  std::size_t items = 0;
  std::size_t facts = 0;
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};
ValidationReport validate_files(const std::optional<std::string>& items_path,
                                const std::optional<std::string>& facts_path);

}  // namespace kda
