// kdaeval: command-line front end for scoring, simulation and analysis.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kda/csv.hpp"
#include "kda/error.hpp"
#include "kda/pipeline.hpp"

namespace {

using kda::RunConfig;

// Options that override config-file values when given.
struct Overrides {
  std::optional<std::string> config, items, facts, format, dataset_tag, cache_dir, matrix, out, tie_rule;
  std::vector<std::string> solvers, submetrics;
  std::optional<std::size_t> max_in_flight;
  std::optional<double> max_failure_ratio;
  std::optional<std::uint64_t> seed;
  bool no_preprocess = false;

  std::optional<std::string> metrics, scores, ngram, labels, human;
  std::optional<int> bleu_order, max_depth;
  std::optional<std::size_t> n_trees, folds, trials;
  bool no_cv = false;
};

void add_config(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Random seed");
}

void add_ingest(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--items", o.items, "Item file");
  cmd->add_option("--facts", o.facts, "Fact file (jsonl_native)");
  cmd->add_option("--format", o.format, "jsonl_native | obqa_like | sciq_like | tabmcq_like");
  cmd->add_option("--dataset-tag", o.dataset_tag, "OBQA | TabMCQ | SciQ | custom");
}

void add_analysis(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--metrics", o.metrics, "Wide metric CSV");
  cmd->add_option("--scores", o.scores, "Score table from `score`");
  cmd->add_option("--ngram", o.ngram, "CSV from `ngram`");
  cmd->add_option("--labels", o.labels, "Quality label JSONL");
  cmd->add_option("--human", o.human, "Human response table JSON (gold KDA)");
  cmd->add_option("--bleu-order", o.bleu_order, "BLEU order used as the bleu feature")->check(CLI::Range(1, 4));
}

std::optional<kda::SolverRef> parse_solver(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) return std::nullopt;
  kda::SolverRef ref;
  ref.name = text.substr(0, eq);
  ref.endpoint = text.substr(eq + 1);
  return ref;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config ? kda::load_run_config(*o.config) : RunConfig{};
  if (o.items) c.items = o.items;
  if (o.facts) c.facts = o.facts;
  if (o.format) c.format = kda::parse_corpus_format(*o.format);
  if (o.dataset_tag) c.dataset_tag = kda::parse_dataset_tag(*o.dataset_tag);
  if (o.no_preprocess) c.preprocess = false;
  if (!o.solvers.empty()) {
    c.solvers.clear();
    for (const auto& s : o.solvers) {
      auto ref = parse_solver(s);
      if (!ref) throw kda::input_error("--solver expects name=endpoint, got '" + s + "'");
      c.solvers.push_back(*ref);
    }
  }
  if (!o.submetrics.empty()) {
    RunConfig parsed = RunConfig::from_json(nlohmann::json({{"submetrics", o.submetrics}}).dump());
    c.submetrics = parsed.submetrics;
  }
  if (o.tie_rule) c.tie_rule = kda::parse_tie_rule(*o.tie_rule);
  if (o.max_in_flight) c.max_in_flight = *o.max_in_flight;
  if (o.max_failure_ratio) c.max_failure_ratio = *o.max_failure_ratio;
  if (o.cache_dir) c.cache_dir = o.cache_dir;
  if (o.matrix) c.matrix = o.matrix;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.metrics) c.analysis.metrics = o.metrics;
  if (o.scores) c.analysis.scores = o.scores;
  if (o.ngram) c.analysis.ngram = o.ngram;
  if (o.labels) c.analysis.labels = o.labels;
  if (o.human) c.analysis.human = o.human;
  if (o.bleu_order) c.analysis.bleu_order = *o.bleu_order;
  if (o.n_trees) c.forest.n_trees = *o.n_trees;
  if (o.max_depth) c.forest.max_depth = *o.max_depth;
  if (o.folds) c.forest.folds = *o.folds;
  if (o.trials) c.forest.trials = *o.trials;
  if (o.no_cv) c.cross_validate = false;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-dependent answerability scoring for multiple-choice questions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kda::kToolVersion));

  Overrides o;

  auto* score = app.add_subcommand("score", "Probe solvers and write KDA score tables");
  add_config(score, o);
  add_ingest(score, o);
  score->add_option("--solver", o.solvers, "Solver as name=endpoint (http URL or mock:<profile>); repeatable");
  score->add_option("--submetric", o.submetrics, "all | KDA_small | KDA_large; repeatable");
  score->add_option("--tie-rule", o.tie_rule, "lowest_index | highest_index | ties_incorrect");
  score->add_option("--max-in-flight", o.max_in_flight, "Concurrent probe limit");
  score->add_option("--max-failure-ratio", o.max_failure_ratio, "Tolerated share of failed cells");
  score->add_option("--cache-dir", o.cache_dir, "Probe cache directory (default: $KDA_CACHE_DIR)");
  score->add_option("--matrix", o.matrix, "Score a precomputed response matrix instead of probing");
  score->add_flag("--no-preprocess", o.no_preprocess, "Keep items the filters would drop");

  std::string ngram_input;
  std::optional<std::string> ngram_out;
  std::string smoothing = "epsilon";
  bool percent = false;
  auto* ngram = app.add_subcommand("ngram", "BLEU, ROUGE-L and METEOR for candidate/reference JSONL");
  ngram->add_option("input", ngram_input, "JSONL records")->required()->check(CLI::ExistingFile);
  ngram->add_option("-o,--out", ngram_out, "Output CSV (default stdout)");
  ngram->add_option("--smoothing", smoothing, "epsilon | none")->check(CLI::IsMember({"epsilon", "none"}));
  ngram->add_flag("--percent", percent, "Report scores x100");

  kda::SimulateConfig sim;
  auto* simulate = app.add_subcommand("simulate", "Synthetic questions, students and solvers");
  simulate->add_option("--questions", sim.n_questions, "Number of questions");
  simulate->add_option("--students", sim.n_students, "Number of students");
  simulate->add_option("--solvers", sim.n_solvers, "Number of solvers");
  simulate->add_option("--dependence-min", sim.dependence_min, "Lower bound of knowledge dependence");
  simulate->add_option("--dependence-max", sim.dependence_max, "Upper bound of knowledge dependence");
  simulate->add_option("--options", sim.n_options, "Options per question");
  simulate->add_option("--student-noise", sim.student_noise, "Student flip probability");
  simulate->add_option("--solver-noise", sim.solver_noise, "Solver flip probability");
  simulate->add_option("--idiosyncrasy", sim.solver_idiosyncrasy, "Per-question solver logit sd");
  simulate->add_option("--miscalibration", sim.solver_miscalibration, "Solver calibration logit sd");
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--threads", sim.threads, "Worker threads");
  simulate->add_option("-o,--out", sim.output_dir, "Output directory");

  auto* correlate = app.add_subcommand("correlate", "Correlations, cross-validated forests and curves");
  add_config(correlate, o);
  add_analysis(correlate, o);
  correlate->add_option("--n-trees", o.n_trees, "Trees per forest");
  correlate->add_option("--max-depth", o.max_depth, "Tree depth");
  correlate->add_option("--folds", o.folds, "CV folds");
  correlate->add_option("--trials", o.trials, "CV repetitions");
  correlate->add_flag("--no-cv", o.no_cv, "Skip forest cross-validation");

  auto* report = app.add_subcommand("report", "Acceptance curve and per-item drill-down");
  add_config(report, o);
  add_analysis(report, o);
  add_ingest(report, o);

  std::string kappa_input;
  std::optional<std::string> kappa_out;
  auto* kappa = app.add_subcommand("kappa", "Mean pairwise Cohen's kappa over rater columns");
  kappa->add_option("input", kappa_input, "CSV, one column per rater")->required()->check(CLI::ExistingFile);
  kappa->add_option("-o,--out", kappa_out, "Output CSV (default stdout)");

  std::optional<std::string> validate_items, validate_facts;
  auto* validate = app.add_subcommand("validate", "Check canonical item and fact files");
  validate->add_option("--items", validate_items, "Item JSONL");
  validate->add_option("--facts", validate_facts, "Fact JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(kda::ErrorKind::input);
  }

  try {
    if (*score) {
      const auto out = kda::run_score(resolve(o));
      std::size_t defined = 0;
      for (const auto& r : out.rows) defined += r.score.defined();
      std::printf("scored %zu items: %zu rows (%zu defined), %zu probes, %zu cache hits, %zu remote calls\n",
                  out.corpus.kept, out.rows.size(), defined, out.report.probes, out.report.cache_hits,
                  out.report.remote_calls);
    } else if (*ngram) {
      const auto records =
          kda::score_ngram_file(ngram_input, smoothing == "none" ? kda::ngram::Smoothing::none : kda::ngram::Smoothing::epsilon);
      const std::string csv = kda::ngram_csv(records, percent);
      if (ngram_out) kda::write_text(*ngram_out, csv);
      else std::cout << csv;
    } else if (*simulate) {
      kda::run_simulate(sim);
      std::printf("simulated %zu questions, %zu students, %zu solvers into %s\n", sim.n_questions, sim.n_students,
                  sim.n_solvers, sim.output_dir.c_str());
    } else if (*correlate) {
      const RunConfig config = resolve(o);
      kda::run_correlate(config);
      std::cout << kda::read_text(config.output_dir + "/correlation_table.txt");
    } else if (*report) {
      std::cout << kda::run_report(resolve(o));
    } else if (*kappa) {
      const auto summary = kda::kappa_from_csv(kappa_input);
      if (kappa_out) kda::write_text(*kappa_out, summary.csv());
      else std::cout << summary.csv();
    } else if (*validate) {
      const auto r = kda::validate_files(validate_items, validate_facts);
      for (const auto& p : r.problems) std::cerr << p << "\n";
      std::printf("%zu items, %zu facts, %zu problems\n", r.items, r.facts, r.problems.size());
      if (!r.ok()) return static_cast<int>(kda::ErrorKind::input);
    }
  } catch (const kda::Error& e) {
    std::cerr << "kdaeval: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "kdaeval: " << e.what() << "\n";
    return static_cast<int>(kda::ErrorKind::input);
  }
  return 0;
}
