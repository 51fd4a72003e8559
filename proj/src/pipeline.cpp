#include "kda/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"
#include "kda/digest.hpp"
#include "kda/error.hpp"
#include "kda/forest.hpp"
#include "kda/simulator.hpp"
#include "kda/stats.hpp"

namespace kda {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view tie_rule_name(TieRule rule) {
  switch (rule) {
    case TieRule::lowest_index: return "lowest_index";
    case TieRule::highest_index: return "highest_index";
    case TieRule::ties_incorrect: return "ties_incorrect";
  }
  return "lowest_index";
}

json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> optional_string(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

// Rejects keys outside `allowed` so typos in config files do not pass silently.
void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw input_error(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known |= a == key;
    if (!known) throw input_error("unknown config key '" + where + key + "'");
  }
}

fs::path out_path(const std::string& dir, const char* name) { return fs::path(dir) / name; }

void write_output(RunManifest& manifest, const std::string& dir, const char* name, const std::string& text) {
  write_text(out_path(dir, name).string(), text);
  manifest.outputs[name] = sha256_hex(text);
}

void record_input(RunManifest& manifest, const std::optional<std::string>& path) {
  if (path) manifest.inputs[*path] = sha256_file(*path);
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "undefined";
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, v);
  return buffer;
}

std::string real_or_empty(double v) { return std::isfinite(v) ? format_real(v) : std::string(); }

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

std::string RunConfig::to_json() const {
  json j;
  j["items"] = optional_json(items);
  j["facts"] = optional_json(facts);
  j["format"] = to_string(format);
  j["dataset_tag"] = dataset_tag ? json(to_string(*dataset_tag)) : json(nullptr);
  j["preprocess"] = preprocess;
  json solvers_json = json::array();
  for (const auto& s : solvers) {
    json sj = {{"name", s.name}, {"endpoint", s.endpoint}, {"family_tag", s.family_tag}};
    sj["size_bytes"] = s.size_bytes ? json(*s.size_bytes) : json(nullptr);
    solvers_json.push_back(sj);
  }
  j["solvers"] = solvers_json;
  j["prompt_template"] = {{"id", prompt_template.id},
                          {"question_only", prompt_template.question_only},
                          {"fact_prefixed", prompt_template.fact_prefixed}};
  j["tie_rule"] = tie_rule_name(tie_rule);
  json subsets = json::array();
  for (const auto& s : submetrics) {
    if (s.name != SubmetricName::custom || (s.label == "all" && s.solver_names.empty()))
      subsets.push_back(s.label);
    else
      subsets.push_back({{"label", s.label}, {"solvers", s.solver_names}});
  }
  j["submetrics"] = subsets;
  j["max_in_flight"] = max_in_flight;
  j["max_failure_ratio"] = max_failure_ratio;
  j["retry"] = {{"attempts", retry_attempts}, {"initial_backoff_ms", retry_backoff_ms}};
  j["cache_dir"] = optional_json(cache_dir);
  j["matrix"] = optional_json(matrix);
  j["analysis"] = {{"metrics", optional_json(analysis.metrics)}, {"scores", optional_json(analysis.scores)},
                   {"ngram", optional_json(analysis.ngram)},     {"labels", optional_json(analysis.labels)},
                   {"human", optional_json(analysis.human)},     {"bleu_order", analysis.bleu_order}};
  j["forest"] = {{"n_trees", forest.n_trees}, {"max_depth", forest.max_depth}, {"folds", forest.folds},
                 {"trials", forest.trials}};
  j["cross_validate"] = cross_validate;
  j["thresholds"] = {{"lo", thresholds[0]}, {"hi", thresholds[1]}, {"step", thresholds[2]}};
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw input_error(std::string("config: malformed JSON: ") + e.what());
  }
  check_keys(j,
             {"items", "facts", "format", "dataset_tag", "preprocess", "solvers", "prompt_template", "tie_rule",
              "submetrics", "max_in_flight", "max_failure_ratio", "retry", "cache_dir", "matrix", "analysis",
              "forest", "cross_validate", "thresholds", "seed", "output_dir"},
             "");
  RunConfig c;
  try {
    if (j.contains("items")) c.items = optional_string(j["items"]);
    if (j.contains("facts")) c.facts = optional_string(j["facts"]);
    if (j.contains("format")) c.format = parse_corpus_format(j["format"].get<std::string>());
    if (j.contains("dataset_tag") && !j["dataset_tag"].is_null())
      c.dataset_tag = parse_dataset_tag(j["dataset_tag"].get<std::string>());
    if (j.contains("preprocess")) c.preprocess = j["preprocess"].get<bool>();
    if (j.contains("solvers")) {
      for (const auto& s : j["solvers"]) {
        check_keys(s, {"name", "endpoint", "size_bytes", "family_tag"}, "solvers.");
        SolverRef ref;
        ref.name = s.at("name").get<std::string>();
        ref.endpoint = s.at("endpoint").get<std::string>();
        if (s.contains("size_bytes") && !s["size_bytes"].is_null()) ref.size_bytes = s["size_bytes"].get<std::int64_t>();
        ref.family_tag = s.value("family_tag", std::string());
        c.solvers.push_back(std::move(ref));
      }
    }
    if (j.contains("prompt_template")) {
      const auto& t = j["prompt_template"];
      check_keys(t, {"id", "question_only", "fact_prefixed"}, "prompt_template.");
      c.prompt_template.id = t.value("id", c.prompt_template.id);
      c.prompt_template.question_only = t.value("question_only", c.prompt_template.question_only);
      c.prompt_template.fact_prefixed = t.value("fact_prefixed", c.prompt_template.fact_prefixed);
    }
    if (j.contains("tie_rule")) c.tie_rule = parse_tie_rule(j["tie_rule"].get<std::string>());
    if (j.contains("submetrics")) {
      for (const auto& s : j["submetrics"]) {
        if (s.is_string()) {
          const auto label = s.get<std::string>();
          if (label == "KDA_small") c.submetrics.push_back(SubmetricSpec::kda_small());
          else if (label == "KDA_large") c.submetrics.push_back(SubmetricSpec::kda_large());
          else if (label == "all") c.submetrics.push_back(SubmetricSpec::custom("all", {}));
          else throw input_error("unknown sub-metric '" + label + "'");
        } else {
          check_keys(s, {"label", "solvers"}, "submetrics.");
          c.submetrics.push_back(
              SubmetricSpec::custom(s.at("label").get<std::string>(), s.at("solvers").get<std::vector<std::string>>()));
        }
      }
    }
    if (j.contains("max_in_flight")) c.max_in_flight = j["max_in_flight"].get<std::size_t>();
    if (j.contains("max_failure_ratio")) c.max_failure_ratio = j["max_failure_ratio"].get<double>();
    if (j.contains("retry")) {
      check_keys(j["retry"], {"attempts", "initial_backoff_ms"}, "retry.");
      c.retry_attempts = j["retry"].value("attempts", c.retry_attempts);
      c.retry_backoff_ms = j["retry"].value("initial_backoff_ms", c.retry_backoff_ms);
    }
    if (j.contains("cache_dir")) c.cache_dir = optional_string(j["cache_dir"]);
    if (j.contains("matrix")) c.matrix = optional_string(j["matrix"]);
    if (j.contains("analysis")) {
      const auto& a = j["analysis"];
      check_keys(a, {"metrics", "scores", "ngram", "labels", "human", "bleu_order"}, "analysis.");
      if (a.contains("metrics")) c.analysis.metrics = optional_string(a["metrics"]);
      if (a.contains("scores")) c.analysis.scores = optional_string(a["scores"]);
      if (a.contains("ngram")) c.analysis.ngram = optional_string(a["ngram"]);
      if (a.contains("labels")) c.analysis.labels = optional_string(a["labels"]);
      if (a.contains("human")) c.analysis.human = optional_string(a["human"]);
      c.analysis.bleu_order = a.value("bleu_order", c.analysis.bleu_order);
    }
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      check_keys(f, {"n_trees", "max_depth", "folds", "trials"}, "forest.");
      c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
      c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
      c.forest.folds = f.value("folds", c.forest.folds);
      c.forest.trials = f.value("trials", c.forest.trials);
    }
    if (j.contains("cross_validate")) c.cross_validate = j["cross_validate"].get<bool>();
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      check_keys(t, {"lo", "hi", "step"}, "thresholds.");
      c.thresholds = {t.value("lo", 0.0), t.value("hi", 1.0), t.value("step", 0.1)};
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw input_error(std::string("config: ") + e.what());
  }
  if (c.analysis.bleu_order < 1 || c.analysis.bleu_order > 4) throw input_error("config: bleu_order must be 1..4");
  return c;
}

std::string RunConfig::hash() const { return sha256_hex(to_json()); }

RunConfig load_run_config(const std::string& path) { return RunConfig::from_json(read_text(path)); }

std::string RunManifest::to_json() const {
  json j = {{"tool", kToolName},  {"version", kToolVersion}, {"command", command},
            {"config_hash", config_hash}, {"inputs", inputs}, {"outputs", outputs}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// score

ScoreOutputs run_score(const RunConfig& config) {
  if (!config.items) throw input_error("no input: items path not set");
  LoadedCorpus corpus = load_corpus(*config.items, config.format, config.dataset_tag, config.facts);
  if (corpus.items.empty()) throw input_error("no input: " + *config.items + " holds no items");

  ScoreOutputs out;
  out.corpus.source_path = *config.items;
  out.corpus.dataset_tag = std::string(to_string(config.dataset_tag.value_or(
      corpus.facts.empty() ? DatasetTag::custom : corpus.facts.front().dataset_tag)));
  out.corpus.raw = corpus.items.size();
  out.corpus.flagged_distractor_count = corpus.flagged.size();
  out.corpus.split_strategy = "none";
  out.corpus.seed = config.seed;
  std::vector<McqItem> items = corpus.items;
  if (config.preprocess) {
    Preprocessed p = preprocess(items);
    out.corpus.filtered_by_rule = p.filtered_by_rule;
    items = std::move(p.kept);
    out.corpus.notes.push_back("of-the-above rule checks the stem and every option");
  }
  out.corpus.kept = items.size();
  if (items.empty()) throw input_error("no input: every item was filtered out");

  ResponseMatrix matrix;
  if (config.matrix) {
    matrix = read_matrix_json(*config.matrix);
  } else {
    if (config.solvers.empty()) throw input_error("no solvers configured");
    GatewayConfig gc;
    gc.prompt_template = config.prompt_template;
    gc.tie_rule = config.tie_rule;
    gc.retry.attempts = config.retry_attempts;
    gc.retry.initial_backoff = std::chrono::milliseconds(config.retry_backoff_ms);
    gc.max_in_flight = config.max_in_flight;
    gc.max_failure_ratio = config.max_failure_ratio;

    std::optional<std::string> cache_dir = config.cache_dir;
    if (!cache_dir)
      if (const char* env = std::getenv(kCacheDirEnv); env && *env) cache_dir = env;
    std::shared_ptr<ProbeCache> cache;
    if (cache_dir) {
      fs::create_directories(*cache_dir);
      cache = std::make_shared<ProbeCache>((fs::path(*cache_dir) / "probes.jsonl").string());
    }
    SolverGateway gateway(gc, cache);
    CollectedMatrix collected = gateway.collect_matrix(items, FactStore(corpus.facts), SolverPool(config.solvers));
    matrix = std::move(collected.matrix);
    out.report = std::move(collected.report);
  }

  std::vector<SubmetricSpec> subsets;
  for (const auto& s : config.submetrics)
    subsets.push_back(s.label == "all" && s.solver_names.empty() ? SubmetricSpec::all(matrix) : s);
  std::vector<std::string> ids;
  for (const auto& item : items) ids.push_back(item.id);
  out.rows = score_batch(matrix, ids, subsets);

  fs::create_directories(config.output_dir);
  out.manifest.command = "score";
  out.manifest.config_hash = config.hash();
  record_input(out.manifest, config.items);
  record_input(out.manifest, config.facts);
  record_input(out.manifest, config.matrix);
  write_output(out.manifest, config.output_dir, "scores.csv", score_table_csv(out.rows));
  write_output(out.manifest, config.output_dir, "scores.jsonl", score_table_jsonl(out.rows));
  write_output(out.manifest, config.output_dir, "matrix.json", to_json(matrix));
  write_output(out.manifest, config.output_dir, "corpus_manifest.json", out.corpus.to_json());
  // Cache hit counts legitimately differ between cold and warm runs, so the
  // completeness report stays out of the output hashes.
  write_text(out_path(config.output_dir, "completeness.json").string(), out.report.to_json() + "\n");
  write_text(out_path(config.output_dir, "manifest.json").string(), out.manifest.to_json());
  return out;
}

// ---------------------------------------------------------------------------
// Analysis inputs

stats::MetricTable assemble_metric_table(const AnalysisInputs& inputs) {
  std::vector<std::string> item_order;
  std::set<std::string> known;
  std::vector<std::string> columns;
  std::map<std::string, std::map<std::string, double>> values;  // column -> item -> value
  auto add_item = [&](const std::string& id) {
    if (known.insert(id).second) item_order.push_back(id);
  };
  auto set_value = [&](const std::string& column, const std::string& id, double v) {
    if (!values.contains(column)) columns.push_back(column);
    values[column][id] = v;
  };

  std::optional<stats::MetricTable> base;
  if (inputs.metrics) {
    base = stats::metric_table_from_csv(read_csv(*inputs.metrics));
    for (Eigen::Index i = 0; i < base->rows(); ++i) {
      const auto& id = base->item_ids[static_cast<std::size_t>(i)];
      add_item(id);
      for (std::size_t c = 0; c < base->metric_names.size(); ++c)
        set_value(base->metric_names[c], id, base->metrics(i, static_cast<Eigen::Index>(c)));
    }
  }
  if (inputs.scores) {
    for (const auto& row : parse_score_table_csv(read_text(*inputs.scores))) {
      add_item(row.item_id);
      std::string column = "kda_" + std::string(to_string(row.kind));
      if (row.subset != "all") column += ":" + row.subset;
      set_value(column, row.item_id, row.score.value.value_or(kNaN));
    }
  }
  if (inputs.ngram) {
    const CsvTable csv = read_csv(*inputs.ngram);
    const auto c_id = csv.require_column("item_id");
    const auto c_bleu = csv.require_column("bleu" + std::to_string(inputs.bleu_order));
    const auto c_rouge = csv.require_column("rouge_l");
    const auto c_meteor = csv.require_column("meteor");
    for (const auto& row : csv.rows) {
      add_item(row[c_id]);
      auto num = [&](std::size_t c) { return parse_real(row[c]).value_or(kNaN); };
      set_value("bleu", row[c_id], num(c_bleu));
      set_value("rouge_l", row[c_id], num(c_rouge));
      set_value("meteor", row[c_id], num(c_meteor));
    }
  }
  if (item_order.empty()) throw input_error("no input: no metric source (metrics, scores or ngram) given");

  stats::MetricTable table = stats::MetricTable::empty(item_order, columns);
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (const auto& [id, v] : values[columns[c]])
      table.metrics(static_cast<Eigen::Index>(std::find(item_order.begin(), item_order.end(), id) - item_order.begin()),
                    static_cast<Eigen::Index>(c)) = v;

  std::map<std::string, Eigen::Index> row_of;
  for (std::size_t i = 0; i < item_order.size(); ++i) row_of[item_order[i]] = static_cast<Eigen::Index>(i);
  if (base) {
    for (Eigen::Index i = 0; i < base->rows(); ++i) {
      const Eigen::Index r = row_of.at(base->item_ids[static_cast<std::size_t>(i)]);
      table.labels[static_cast<std::size_t>(r)] = base->labels[static_cast<std::size_t>(i)];
      table.gold_kda(r) = base->gold_kda(i);
    }
  }
  if (inputs.labels) {
    std::ifstream in(*inputs.labels);
    if (!in) throw input_error("cannot open " + *inputs.labels);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        const auto id = j.at("item_id").get<std::string>();
        if (auto it = row_of.find(id); it != row_of.end())
          table.labels[static_cast<std::size_t>(it->second)] = decode_labels(line);
      } catch (const json::exception& e) {
        throw input_error(*inputs.labels + ":" + std::to_string(line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw input_error(*inputs.labels + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  if (inputs.human) {
    const HumanResponseTable human = read_human_table_json(*inputs.human);
    for (const auto& id : human.items)
      if (auto it = row_of.find(id); it != row_of.end())
        table.gold_kda(it->second) = kda_human(human, id).value.value_or(kNaN);
  }
  table.check();
  return table;
}

namespace {

void record_analysis_inputs(RunManifest& manifest, const AnalysisInputs& a) {
  record_input(manifest, a.metrics);
  record_input(manifest, a.scores);
  record_input(manifest, a.ngram);
  record_input(manifest, a.labels);
  record_input(manifest, a.human);
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string acceptance_csv(const std::vector<stats::AcceptancePoint>& curve) {
  CsvTable csv;
  csv.header = {"threshold", "acceptance_rate", "support", "accepted"};
  for (const auto& p : curve)
    csv.rows.push_back({format_real(p.threshold), p.rate ? format_real(*p.rate) : "", std::to_string(p.support),
                        std::to_string(p.accepted)});
  return csv.to_string();
}

std::vector<bool> accept_flags(const stats::MetricTable& table, Eigen::ArrayXd& scores) {
  std::vector<bool> accept(static_cast<std::size_t>(table.rows()), false);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const auto& l = table.labels[static_cast<std::size_t>(i)];
    if (l) accept[static_cast<std::size_t>(i)] = l->accept();
    else scores(i) = kNaN;  // unlabeled items stay out of the curve
  }
  return accept;
}

}  // namespace

RunManifest run_correlate(const RunConfig& config) {
  const stats::MetricTable table = assemble_metric_table(config.analysis);
  std::vector<std::string> targets;
  if (table.has_gold()) targets.push_back("gold_kda");
  if (table.has_labels()) targets.push_back("likert");
  if (targets.empty())
    throw analysis_error("missing gold column: need 'gold_kda' (human responses) or 'likert' (labels)");

  RunManifest manifest;
  manifest.command = "correlate";
  manifest.config_hash = config.hash();
  record_analysis_inputs(manifest, config.analysis);
  fs::create_directories(config.output_dir);

  CsvTable corr;
  corr.header = {"metric", "target", "r", "p_value", "n", "dropped", "starred", "error"};
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& metric : table.metric_names) {
    for (const auto& target : targets) {
      try {
        const auto r = stats::pearson(table.metric(metric), table.target(target));
        const std::string starred = stats::format_starred(r.r, r.p_value);
        cells[{metric, target}] = starred;
        corr.rows.push_back({metric, target, format_real(r.r), format_real(r.p_value), std::to_string(r.n),
                             std::to_string(r.dropped), starred, ""});
      } catch (const Error& e) {
        cells[{metric, target}] = "n/a";
        corr.rows.push_back({metric, target, "", "", "", "", "", e.what()});
      }
    }
  }
  write_output(manifest, config.output_dir, "correlations.csv", corr.to_string());

  std::size_t width = 8;
  for (const auto& m : table.metric_names) width = std::max(width, m.size() + 2);
  std::string pretty = pad("", width);
  for (const auto& t : targets) pretty += pad(t, 12);
  pretty += "\n";
  for (const auto& m : table.metric_names) {
    pretty += pad(m, width);
    for (const auto& t : targets) pretty += pad(cells[{m, t}], 12);
    pretty += "\n";
  }
  pretty += "* p < 0.05, ** p < 0.01 (two-tailed)\n";
  write_output(manifest, config.output_dir, "correlation_table.txt", pretty);

  if (table.has_labels() && config.cross_validate) {
    CsvTable cv;
    cv.header = {"target", "feature_set", "mean_test_pearson", "std", "rows", "dropped_rows", "degenerate_trials",
                 "error"};
    stats::CvProtocol protocol;
    protocol.folds = config.forest.folds;
    protocol.trials = config.forest.trials;
    protocol.seed = config.seed;
    protocol.forest.n_trees = config.forest.n_trees;
    protocol.forest.max_depth = config.forest.max_depth;
    for (const char* target :
         {"likert", "accept", "irrelevancy", "low_readability", "multiple_answers", "wrong_answer"}) {
      for (auto set : {stats::FeatureSet::kda_only, stats::FeatureSet::combined, stats::FeatureSet::others_only}) {
        try {
          const auto r = stats::cv_correlation(table, set, target, protocol);
          cv.rows.push_back({target, std::string(stats::to_string(set)), format_real(r.mean_test_pearson),
                             format_real(r.std), std::to_string(r.rows), std::to_string(r.dropped_rows),
                             std::to_string(r.degenerate_trials), ""});
        } catch (const Error& e) {
          cv.rows.push_back({target, std::string(stats::to_string(set)), "", "", "", "", "", e.what()});
        }
      }
    }
    write_output(manifest, config.output_dir, "cv.csv", cv.to_string());
  }

  if (table.has_labels() && table.metric_index("kda_cont")) {
    Eigen::ArrayXd scores = table.metric("kda_cont");
    const std::vector<bool> accept = accept_flags(table, scores);
    const auto grid = stats::threshold_grid(config.thresholds[0], config.thresholds[1], config.thresholds[2]);
    write_output(manifest, config.output_dir, "acceptance_curve.csv",
                 acceptance_csv(stats::acceptance_curve(scores, accept, grid)));

    CsvTable reg, band;
    reg.header = {"target", "slope", "intercept", "r2", "n", "error"};
    band.header = {"target", "x", "fit", "lower", "upper"};
    std::vector<std::pair<std::string, std::optional<Flaw>>> flaw_targets{{"flaw_count", std::nullopt}};
    for (Flaw f : kAllFlaws) flaw_targets.emplace_back(std::string(to_string(f)), f);
    for (const auto& [name, flaw] : flaw_targets) {
      Eigen::ArrayXd y(table.rows());
      for (Eigen::Index i = 0; i < table.rows(); ++i) {
        const auto& l = table.labels[static_cast<std::size_t>(i)];
        y(i) = !l ? kNaN : flaw ? l->flaw_count(*flaw) : l->total_flaws();
      }
      try {
        const auto fit = stats::linear_regression(table.metric("kda_cont"), y);
        reg.rows.push_back({name, format_real(fit.slope), format_real(fit.intercept), format_real(fit.r2),
                            std::to_string(fit.n), ""});
        for (const auto& p : fit.band(grid))
          band.rows.push_back(
              {name, format_real(p.x), format_real(p.fit), format_real(p.lower), format_real(p.upper)});
      } catch (const Error& e) {
        reg.rows.push_back({name, "", "", "", "", e.what()});
      }
    }
    write_output(manifest, config.output_dir, "regression.csv", reg.to_string());
    write_output(manifest, config.output_dir, "regression_band.csv", band.to_string());
  }

  write_text(out_path(config.output_dir, "manifest.json").string(), manifest.to_json());
  return manifest;
}

// ---------------------------------------------------------------------------
// report

std::string drilldown_line(const std::string& item_id, const stats::MetricTable& table, Eigen::Index row,
                           const std::string* stem) {
  std::string line = item_id;
  for (std::size_t c = 0; c < table.metric_names.size(); ++c)
    line += " | " + table.metric_names[c] + " " + fixed(table.metrics(row, static_cast<Eigen::Index>(c)), 2);
  if (const auto& l = table.labels[static_cast<std::size_t>(row)]) {
    line += " | likert " + fixed(l->likert(), 2) + " | accept " + (l->accept() ? "yes" : "no");
    std::string flaws;
    for (Flaw f : kAllFlaws)
      if (l->flaw_count(f) > 0) flaws += (flaws.empty() ? "" : ",") + std::string(to_string(f)) + "=" +
                                         std::to_string(l->flaw_count(f));
    line += " | flaws " + (flaws.empty() ? std::string("none") : flaws);
  }
  if (std::isfinite(table.gold_kda(row))) line += " | gold_kda " + fixed(table.gold_kda(row), 2);
  if (stem) line += " | \"" + *stem + "\"";
  return line;
}

std::string run_report(const RunConfig& config) {
  const stats::MetricTable table = assemble_metric_table(config.analysis);
  if (!table.has_labels()) throw analysis_error("report needs labels: missing column 'likert'");
  if (!table.metric_index("kda_cont")) throw analysis_error("report needs scores: missing column 'kda_cont'");

  std::map<std::string, std::string> stems;
  if (config.items) {
    for (const auto& item : load_corpus(*config.items, config.format, config.dataset_tag, config.facts).items)
      stems[item.id] = item.stem;
  }

  RunManifest manifest;
  manifest.command = "report";
  manifest.config_hash = config.hash();
  record_analysis_inputs(manifest, config.analysis);
  record_input(manifest, config.items);
  fs::create_directories(config.output_dir);

  Eigen::ArrayXd scores = table.metric("kda_cont");
  const std::vector<bool> accept = accept_flags(table, scores);
  const auto grid = stats::threshold_grid(config.thresholds[0], config.thresholds[1], config.thresholds[2]);
  const auto curve = stats::acceptance_curve(scores, accept, grid);

  std::string text = "Acceptance rate by kda_cont threshold\n";
  text += pad("threshold", 12) + pad("rate", 10) + "support\n";
  for (const auto& p : curve)
    text += pad(fixed(p.threshold, 2), 12) + pad(p.rate ? fixed(*p.rate, 3) : "undefined", 10) +
            std::to_string(p.support) + "\n";
  text += "\nItems\n";
  CsvTable drill;
  drill.header = {"item_id"};
  for (const auto& m : table.metric_names) drill.header.push_back(m);
  drill.header.insert(drill.header.end(), {"likert", "accept", "flaw_count", "gold_kda", "stem"});
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const auto& id = table.item_ids[static_cast<std::size_t>(i)];
    auto it = stems.find(id);
    text += drilldown_line(id, table, i, it == stems.end() ? nullptr : &it->second) + "\n";
    std::vector<std::string> row{id};
    for (Eigen::Index c = 0; c < table.metrics.cols(); ++c) row.push_back(real_or_empty(table.metrics(i, c)));
    const auto& l = table.labels[static_cast<std::size_t>(i)];
    row.push_back(l ? format_real(l->likert()) : "");
    row.push_back(l ? (l->accept() ? "true" : "false") : "");
    row.push_back(l ? std::to_string(l->total_flaws()) : "");
    row.push_back(real_or_empty(table.gold_kda(i)));
    row.push_back(it == stems.end() ? "" : it->second);
    drill.rows.push_back(std::move(row));
  }

  write_output(manifest, config.output_dir, "report.txt", text);
  write_output(manifest, config.output_dir, "acceptance_curve.csv", acceptance_csv(curve));
  write_output(manifest, config.output_dir, "drilldown.csv", drill.to_string());
  write_text(out_path(config.output_dir, "manifest.json").string(), manifest.to_json());
  return text;
}

// ---------------------------------------------------------------------------
// ngram

std::vector<NgramRecord> score_ngram_file(const std::string& path, ngram::Smoothing smoothing) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open " + path);
  std::vector<NgramRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      NgramRecord record;
      record.item_id = j.value("item_id", j.value("id", std::to_string(line_no)));
      if (j.contains("candidate")) {
        const auto refs = j.at("references").get<std::vector<std::string>>();
        if (refs.empty()) throw input_error("at least one reference required");
        record.report = ngram::score_pair(j.at("candidate").get<std::string>(), refs, smoothing);
      } else {
        const auto generated = j.at("generated").get<std::vector<std::string>>();
        const auto gold = j.at("gold").get<std::vector<std::string>>();
        if (generated.empty() || gold.empty()) throw input_error("generated and gold sets must be non-empty");
        ngram::NgramReport sum;
        for (const auto& g : generated) {
          const auto r = ngram::score_pair(g, gold, smoothing);
          for (std::size_t k = 0; k < 4; ++k) sum.bleu[k] += r.bleu[k];
          sum.rouge_l_f1 += r.rouge_l_f1;
          sum.meteor += r.meteor;
          sum.empty_candidate |= r.empty_candidate;
        }
        const double n = static_cast<double>(generated.size());
        for (double& b : sum.bleu) b /= n;
        sum.rouge_l_f1 /= n;
        sum.meteor /= n;
        record.report = sum;
      }
      out.push_back(std::move(record));
    } catch (const json::exception& e) {
      throw input_error(where + e.what());
    } catch (const Error& e) {
      throw input_error(where + e.what());
    }
  }
  return out;
}

std::string ngram_csv(const std::vector<NgramRecord>& records, bool percent) {
  const double scale = percent ? 100.0 : 1.0;
  CsvTable csv;
  csv.header = {"item_id", "bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor", "empty_candidate"};
  for (const auto& r : records) {
    std::vector<std::string> row{r.item_id};
    for (double b : r.report.bleu) row.push_back(format_real(b * scale));
    row.push_back(format_real(r.report.rouge_l_f1 * scale));
    row.push_back(format_real(r.report.meteor * scale));
    row.push_back(r.report.empty_candidate ? "true" : "false");
    csv.rows.push_back(std::move(row));
  }
  return csv.to_string();
}

// ---------------------------------------------------------------------------
// simulate

RunManifest run_simulate(const SimulateConfig& config) {
  sim::QuestionConfig qc;
  qc.dependence_min = config.dependence_min;
  qc.dependence_max = config.dependence_max;
  qc.n_options = config.n_options;
  const auto questions = sim::sample_questions(config.n_questions, qc, config.seed);

  sim::PopulationConfig pc;
  pc.student_noise = config.student_noise;
  pc.solver_noise = config.solver_noise;
  pc.solver_idiosyncrasy = config.solver_idiosyncrasy;
  pc.solver_miscalibration = config.solver_miscalibration;
  const auto population = sim::sample_population(config.n_students, config.n_solvers, pc, config.seed);
  const auto result = sim::simulate_responses(questions, population, config.seed, config.threads);

  RunManifest manifest;
  manifest.command = "simulate";
  json cj = {{"n_questions", config.n_questions},
             {"n_students", config.n_students},
             {"n_solvers", config.n_solvers},
             {"dependence_min", config.dependence_min},
             {"dependence_max", config.dependence_max},
             {"n_options", config.n_options},
             {"student_noise", config.student_noise},
             {"solver_noise", config.solver_noise},
             {"solver_idiosyncrasy", config.solver_idiosyncrasy},
             {"solver_miscalibration", config.solver_miscalibration},
             {"seed", config.seed}};
  manifest.config_hash = sha256_hex(cj.dump());
  fs::create_directories(config.output_dir);

  std::string items, facts, labels;
  for (const auto& item : result.items) items += encode(item) + "\n";
  for (const auto& fact : result.facts) facts += encode(fact) + "\n";
  CsvTable truth;
  truth.header = {"item_id", "knowledge_dependence", "guess_rate", "ground_truth_kda"};
  for (const auto& q : questions) {
    const double gt = sim::ground_truth_kda(q, population.students);
    truth.rows.push_back({q.item_id, format_real(q.knowledge_dependence), format_real(q.guess_rate), format_real(gt)});
    json l = json::parse(encode(sim::synthesize_labels(q, gt, config.seed).labels));
    json line = {{"item_id", q.item_id}};
    line.update(l);
    labels += line.dump() + "\n";
  }
  write_output(manifest, config.output_dir, "items.jsonl", items);
  write_output(manifest, config.output_dir, "facts.jsonl", facts);
  write_output(manifest, config.output_dir, "matrix.json", to_json(result.solvers));
  write_output(manifest, config.output_dir, "human.json", to_json(result.students));
  write_output(manifest, config.output_dir, "labels.jsonl", labels);
  write_output(manifest, config.output_dir, "ground_truth.csv", truth.to_string());
  write_text(out_path(config.output_dir, "manifest.json").string(), manifest.to_json());
  return manifest;
}

// ---------------------------------------------------------------------------
// kappa / validate

std::string KappaSummary::csv() const {
  CsvTable t;
  t.header = {"rater_a", "rater_b", "kappa"};
  for (std::size_t k = 0; k < pairs.size(); ++k) t.rows.push_back({pairs[k][0], pairs[k][1], format_real(values[k])});
  t.rows.push_back({"mean", "", format_real(mean)});
  return t.to_string();
}

KappaSummary kappa_from_csv(const std::string& path) {
  const CsvTable csv = read_csv(path);
  KappaSummary out;
  std::vector<std::vector<std::string>> raters;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (csv.header[c] == "item_id") continue;
    out.raters.push_back(csv.header[c]);
    std::vector<std::string> column;
    for (const auto& row : csv.rows) column.push_back(row[c]);
    raters.push_back(std::move(column));
  }
  const auto pairwise = stats::mean_pairwise_kappa(raters);
  out.mean = pairwise.mean;
  out.values = pairwise.values;
  for (std::size_t i = 0; i < out.raters.size(); ++i)
    for (std::size_t j = i + 1; j < out.raters.size(); ++j) out.pairs.push_back({out.raters[i], out.raters[j]});
  return out;
}

ValidationReport validate_files(const std::optional<std::string>& items_path,
                                const std::optional<std::string>& facts_path) {
  if (!items_path && !facts_path) throw input_error("no input: give items and/or facts");
  ValidationReport report;
  std::vector<Fact> facts;
  std::vector<McqItem> items;
  auto scan = [&](const std::string& path, auto&& decode) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        decode(line, path + ":" + std::to_string(n) + ": ");
      } catch (const Error& e) {
        report.problems.push_back(path + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  };
  if (facts_path)
    scan(*facts_path, [&](const std::string& line, const std::string&) { facts.push_back(decode_fact(line)); });
  if (items_path)
    scan(*items_path, [&](const std::string& line, const std::string&) { items.push_back(decode_item(line)); });
  report.items = items.size();
  report.facts = facts.size();
  for (const auto& v : validate_corpus(items, facts).violations) report.problems.push_back(v.message);
  if (items_path && facts_path) {
    std::set<std::string> fact_ids;
    for (const auto& f : facts) fact_ids.insert(f.id);
    for (const auto& item : items)
      if (!fact_ids.contains(item.fact_id))
        report.problems.push_back("item '" + item.id + "': no fact with id '" + item.fact_id + "'");
  }
  return report;
}

}  // namespace kda
