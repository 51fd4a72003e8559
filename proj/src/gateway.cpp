#include "kda/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"
#include "kda/digest.hpp"
#include "kda/error.hpp"

namespace kda {

using nlohmann::json;

namespace {

Error protocol_violation(const std::string& what) {
  return Error(ErrorKind::backend, "protocol violation: " + what);
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string_view to_string(ProbeCondition condition) {
  return condition == ProbeCondition::with_fact ? "with_fact" : "without_fact";
}

std::string PromptTemplate::render(const std::string& stem, std::span<const std::string> options,
                                   const std::string* fact) const {
  std::string out = fact ? fact_prefixed : question_only;
  std::string listing;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) listing += '\n';
    listing += static_cast<char>('A' + static_cast<int>(i % 26));
    listing += ") ";
    listing += options[i];
  }
  // Placeholders inside substituted fact text must stay literal.
  replace_all(out, "{stem}", "\x01STEM\x01");
  replace_all(out, "{options}", "\x01OPTIONS\x01");
  if (fact) replace_all(out, "{fact}", *fact);
  replace_all(out, "\x01STEM\x01", stem);
  replace_all(out, "\x01OPTIONS\x01", listing);
  return out;
}

Probe build_probe(const McqItem& item, const Fact* fact, const PromptTemplate& tmpl) {
  if (fact && fact->id != item.fact_id)
    throw input_error("fact mismatch: item '" + item.id + "' expects fact '" + item.fact_id +
                      "', got '" + fact->id + "'");
  Probe probe;
  probe.item_id = item.id;
  probe.condition = fact ? ProbeCondition::with_fact : ProbeCondition::without_fact;
  probe.stem = item.stem;
  if (fact) probe.fact = fact->text;
  probe.options = item.options;
  probe.answer_index = item.answer_index;
  probe.rendered_text = tmpl.render(item.stem, item.options, fact ? &fact->text : nullptr);
  return probe;
}

// ---------------------------------------------------------------------------

OptionDistribution OptionDistribution::make(std::vector<double> probs,
                                            std::optional<std::vector<double>> raw_scores,
                                            std::optional<std::size_t> expected_options) {
  if (probs.empty()) throw protocol_violation("empty probability vector");
  if (expected_options && probs.size() != *expected_options)
    throw protocol_violation("expected " + std::to_string(*expected_options) +
                             " probabilities, got " + std::to_string(probs.size()));
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw protocol_violation("negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance)
    throw protocol_violation("probabilities sum to " + std::to_string(sum));
  if (raw_scores) {
    if (raw_scores->size() != probs.size())
      throw protocol_violation("raw_scores length differs from probs");
    for (double s : *raw_scores)
      if (!std::isfinite(s)) throw protocol_violation("non-finite raw score");
  }
  OptionDistribution d;
  d.probs_ = std::move(probs);
  d.raw_scores_ = std::move(raw_scores);
  return d;
}

OptionDistribution OptionDistribution::uniform(std::size_t n_options) {
  return make(std::vector<double>(n_options, 1.0 / static_cast<double>(n_options)));
}

OptionDistribution OptionDistribution::point_mass(std::size_t n_options, std::size_t index) {
  std::vector<double> p(n_options, 0.0);
  p.at(index) = 1.0;
  return make(std::move(p));
}

TieRule parse_tie_rule(std::string_view text) {
  if (text == "lowest_index") return TieRule::lowest_index;
  if (text == "highest_index") return TieRule::highest_index;
  if (text == "ties_incorrect") return TieRule::ties_incorrect;
  throw input_error("unknown tie rule '" + std::string(text) + "'");
}

Correctness correctness(const OptionDistribution& dist, std::size_t answer_index, TieRule tie_rule) {
  std::span<const double> scores =
      dist.raw_scores() ? std::span<const double>(*dist.raw_scores()) : dist.probs();
  const double best = *std::max_element(scores.begin(), scores.end());
  std::vector<std::size_t> winners;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] == best) winners.push_back(i);

  int binary = 0;
  switch (tie_rule) {
    case TieRule::lowest_index: binary = winners.front() == answer_index; break;
    case TieRule::highest_index: binary = winners.back() == answer_index; break;
    case TieRule::ties_incorrect: binary = winners.size() == 1 && winners.front() == answer_index; break;
  }
  return {binary, dist.probs()[answer_index]};
}

// ---------------------------------------------------------------------------
// Mock profiles

namespace {

OptionDistribution hashed_distribution(const Probe& probe) {
  std::string material = probe.rendered_text;
  for (const auto& o : probe.options) material += '\x1f' + o;
  const std::string digest = sha256_hex(material);
  std::vector<double> logits(probe.options.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const std::string byte = digest.substr((2 * i) % 62, 2);
    logits[i] = static_cast<double>(std::stoi(byte, nullptr, 16)) / 64.0;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) z += probs[i] = std::exp(logits[i] - top);
  for (double& p : probs) p /= z;
  return OptionDistribution::make(std::move(probs), std::move(logits));
}

struct MockRegistry {
  std::mutex mutex;
  std::map<std::string, MockProfile> profiles;

  MockRegistry() {
    profiles["uniform"] = [](const Probe& p) { return OptionDistribution::uniform(p.options.size()); };
    profiles["oracle"] = [](const Probe& p) {
      return OptionDistribution::point_mass(p.options.size(), p.answer_index);
    };
    profiles["adversary"] = [](const Probe& p) {
      return OptionDistribution::point_mass(p.options.size(), p.answer_index == 0 ? 1 : 0);
    };
    profiles["knows-only-with-fact"] = [](const Probe& p) {
      return p.condition == ProbeCondition::with_fact
                 ? OptionDistribution::point_mass(p.options.size(), p.answer_index)
                 : OptionDistribution::uniform(p.options.size());
    };
    profiles["hash"] = hashed_distribution;
  }
};

MockRegistry& mock_registry() {
  static MockRegistry registry;
  return registry;
}

class MockBackend final : public SolverBackend {
 public:
  explicit MockBackend(MockProfile profile) : profile_(std::move(profile)) {}
  OptionDistribution score(const Probe& probe) override { return profile_(probe); }
  bool remote() const override { return false; }

 private:
  MockProfile profile_;
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string base;    // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw input_error("endpoint '" + url + "' is not a URL");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  e.base = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!e.base.empty() && e.base.back() == '/') e.base.pop_back();
  return e;
}

// Runs `attempt` with retries on transport failures and 5xx statuses.
// Returns the successful response body.
template <typename Attempt>
std::string with_retries(const std::string& solver_name, const RetryPolicy& retry, Attempt attempt) {
  std::string last_error;
  auto backoff = retry.initial_backoff;
  for (int i = 0; i < std::max(1, retry.attempts); ++i) {
    if (i > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Result result = attempt();
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 500) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200)
      throw protocol_violation("HTTP " + std::to_string(result->status) + " from '" + solver_name +
                               "': " + result->body);
    return result->body;
  }
  throw Error(ErrorKind::backend, "solver unavailable: " + solver_name + " (" + last_error + ")");
}

class HttpBackend final : public SolverBackend {
 public:
  HttpBackend(SolverRef solver, RetryPolicy retry)
      : solver_(std::move(solver)), endpoint_(split_endpoint(solver_.endpoint)), retry_(retry) {}

  OptionDistribution score(const Probe& probe) override {
    const std::string body = score_request_body(probe);
    const std::string path = endpoint_.base + "/v1/score";
    const std::string response = with_retries(solver_.name, retry_, [&] {
      httplib::Client client(endpoint_.origin);
      client.set_connection_timeout(retry_.connect_timeout);
      client.set_read_timeout(retry_.read_timeout);
      return client.Post(path, body, "application/json");
    });
    return parse_score_response(response, probe.options.size());
  }

  bool remote() const override { return true; }

 private:
  SolverRef solver_;
  Endpoint endpoint_;
  RetryPolicy retry_;
};

}  // namespace

void register_mock_profile(const std::string& name, MockProfile profile) {
  auto& registry = mock_registry();
  std::lock_guard lock(registry.mutex);
  registry.profiles[name] = std::move(profile);
}

bool has_mock_profile(const std::string& name) {
  auto& registry = mock_registry();
  std::lock_guard lock(registry.mutex);
  return registry.profiles.count(name) > 0;
}

std::unique_ptr<SolverBackend> make_backend(const SolverRef& solver, const RetryPolicy& retry) {
  if (solver.is_mock()) {
    const std::string profile = solver.endpoint.substr(5);
    auto& registry = mock_registry();
    std::lock_guard lock(registry.mutex);
    auto it = registry.profiles.find(profile);
    if (it == registry.profiles.end())
      throw input_error("solver '" + solver.name + "': unknown mock profile '" + profile + "'");
    return std::make_unique<MockBackend>(it->second);
  }
  if (solver.endpoint.rfind("http://", 0) != 0 && solver.endpoint.rfind("https://", 0) != 0)
    throw input_error("solver '" + solver.name + "': unsupported endpoint '" + solver.endpoint + "'");
  return std::make_unique<HttpBackend>(solver, retry);
}

std::vector<ModelInfo> list_models(const std::string& endpoint, const RetryPolicy& retry) {
  const Endpoint e = split_endpoint(endpoint);
  const std::string body = with_retries(endpoint, retry, [&] {
    httplib::Client client(e.origin);
    client.set_connection_timeout(retry.connect_timeout);
    client.set_read_timeout(retry.read_timeout);
    return client.Get(e.base + "/v1/models");
  });
  std::vector<ModelInfo> models;
  try {
    const json doc = json::parse(body);
    for (const auto& m : doc.at("models")) {
      ModelInfo info{m.at("name").get<std::string>(), std::nullopt};
      if (m.contains("size_bytes") && !m.at("size_bytes").is_null())
        info.size_bytes = m.at("size_bytes").get<std::int64_t>();
      models.push_back(std::move(info));
    }
  } catch (const json::exception& ex) {
    throw protocol_violation(std::string("malformed /v1/models response: ") + ex.what());
  }
  return models;
}

std::string score_request_body(const Probe& probe) {
  json j = {{"stem", probe.stem},
            {"options", probe.options},
            {"fact", probe.fact ? json(*probe.fact) : json(nullptr)},
            {"rendered", probe.rendered_text}};
  return j.dump();
}

OptionDistribution parse_score_response(const std::string& body, std::size_t n_options) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw protocol_violation("response is not JSON");
  }
  if (!j.is_object() || !j.contains("probs") || !j.at("probs").is_array())
    throw protocol_violation("response lacks a 'probs' array");
  try {
    auto probs = j.at("probs").get<std::vector<double>>();
    std::optional<std::vector<double>> raw;
    if (j.contains("raw_scores") && !j.at("raw_scores").is_null())
      raw = j.at("raw_scores").get<std::vector<double>>();
    return OptionDistribution::make(std::move(probs), std::move(raw), n_options);
  } catch (const json::exception&) {
    throw protocol_violation("non-numeric probability entries");
  }
}

// ---------------------------------------------------------------------------
// Cache

std::string cache_key(const std::string& solver_name, const Probe& probe) {
  std::string material = solver_name;
  material += '\x1e';
  material += probe.rendered_text;
  for (const auto& o : probe.options) {
    material += '\x1f';
    material += o;
  }
  return sha256_hex(material);
}

ProbeCache::ProbeCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(std::move(line));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      json j = json::parse(lines[i]);
      std::optional<std::vector<double>> raw;
      if (j.contains("raw_scores") && !j.at("raw_scores").is_null())
        raw = j.at("raw_scores").get<std::vector<double>>();
      entries_.insert_or_assign(j.at("key").get<std::string>(),
                                OptionDistribution::make(j.at("probs").get<std::vector<double>>(),
                                                         std::move(raw)));
    } catch (const std::exception& e) {
      if (i + 1 == lines.size()) break;  // interrupted final append
      throw input_error("corrupt cache record at " + path_ + ":" + std::to_string(i + 1));
    }
  }
}

std::optional<OptionDistribution> ProbeCache::lookup(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ProbeCache::store(const std::string& key, const std::string& solver_name,
                       const OptionDistribution& dist) {
  std::lock_guard lock(mutex_);
  if (!entries_.emplace(key, dist).second) return;
  if (path_.empty()) return;
  json j = {{"key", key},
            {"solver", solver_name},
            {"probs", std::vector<double>(dist.probs().begin(), dist.probs().end())},
            {"raw_scores", dist.raw_scores() ? json(*dist.raw_scores()) : json(nullptr)}};
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw input_error("cannot append to cache file '" + path_ + "'");
  out << j.dump() + "\n";
  out.flush();
}

std::size_t ProbeCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

SolverPool::SolverPool(std::vector<SolverRef> solvers) : solvers_(std::move(solvers)) {
  for (std::size_t i = 0; i < solvers_.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (solvers_[i].name == solvers_[k].name)
        throw input_error("duplicate solver name '" + solvers_[i].name + "'");
}

const SolverRef& SolverPool::at(const std::string& name) const {
  for (const auto& s : solvers_)
    if (s.name == name) return s;
  throw input_error("unknown solver '" + name + "'");
}

FactStore::FactStore(const std::vector<Fact>& facts) {
  for (const auto& f : facts)
    if (!facts_.emplace(f.id, f).second) throw input_error("duplicate fact id '" + f.id + "'");
}

const Fact* FactStore::find(const std::string& id) const {
  auto it = facts_.find(id);
  return it == facts_.end() ? nullptr : &it->second;
}

const PromptTemplate& GatewayConfig::template_for(const SolverRef& solver) const {
  auto it = family_templates.find(solver.family_tag);
  return it == family_templates.end() ? prompt_template : it->second;
}

std::string CompletenessReport::to_json() const {
  json failures_json = json::array();
  for (const auto& f : failures)
    failures_json.push_back({{"solver", f.solver},
                             {"item", f.item},
                             {"condition", to_string(f.condition)},
                             {"message", f.message}});
  json j = {{"cells", cells},
            {"failed_cells", failed_cells},
            {"failure_ratio", failure_ratio()},
            {"probes", probes},
            {"cache_hits", cache_hits},
            {"backend_calls", backend_calls},
            {"remote_calls", remote_calls},
            {"failures", failures_json}};
  return j.dump(2);
}

SolverGateway::SolverGateway(GatewayConfig config, std::shared_ptr<ProbeCache> cache)
    : config_(std::move(config)), cache_(cache ? std::move(cache) : std::make_shared<ProbeCache>()) {}

SolverBackend& SolverGateway::backend_for(const SolverRef& solver) {
  std::lock_guard lock(backends_mutex_);
  auto& slot = backends_[solver.name];
  if (!slot) slot = make_backend(solver, config_.retry);
  return *slot;
}

OptionDistribution SolverGateway::score_options(const SolverRef& solver, const Probe& probe) {
  const std::string key = cache_key(solver.name, probe);
  if (auto hit = cache_->lookup(key)) {
    if (hit->size() != probe.options.size())
      throw protocol_violation("cached distribution has wrong option count");
    ++cache_hits_;
    return *hit;
  }
  SolverBackend& backend = backend_for(solver);
  ++backend_calls_;
  if (backend.remote()) ++remote_calls_;
  OptionDistribution dist = backend.score(probe);
  if (dist.size() != probe.options.size())
    throw protocol_violation("solver '" + solver.name + "' returned " + std::to_string(dist.size()) +
                             " probabilities for " + std::to_string(probe.options.size()) +
                             " options");
  cache_->store(key, solver.name, dist);
  return dist;
}

CollectedMatrix SolverGateway::collect_matrix(const std::vector<McqItem>& items, const FactStore& facts,
                                              const SolverPool& pool) {
  for (const auto& item : items)
    if (!facts.find(item.fact_id))
      throw input_error("no fact '" + item.fact_id + "' for item '" + item.id + "'");

  struct Task {
    std::size_t solver;
    std::size_t item;
    ProbeCondition condition;
  };
  std::vector<Task> tasks;
  tasks.reserve(pool.size() * items.size() * 2);
  for (std::size_t j = 0; j < pool.size(); ++j)
    for (std::size_t i = 0; i < items.size(); ++i)
      for (auto c : {ProbeCondition::without_fact, ProbeCondition::with_fact}) tasks.push_back({j, i, c});

  std::vector<std::optional<OptionDistribution>> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
  const std::size_t hits0 = cache_hits_, calls0 = backend_calls_, remote0 = remote_calls_;

  auto run = [&](std::size_t t) {
    const Task& task = tasks[t];
    const SolverRef& solver = pool.solvers()[task.solver];
    const McqItem& item = items[task.item];
    const Fact* fact = task.condition == ProbeCondition::with_fact ? facts.find(item.fact_id) : nullptr;
    try {
      results[t] = score_options(solver, build_probe(item, fact, config_.template_for(solver)));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::backend) throw;
      errors[t] = e.what();
    }
  };

  const std::size_t n_workers = std::min(std::max<std::size_t>(1, config_.max_in_flight), tasks.size());
  if (n_workers <= 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    {
      std::vector<std::jthread> workers;
      for (std::size_t w = 0; w < n_workers; ++w)
        workers.emplace_back([&] {
          for (std::size_t t; (t = next++) < tasks.size();) {
            try {
              run(t);
            } catch (...) {
              std::lock_guard lock(fatal_mutex);
              if (!fatal) fatal = std::current_exception();
              next = tasks.size();
            }
          }
        });
    }
    if (fatal) std::rethrow_exception(fatal);
  }

  std::vector<std::string> item_ids;
  for (const auto& item : items) item_ids.push_back(item.id);
  CollectedMatrix out{ResponseMatrix::zeros(pool.solvers(), std::move(item_ids)), {}};
  auto& m = out.matrix;
  auto& report = out.report;
  report.cells = pool.size() * items.size();
  report.probes = tasks.size();

  for (std::size_t t = 0; t < tasks.size(); t += 2) {
    const Task& task = tasks[t];
    const auto row = static_cast<Eigen::Index>(task.solver);
    const auto col = static_cast<Eigen::Index>(task.item);
    bool ok = true;
    for (std::size_t k = t; k < t + 2; ++k) {
      if (!results[k]) {
        ok = false;
        report.failures.push_back(
            {pool.solvers()[task.solver].name, items[task.item].id, tasks[k].condition, errors[k]});
      }
    }
    m.observed(row, col) = ok;
    if (!ok) {
      ++report.failed_cells;
      continue;
    }
    const std::size_t answer = items[task.item].answer_index;
    const Correctness without = correctness(*results[t], answer, config_.tie_rule);
    const Correctness with = correctness(*results[t + 1], answer, config_.tie_rule);
    m.p_correct_without(row, col) = without.p_correct;
    m.r_without(row, col) = static_cast<std::uint8_t>(without.binary);
    m.p_correct_with(row, col) = with.p_correct;
    m.r_with(row, col) = static_cast<std::uint8_t>(with.binary);
  }
  report.cache_hits = cache_hits_ - hits0;
  report.backend_calls = backend_calls_ - calls0;
  report.remote_calls = remote_calls_ - remote0;

  if (report.failure_ratio() > config_.max_failure_ratio)
    throw Error(ErrorKind::incomplete_matrix,
                "matrix incomplete: " + std::to_string(report.failed_cells) + " of " +
                    std::to_string(report.cells) + " cells failed (first: " +
                    (report.failures.empty() ? std::string() : report.failures.front().message) + ")");
  return out;
}

}  // namespace kda
