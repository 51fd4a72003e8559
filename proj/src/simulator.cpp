#include "kda/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "kda/digest.hpp"
#include "kda/error.hpp"
#include "kda/gateway.hpp"

namespace kda::sim {

std::mt19937_64 stream(std::uint64_t seed, std::string_view key) {
  std::string material = std::to_string(seed);
  material += '/';
  material += key;
  const std::string digest = sha256_hex(material);
  std::seed_seq seq{std::stoul(digest.substr(0, 8), nullptr, 16), std::stoul(digest.substr(8, 8), nullptr, 16),
                    std::stoul(digest.substr(16, 8), nullptr, 16), std::stoul(digest.substr(24, 8), nullptr, 16)};
  return std::mt19937_64(seq);
}

double SyntheticQuestionProfile::p_known() const {
  return guess_rate + knowledge_dependence * (1.0 - guess_rate);
}

void SyntheticQuestionProfile::check() const {
  if (!(knowledge_dependence >= 0.0 && knowledge_dependence <= 1.0))
    throw input_error("knowledge dependence must lie in [0,1]");
  if (!(guess_rate >= 0.0 && guess_rate <= 1.0)) throw input_error("guess rate must lie in [0,1]");
  if (n_options < 2) throw input_error("synthetic questions need at least 2 options");
}

double flip(double p, double noise) { return p * (1.0 - noise) + (1.0 - p) * noise; }

namespace {

double logit(double p) {
  p = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(p / (1.0 - p));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double draw_beta(std::mt19937_64& rng, const BetaParams& params) {
  std::gamma_distribution<double> ga(params.a, 1.0), gb(params.b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

void check_beta(const BetaParams& p, const char* what) {
  if (!(p.a > 0.0) || !(p.b > 0.0) || !std::isfinite(p.a) || !std::isfinite(p.b))
    throw input_error(std::string("invalid Beta parameters for ") + what);
}

void check_noise(double sigma, const char* what) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw input_error(std::string("invalid noise for ") + what);
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%s%0*zu", prefix, width, i);
  return buffer;
}

}  // namespace

Population sample_population(std::size_t n_students, std::size_t n_solvers, const PopulationConfig& config,
                             std::uint64_t seed) {
  if (n_students == 0) throw input_error("population needs at least one student");
  check_beta(config.student_knowledge, "students");
  check_beta(config.solver_knowledge, "solvers");
  check_noise(config.student_noise, "students");
  check_noise(config.solver_noise, "solvers");
  if (config.solver_idiosyncrasy < 0.0 || config.solver_miscalibration < 0.0)
    throw input_error("solver idiosyncrasy and miscalibration must be non-negative");

  Population pop;
  for (std::size_t i = 0; i < n_students; ++i) {
    AgentProfile a;
    a.agent_id = numbered("student-", i + 1, 4);
    auto rng = stream(seed, "population/" + a.agent_id);
    a.knowledge_prob = draw_beta(rng, config.student_knowledge);
    a.noise = config.student_noise;
    a.kind = AgentKind::student;
    pop.students.push_back(std::move(a));
  }
  for (std::size_t i = 0; i < n_solvers; ++i) {
    AgentProfile a;
    a.agent_id = numbered("solver-", i + 1, 2);
    auto rng = stream(seed, "population/" + a.agent_id);
    a.knowledge_prob = draw_beta(rng, config.solver_knowledge);
    a.noise = config.solver_noise;
    a.kind = AgentKind::solver;
    a.idiosyncrasy = config.solver_idiosyncrasy;
    a.miscalibration = config.solver_miscalibration;
    pop.solvers.push_back(std::move(a));
  }
  return pop;
}

std::vector<SyntheticQuestionProfile> sample_questions(std::size_t n, const QuestionConfig& config,
                                                       std::uint64_t seed) {
  if (!(config.dependence_min >= 0.0 && config.dependence_max <= 1.0 &&
        config.dependence_min <= config.dependence_max))
    throw input_error("knowledge dependence range must lie within [0,1]");
  std::vector<SyntheticQuestionProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticQuestionProfile q;
    q.item_id = numbered("syn-", i + 1, 4);
    auto rng = stream(seed, "question/" + q.item_id);
    q.knowledge_dependence =
        std::uniform_real_distribution<double>(config.dependence_min, config.dependence_max)(rng);
    q.n_options = config.n_options;
    q.guess_rate = config.guess_rate.value_or(1.0 / static_cast<double>(config.n_options));
    q.flaw_profile = config.flaw_profile;
    q.check();
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

// Answer mass `p`; the remaining mass split over distractors by a flat
// Dirichlet draw.
OptionDistribution solver_distribution(std::mt19937_64& rng, double p, std::size_t n_options,
                                       std::size_t answer_index) {
  std::exponential_distribution<double> unit(1.0);
  std::vector<double> shares(n_options - 1);
  double total = 0.0;
  for (double& s : shares) total += s = unit(rng);
  std::vector<double> probs(n_options);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n_options; ++i)
    probs[i] = i == answer_index ? p : (1.0 - p) * shares[k++] / total;
  return OptionDistribution::make(std::move(probs));
}

}  // namespace

SimulationResult simulate_responses(std::span<const SyntheticQuestionProfile> questions, const Population& population,
                                    std::uint64_t seed, std::size_t threads) {
  SimulationResult out;
  std::vector<std::string> item_ids, participant_ids;
  for (const auto& q : questions) {
    q.check();
    item_ids.push_back(q.item_id);
  }
  for (const auto& s : population.students) participant_ids.push_back(s.agent_id);
  std::vector<SolverRef> solver_refs;
  for (const auto& s : population.solvers)
    solver_refs.push_back({s.agent_id, "simulated", std::nullopt, "simulated"});

  out.students = HumanResponseTable::zeros(participant_ids, item_ids);
  out.solvers = ResponseMatrix::zeros(solver_refs, item_ids);
  out.items.resize(questions.size());
  out.facts.resize(questions.size());

  auto simulate_one = [&](std::size_t qi) {
    const auto& q = questions[qi];
    const auto col = static_cast<Eigen::Index>(qi);
    auto rng = stream(seed, "responses/" + q.item_id);
    const std::size_t answer = std::uniform_int_distribution<std::size_t>(0, q.n_options - 1)(rng);

    McqItem& item = out.items[qi];
    item.id = q.item_id;
    item.fact_id = q.item_id.starts_with("syn-") ? "syn-fact-" + q.item_id.substr(4) : "fact-" + q.item_id;
    item.stem = "Synthetic question " + q.item_id;
    for (std::size_t o = 0; o < q.n_options; ++o) item.options.push_back("option " + std::to_string(o + 1));
    item.answer_index = answer;
    item.provenance = Provenance::synthetic;
    out.facts[qi] = Fact{item.fact_id, "Synthetic fact for " + q.item_id, DatasetTag::custom};

    const double p_known = q.p_known();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t j = 0; j < population.students.size(); ++j) {
      const auto& a = population.students[j];
      const bool knows = u(rng) < a.knowledge_prob;
      const double p_without = flip(knows ? p_known : q.guess_rate, a.noise);
      const double p_with = flip(p_known, a.noise);
      const auto row = static_cast<Eigen::Index>(j);
      out.students.correct_without(row, col) = u(rng) < p_without;
      out.students.correct_with(row, col) = u(rng) < p_with;
    }

    for (std::size_t j = 0; j < population.solvers.size(); ++j) {
      const auto& a = population.solvers[j];
      double known = p_known;
      if (a.idiosyncrasy > 0.0)
        known = sigmoid(logit(p_known) + std::normal_distribution<double>(0.0, a.idiosyncrasy)(rng));
      const bool knows = u(rng) < a.knowledge_prob;
      double p_without = flip(knows ? known : q.guess_rate, a.noise);
      double p_with = flip(known, a.noise);
      if (a.miscalibration > 0.0) {
        std::normal_distribution<double> shift(0.0, a.miscalibration);
        p_without = sigmoid(logit(p_without) + shift(rng));
        p_with = sigmoid(logit(p_with) + shift(rng));
      }
      const Correctness without = correctness(solver_distribution(rng, p_without, q.n_options, answer), answer);
      const Correctness with = correctness(solver_distribution(rng, p_with, q.n_options, answer), answer);
      const auto row = static_cast<Eigen::Index>(j);
      out.solvers.p_correct_without(row, col) = without.p_correct;
      out.solvers.r_without(row, col) = static_cast<std::uint8_t>(without.binary);
      out.solvers.p_correct_with(row, col) = with.p_correct;
      out.solvers.r_with(row, col) = static_cast<std::uint8_t>(with.binary);
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(1, threads), questions.size());
  if (workers <= 1) {
    for (std::size_t qi = 0; qi < questions.size(); ++qi) simulate_one(qi);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t qi; (qi = next++) < questions.size();) simulate_one(qi);
      });
  }
  return out;
}

double ground_truth_kda(const SyntheticQuestionProfile& profile, double noise) {
  profile.check();
  check_noise(noise, "ground truth");
  return flip(profile.p_known(), noise);
}

double ground_truth_kda(const SyntheticQuestionProfile& profile, std::span<const AgentProfile> agents) {
  profile.check();
  const double p_known = profile.p_known();
  double mass = 0.0;
  double gained = 0.0;
  for (const auto& a : agents) {
    const double with = flip(p_known, a.noise);
    const double correct_without =
        a.knowledge_prob * flip(p_known, a.noise) + (1.0 - a.knowledge_prob) * flip(profile.guess_rate, a.noise);
    const double wrong_without = 1.0 - correct_without;
    mass += wrong_without;
    gained += wrong_without * with;
  }
  if (!(mass > 0.0)) throw analysis_error("ground truth undefined: no agent can answer wrong without the fact");
  return gained / mass;
}

SyntheticLabels synthesize_labels(const SyntheticQuestionProfile& profile, double quality, std::uint64_t seed) {
  const FlawProfile panel = profile.flaw_profile.value_or(FlawProfile{});
  if (panel.n_raters == 0) throw input_error("label synthesis needs at least one rater");
  auto rng = stream(seed, "labels/" + profile.item_id);
  std::normal_distribution<double> noise(0.0, panel.rating_noise);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  SyntheticLabels out;
  std::array<int, kFlawCount> flaws{};
  double sum = 0.0;
  for (std::size_t r = 0; r < panel.n_raters; ++r) {
    const int rating = static_cast<int>(std::clamp(std::lround(1.0 + 3.0 * quality + noise(rng)), 1L, 4L));
    out.ratings.push_back(rating);
    sum += rating;
    if (rating <= 2) {
      static constexpr Flaw kAnswerability[] = {Flaw::multiple_answers, Flaw::wrong_answer, Flaw::irrelevancy};
      static constexpr Flaw kOther[] = {Flaw::low_readability, Flaw::other};
      const Flaw f = u(rng) < 1.0 - quality ? kAnswerability[std::uniform_int_distribution<int>(0, 2)(rng)]
                                             : kOther[std::uniform_int_distribution<int>(0, 1)(rng)];
      ++flaws[static_cast<std::size_t>(f)];
    }
  }
  out.labels = QualityLabels(sum / static_cast<double>(panel.n_raters), flaws);
  return out;
}

}  // namespace kda::sim
