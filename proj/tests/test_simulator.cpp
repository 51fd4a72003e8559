#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "kda/error.hpp"
#include "kda/kda.hpp"
#include "kda/simulator.hpp"

using namespace kda;
using namespace kda::sim;

namespace {

SyntheticQuestionProfile question(const std::string& id, double delta, double guess) {
  SyntheticQuestionProfile q;
  q.item_id = id;
  q.knowledge_dependence = delta;
  q.guess_rate = guess;
  return q;
}

Population uniform_students(std::size_t n, double kappa, double sigma) {
  Population p;
  for (std::size_t i = 0; i < n; ++i)
    p.students.push_back({"student-" + std::to_string(i), kappa, sigma, AgentKind::student, 0.0, 0.0});
  p.solvers.push_back({"solver-0", kappa, sigma, AgentKind::solver, 0.0, 0.0});
  return p;
}

// Conditional probability from the response law, written out term by term.
double conditional_oracle(double delta, double g, double kappa, double sigma) {
  const double pk = g + delta * (1.0 - g);
  auto noisy = [&](double p) { return p * (1.0 - sigma) + (1.0 - p) * sigma; };
  const double right_without = kappa * noisy(pk) + (1.0 - kappa) * noisy(g);
  const double wrong_without = 1.0 - right_without;
  const double right_with = noisy(pk);
  return wrong_without * right_with / wrong_without;
}

}  // namespace

TEST_CASE("streams are keyed, not ordered") {
  auto a = stream(7, "x");
  auto b = stream(7, "y");
  auto a2 = stream(7, "x");
  CHECK(a() == a2());
  CHECK(stream(7, "x")() != b());
  CHECK(stream(8, "x")() != stream(7, "x")());
}

TEST_CASE("population sampling is deterministic and validated") {
  PopulationConfig cfg;
  const auto p1 = sample_population(30, 5, cfg, 42);
  const auto p2 = sample_population(30, 5, cfg, 42);
  REQUIRE(p1.students.size() == 30);
  REQUIRE(p1.solvers.size() == 5);
  for (std::size_t i = 0; i < 30; ++i) CHECK(p1.students[i].knowledge_prob == p2.students[i].knowledge_prob);
  CHECK(p1.students[0].agent_id == "student-0001");
  CHECK(p1.solvers[0].agent_id == "solver-01");
  CHECK(p1.solvers[0].kind == AgentKind::solver);

  const auto study_scale = sample_population(116, 18, cfg, 1);
  CHECK(study_scale.students.size() == 116);
  CHECK(study_scale.solvers.size() == 18);

  CHECK_THROWS_AS(sample_population(0, 1, cfg, 1), Error);
  PopulationConfig bad = cfg;
  bad.student_knowledge = {0.0, 1.0};
  CHECK_THROWS_AS(sample_population(5, 1, bad, 1), Error);
  bad = cfg;
  bad.solver_noise = 1.5;
  CHECK_THROWS_AS(sample_population(5, 1, bad, 1), Error);
}

TEST_CASE("Beta(1,1) knowledge is uniform by Kolmogorov-Smirnov") {
  PopulationConfig cfg;
  cfg.student_knowledge = {1.0, 1.0};
  const std::size_t n = 10000;
  const auto pop = sample_population(n, 0, cfg, 2024);
  std::vector<double> k;
  for (const auto& s : pop.students) k.push_back(s.knowledge_prob);
  std::sort(k.begin(), k.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = static_cast<double>(i) / n, hi = static_cast<double>(i + 1) / n;
    d = std::max({d, std::abs(k[i] - lo), std::abs(hi - k[i])});
  }
  // Critical value of the one-sample statistic at alpha = 0.01.
  CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("question sampling") {
  QuestionConfig cfg;
  cfg.dependence_min = 0.2;
  cfg.dependence_max = 0.4;
  cfg.n_options = 5;
  const auto qs = sample_questions(50, cfg, 3);
  REQUIRE(qs.size() == 50);
  CHECK(qs[0].item_id == "syn-0001");
  for (const auto& q : qs) {
    CHECK(q.knowledge_dependence >= 0.2);
    CHECK(q.knowledge_dependence <= 0.4);
    CHECK(q.guess_rate == doctest::Approx(0.2));
    CHECK(q.p_known() >= q.guess_rate);
  }
  CHECK(sample_questions(50, cfg, 3)[7].knowledge_dependence == qs[7].knowledge_dependence);
  CHECK_THROWS_AS(question("x", 1.5, 0.25).check(), Error);
}

TEST_CASE("closed-form ground truth limiting cases") {
  CHECK(ground_truth_kda(question("a", 1.0, 0.0), 0.0) == 1.0);
  CHECK(ground_truth_kda(question("a", 0.0, 0.25), 0.0) == doctest::Approx(0.25));
  for (double delta : {0.0, 0.3, 1.0}) CHECK(ground_truth_kda(question("a", delta, 0.25), 0.5) == doctest::Approx(0.5));

  for (double g : {0.0, 0.25, 0.5}) {
    double prev = -1.0;
    for (int i = 0; i <= 20; ++i) {
      const double v = ground_truth_kda(question("m", i / 20.0, g), 0.0);
      CHECK(v >= prev);
      prev = v;
    }
  }

  const std::vector<AgentProfile> agents = {{"a", 0.2, 0.1, AgentKind::student, 0, 0},
                                            {"b", 0.9, 0.0, AgentKind::student, 0, 0}};
  const auto q = question("h", 0.6, 0.25);
  const double pk = q.p_known();
  const double w1 = 1.0 - (0.2 * flip(pk, 0.1) + 0.8 * flip(0.25, 0.1));
  const double w2 = 1.0 - (0.9 * pk + 0.1 * 0.25);
  CHECK(ground_truth_kda(q, agents) == doctest::Approx((w1 * flip(pk, 0.1) + w2 * pk) / (w1 + w2)).epsilon(1e-12));

  const std::vector<AgentProfile> always_right = {{"a", 1.0, 0.0, AgentKind::student, 0, 0}};
  CHECK_THROWS_AS(ground_truth_kda(question("r", 1.0, 0.0), always_right), Error);
}

TEST_CASE("simulation emits pipeline-shaped artifacts") {
  const auto pop = sample_population(40, 6, {}, 5);
  const auto qs = sample_questions(12, {}, 5);
  const auto sim = simulate_responses(qs, pop, 5);
  REQUIRE(sim.items.size() == 12);
  REQUIRE(sim.facts.size() == 12);
  CHECK(validate_corpus(sim.items, sim.facts).ok());
  CHECK(sim.students.participants.size() == 40);
  CHECK(sim.solvers.n_solvers() == 6);
  CHECK(sim.solvers.n_items() == 12);
  CHECK_NOTHROW(sim.solvers.check());
  CHECK_NOTHROW(sim.students.check());
  CHECK(sim.items[0].fact_id == sim.facts[0].id);

  // Binary entries are the argmax outcome: a correctness probability above
  // one half always wins the argmax.
  for (Eigen::Index j = 0; j < sim.solvers.n_solvers(); ++j)
    for (Eigen::Index i = 0; i < sim.solvers.n_items(); ++i) {
      if (sim.solvers.p_correct_with(j, i) > 0.5) CHECK(sim.solvers.r_with(j, i) == 1);
      if (sim.solvers.p_correct_without(j, i) > 0.5) CHECK(sim.solvers.r_without(j, i) == 1);
    }
}

TEST_CASE("parallel and serial simulation agree exactly") {
  const auto pop = sample_population(50, 8, {}, 9);
  const auto qs = sample_questions(20, {}, 9);
  const auto serial = simulate_responses(qs, pop, 9, 1);
  const auto parallel = simulate_responses(qs, pop, 9, 4);
  CHECK(serial.solvers == parallel.solvers);
  CHECK(serial.students.correct_with == parallel.students.correct_with);
  CHECK(serial.students.correct_without == parallel.students.correct_without);
  CHECK(serial.items == parallel.items);

  // Question sub-streams do not depend on which other questions are present.
  std::vector<SyntheticQuestionProfile> tail(qs.begin() + 10, qs.end());
  const auto partial = simulate_responses(tail, pop, 9, 1);
  CHECK(partial.students.correct_with.col(0) == serial.students.correct_with.col(10));
}

TEST_CASE("knowledge-granting limit gives KDA 1") {
  const auto pop = uniform_students(200, 0.3, 0.0);
  const std::vector<SyntheticQuestionProfile> qs = {question("lim", 1.0, 0.0)};
  const auto sim = simulate_responses(qs, pop, 1);
  const auto s = kda_human(sim.students, "lim");
  REQUIRE(s.defined());
  CHECK(*s.value == 1.0);
}

TEST_CASE("knowledge-independent questions center on the guess rate") {
  const std::size_t n = 10000;
  const auto pop = uniform_students(n, 0.5, 0.0);
  const double g = 0.25;
  const std::vector<SyntheticQuestionProfile> qs = {question("flat", 0.0, g)};
  const auto sim = simulate_responses(qs, pop, 77);
  const auto s = kda_human(sim.students, "flat");
  REQUIRE(s.defined());
  const double se = std::sqrt(g * (1.0 - g) / s.n_effective);
  CHECK(std::abs(*s.value - g) < 3.0 * se);
}

TEST_CASE("simulated estimate converges to the closed form") {
  const std::size_t n = 10000;
  for (double delta : {0.2, 0.6, 1.0})
    for (double g : {0.0, 0.25, 0.5})
      for (double sigma : {0.0, 0.1, 0.3}) {
        CAPTURE(delta);
        CAPTURE(g);
        CAPTURE(sigma);
        const double kappa = 0.4;
        const auto pop = uniform_students(n, kappa, sigma);
        const std::vector<SyntheticQuestionProfile> qs = {question("grid", delta, g)};
        const auto sim = simulate_responses(qs, pop, 1000 + static_cast<std::uint64_t>(delta * 100 + g * 10 + sigma * 1000));
        const auto s = kda_human(sim.students, "grid");
        const double truth = conditional_oracle(delta, g, kappa, sigma);
        CHECK(ground_truth_kda(qs[0], std::span<const AgentProfile>(pop.students)) == doctest::Approx(truth).epsilon(1e-12));
        REQUIRE(s.defined());
        CHECK(std::abs(*s.value - truth) < 0.02);
      }
}

TEST_CASE("synthetic labels track latent quality") {
  auto q = question("lab", 0.5, 0.25);
  const auto high = synthesize_labels(q, 1.0, 3);
  const auto low = synthesize_labels(q, 0.0, 3);
  CHECK(high.ratings.size() == 7);
  CHECK(high.labels.likert() > low.labels.likert());
  CHECK(high.labels.accept());
  CHECK_FALSE(low.labels.accept());
  CHECK(low.labels.total_flaws() > 0);
  CHECK(synthesize_labels(q, 0.4, 11).ratings == synthesize_labels(q, 0.4, 11).ratings);
}
