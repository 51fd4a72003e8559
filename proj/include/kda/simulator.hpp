#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kda/kda.hpp"
#include "kda/model.hpp"
#include "kda/response_matrix.hpp"

namespace kda::sim {

/// Independent random stream for a (seed, key) pair. Streams for different
/// keys do not depend on the order in which they are created.
std::mt19937_64 stream(std::uint64_t seed, std::string_view key);

/// Parameters for synthesizing an expert panel's labels for one question.
struct FlawProfile {
  std::size_t n_raters = 7;
  double rating_noise = 0.6;  // sd of each rater's rating around the latent quality
};

struct SyntheticQuestionProfile {
  std::string item_id;
  double knowledge_dependence = 0.5;  // delta in [0,1]
  double guess_rate = 0.25;           // g in [0,1]
  std::size_t n_options = 4;
  std::optional<FlawProfile> flaw_profile;

  /// Correctness probability for a respondent who knows the fact:
  /// g + delta (1 - g).
  double p_known() const;
  void check() const;  // throws input error
};

enum class AgentKind { student, solver };

struct AgentProfile {
  std::string agent_id;
  double knowledge_prob = 0.5;  // kappa: chance of knowing a fact a priori
  double noise = 0.0;           // sigma: symmetric flip probability
  AgentKind kind = AgentKind::student;
  /// Solvers only: sd of a per-question logit shift of p_known, modelling
  /// question-specific strengths and blind spots.
  double idiosyncrasy = 0.0;
  /// Solvers only: sd of logit noise between true and emitted probability.
  double miscalibration = 0.0;
};

struct BetaParams {
  double a = 2.0;
  double b = 2.0;
};

struct PopulationConfig {
  BetaParams student_knowledge;
  double student_noise = 0.05;
  BetaParams solver_knowledge;
  double solver_noise = 0.05;
  double solver_idiosyncrasy = 1.0;
  double solver_miscalibration = 0.0;
};

struct Population {
  std::vector<AgentProfile> students;
  std::vector<AgentProfile> solvers;
};

/// Knowledge probabilities drawn from the configured Beta laws. Throws input
/// error on invalid parameters or n_students == 0.
Population sample_population(std::size_t n_students, std::size_t n_solvers, const PopulationConfig& config,
                             std::uint64_t seed);

struct QuestionConfig {
  double dependence_min = 0.0;
  double dependence_max = 1.0;
  std::size_t n_options = 4;
  /// Defaults to 1 / n_options when absent.
  std::optional<double> guess_rate;
  std::optional<FlawProfile> flaw_profile;
};

/// Profiles with ids "syn-0001", ... and delta ~ U[min, max].
std::vector<SyntheticQuestionProfile> sample_questions(std::size_t n, const QuestionConfig& config,
                                                       std::uint64_t seed);

struct SimulationResult {
  std::vector<McqItem> items;
  std::vector<Fact> facts;
  HumanResponseTable students;
  ResponseMatrix solvers;
};

/// Response law, per agent and question:
///   without fact: the agent knows the fact with prob kappa; correctness
///     prob is p_known if it knows, else g;
///   with fact: correctness prob is p_known;
///   each outcome is then flipped with prob sigma.
/// Students yield sampled binary outcomes. Solvers emit an option
/// distribution whose answer mass is their correctness probability and whose
/// remaining mass is split over distractors at random; binary entries are the
/// argmax outcome of that distribution.
SimulationResult simulate_responses(std::span<const SyntheticQuestionProfile> questions, const Population& population,
                                    std::uint64_t seed, std::size_t threads = 1);

double flip(double p, double noise);

/// P(correct with fact | wrong without fact) for a homogeneous population with
/// flip noise sigma. Knowledge probability cancels: the with-fact outcome is
/// independent of the without-fact outcome under the response law.
double ground_truth_kda(const SyntheticQuestionProfile& profile, double noise);

/// The same conditional probability for a finite, heterogeneous population.
double ground_truth_kda(const SyntheticQuestionProfile& profile, std::span<const AgentProfile> agents);

struct SyntheticLabels {
  QualityLabels labels;
  std::vector<int> ratings;  // one 1..4 rating per rater
};

/// Raters score round(1 + 3 q + noise) clamped to 1..4 around latent quality
/// q (the question's ground-truth KDA). Raters scoring 2 or lower name one
/// flaw; answerability flaws are more likely when q is low.
SyntheticLabels synthesize_labels(const SyntheticQuestionProfile& profile, double quality, std::uint64_t seed);

}  // namespace kda::sim
