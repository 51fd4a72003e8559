// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kda/csv.hpp"
#include "kda/forest.hpp"
#include "kda/kda.hpp"
#include "kda/ngram.hpp"
#include "kda/pipeline.hpp"
#include "kda/simulator.hpp"
#include "kda/stats.hpp"
#include "support.hpp"

using namespace kda;
namespace fs = std::filesystem;

namespace {

// Collects failed checks for one criterion.
struct Checker {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok) ++failed;
  }
  std::size_t failed = 0;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Checker&)> body;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ResponseMatrix random_matrix(std::mt19937_64& rng, std::size_t n_solvers, std::size_t n_items, bool binary) {
  std::vector<SolverRef> solvers;
  for (std::size_t j = 0; j < n_solvers; ++j) solvers.push_back({"s" + std::to_string(j), "mock:uniform", {}, ""});
  std::vector<std::string> items;
  for (std::size_t i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
  auto m = ResponseMatrix::zeros(solvers, items);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t j = 0; j < n_solvers; ++j)
    for (std::size_t i = 0; i < n_items; ++i) {
      const auto r = static_cast<Eigen::Index>(j), c = static_cast<Eigen::Index>(i);
      if (binary) {
        m.r_without(r, c) = rng() % 2;
        m.r_with(r, c) = rng() % 2;
        m.p_correct_without(r, c) = m.r_without(r, c);
        m.p_correct_with(r, c) = m.r_with(r, c);
      } else {
        // Mix exact endpoints in so degenerate masses are exercised.
        auto draw = [&] { return rng() % 10 == 0 ? double(rng() % 2) : u(rng); };
        m.p_correct_without(r, c) = draw();
        m.p_correct_with(r, c) = draw();
        m.r_without(r, c) = m.p_correct_without(r, c) > 0.5;
        m.r_with(r, c) = m.p_correct_with(r, c) > 0.5;
      }
    }
  return m;
}

std::vector<std::string> permuted_names(const ResponseMatrix& m, std::mt19937_64& rng) {
  std::vector<std::string> names;
  for (const auto& s : m.solvers) names.push_back(s.name);
  std::shuffle(names.begin(), names.end(), rng);
  return names;
}

ResponseMatrix duplicated(const ResponseMatrix& m) {
  std::vector<SolverRef> solvers = m.solvers;
  for (const auto& s : m.solvers) solvers.push_back({s.name + "'", s.endpoint, {}, ""});
  auto d = ResponseMatrix::zeros(solvers, m.items);
  const auto n = m.n_solvers();
  d.p_correct_without << m.p_correct_without, m.p_correct_without;
  d.p_correct_with << m.p_correct_with, m.p_correct_with;
  d.r_without << m.r_without, m.r_without;
  d.r_with << m.r_with, m.r_with;
  d.observed << m.observed, m.observed;
  (void)n;
  return d;
}

// ---------------------------------------------------------------------------

void formula_fixtures(Checker& c) {
  auto human = HumanResponseTable::zeros({"a", "b", "c"}, {"q"});
  human.correct_without << 0, 0, 1;
  human.correct_with << 1, 0, 1;
  const auto h = kda_human(human, "q");
  c.expect(h.value == 0.5, "kda_human fixture != 0.5");

  const auto disc = kda_disc(kda::testing::one_item_matrix({0, 0, 1}, {1, 0, 1}), "q");
  c.expect(disc.value == 0.5, "kda_disc fixture != 0.5");

  auto all_right = HumanResponseTable::zeros({"a", "b"}, {"q"});
  all_right.correct_without.setOnes();
  all_right.correct_with.setOnes();
  const auto u = kda_human(all_right, "q");
  c.expect(!u.defined() && u.n_effective == 0.0, "all-correct-without input is not undefined with n_effective 0");
  const auto ud = kda_disc(kda::testing::one_item_matrix({1, 1}, {1, 0}), "q");
  c.expect(!ud.defined() && ud.n_effective == 0.0, "kda_disc all-correct-without not undefined");

  const auto cont = kda_cont(kda::testing::one_item_matrix({0.2, 0.5, 0.9}, {0.9, 0.6, 0.2}), "q");
  c.expect(cont.defined() && std::abs(*cont.value - 0.742857142857142857) < 1e-9, "kda_cont fixture");
  c.detail << "kda_cont=" << fmt(cont.value.value_or(-1), 10);

  std::mt19937_64 rng(101);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto m = random_matrix(rng, 1 + rng() % 12, 1 + rng() % 4, true);
    for (const auto& id : m.items) {
      const auto a = kda_cont(m, id), b = kda_disc(m, id);
      if (a.value != b.value) ++mismatches;
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " binary matrices with kda_cont != kda_disc");
  c.detail << ", binary mismatches=" << mismatches << "/1000 matrices";
}

void kda_properties(Checker& c) {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double eps = 1e-6;
  std::size_t cases = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng() % 20;
    const auto m = random_matrix(rng, n, 1, false);
    const auto base = kda_cont(m, "i0");
    const auto disc = kda_disc(m, "i0");
    ++cases;
    if (base.defined()) c.expect(*base.value >= 0.0 && *base.value <= 1.0, "kda_cont out of range");
    if (disc.defined()) c.expect(*disc.value >= 0.0 && *disc.value <= 1.0, "kda_disc out of range");

    const auto perm = m.with_solvers(permuted_names(m, rng));
    const auto pc = kda_cont(perm, "i0"), pd = kda_disc(perm, "i0");
    c.expect(pc.defined() == base.defined() && (!base.defined() || std::abs(*pc.value - *base.value) < 1e-12),
             "permutation changed kda_cont");
    c.expect(pd.value == disc.value, "permutation changed kda_disc");

    const auto dup = kda_cont(duplicated(m), "i0");
    c.expect(dup.defined() == base.defined() && (!base.defined() || std::abs(*dup.value - *base.value) < 1e-12),
             "duplication changed kda_cont");

    if (base.defined()) {
      auto up = m;
      const auto j = static_cast<Eigen::Index>(rng() % n);
      up.p_correct_with(j, 0) += (1.0 - up.p_correct_with(j, 0)) * u(rng);
      c.expect(*kda_cont(up, "i0").value >= *base.value - 1e-12, "raising p_with lowered kda_cont");
      auto ones = m;
      ones.p_correct_with.setOnes();
      c.expect(kda_cont(ones, "i0").value == 1.0, "all p_with = 1 does not give 1");

      const double mass = base.n_effective;
      if (mass > 4.0 * static_cast<double>(n) * eps) {
        auto pert = m;
        for (Eigen::Index k = 0; k < pert.n_solvers(); ++k) {
          pert.p_correct_without(k, 0) = std::clamp(pert.p_correct_without(k, 0) + eps * (2 * u(rng) - 1), 0.0, 1.0);
          pert.p_correct_with(k, 0) = std::clamp(pert.p_correct_with(k, 0) + eps * (2 * u(rng) - 1), 0.0, 1.0);
        }
        const auto p = kda_cont(pert, "i0");
        const double nn = static_cast<double>(n);
        const double bound = (3.0 * nn * eps + mass * eps) / (mass - nn * eps);
        c.expect(p.defined() && std::abs(*p.value - *base.value) <= bound + 1e-15, "perturbation exceeded bound");
      }
    }
  }
  c.detail << cases << " random cases";
}

double simulated_correlation(const sim::SimulationResult& r, KdaKind kind, const std::vector<std::string>* subset) {
  std::vector<double> a, h;
  for (const auto& id : r.solvers.items) {
    const auto opt = subset ? std::optional(SubmetricSpec::custom("sub", *subset)) : std::nullopt;
    const auto s = kind == KdaKind::cont ? kda_cont(r.solvers, id, opt) : kda_disc(r.solvers, id, opt);
    const auto g = kda_human(r.students, id);
    if (!s.defined() || !g.defined()) continue;
    a.push_back(*s.value);
    h.push_back(*g.value);
  }
  return stats::pearson(Eigen::Map<Eigen::ArrayXd>(a.data(), static_cast<Eigen::Index>(a.size())),
                        Eigen::Map<Eigen::ArrayXd>(h.data(), static_cast<Eigen::Index>(h.size())))
      .r;
}

void simulator_oracle(Checker& c) {
  const auto pop = sim::sample_population(500, 20, {}, 7);
  const auto qs = sim::sample_questions(200, {}, 7);
  const auto r = sim::simulate_responses(qs, pop, 7);
  const double rc = simulated_correlation(r, KdaKind::cont, nullptr);
  const double rd = simulated_correlation(r, KdaKind::disc, nullptr);
  c.expect(rc > 0.6, "Pearson(kda_cont, kda_human) = " + fmt(rc) + " <= 0.6");
  c.expect(rd > 0.6, "Pearson(kda_disc, kda_human) = " + fmt(rd) + " <= 0.6");
  c.detail << "r_cont=" << fmt(rc, 3) << " r_disc=" << fmt(rd, 3);

  // Each cell gets its own stream; a shared stream correlates the cells' errors.
  double worst = 0.0;
  std::uint64_t cell = 0;
  for (double delta : {0.2, 0.6, 1.0})
    for (double g : {0.0, 0.25, 0.5})
      for (double sigma : {0.0, 0.1, 0.3}) {
        sim::Population p;
        for (int i = 0; i < 10000; ++i)
          p.students.push_back({"st-" + std::to_string(i), 0.4, sigma, sim::AgentKind::student, 0.0, 0.0});
        sim::SyntheticQuestionProfile q;
        q.item_id = "grid";
        q.knowledge_dependence = delta;
        q.guess_rate = g;
        const std::vector<sim::SyntheticQuestionProfile> one = {q};
        const auto res = sim::simulate_responses(one, p, 7000 + ++cell);
        const auto est = kda_human(res.students, "grid");
        const double truth = sim::ground_truth_kda(q, std::span<const sim::AgentProfile>(p.students));
        const double err = est.defined() ? std::abs(*est.value - truth) : 1.0;
        worst = std::max(worst, err);
      }
  c.expect(worst < 0.02, "grid error " + fmt(worst) + " >= 0.02");
  c.detail << " grid_max_err=" << fmt(worst);

  double sum20 = 0.0, sum4 = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = sim::sample_population(500, 20, {}, seed);
    const auto q = sim::sample_questions(200, {}, seed);
    const auto res = sim::simulate_responses(q, p, seed);
    const std::vector<std::string> four = {"solver-01", "solver-02", "solver-03", "solver-04"};
    sum20 += simulated_correlation(res, KdaKind::cont, nullptr);
    sum4 += simulated_correlation(res, KdaKind::cont, &four);
  }
  c.expect(sum20 / 10 >= sum4 / 10, "mean r with 20 solvers below 4 solvers");
  c.detail << " mean_r20=" << fmt(sum20 / 10, 3) << " mean_r4=" << fmt(sum4 / 10, 3);
}

void ngram_fixtures(Checker& c) {
  using namespace kda::ngram;
  auto b1 = [](const char* cand, const char* ref) {
    const std::vector<TokenSequence> refs = {tokenize(ref)};
    return bleu(tokenize(cand), refs, 1).score;
  };
  const double x = b1("the the the", "the cat"), y = b1("the cat", "the cat sat");
  c.expect(std::abs(x - 1.0 / 3.0) < 1e-9, "BLEU1 clipped fixture = " + fmt(x, 12));
  c.expect(std::abs(y - std::exp(-0.5)) < 1e-9, "BLEU1 brevity fixture = " + fmt(y, 12));
  const double rl = rouge_l(tokenize("the cat sat"), tokenize("the cat sat on mat")).f1;
  c.expect(std::abs(rl - 0.75) < 1e-12, "ROUGE-L fixture = " + fmt(rl, 12));
  const double m2 = meteor(tokenize("the cat"), tokenize("the cat")).score;
  c.expect(std::abs(m2 - 0.9375) < 1e-9, "METEOR 2-token identity = " + fmt(m2, 12));
  const double m1 = meteor(tokenize("cat"), tokenize("cat")).score;
  c.expect(std::abs(m1 - 0.5) < 1e-9, "METEOR 1-token identity = " + fmt(m1, 12));
  c.expect(meteor(tokenize("a b"), tokenize("c d")).score == 0.0, "METEOR no-match != 0");
  c.expect(b1("the cat sat", "the cat sat") == 1.0, "BLEU1 identity != 1");

  std::mt19937_64 rng(5);
  const char* vocab[] = {"the", "cat", "sat", "on", "mat", "a", "dog", "fact"};
  for (int t = 0; t < 500; ++t) {
    std::string s;
    const int n = 1 + static_cast<int>(rng() % 9);
    for (int i = 0; i < n; ++i) s += std::string(i ? " " : "") + vocab[rng() % 8];
    const auto ts = tokenize(s);
    const std::vector<TokenSequence> self = {ts};
    c.expect(std::abs(bleu(ts, self, 1).score - 1.0) < 1e-12, "BLEU1(x,x) != 1 for '" + s + "'");
    c.expect(std::abs(rouge_l(ts, ts).f1 - 1.0) < 1e-12, "ROUGE-L(x,x) != 1");
    const double expected = 1.0 - 0.5 * std::pow(1.0 / static_cast<double>(ts.size()), 3.0);
    c.expect(std::abs(meteor(ts, ts).score - expected) < 1e-12, "METEOR(x,x) formula mismatch for '" + s + "'");
  }
  c.detail << "bleu1=" << fmt(x, 6) << "," << fmt(y, 6) << " rouge_l=" << fmt(rl, 4) << " meteor=" << fmt(m2, 4);
}

void stats_fixtures(Checker& c) {
  Eigen::ArrayXd x(4), y(4);
  x << 1, 2, 3, 4;
  y << 1, 3, 2, 4;
  const auto p = stats::pearson(x, y);
  c.expect(std::abs(p.r - 0.8) < 1e-12, "pearson fixture r = " + fmt(p.r, 15));
  // Two degrees of freedom: the t-distribution gives p = 1 - |r| in closed form.
  c.expect(std::abs(p.p_value - 0.2) < 1e-12, "pearson fixture p = " + fmt(p.p_value, 15));

  const std::vector<int> a = {1, 1, 0, 0}, b = {1, 0, 0, 1};
  const double k = stats::cohens_kappa<int>(a, b);
  c.expect(std::abs(k) < 1e-15, "kappa fixture = " + fmt(k, 15));

  Eigen::ArrayXd rx(4), ry(4);
  rx << 0, 1, 2, 3;
  ry << 1, 2, 2, 3;
  const auto fit = stats::linear_regression(rx, ry);
  c.expect(std::abs(fit.slope - 0.6) < 1e-12 && std::abs(fit.intercept - 1.1) < 1e-12, "OLS fixture");

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = stats::threshold_grid();
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<Eigen::Index>(1 + rng() % 60);
    Eigen::ArrayXd s(n);
    std::vector<bool> acc(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      s(i) = u(rng);
      acc[static_cast<std::size_t>(i)] = u(rng) < 0.5;
    }
    const auto curve = stats::acceptance_curve(s, acc, grid);
    for (std::size_t i = 1; i < curve.size(); ++i)
      c.expect(curve[i].support <= curve[i - 1].support, "support increased with threshold");
  }
  c.detail << "r=" << fmt(p.r, 12) << " p=" << fmt(p.p_value, 12) << " kappa=" << fmt(k, 12) << " slope="
           << fmt(fit.slope, 12) << " intercept=" << fmt(fit.intercept, 12);
}

void combined_direction(Checker& c) {
  int both = 0;
  std::string trace;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto table = kda::testing::synthetic_metric_table(200, seed);
    stats::CvProtocol proto;
    proto.seed = seed;
    auto run = [&](stats::FeatureSet s) { return stats::cv_correlation(table, s, "accept", proto).mean_test_pearson; };
    const double kda_only = run(stats::FeatureSet::kda_only);
    const double others = run(stats::FeatureSet::others_only);
    const double combined = run(stats::FeatureSet::combined);
    if (combined > others && kda_only > others) ++both;
    if (seed == 1) trace = "seed1 kda=" + fmt(kda_only, 3) + " combined=" + fmt(combined, 3) + " others=" + fmt(others, 3);
  }
  c.expect(both >= 9, "ordering held in only " + std::to_string(both) + "/10 seeds");
  c.detail << both << "/10 seeds, " << trace;
}

void pipeline_determinism(Checker& c) {
  const fs::path dir = fs::path(KDA_TEST_WORKDIR) / "pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);

  SimulateConfig sc;
  sc.n_questions = 60;
  sc.n_students = 200;
  sc.n_solvers = 4;
  sc.seed = 4;
  sc.output_dir = (dir / "sim").string();
  run_simulate(sc);

  RunConfig rc;
  rc.items = (dir / "sim" / "items.jsonl").string();
  rc.facts = (dir / "sim" / "facts.jsonl").string();
  rc.solvers = {{"hash", "mock:hash", {}, ""},
                {"learner", "mock:knows-only-with-fact", {}, ""},
                {"oracle", "mock:oracle", {}, ""},
                {"uniform", "mock:uniform", {}, ""}};
  rc.cache_dir = (dir / "cache").string();
  rc.output_dir = (dir / "score").string();
  rc.seed = 4;

  const auto cold = run_score(rc);
  std::vector<std::string> first;
  const std::vector<std::string> files = {"scores.csv", "scores.jsonl", "matrix.json", "corpus_manifest.json",
                                          "manifest.json"};
  for (const auto& f : files) first.push_back(read_text((dir / "score" / f).string()));
  const auto warm = run_score(rc);
  bool identical = true;
  for (std::size_t i = 0; i < files.size(); ++i)
    identical = identical && read_text((dir / "score" / files[i]).string()) == first[i];
  c.expect(identical, "warm-cache rerun changed output bytes");
  c.expect(warm.report.backend_calls == 0 && warm.report.remote_calls == 0, "warm rerun called a backend");
  c.detail << "cold calls=" << cold.report.backend_calls << " warm hits=" << warm.report.cache_hits;

  const auto t0 = std::chrono::steady_clock::now();
  rc.output_dir = (dir / "e2e" / "score").string();
  rc.cache_dir.reset();
  run_score(rc);
  RunConfig ac;
  ac.analysis.scores = (dir / "e2e" / "score" / "scores.csv").string();
  ac.analysis.labels = (dir / "sim" / "labels.jsonl").string();
  ac.analysis.human = (dir / "sim" / "human.json").string();
  ac.items = rc.items;
  ac.facts = rc.facts;
  ac.output_dir = (dir / "e2e" / "analysis").string();
  ac.seed = 4;
  run_correlate(ac);
  run_report(ac);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(secs < 60.0, "end-to-end run took " + fmt(secs, 1) + " s");
  for (const char* f : {"correlations.csv", "cv.csv", "report.txt", "acceptance_curve.csv", "drilldown.csv"})
    c.expect(fs::exists(dir / "e2e" / "analysis" / f), std::string("missing ") + f);
  c.detail << " e2e=" << fmt(secs, 2) << "s";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"formula fixtures", 1.0, formula_fixtures},
      {"KDA property suite", 30.0, kda_properties},
      {"simulator oracle", 120.0, simulator_oracle},
      {"n-gram fixtures", 1.0, ngram_fixtures},
      {"stats fixtures", 5.0, stats_fixtures},
      {"combined-predictor direction", 120.0, combined_direction},
      {"pipeline determinism", 60.0, pipeline_determinism},
  };
  int failed = 0;
  for (const auto& crit : criteria) {
    Checker c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.body(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < crit.budget_seconds, "runtime " + fmt(secs, 2) + " s over budget " + fmt(crit.budget_seconds, 0) + " s");
    const bool ok = c.failed == 0;
    failed += !ok;
    std::printf("%s  %-30s %7.2fs  %s\n", ok ? "PASS" : "FAIL", crit.name.c_str(), secs, c.detail.str().c_str());
    for (const auto& f : c.failures) std::printf("      - %s\n", f.c_str());
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
