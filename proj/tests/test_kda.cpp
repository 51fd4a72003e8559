#include <algorithm>
#include <random>

#include "doctest.h"
#include "kda/error.hpp"
#include "kda/kda.hpp"
#include "support.hpp"

using namespace kda;
using kda::testing::one_item_matrix;
using kda::testing::reference_kda;

namespace {

HumanResponseTable human(const std::vector<int>& without, const std::vector<int>& with) {
  std::vector<std::string> people;
  for (std::size_t j = 0; j < without.size(); ++j) people.push_back("p" + std::to_string(j));
  auto t = HumanResponseTable::zeros(people, {"q"});
  for (std::size_t j = 0; j < without.size(); ++j) {
    t.correct_without(static_cast<Eigen::Index>(j), 0) = static_cast<std::uint8_t>(without[j]);
    t.correct_with(static_cast<Eigen::Index>(j), 0) = static_cast<std::uint8_t>(with[j]);
  }
  return t;
}

ResponseMatrix binary_matrix(const std::vector<int>& without, const std::vector<int>& with) {
  std::vector<double> a(without.begin(), without.end()), b(with.begin(), with.end());
  return one_item_matrix(a, b);
}

}  // namespace

TEST_CASE("kda_human examples") {
  auto s = kda_human(human({0, 0, 1}, {1, 0, 1}), "q");
  REQUIRE(s.defined());
  CHECK(*s.value == 0.5);
  CHECK(s.n_effective == 2.0);

  s = kda_human(human({1, 1, 1}, {1, 1, 1}), "q");
  CHECK_FALSE(s.defined());
  CHECK(s.n_effective == 0.0);

  CHECK(*kda_human(human({0, 0}, {1, 1}), "q").value == 1.0);
  CHECK_THROWS_AS(kda_human(human({0}, {1}), "missing"), Error);
}

TEST_CASE("kda_human skips participants with a missing response") {
  auto t = human({0, 0, 0}, {1, 0, 0});
  t.observed_with(2, 0) = false;  // third participant never answered with the fact
  auto s = kda_human(t, "q");
  CHECK(s.n_effective == 2.0);
  CHECK(*s.value == 0.5);
}

TEST_CASE("kda_disc examples") {
  CHECK(*kda_disc(binary_matrix({0, 0, 1}, {1, 0, 1}), "q").value == 0.5);
  CHECK_FALSE(kda_disc(binary_matrix({1, 1, 1}, {0, 1, 0}), "q").defined());
  CHECK(*kda_disc(binary_matrix({0}, {0}), "q").value == 0.0);
}

TEST_CASE("kda_cont examples") {
  auto s = kda_cont(one_item_matrix({0.2, 0.5, 0.9}, {0.9, 0.6, 0.2}), "q");
  REQUIRE(s.defined());
  CHECK(*s.value == doctest::Approx(1.04 / 1.4).epsilon(1e-12));
  CHECK(s.n_effective == doctest::Approx(1.4));

  CHECK(*kda_cont(one_item_matrix({0, 0, 0}, {1, 1, 1}), "q").value == 1.0);
  CHECK_FALSE(kda_cont(one_item_matrix({1, 1}, {0.3, 0.2}), "q").defined());

  auto bad = one_item_matrix({0.2, 1.2}, {0.5, 0.5});
  CHECK_THROWS_WITH_AS(kda_cont(bad, "q"), doctest::Contains("invalid matrix"), Error);
}

TEST_CASE("kda_cont treats sub-floor mass as undefined") {
  auto s = kda_cont(one_item_matrix({1.0 - 1e-14}, {1.0}), "q");
  CHECK_FALSE(s.defined());
}

TEST_CASE("unobserved cells drop out of both sums") {
  auto m = one_item_matrix({0.0, 0.0}, {1.0, 0.0});
  m.observed(1, 0) = false;
  CHECK(*kda_cont(m, "q").value == 1.0);
  CHECK(*kda_disc(m, "q").value == 1.0);
}

TEST_CASE("sub-metrics resolve against matrix solvers") {
  std::vector<SolverRef> solvers;
  for (const char* n : {"T5-cbqa-small", "ALbert-xl", "MPNet", "SciBert", "Roberta-large"})
    solvers.push_back({n, "mock:oracle", {}, ""});
  auto m = ResponseMatrix::zeros(solvers, {"a", "b", "c"});
  m.p_correct_with.setOnes();
  m.r_with.setOnes();

  auto small = SubmetricSpec::kda_small();
  CHECK(small.solver_names == std::vector<std::string>{"T5-cbqa-small", "ALbert-xl", "MPNet", "SciBert"});
  CHECK(small.resolve(m).size() == 4);
  CHECK(SubmetricSpec::kda_large().solver_names.size() == 10);
  CHECK_THROWS_WITH_AS(SubmetricSpec::kda_large().resolve(m), doctest::Contains("unknown solver in subset"), Error);

  const auto rows = score_batch(m, {"a", "b", "c"}, {SubmetricSpec::all(m), small});
  CHECK(rows.size() == 12);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    CHECK(*r.score.value == 1.0);
  }
}

TEST_CASE("score_batch keeps kinds independent and never aborts") {
  // Binary says everyone was right without the fact; probabilities disagree.
  auto m = one_item_matrix({0.4, 0.3}, {0.9, 0.9});
  m.r_without.setOnes();
  const auto rows = score_batch(m, {"q", "ghost"}, {});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].kind == KdaKind::disc);
  CHECK_FALSE(rows[0].score.defined());
  CHECK(rows[1].kind == KdaKind::cont);
  CHECK(rows[1].score.defined());
  CHECK_FALSE(rows[2].error.empty());
  CHECK_FALSE(rows[3].error.empty());
}

TEST_CASE("score table csv round-trips and marks undefined values") {
  auto m = one_item_matrix({1.0, 1.0}, {0.5, 0.5});
  const auto rows = score_batch(m, {"q"}, {});
  const std::string csv = score_table_csv(rows);
  CHECK(csv.rfind("item_id,metric_kind,subset,value,n_effective,defined", 0) == 0);
  CHECK(csv.find("q,disc,all,,0,false") != std::string::npos);
  const auto back = parse_score_table_csv(csv);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].item_id == rows[i].item_id);
    CHECK(back[i].kind == rows[i].kind);
    CHECK(back[i].score.value == rows[i].score.value);
  }
}

TEST_CASE("kda_cont agrees with the plain-loop reference on random matrices") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> p0(n), p1(n), wrong(n);
    for (std::size_t j = 0; j < n; ++j) {
      p0[j] = u(rng);
      p1[j] = u(rng);
      wrong[j] = 1.0 - p0[j];
    }
    const auto got = kda_cont(one_item_matrix(p0, p1), "q");
    const auto want = reference_kda(wrong, p1, kContinuousMassFloor);
    REQUIRE(got.defined() == want.has_value());
    if (want) CHECK(*got.value == doctest::Approx(*want).epsilon(1e-12));
  }
}

TEST_CASE("human table json round-trip") {
  auto t = human({0, 1, 0}, {1, 1, 0});
  t.observed_without(1, 0) = false;
  const auto back = human_table_from_json(to_json(t));
  CHECK(back.participants == t.participants);
  CHECK(back.correct_without == t.correct_without);
  CHECK(back.correct_with == t.correct_with);
  CHECK(back.observed_without == t.observed_without);
}

TEST_CASE("response matrix json round-trip and checks") {
  auto m = one_item_matrix({0.25, 0.75}, {1.0, 0.0});
  m.solvers[0].size_bytes = 1234;
  CHECK(response_matrix_from_json(to_json(m)) == m);
  auto broken = m;
  broken.r_with(0, 0) = 2;
  CHECK_THROWS_WITH_AS(broken.check(), doctest::Contains("invalid matrix"), Error);
}
