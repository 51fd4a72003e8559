#include <filesystem>
#include <random>

#include "doctest.h"
#include "kda/csv.hpp"
#include "kda/digest.hpp"
#include "kda/error.hpp"
#include "kda/model.hpp"

using namespace kda;

namespace {

McqItem sample_item() {
  McqItem item;
  item.id = "q1";
  item.fact_id = "f1";
  item.stem = "Predators eat";
  item.options = {"bunnies", "lions", "humans", "grass"};
  item.answer_index = 0;
  return item;
}

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "kda_test_model";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("validate_item reports violations as data") {
  McqItem ok = sample_item();
  CHECK(validate_item(ok).ok());
  CHECK(validate_item(ok).ok());  // repeatable, no mutation

  McqItem out_of_range = ok;
  out_of_range.answer_index = out_of_range.options.size();
  auto r = validate_item(out_of_range);
  REQUIRE(r.has(ViolationCode::answer_out_of_range));
  CHECK(r.violations.front().message == "answer out of range");

  McqItem dup = ok;
  dup.options = {"a", "a", "b", "c"};
  r = validate_item(dup);
  REQUIRE(r.has(ViolationCode::duplicate_options));

  McqItem dup_after_trim = ok;
  dup_after_trim.options = {"a", " a ", "b", "c"};
  CHECK(validate_item(dup_after_trim).has(ViolationCode::duplicate_options));

  McqItem empty = ok;
  empty.stem = "  ";
  empty.options = {"x"};
  r = validate_item(empty);
  CHECK(r.has(ViolationCode::empty_stem));
  CHECK(r.has(ViolationCode::too_few_options));
}

TEST_CASE("validate_corpus catches duplicate ids and empty facts") {
  auto r = validate_corpus({sample_item(), sample_item()}, {Fact{"f1", " ", DatasetTag::custom}});
  CHECK(r.has(ViolationCode::duplicate_id));
  CHECK(r.has(ViolationCode::empty_fact_text));
}

TEST_CASE("QualityLabels accept rule and ranges") {
  CHECK(QualityLabels(2.51).accept());
  CHECK_FALSE(QualityLabels(2.5).accept());
  CHECK_THROWS_AS(QualityLabels(0.9), Error);
  CHECK_THROWS_AS(QualityLabels(4.1), Error);
  CHECK_THROWS_AS(QualityLabels(3.0, {-1, 0, 0, 0, 0}), Error);
  QualityLabels l(3.0, {0, 2, 1, 0, 0});
  CHECK(l.total_flaws() == 3);
  CHECK(l.flaw_count(Flaw::multiple_answers) == 2);
}

TEST_CASE("JSONL codecs round-trip") {
  McqItem item = sample_item();
  item.provenance = Provenance::generated;
  CHECK(decode_item(encode(item)) == item);

  Fact fact{"f1", "predators eat prey", DatasetTag::tabmcq};
  CHECK(decode_fact(encode(fact)) == fact);

  QualityLabels labels(3.29, {1, 0, 0, 2, 0});
  CHECK(decode_labels(encode(labels)) == labels);

  for (DatasetTag t : {DatasetTag::obqa, DatasetTag::tabmcq, DatasetTag::sciq, DatasetTag::custom})
    CHECK(parse_dataset_tag(to_string(t)) == t);
  for (Flaw f : kAllFlaws) CHECK(parse_flaw(to_string(f)) == f);
}

TEST_CASE("decoding applies NFC and reports missing fields") {
  // "e" + combining acute accent composes to U+00E9.
  const std::string line =
      R"({"id":"q","fact_id":"f","stem":"caf)" "e\xCC\x81" R"(","options":["a","b"],"answer_index":1,"provenance":"human"})";
  CHECK(decode_item(line).stem == "caf\xC3\xA9");
  CHECK(nfc("e\xCC\x81") == "\xC3\xA9");
  CHECK(trim("\xE2\x80\x83 x \t") == "x");  // em space is whitespace

  try {
    decode_item(R"({"id":"q","stem":"s","options":["a","b"],"answer_index":0})");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing field 'fact_id'") != std::string::npos);
    CHECK(e.exit_code() == 2);
  }
  CHECK_THROWS_AS(decode_item("{not json"), Error);
  CHECK_THROWS_AS(decode_labels(R"({"likert":2.0,"accept":true})"), Error);
}

TEST_CASE("item files report line numbers") {
  const auto path = temp_file("items.jsonl");
  write_items_jsonl(path.string(), {sample_item()});
  CHECK(read_items_jsonl(path.string()).size() == 1);
  write_text(path.string(), encode(sample_item()) + "\n{\"id\":3}\n");
  try {
    read_items_jsonl(path.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("sha256 matches the standard test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("format_real round-trips doubles") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(parse_real(format_real(v)).value() == v);
  }
  CHECK(format_real(0.5) == "0.5");
  CHECK_FALSE(parse_real("abc").has_value());
  CHECK_FALSE(parse_real("1.5x").has_value());
}

TEST_CASE("csv quoting round-trips") {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"plain", "with,comma"}, {"with \"quote\"", "line\nbreak"}};
  const CsvTable back = parse_csv(t.to_string());
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(back.require_column("b") == 1);
  CHECK_THROWS_WITH_AS(back.require_column("c"), "missing column 'c'", Error);
  CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), Error);
}
