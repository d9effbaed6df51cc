#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "batm/coherence.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace batm;
using Catch::Approx;

namespace {

using Docs = std::vector<std::vector<std::string>>;

Docs random_docs(std::mt19937_64& rng, const std::vector<std::string>& alphabet, std::size_t count,
                 std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  Docs docs(count);
  for (auto& d : docs) {
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) d.push_back(alphabet[pick(rng)]);
  }
  if (std::all_of(docs.begin(), docs.end(), [](const auto& d) { return d.empty(); })) docs[0].push_back(alphabet[0]);
  return docs;
}

TopicDescriptor descriptor(std::size_t head, std::vector<std::string> words) {
  TopicDescriptor d{head, {}};
  for (auto& w : words) d.terms.emplace_back(std::move(w), 1.0);
  return d;
}

}  // namespace

TEST_CASE("a document shorter than the window is a single window") {
  const auto counts = WindowCounts::build({{"a", "b", "c", "d", "e"}}, {"a", "e"}, 110);
  CHECK(counts.total_windows() == 1);
  CHECK(counts.frequency("a") == 1);
  CHECK(counts.joint("a", "e") == 1);
}

TEST_CASE("window counts slide within documents and count presence once") {
  const auto counts = WindowCounts::build({{"a", "b", "a"}}, {"a", "b", "q"}, 2);
  CHECK(counts.total_windows() == 2);
  CHECK(counts.frequency("a") == 2);
  CHECK(counts.frequency("b") == 2);
  CHECK(counts.joint("a", "b") == 2);
  CHECK(counts.joint("b", "a") == 2);
  CHECK(counts.frequency("q") == 0);
  CHECK(counts.frequency("untracked") == 0);

  const auto split = WindowCounts::build({{"a", "b"}, {}, {"b", "c", "a"}}, {"a", "b", "c"}, 2);
  CHECK(split.total_windows() == 3);
  CHECK(split.joint("a", "b") == 1);
  CHECK(split.joint("a", "c") == 1);
}

TEST_CASE("window count errors") {
  CHECK_THROWS_AS(WindowCounts::build({{"a"}}, {"a"}, 0), ConfigError);
  CHECK_THROWS_AS(WindowCounts::build({}, {"a"}, 5), ConfigError);
  CHECK_THROWS_AS(WindowCounts::build({{}, {}}, {"a"}, 5), ConfigError);
  const auto counts = WindowCounts::build({{"a", "b"}}, {"a", "b"}, 5);
  CHECK_THROWS_AS(npmi("a", "zzz", counts), ConfigError);
}

TEST_CASE("npmi of perfectly associated words is 1") {
  const auto always = WindowCounts::build({{"a", "b"}, {"b", "a", "c"}}, {"a", "b"}, 3);
  CHECK(npmi("a", "b", always) == 1.0);
  const auto half = WindowCounts::build({{"a", "b"}, {"c"}}, {"a", "b"}, 3);
  CHECK(npmi("a", "b", half) == Approx(1.0).margin(1e-6));
}

TEST_CASE("npmi of never co-occurring words approaches -1") {
  const auto counts = WindowCounts::build({{"a"}, {"b"}}, {"a", "b"}, 3);
  const double eps = kDefaultNpmiEpsilon;
  const double expected = std::log(eps / 0.25) / -std::log(eps);
  CHECK(npmi("a", "b", counts) == Approx(expected).epsilon(1e-12));
  CHECK(npmi("a", "b", counts) > -1.0);
  CHECK(npmi("a", "b", counts) < -0.9);
}

TEST_CASE("npmi of independent words is zero") {
  const auto counts = WindowCounts::build({{"a", "b"}, {"a", "x"}, {"b", "y"}, {"z"}}, {"a", "b"}, 2);
  CHECK(npmi("a", "b", counts) == Approx(0.0).margin(1e-6));
}

TEST_CASE("npmi is symmetric, bounded and increases with co-occurrence") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 50; ++trial) {
    const auto docs = random_docs(rng, alphabet, 8, 12);
    const auto counts = WindowCounts::build(docs, alphabet, 4);
    for (const auto& x : alphabet) {
      for (const auto& y : alphabet) {
        if (counts.frequency(x) == 0 || counts.frequency(y) == 0) continue;
        const double v = npmi(x, y, counts);
        CHECK(v == npmi(y, x, counts));
        CHECK(v >= -1.0);
        // Smoothing pushes self-pairs to about 1 + eps / (p ln(1/p)).
        CHECK(v <= 1.0 + 1e-9);
      }
    }
  }

  // Same marginal counts, growing joint count.
  double previous = -2.0;
  for (int shared = 0; shared <= 4; ++shared) {
    Docs docs;
    for (int i = 0; i < 4; ++i) docs.push_back(i < shared ? Docs::value_type{"a", "b"} : Docs::value_type{"a"});
    for (int i = shared; i < 4; ++i) docs.push_back({"b"});
    for (int i = 0; i < 4; ++i) docs.push_back({"z"});
    const double v = npmi("a", "b", WindowCounts::build(docs, {"a", "b"}, 3));
    CHECK(v > previous);
    previous = v;
  }
}

TEST_CASE("cv matches brute-force window enumeration on random fixtures") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> alphabet = {"ant", "bee", "cat", "dog", "eel", "fox", "gnu", "hen"};
  for (int trial = 0; trial < 120; ++trial) {
    const auto docs = random_docs(rng, alphabet, 1 + trial % 7, 15);
    const std::size_t window = 1 + trial % 5;
    const std::vector<std::string> words = {"ant", "bee", "cat", "dog", "zebra"};
    const auto counts = WindowCounts::build(docs, words, window);
    const auto cv = cv_score(words, counts);
    if (cv.words.size() < 2) {
      CHECK_FALSE(cv.score.has_value());
      continue;
    }
    REQUIRE(cv.score.has_value());
    CHECK(*cv.score == Approx(oracle::brute_force_cv(docs, words, window, kDefaultNpmiEpsilon)).margin(1e-9));
  }
}

TEST_CASE("cv of a five-word topic over a twenty-document corpus matches the oracle") {
  const auto raw = fixtures::news_proxy_corpus(4);
  Docs docs;
  for (const auto& d : raw) {
    Docs::value_type toks;
    for (const auto& t : tokenize(d.text)) toks.push_back(t.text);
    docs.push_back(toks);
  }
  REQUIRE(docs.size() == 20);
  std::vector<std::string> words;
  for (const auto& t : tokenize(raw[0].text)) {
    if (t.alphabetic && std::find(words.begin(), words.end(), t.text) == words.end()) words.push_back(t.text);
    if (words.size() == 5) break;
  }
  REQUIRE(words.size() == 5);
  for (std::size_t window : {3u, 10u, 110u}) {
    const auto cv = cv_score(words, WindowCounts::build(docs, words, window));
    CHECK(*cv.score == Approx(oracle::brute_force_cv(docs, words, window, kDefaultNpmiEpsilon)).margin(1e-9));
  }
}

TEST_CASE("cv is higher for a co-occurring topic than for a scattered one") {
  Docs docs;
  for (int i = 0; i < 20; ++i) {
    docs.push_back({"sun", "beach", "sand", "filler"});
    docs.push_back({"snow", "ski", "ice", "filler"});
  }
  const std::vector<std::string> coherent = {"sun", "beach", "sand"};
  const std::vector<std::string> mixed = {"sun", "ski", "sand"};
  const auto counts = WindowCounts::build(docs, {"sun", "beach", "sand", "ski"}, 110);
  CHECK(*cv_score(coherent, counts).score > *cv_score(mixed, counts).score);
}

TEST_CASE("perfect co-occurrence gives cv of 1") {
  Docs docs;
  for (int i = 0; i < 5; ++i) {
    docs.push_back({"a", "b", "x"});
    docs.push_back({"y", "z"});
  }
  const auto cv = cv_score({"a", "b"}, WindowCounts::build(docs, {"a", "b"}, 110));
  CHECK(*cv.score == Approx(1.0).margin(1e-6));
}

TEST_CASE("cv reports dropped words and zero context vectors") {
  const auto counts = WindowCounts::build({{"a", "b"}, {"a", "x"}, {"b", "y"}, {"z"}}, {"a", "b", "nope"}, 2);
  const auto cv = cv_score({"a", "nope", "b"}, counts);
  CHECK(cv.words == std::vector<std::string>{"a", "b"});
  REQUIRE(cv.score.has_value());
  CHECK_FALSE(cv_score({"a", "nope"}, counts).score.has_value());
}

TEST_CASE("coherence report averages scored topics only") {
  Docs docs;
  for (int i = 0; i < 10; ++i) {
    docs.push_back({"red", "blue", "green"});
    docs.push_back({"one", "two"});
  }
  std::vector<std::string> captured;
  warning_sink() = [&](const std::string& m) { captured.push_back(m); };
  const auto result = coherence_report(
      {descriptor(0, {"red", "blue", "green"}), descriptor(1, {"one", "ghost"}), descriptor(2, {"one", "two", "red"})},
      docs, 110, 25);
  warning_sink() = nullptr;
  REQUIRE(result.topics.size() == 3);
  CHECK(result.topics[0].cv.has_value());
  CHECK_FALSE(result.topics[1].cv.has_value());
  CHECK(captured.size() == 1);
  CHECK(*result.average_cv == Approx((*result.topics[0].cv + *result.topics[2].cv) / 2.0).epsilon(1e-15));
  CHECK(*result.topics[0].cv == Approx(1.0).margin(1e-6));

  const auto j = result.to_json();
  CHECK(j.at("topics")[1].at("cv").is_null());
  std::ostringstream table;
  result.write_table(table);
  CHECK(table.str().find("1\tn/a\tone ghost\n") != std::string::npos);

  const auto trimmed = coherence_report({descriptor(0, {"red", "blue", "green"})}, docs, 110, 2);
  CHECK(trimmed.topics[0].words.size() == 2);
  CHECK_THROWS_AS(coherence_report({}, docs), ConfigError);
}
