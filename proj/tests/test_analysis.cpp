#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "qulog/analysis.hpp"

using namespace qulog;

namespace {

PreparedSample mk(std::vector<std::string> tokens, std::string label) {
  static int n = 0;
  PreparedSample s;
  s.id = "s:f:" + std::to_string(++n);
  s.system = "s";
  s.tokens = std::move(tokens);
  s.label = std::move(label);
  return s;
}

// independent brute-force recomputation of the pooled entropy values
std::vector<double> brute_force_entropies(const std::vector<PreparedSample>& samples,
                                          const std::vector<int>& ns) {
  std::vector<double> out;
  for (int n : ns) {
    std::map<std::vector<std::string>, std::array<long, 3>> table;
    for (const auto& s : samples) {
      if (static_cast<int>(s.tokens.size()) < n) continue;
      for (size_t i = 0; i + n <= s.tokens.size(); ++i) {
        std::vector<std::string> gram(s.tokens.begin() + i, s.tokens.begin() + i + n);
        table[gram][level_index(s.label)]++;
      }
    }
    for (const auto& [_, c] : table) {
      long total = c[0] + c[1] + c[2];
      double h = 0;
      for (long x : c) {
        if (x == 0) continue;
        double p = static_cast<double>(x) / total;
        h -= p * std::log(p);
      }
      out.push_back(h / std::log(3.0));
    }
  }
  return out;
}

std::vector<PreparedSample> random_corpus(std::mt19937_64& rng, int max_size) {
  static const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h"};
  static const std::vector<std::string> levels = {"info", "warning", "error"};
  std::uniform_int_distribution<int> nsamp(1, max_size);
  std::uniform_int_distribution<int> nlen(0, 7);
  std::uniform_int_distribution<size_t> pw(0, words.size() - 1);
  std::uniform_int_distribution<size_t> pl(0, 2);
  std::vector<PreparedSample> out;
  int n = nsamp(rng);
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> toks;
    int len = nlen(rng);
    for (int j = 0; j < len; ++j) toks.push_back(words[pw(rng)]);
    out.push_back(mk(std::move(toks), levels[pl(rng)]));
  }
  return out;
}

}  // namespace

TEST_CASE("ngram_counts implements the sliding window") {
  auto counts = ngram_counts({mk({"a", "b", "c"}, "info")}, 2);
  REQUIRE(counts.counts.size() == 2);
  std::string ab = std::string("a") + '\x1f' + "b";
  std::string bc = std::string("b") + '\x1f' + "c";
  CHECK(counts.counts.at(ab)[0] == 1);
  CHECK(counts.counts.at(bc)[0] == 1);
  CHECK(counts.counts.at(ab)[1] == 0);
}

TEST_CASE("ngram_counts of an empty dataset is empty") {
  CHECK(ngram_counts({}, 3).counts.empty());
}

TEST_CASE("ngram_counts matches a brute-force dictionary on a small fixture") {
  std::vector<PreparedSample> fixture = {
      mk({"open", "file", "failed"}, "error"), mk({"open", "file", "ok"}, "info"),
      mk({"disk", "full"}, "warning"),         mk({"open", "file", "failed"}, "error"),
      mk({"file"}, "info"),
  };
  for (int n = 1; n <= 3; ++n) {
    auto got = ngram_counts(fixture, n);
    std::map<std::string, std::array<long, 3>> want;
    for (const auto& s : fixture) {
      if (static_cast<int>(s.tokens.size()) < n) continue;
      for (size_t i = 0; i + n <= s.tokens.size(); ++i)
        want[ngram_key(s.tokens, i, n)][level_index(s.label)]++;
    }
    CHECK(got.counts == want);
  }
}

TEST_CASE("ngram totals tie out against instruction lengths") {
  std::mt19937_64 rng(99);
  auto corpus = random_corpus(rng, 200);
  for (int n = 1; n <= 5; ++n) {
    auto counts = ngram_counts(corpus, n);
    std::array<long, 3> total{0, 0, 0};
    for (const auto& [_, c] : counts.counts)
      for (int l = 0; l < 3; ++l) total[l] += c[l];
    std::array<long, 3> want{0, 0, 0};
    for (const auto& s : corpus) {
      long len = static_cast<long>(s.tokens.size());
      want[level_index(s.label)] += std::max(0L, len - n + 1);
    }
    CHECK(total == want);
  }
}

TEST_CASE("normalized_entropy boundary identities") {
  CHECK(normalized_entropy({5, 0, 0}) == 0.0);
  CHECK(normalized_entropy({0, 3, 0}) == 0.0);
  CHECK(normalized_entropy({1, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalized_entropy({0, 0, 0}), DataError);
}

TEST_CASE("normalized_entropy scalar oracle for (2,1,0)") {
  double want = -(2.0 / 3 * std::log(2.0 / 3) + 1.0 / 3 * std::log(1.0 / 3)) / std::log(3.0);
  CHECK(normalized_entropy({2, 1, 0}) == doctest::Approx(want).epsilon(1e-12));
  CHECK(normalized_entropy({2, 1, 0}) == doctest::Approx(0.5794).epsilon(1e-4));
}

TEST_CASE("entropy values always lie in [0,1]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto corpus = random_corpus(rng, 100);
    for (int n = 1; n <= 3; ++n)
      for (const auto& [_, c] : ngram_counts(corpus, n).counts) {
        double h = normalized_entropy(c);
        CHECK(h >= 0.0);
        CHECK(h <= 1.0 + 1e-12);
      }
  }
}

TEST_CASE("entropy_distribution equals the brute-force oracle") {
  std::mt19937_64 rng(12345);
  std::vector<int> ns = {1, 2, 3, 4, 5};
  for (int trial = 0; trial < 10; ++trial) {
    auto corpus = random_corpus(rng, 500);
    std::vector<double> oracle;
    bool has_grams = false;
    for (const auto& s : corpus)
      if (!s.tokens.empty()) has_grams = true;
    if (!has_grams) continue;
    oracle = brute_force_entropies(corpus, ns);
    auto dist = entropy_distribution(corpus, ns);
    auto a = dist.pooled;
    auto b = oracle;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));

    auto sum = summarize(b);
    CHECK(dist.pooled_summary.min == doctest::Approx(sum.min).epsilon(1e-9));
    CHECK(dist.pooled_summary.q1 == doctest::Approx(sum.q1).epsilon(1e-9));
    CHECK(dist.pooled_summary.median == doctest::Approx(sum.median).epsilon(1e-9));
    CHECK(dist.pooled_summary.q3 == doctest::Approx(sum.q3).epsilon(1e-9));
    CHECK(dist.pooled_summary.max == doctest::Approx(sum.max).epsilon(1e-9));
  }
}

TEST_CASE("single-level corpus yields an all-zero entropy summary") {
  std::vector<PreparedSample> corpus = {
      mk({"a", "b"}, "info"), mk({"b", "c"}, "info"), mk({"a"}, "info")};
  auto dist = entropy_distribution(corpus, {1, 2});
  CHECK(dist.pooled_summary.min == 0.0);
  CHECK(dist.pooled_summary.max == 0.0);
}

TEST_CASE("five-number summary ordering invariant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> vals;
    for (int i = 0; i < 1 + trial * 3; ++i) vals.push_back(u(rng));
    auto s = summarize(vals);
    CHECK(s.min <= s.q1);
    CHECK(s.q1 <= s.median);
    CHECK(s.median <= s.q3);
    CHECK(s.q3 <= s.max);
  }
}

TEST_CASE("quantile convention: linear interpolation between order statistics") {
  // h = (n-1)p on [1,2,3,4]: q1 = 1.75, median = 2.5, q3 = 3.25
  std::vector<double> v = {1, 2, 3, 4};
  CHECK(quantile_linear(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile_linear(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_linear(v, 0.75) == doctest::Approx(3.25));
}

TEST_CASE("overlap of disjoint vocabularies is zero, identical sets one") {
  std::vector<PreparedSample> disjoint = {mk({"a", "b"}, "info"), mk({"c", "d"}, "error")};
  CHECK(level_pair_overlap(disjoint, "info", "error", {1, 2}) == 0.0);

  std::vector<PreparedSample> same = {mk({"a", "b"}, "info"), mk({"a", "b"}, "error")};
  CHECK(level_pair_overlap(same, "info", "error", {1, 2}) == 1.0);
}

TEST_CASE("overlap is symmetric in its level arguments") {
  std::mt19937_64 rng(31);
  auto corpus = random_corpus(rng, 300);
  bool any = false;
  for (const auto& s : corpus) any = any || !s.tokens.empty();
  if (!any) return;
  for (auto [a, b] : std::vector<std::pair<std::string, std::string>>{
           {"info", "error"}, {"info", "warning"}, {"error", "warning"}}) {
    double ab, ba;
    try {
      ab = level_pair_overlap(corpus, a, b, {1, 2, 3});
      ba = level_pair_overlap(corpus, b, a, {1, 2, 3});
    } catch (const DataError&) {
      continue;
    }
    CHECK(ab == ba);
  }
  CHECK_THROWS_AS(level_pair_overlap(corpus, "info", "info", {1}), ConfigError);
}

TEST_CASE("contingency equals a hand tally on a 10-sample fixture") {
  Assessment a;
  a.task = TaskSpec::make(TaskKind::kLevelIwe);
  // (true, predicted) pairs chosen by hand
  std::vector<std::pair<int, int>> pairs = {{0, 0}, {0, 0}, {0, 1}, {1, 2}, {1, 2},
                                            {1, 1}, {2, 2}, {2, 2}, {2, 0}, {2, 2}};
  for (auto [t, p] : pairs) {
    SampleAssessment s;
    s.label = t;
    s.predicted = p;
    a.samples.push_back(s);
  }
  auto table = contingency(a);
  CHECK(table.counts[0] == std::vector<long>{2, 1, 0});
  CHECK(table.counts[1] == std::vector<long>{0, 1, 2});
  CHECK(table.counts[2] == std::vector<long>{1, 0, 3});
  // off-diagonal row percentages over row totals
  CHECK(table.percent[0][1] == doctest::Approx(100.0 / 3));
  CHECK(table.percent[1][2] == doctest::Approx(200.0 / 3));
  CHECK(table.percent[2][0] == doctest::Approx(25.0));
  CHECK(table.percent[0][0] == 0.0);
}

TEST_CASE("perfect predictions leave the contingency off-diagonal empty") {
  Assessment a;
  a.task = TaskSpec::make(TaskKind::kLevelIwe);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) {
      SampleAssessment s;
      s.label = c;
      s.predicted = c;
      a.samples.push_back(s);
    }
  auto table = contingency(a);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        CHECK(table.counts[i][j] == 0);
        CHECK(table.percent[i][j] == 0.0);
      }
}

TEST_CASE("contingency without labels is fatal") {
  Assessment a;
  a.task = TaskSpec::make(TaskKind::kLevelIwe);
  SampleAssessment s;
  s.label = -1;
  a.samples.push_back(s);
  CHECK_THROWS_AS(contingency(a), DataError);
}
