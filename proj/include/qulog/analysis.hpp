#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qulog/models.hpp"

namespace qulog {

inline constexpr int kLevelCount = 3;  // info, warning, error

inline int level_index(const std::string& level) {
  if (level == "info") return 0;
  if (level == "warning") return 1;
  if (level == "error") return 2;
  throw DataError("unknown level: " + level);
}

struct NGramLevelCounts {
  int n = 1;
  std::map<std::string, std::array<long, kLevelCount>> counts;  // key: tokens joined by '\x1f'
};

inline std::string ngram_key(const std::vector<std::string>& tokens, size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key.push_back('\x1f');
    key += tokens[start + i];
  }
  return key;
}

// Sliding-window n-grams per instruction; no cross-instruction windows.
inline NGramLevelCounts ngram_counts(const std::vector<PreparedSample>& samples, int n) {
  if (n < 1 || n > 5) throw ConfigError("ngram_counts: n must be in [1,5]");
  NGramLevelCounts out;
  out.n = n;
  for (const auto& s : samples) {
    int li = level_index(s.label);
    if (static_cast<int>(s.tokens.size()) < n) continue;
    for (size_t i = 0; i + n <= s.tokens.size(); ++i) {
      auto& c = out.counts[ngram_key(s.tokens, i, n)];
      c[li]++;
    }
  }
  return out;
}

// Shannon entropy of the level distribution, normalized by log(3) — the
// number of in-scope levels, fixed regardless of which levels the corpus
// actually uses.
inline double normalized_entropy(const std::array<long, kLevelCount>& level_counts) {
  long total = 0;
  for (long c : level_counts) total += c;
  if (total <= 0) throw DataError("normalized_entropy: all-zero counts");
  double h = 0;
  for (long c : level_counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(kLevelCount));
}

struct FiveNumberSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

// Linear interpolation between order statistics (h = (n-1)p).
inline double quantile_linear(std::vector<double> sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  double h = (static_cast<double>(sorted.size()) - 1) * p;
  size_t lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

inline FiveNumberSummary summarize(std::vector<double> values) {
  if (values.empty()) throw DataError("summary of empty distribution");
  std::sort(values.begin(), values.end());
  FiveNumberSummary s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_linear(values, 0.25);
  s.median = quantile_linear(values, 0.5);
  s.q3 = quantile_linear(values, 0.75);
  return s;
}

struct EntropyDistribution {
  std::vector<double> pooled;                 // entropies over all requested n
  std::map<int, std::vector<double>> per_n;
  FiveNumberSummary pooled_summary;
  std::map<int, FiveNumberSummary> per_n_summary;
};

inline EntropyDistribution entropy_distribution(const std::vector<PreparedSample>& samples,
                                                const std::vector<int>& ns) {
  EntropyDistribution d;
  for (int n : ns) {
    auto counts = ngram_counts(samples, n);
    auto& bucket = d.per_n[n];
    for (const auto& [_, c] : counts.counts) {
      double h = normalized_entropy(c);
      bucket.push_back(h);
      d.pooled.push_back(h);
    }
  }
  if (d.pooled.empty()) throw DataError("entropy_distribution: no n-grams in corpus");
  d.pooled_summary = summarize(d.pooled);
  for (auto& [n, values] : d.per_n)
    if (!values.empty()) d.per_n_summary[n] = summarize(values);
  return d;
}

// Jaccard overlap of the n-gram sets observed at two levels, pooled over ns.
inline double level_pair_overlap(const std::vector<PreparedSample>& samples,
                                 const std::string& level_a, const std::string& level_b,
                                 const std::vector<int>& ns) {
  int ia = level_index(level_a), ib = level_index(level_b);
  if (ia == ib) throw ConfigError("level_pair_overlap: levels must differ");
  long both = 0, either = 0;
  for (int n : ns) {
    auto counts = ngram_counts(samples, n);
    for (const auto& [_, c] : counts.counts) {
      bool a = c[ia] > 0, b = c[ib] > 0;
      if (a || b) ++either;
      if (a && b) ++both;
    }
  }
  if (either == 0) throw DataError("level_pair_overlap: no n-grams at either level");
  return static_cast<double>(both) / static_cast<double>(either);
}

struct ContingencyTable {
  int classes = 0;
  std::vector<std::vector<long>> counts;       // [true][predicted]
  std::vector<std::vector<double>> percent;    // off-diagonal row percentages
};

inline ContingencyTable contingency(const Assessment& assessment) {
  int k = assessment.task.classes();
  ContingencyTable t;
  t.classes = k;
  t.counts.assign(k, std::vector<long>(k, 0));
  t.percent.assign(k, std::vector<double>(k, 0.0));
  bool any_label = false;
  for (const auto& s : assessment.samples) {
    if (s.label < 0) continue;
    any_label = true;
    t.counts[s.label][s.predicted]++;
  }
  if (!any_label) throw DataError("contingency: assessment has no labels");
  for (int i = 0; i < k; ++i) {
    long row = 0;
    for (int j = 0; j < k; ++j) row += t.counts[i][j];
    if (row == 0) continue;
    for (int j = 0; j < k; ++j)
      if (i != j) t.percent[i][j] = 100.0 * t.counts[i][j] / row;
  }
  return t;
}

}  // namespace qulog
