#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "qulog/corpus.hpp"

namespace qulog {

struct MetricSuite {
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::optional<double> specificity;  // binary tasks only, positive = class 1
  double macro_auc = 0;
  std::vector<double> per_class_precision, per_class_recall, per_class_f1, per_class_auc;
  bool zero_denominator_warning = false;
};

namespace detail {

// One-vs-rest AUC via the rank statistic with tie-averaged ranks; equal to
// the trapezoidal ROC area with tied scores grouped. All-tied scores -> 0.5.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive,
                      bool* warn) {
  size_t n = scores.size();
  long n_pos = std::count(positive.begin(), positive.end(), true);
  long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    if (warn) *warn = true;
    return 0.0;
  }
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  double rank_sum = 0;
  for (size_t k = 0; k < n; ++k)
    if (positive[k]) rank_sum += rank[k];
  return (rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace detail

inline MetricSuite classification_metrics(const std::vector<int>& labels,
                                          const std::vector<int>& predictions,
                                          const std::vector<std::vector<double>>& scores,
                                          int n_classes) {
  if (labels.size() != predictions.size() || (!scores.empty() && scores.size() != labels.size()))
    throw DataError("classification_metrics: input length mismatch");
  if (labels.empty()) throw DataError("classification_metrics: empty input");

  MetricSuite m;
  std::vector<std::vector<long>> cm(n_classes, std::vector<long>(n_classes, 0));
  long correct = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    cm[labels[i]][predictions[i]]++;
    if (labels[i] == predictions[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / labels.size();

  auto ratio = [&](long num, long den) {
    if (den == 0) {
      m.zero_denominator_warning = true;
      return 0.0;
    }
    return static_cast<double>(num) / den;
  };

  for (int c = 0; c < n_classes; ++c) {
    long tp = cm[c][c];
    long fp = 0, fn = 0;
    for (int k = 0; k < n_classes; ++k) {
      if (k == c) continue;
      fp += cm[k][c];
      fn += cm[c][k];
    }
    double p = ratio(tp, tp + fp);
    double r = ratio(tp, tp + fn);
    double f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    if (p + r == 0) m.zero_denominator_warning = true;
    m.per_class_precision.push_back(p);
    m.per_class_recall.push_back(r);
    m.per_class_f1.push_back(f1);
  }
  m.macro_precision = std::accumulate(m.per_class_precision.begin(), m.per_class_precision.end(), 0.0) / n_classes;
  m.macro_recall = std::accumulate(m.per_class_recall.begin(), m.per_class_recall.end(), 0.0) / n_classes;
  m.macro_f1 = std::accumulate(m.per_class_f1.begin(), m.per_class_f1.end(), 0.0) / n_classes;

  if (n_classes == 2) {
    // positive = class 1; specificity = TN / (TN + FP)
    long tn = cm[0][0], fp = cm[0][1];
    m.specificity = ratio(tn, tn + fp);
  }

  if (!scores.empty()) {
    for (int c = 0; c < n_classes; ++c) {
      std::vector<double> col(labels.size());
      std::vector<bool> pos(labels.size());
      for (size_t i = 0; i < labels.size(); ++i) {
        col[i] = scores[i][c];
        pos[i] = labels[i] == c;
      }
      m.per_class_auc.push_back(detail::roc_auc(col, pos, &m.zero_denominator_warning));
    }
    m.macro_auc = std::accumulate(m.per_class_auc.begin(), m.per_class_auc.end(), 0.0) / n_classes;
  }
  return m;
}

// Fraction of cases whose ground-truth token rank exceeds k.
inline double error_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw DataError("error_at_k: empty rank list");
  if (k < 1) throw ConfigError("error_at_k: k must be >= 1");
  long misses = 0;
  for (int r : ranks) {
    if (r < 1) throw DataError("error_at_k: ranks must be >= 1");
    if (r > k) ++misses;
  }
  return static_cast<double>(misses) / ranks.size();
}

// Monte-Carlo error@k when the ground-truth token's rank is uniform over the
// instruction's token count.
inline double random_baseline_error_at_k(const std::vector<int>& token_counts, int k, int trials,
                                         uint64_t seed) {
  if (trials < 1) throw ConfigError("random_baseline_error_at_k: trials must be >= 1");
  for (int c : token_counts)
    if (c < 1) throw DataError("random_baseline_error_at_k: token counts must be >= 1");
  std::mt19937_64 rng(seed);
  double total = 0;
  for (int t = 0; t < trials; ++t) {
    long misses = 0;
    for (int c : token_counts) {
      std::uniform_int_distribution<int> dist(1, c);
      if (dist(rng) > k) ++misses;
    }
    total += static_cast<double>(misses) / token_counts.size();
  }
  return total / trials;
}

}  // namespace qulog
