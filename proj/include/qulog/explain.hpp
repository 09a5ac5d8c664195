#pragma once

#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "qulog/encoder.hpp"
#include "qulog/models.hpp"

namespace qulog {

enum class ShapleyMode { kExact, kSampled };

inline constexpr int kExactTokenCap = 12;
inline constexpr int kDefaultShapleyBudget = 512;

// Per-token, per-embedding-dimension attributions for one prediction.
// Players are the non-[LMT], non-[PD] input positions; the value function is
// the class score with out-of-coalition tokens masked to [PD].
struct ShapleyAttribution {
  std::vector<std::vector<double>> values;  // token -> d-vector
  std::vector<int> positions;               // player position in the input
  int explained_class = 0;
  ShapleyMode mode = ShapleyMode::kExact;
  std::string value_function = "class score with out-of-coalition tokens masked to [PD]";

  double token_sum(size_t i) const {
    return std::accumulate(values[i].begin(), values[i].end(), 0.0);
  }
  double total() const {
    double s = 0;
    for (size_t i = 0; i < values.size(); ++i) s += token_sum(i);
    return s;
  }
};

struct TokenImportance {
  std::string token;
  double intensity = 0;   // squared L2 norm of the token's Shapley vector
  char sign = '+';
  int position = 0;       // original input position
};

struct Explanation {
  int explained_class = 0;
  ShapleyMode mode = ShapleyMode::kExact;
  std::vector<TokenImportance> tokens;  // ordered by intensity descending
};

namespace detail {

// Distributes a token's scalar Shapley value across embedding dimensions
// proportionally to the magnitude of its embedding-minus-pad difference,
// preserving the sum. Magnitude weights keep every component on phi's sign,
// so the reported sign always says whether the token favors the class.
inline std::vector<double> decompose_over_dims(double phi, const EncoderModel& m, int token_index) {
  int d = m.config.model_dim;
  std::vector<double> out(d, 0.0);
  double denom = 0;
  for (int k = 0; k < d; ++k)
    denom += std::abs(m.params.tok_emb.at(token_index, k) - m.params.tok_emb.at(Vocabulary::kPad, k));
  if (denom < 1e-12) {
    for (int k = 0; k < d; ++k) out[k] = phi / d;
    return out;
  }
  for (int k = 0; k < d; ++k) {
    double u = std::abs(m.params.tok_emb.at(token_index, k) - m.params.tok_emb.at(Vocabulary::kPad, k));
    out[k] = phi * u / denom;
  }
  return out;
}

}  // namespace detail

inline ShapleyAttribution shapley_values(const EncoderModel& model, const std::vector<int>& indices,
                                         int class_index, ShapleyMode mode,
                                         int budget = kDefaultShapleyBudget, uint64_t seed = 0) {
  if (class_index < 0 || class_index >= model.config.classes)
    throw ConfigError("shapley_values: class index out of range");

  std::vector<int> players;
  for (size_t t = 0; t < indices.size(); ++t)
    if (indices[t] != Vocabulary::kLmt && indices[t] != Vocabulary::kPad)
      players.push_back(static_cast<int>(t));
  int n = static_cast<int>(players.size());

  ShapleyAttribution attr;
  attr.explained_class = class_index;
  attr.mode = mode;
  attr.positions = players;
  if (n == 0) return attr;

  auto value_of = [&](uint32_t coalition) {
    std::vector<int> masked = indices;
    for (int i = 0; i < n; ++i)
      if (!(coalition & (1u << i))) masked[players[i]] = Vocabulary::kPad;
    return forward(model, masked)[class_index];
  };

  std::vector<double> phi(n, 0.0);
  if (mode == ShapleyMode::kExact) {
    if (n > kExactTokenCap)
      throw ConfigError("shapley_values: more than " + std::to_string(kExactTokenCap) +
                        " tokens; use sampled mode");
    uint32_t full = (n == 32) ? 0xffffffffu : ((1u << n) - 1);
    std::vector<double> v(full + 1, 0.0);
    for (uint32_t c = 0; c <= full; ++c) v[c] = value_of(c);
    // w(s) = s!(n-1-s)!/n!
    std::vector<double> w(n);
    std::vector<double> logfac(n + 1, 0.0);
    for (int i = 1; i <= n; ++i) logfac[i] = logfac[i - 1] + std::log(static_cast<double>(i));
    for (int s = 0; s < n; ++s) w[s] = std::exp(logfac[s] + logfac[n - 1 - s] - logfac[n]);
    for (uint32_t c = 0; c <= full; ++c) {
      int s = std::popcount(c);
      for (int i = 0; i < n; ++i) {
        if (c & (1u << i)) continue;
        phi[i] += w[s] * (v[c | (1u << i)] - v[c]);
      }
    }
  } else {
    if (budget < 1) throw ConfigError("shapley_values: sampling budget must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < budget; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      uint32_t coalition = 0;
      double prev = value_of(coalition);
      for (int i : perm) {
        coalition |= (1u << i);
        double cur = value_of(coalition);
        phi[i] += cur - prev;
        prev = cur;
      }
    }
    for (double& p : phi) p /= budget;
  }

  for (int i = 0; i < n; ++i)
    attr.values.push_back(detail::decompose_over_dims(phi[i], model, indices[players[i]]));
  return attr;
}

// Intensity r = ||S||^2, sign = sign of the largest-magnitude component
// (ties: earliest component; zero vector: '+'). Ordered by intensity
// descending, ties by input position.
inline Explanation importance_scores(const ShapleyAttribution& attr,
                                     const std::vector<std::string>& tokens) {
  if (tokens.size() != attr.values.size())
    throw ConfigError("importance_scores: token count does not match attribution");
  Explanation ex;
  ex.explained_class = attr.explained_class;
  ex.mode = attr.mode;
  for (size_t i = 0; i < attr.values.size(); ++i) {
    const auto& s = attr.values[i];
    TokenImportance ti;
    ti.token = tokens[i];
    ti.position = attr.positions.empty() ? static_cast<int>(i) : attr.positions[i];
    double best_abs = -1;
    double best_val = 0;
    for (double x : s) {
      ti.intensity += x * x;
      if (std::abs(x) > best_abs) { best_abs = std::abs(x); best_val = x; }
    }
    ti.sign = best_val < 0 ? '-' : '+';
    ex.tokens.push_back(std::move(ti));
  }
  std::stable_sort(ex.tokens.begin(), ex.tokens.end(), [](const auto& a, const auto& b) {
    return a.intensity != b.intensity ? a.intensity > b.intensity : a.position < b.position;
  });
  return ex;
}

// End-to-end explanation of one instruction: encode, attribute, aggregate.
// Exact enumeration up to the token cap, sampled beyond it.
inline std::optional<Explanation> explain_prediction(const EncoderModel& model,
                                                     const std::vector<std::string>& tokens,
                                                     std::optional<int> class_index = std::nullopt,
                                                     int budget = kDefaultShapleyBudget,
                                                     uint64_t seed = 0) {
  if (tokens.empty()) return std::nullopt;  // nothing to explain
  auto indices = encode_input(tokens, model.vocabulary, model.config.max_len);
  int cls = class_index ? *class_index : argmax_class(forward(model, indices));

  int n_players = 0;
  for (int id : indices)
    if (id != Vocabulary::kLmt && id != Vocabulary::kPad) ++n_players;
  ShapleyMode mode = n_players <= kExactTokenCap ? ShapleyMode::kExact : ShapleyMode::kSampled;
  auto attr = shapley_values(model, indices, cls, mode, budget, seed);

  std::vector<std::string> kept;
  for (int pos : attr.positions) {
    // position p holds token p-1 of the (possibly truncated) token list
    kept.push_back(tokens[static_cast<size_t>(pos) - 1]);
  }
  return importance_scores(attr, kept);
}

}  // namespace qulog
