#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "qulog/corpus.hpp"

namespace qulog {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

// y = x * w, x: (n×k), w: (k×m)
inline Tensor matmul(const Tensor& x, const Tensor& w) {
  Tensor y(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      double xv = x.at(i, k);
      if (xv == 0.0) continue;
      const double* wrow = &w.v[static_cast<size_t>(k) * w.cols];
      double* yrow = &y.v[static_cast<size_t>(i) * y.cols];
      for (int j = 0; j < w.cols; ++j) yrow[j] += xv * wrow[j];
    }
  return y;
}

struct Vocabulary {
  static constexpr int kLmt = 0;
  static constexpr int kPad = 1;
  static constexpr int kUnk = 2;

  std::vector<std::string> tokens;              // index -> token, reserved first
  std::map<std::string, int> index;

  Vocabulary() {
    tokens = {"[LMT]", "[PD]", "[UNK]"};
    for (size_t i = 0; i < tokens.size(); ++i) index[tokens[i]] = static_cast<int>(i);
  }

  int size() const { return static_cast<int>(tokens.size()); }

  int add(const std::string& token) {
    auto it = index.find(token);
    if (it != index.end()) return it->second;
    int id = size();
    tokens.push_back(token);
    index[token] = id;
    return id;
  }

  int lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kUnk : it->second;
  }
};

struct ModelConfig {
  int max_len = 50;
  int model_dim = 16;
  int heads = 2;
  int layers = 2;
  int classes = 3;
  uint64_t seed = 0;

  void validate() const {
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (model_dim < 1 || heads < 1 || layers < 1) throw ConfigError("invalid model dimensions");
    if (model_dim % heads != 0) throw ConfigError("model_dim must be divisible by heads");
    if (classes != 2 && classes != 3) throw ConfigError("classes must be 2 or 3");
  }

  nlohmann::ordered_json to_json() const {
    return {{"max_len", max_len}, {"model_dim", model_dim}, {"heads", heads},
            {"layers", layers},   {"classes", classes},     {"seed", seed}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.max_len = j.at("max_len").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.classes = j.at("classes").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.validate();
    return c;
  }
};

// [LMT]-prefixed, [PD]-padded index sequence of exactly max_len entries.
inline std::vector<int> encode_input(const std::vector<std::string>& tokens,
                                     const Vocabulary& vocab, int max_len) {
  std::vector<int> idx;
  idx.reserve(max_len);
  idx.push_back(Vocabulary::kLmt);
  for (const auto& t : tokens) {
    if (static_cast<int>(idx.size()) >= max_len) break;
    idx.push_back(vocab.lookup(t));
  }
  while (static_cast<int>(idx.size()) < max_len) idx.push_back(Vocabulary::kPad);
  return idx;
}

struct LayerParams {
  Tensor wq, wk, wv, wo;          // d×d
  Tensor bq, bk, bv, bo;          // 1×d
  Tensor ln1_g, ln1_b;            // 1×d
  Tensor w1, b1;                  // d×4d, 1×4d
  Tensor w2, b2;                  // 4d×d, 1×d
  Tensor ln2_g, ln2_b;            // 1×d
};

// Parameter container shared between model weights, gradients and Adam
// moments: same named-tensor layout everywhere, fixed manifest order.
struct Parameters {
  Tensor tok_emb;   // vocab×d
  Tensor pos_emb;   // max_len×d
  std::vector<LayerParams> layers;
  Tensor head_w;    // classes×d
  Tensor head_b;    // 1×classes

  template <typename F>
  void for_each(F f) {
    f("tok_emb", tok_emb);
    f("pos_emb", pos_emb);
    for (size_t l = 0; l < layers.size(); ++l) {
      auto& lp = layers[l];
      std::string p = "layer" + std::to_string(l) + ".";
      f(p + "wq", lp.wq); f(p + "bq", lp.bq);
      f(p + "wk", lp.wk); f(p + "bk", lp.bk);
      f(p + "wv", lp.wv); f(p + "bv", lp.bv);
      f(p + "wo", lp.wo); f(p + "bo", lp.bo);
      f(p + "ln1_g", lp.ln1_g); f(p + "ln1_b", lp.ln1_b);
      f(p + "w1", lp.w1); f(p + "b1", lp.b1);
      f(p + "w2", lp.w2); f(p + "b2", lp.b2);
      f(p + "ln2_g", lp.ln2_g); f(p + "ln2_b", lp.ln2_b);
    }
    f("head_w", head_w);
    f("head_b", head_b);
  }

  template <typename F>
  void for_each(F f) const {
    const_cast<Parameters*>(this)->for_each(
        [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  static Parameters shaped(int vocab_size, const ModelConfig& cfg) {
    int d = cfg.model_dim, ff = 4 * cfg.model_dim;
    Parameters p;
    p.tok_emb = Tensor(vocab_size, d);
    p.pos_emb = Tensor(cfg.max_len, d);
    p.layers.resize(cfg.layers);
    for (auto& lp : p.layers) {
      lp.wq = Tensor(d, d); lp.wk = Tensor(d, d); lp.wv = Tensor(d, d); lp.wo = Tensor(d, d);
      lp.bq = Tensor(1, d); lp.bk = Tensor(1, d); lp.bv = Tensor(1, d); lp.bo = Tensor(1, d);
      lp.ln1_g = Tensor(1, d); lp.ln1_b = Tensor(1, d);
      lp.w1 = Tensor(d, ff); lp.b1 = Tensor(1, ff);
      lp.w2 = Tensor(ff, d); lp.b2 = Tensor(1, d);
      lp.ln2_g = Tensor(1, d); lp.ln2_b = Tensor(1, d);
    }
    p.head_w = Tensor(cfg.classes, d);
    p.head_b = Tensor(1, cfg.classes);
    return p;
  }
};

struct TaskDescriptor {
  std::string kind;                        // level_iwe | level_ie | level_iw | level_we | linguistic
  std::vector<std::string> class_names;
  std::string input_channel;               // tokens | structure

  nlohmann::ordered_json to_json() const {
    return {{"kind", kind}, {"class_names", class_names}, {"input_channel", input_channel}};
  }
  static TaskDescriptor from_json(const nlohmann::json& j) {
    TaskDescriptor t;
    t.kind = j.at("kind").get<std::string>();
    t.class_names = j.at("class_names").get<std::vector<std::string>>();
    t.input_channel = j.at("input_channel").get<std::string>();
    return t;
  }
};

struct EncoderModel {
  ModelConfig config;
  Vocabulary vocabulary;
  TaskDescriptor task;
  Parameters params;

  // Rounds every parameter through 32-bit precision, matching the checkpoint
  // payload so that save/load is an exact identity on a trained model.
  void quantize() {
    params.for_each([](const std::string&, Tensor& t) {
      for (double& x : t.v) x = static_cast<double>(static_cast<float>(x));
    });
  }
};

// Symmetric-uniform fan-in initialization; embeddings start small so unused
// rows (e.g. [UNK]) stay near-neutral.
inline EncoderModel init_model(const ModelConfig& cfg, const Vocabulary& vocab,
                               const TaskDescriptor& task) {
  cfg.validate();
  EncoderModel m;
  m.config = cfg;
  m.vocabulary = vocab;
  m.task = task;
  m.params = Parameters::shaped(vocab.size(), cfg);
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](Tensor& t, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& x : t.v) x = dist(rng);
  };
  m.params.for_each([&](const std::string& name, Tensor& t) {
    if (name == "tok_emb" || name == "pos_emb") { uniform(t, 0.1); return; }
    if (name.ends_with("ln1_g") || name.ends_with("ln2_g")) {
      std::fill(t.v.begin(), t.v.end(), 1.0);
      return;
    }
    bool bias = name.ends_with("bq") || name.ends_with("bk") || name.ends_with("bv") ||
                name.ends_with("bo") || name.ends_with("b1") || name.ends_with("b2") ||
                name.ends_with("ln1_b") || name.ends_with("ln2_b") || name == "head_b";
    if (bias) { t.zero(); return; }
    uniform(t, std::sqrt(1.0 / t.rows));
  });
  return m;
}

namespace detail {

struct LnCache {
  std::vector<double> mean, inv_std;
  Tensor xhat;
};

inline Tensor layer_norm(const Tensor& x, const Tensor& g, const Tensor& b, LnCache& cache) {
  int n = x.rows, d = x.cols;
  Tensor y(n, d);
  cache.mean.resize(n);
  cache.inv_std.resize(n);
  cache.xhat = Tensor(n, d);
  for (int i = 0; i < n; ++i) {
    double mu = 0;
    for (int j = 0; j < d; ++j) mu += x.at(i, j);
    mu /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) { double t = x.at(i, j) - mu; var += t * t; }
    var /= d;
    double inv = 1.0 / std::sqrt(var + 1e-5);
    cache.mean[i] = mu;
    cache.inv_std[i] = inv;
    for (int j = 0; j < d; ++j) {
      double xh = (x.at(i, j) - mu) * inv;
      cache.xhat.at(i, j) = xh;
      y.at(i, j) = xh * g.at(0, j) + b.at(0, j);
    }
  }
  return y;
}

inline Tensor layer_norm_backward(const Tensor& dy, const Tensor& g, const LnCache& cache,
                                  Tensor& dg, Tensor& db) {
  int n = dy.rows, d = dy.cols;
  Tensor dx(n, d);
  for (int i = 0; i < n; ++i) {
    double sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (int j = 0; j < d; ++j) {
      double dyv = dy.at(i, j);
      dg.at(0, j) += dyv * cache.xhat.at(i, j);
      db.at(0, j) += dyv;
      double dxh = dyv * g.at(0, j);
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * cache.xhat.at(i, j);
    }
    for (int j = 0; j < d; ++j) {
      double dxh = dy.at(i, j) * g.at(0, j);
      dx.at(i, j) = cache.inv_std[i] / d *
                    (d * dxh - sum_dxhat - cache.xhat.at(i, j) * sum_dxhat_xhat);
    }
  }
  return dx;
}

struct LayerCache {
  Tensor x_in;
  Tensor q, k, v;                 // L×d
  std::vector<Tensor> attn;       // per head, L×L row-softmax probs
  Tensor concat;                  // L×d
  Tensor attn_out;
  Tensor res1;
  LnCache ln1;
  Tensor ln1_out;
  Tensor ff_pre;                  // L×4d
  Tensor ff_act;
  Tensor ff_out;
  Tensor res2;
  LnCache ln2;
  Tensor ln2_out;
};

struct ForwardCache {
  std::vector<int> indices;
  std::vector<bool> key_mask;     // true = attendable (non-pad)
  Tensor x0;
  std::vector<LayerCache> layers;
  std::vector<double> summary;    // [LMT] vector after last layer
  std::vector<double> logits;
  std::vector<double> probs;
};

inline void add_bias(Tensor& x, const Tensor& b) {
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) x.at(i, j) += b.at(0, j);
}

inline void check_finite(const Tensor& t, const std::string& where) {
  for (double x : t.v)
    if (!std::isfinite(x)) throw NumericalError("non-finite value in " + where);
}

}  // namespace detail

// Full forward pass; caches every activation needed by backward. Pad
// positions are masked out of attention, so class scores depend only on the
// non-pad prefix.
inline std::vector<double> forward(const EncoderModel& m, const std::vector<int>& indices,
                                   detail::ForwardCache* cache = nullptr) {
  const auto& cfg = m.config;
  const int L = cfg.max_len, d = cfg.model_dim, H = cfg.heads, dh = d / H;
  if (static_cast<int>(indices.size()) != L)
    throw ConfigError("forward: index sequence length must equal max_len");

  detail::ForwardCache local;
  detail::ForwardCache& fc = cache ? *cache : local;
  fc.indices = indices;
  fc.key_mask.assign(L, true);
  for (int t = 0; t < L; ++t)
    if (indices[t] == Vocabulary::kPad) fc.key_mask[t] = false;

  Tensor x(L, d);
  for (int t = 0; t < L; ++t) {
    int id = indices[t];
    if (id < 0 || id >= m.vocabulary.size()) throw ConfigError("forward: index out of vocabulary");
    for (int j = 0; j < d; ++j)
      x.at(t, j) = m.params.tok_emb.at(id, j) + m.params.pos_emb.at(t, j);
  }
  fc.x0 = x;

  fc.layers.assign(cfg.layers, {});
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& lp = m.params.layers[l];
    auto& lc = fc.layers[l];
    lc.x_in = x;
    lc.q = matmul(x, lp.wq); detail::add_bias(lc.q, lp.bq);
    lc.k = matmul(x, lp.wk); detail::add_bias(lc.k, lp.bk);
    lc.v = matmul(x, lp.wv); detail::add_bias(lc.v, lp.bv);

    lc.attn.assign(H, Tensor(L, L));
    lc.concat = Tensor(L, d);
    for (int h = 0; h < H; ++h) {
      int off = h * dh;
      for (int i = 0; i < L; ++i) {
        double best = -1e300;
        std::vector<double> score(L, -1e300);
        for (int j = 0; j < L; ++j) {
          if (!fc.key_mask[j]) continue;
          double s = 0;
          for (int c = 0; c < dh; ++c) s += lc.q.at(i, off + c) * lc.k.at(j, off + c);
          s *= scale;
          score[j] = s;
          if (s > best) best = s;
        }
        double z = 0;
        for (int j = 0; j < L; ++j) {
          if (!fc.key_mask[j]) continue;
          double e = std::exp(score[j] - best);
          lc.attn[h].at(i, j) = e;
          z += e;
        }
        for (int j = 0; j < L; ++j) lc.attn[h].at(i, j) /= z;
        for (int j = 0; j < L; ++j) {
          double p = lc.attn[h].at(i, j);
          if (p == 0.0) continue;
          for (int c = 0; c < dh; ++c) lc.concat.at(i, off + c) += p * lc.v.at(j, off + c);
        }
      }
    }

    lc.attn_out = matmul(lc.concat, lp.wo);
    detail::add_bias(lc.attn_out, lp.bo);
    lc.res1 = Tensor(L, d);
    for (size_t i = 0; i < lc.res1.v.size(); ++i) lc.res1.v[i] = lc.x_in.v[i] + lc.attn_out.v[i];
    lc.ln1_out = detail::layer_norm(lc.res1, lp.ln1_g, lp.ln1_b, lc.ln1);

    lc.ff_pre = matmul(lc.ln1_out, lp.w1);
    detail::add_bias(lc.ff_pre, lp.b1);
    lc.ff_act = lc.ff_pre;
    for (double& a : lc.ff_act.v) a = a > 0 ? a : 0;
    lc.ff_out = matmul(lc.ff_act, lp.w2);
    detail::add_bias(lc.ff_out, lp.b2);
    lc.res2 = Tensor(L, d);
    for (size_t i = 0; i < lc.res2.v.size(); ++i) lc.res2.v[i] = lc.ln1_out.v[i] + lc.ff_out.v[i];
    lc.ln2_out = detail::layer_norm(lc.res2, lp.ln2_g, lp.ln2_b, lc.ln2);
    detail::check_finite(lc.ln2_out, "encoder layer " + std::to_string(l));
    x = lc.ln2_out;
  }

  fc.summary.assign(d, 0.0);
  for (int j = 0; j < d; ++j) fc.summary[j] = x.at(0, j);

  fc.logits.assign(cfg.classes, 0.0);
  for (int c = 0; c < cfg.classes; ++c) {
    double s = m.params.head_b.at(0, c);
    for (int j = 0; j < d; ++j) s += m.params.head_w.at(c, j) * fc.summary[j];
    fc.logits[c] = s;
    if (!std::isfinite(s)) throw NumericalError("non-finite value in output head");
  }
  double best = *std::max_element(fc.logits.begin(), fc.logits.end());
  double z = 0;
  fc.probs.assign(cfg.classes, 0.0);
  for (int c = 0; c < cfg.classes; ++c) { fc.probs[c] = std::exp(fc.logits[c] - best); z += fc.probs[c]; }
  for (double& p : fc.probs) p /= z;
  return fc.probs;
}

inline double cross_entropy(const std::vector<double>& probs, int target) {
  return -std::log(std::max(probs[target], 1e-300));
}

// Backpropagation of cross-entropy loss through the whole network.
// Gradients accumulate into `grads` (Parameters-shaped, caller-zeroed or
// accumulating across a batch). Returns the sample loss.
inline double backward(const EncoderModel& m, const std::vector<int>& indices, int target_class,
                       Parameters& grads, double weight = 1.0) {
  const auto& cfg = m.config;
  if (target_class < 0 || target_class >= cfg.classes)
    throw ConfigError("backward: target class out of range");
  const int L = cfg.max_len, d = cfg.model_dim, H = cfg.heads, dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  detail::ForwardCache fc;
  forward(m, indices, &fc);
  double loss = cross_entropy(fc.probs, target_class);

  // head: dlogits = p - onehot; a sample weight scales every gradient since
  // the whole backward pass is linear in dlogits
  std::vector<double> dlogits(fc.probs);
  dlogits[target_class] -= 1.0;
  if (weight != 1.0)
    for (double& g : dlogits) g *= weight;
  std::vector<double> dsummary(d, 0.0);
  for (int c = 0; c < cfg.classes; ++c) {
    grads.head_b.at(0, c) += dlogits[c];
    for (int j = 0; j < d; ++j) {
      grads.head_w.at(c, j) += dlogits[c] * fc.summary[j];
      dsummary[j] += dlogits[c] * m.params.head_w.at(c, j);
    }
  }

  Tensor dx(L, d);
  for (int j = 0; j < d; ++j) dx.at(0, j) = dsummary[j];

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& lp = m.params.layers[l];
    auto& gp = grads.layers[l];
    const auto& lc = fc.layers[l];

    Tensor dres2 = detail::layer_norm_backward(dx, lp.ln2_g, lc.ln2, gp.ln2_g, gp.ln2_b);
    // res2 = ln1_out + ff_out
    Tensor dln1_out = dres2;
    // ff_out = relu(ln1_out w1 + b1) w2 + b2
    Tensor dff_act(L, 4 * d);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) {
        double g = dres2.at(i, j);
        gp.b2.at(0, j) += g;
        for (int k = 0; k < 4 * d; ++k) {
          gp.w2.at(k, j) += lc.ff_act.at(i, k) * g;
          dff_act.at(i, k) += g * lp.w2.at(k, j);
        }
      }
    Tensor dff_pre = dff_act;
    for (size_t i = 0; i < dff_pre.v.size(); ++i)
      if (lc.ff_pre.v[i] <= 0) dff_pre.v[i] = 0;
    for (int i = 0; i < L; ++i)
      for (int k = 0; k < 4 * d; ++k) {
        double g = dff_pre.at(i, k);
        if (g == 0.0) continue;
        gp.b1.at(0, k) += g;
        for (int j = 0; j < d; ++j) {
          gp.w1.at(j, k) += lc.ln1_out.at(i, j) * g;
          dln1_out.at(i, j) += g * lp.w1.at(j, k);
        }
      }

    Tensor dres1 = detail::layer_norm_backward(dln1_out, lp.ln1_g, lc.ln1, gp.ln1_g, gp.ln1_b);
    // res1 = x_in + attn_out
    Tensor dx_in = dres1;
    // attn_out = concat wo + bo
    Tensor dconcat(L, d);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) {
        double g = dres1.at(i, j);
        gp.bo.at(0, j) += g;
        for (int k = 0; k < d; ++k) {
          gp.wo.at(k, j) += lc.concat.at(i, k) * g;
          dconcat.at(i, k) += g * lp.wo.at(k, j);
        }
      }

    Tensor dq(L, d), dk(L, d), dv(L, d);
    for (int h = 0; h < H; ++h) {
      int off = h * dh;
      for (int i = 0; i < L; ++i) {
        // dP then masked-softmax backward per row
        std::vector<double> dp(L, 0.0);
        for (int j = 0; j < L; ++j) {
          if (!fc.key_mask[j]) continue;
          double s = 0;
          for (int c = 0; c < dh; ++c) s += dconcat.at(i, off + c) * lc.v.at(j, off + c);
          dp[j] = s;
          double pij = lc.attn[h].at(i, j);
          for (int c = 0; c < dh; ++c) dv.at(j, off + c) += pij * dconcat.at(i, off + c);
        }
        double dot = 0;
        for (int j = 0; j < L; ++j)
          if (fc.key_mask[j]) dot += lc.attn[h].at(i, j) * dp[j];
        for (int j = 0; j < L; ++j) {
          if (!fc.key_mask[j]) continue;
          double ds = lc.attn[h].at(i, j) * (dp[j] - dot) * scale;
          if (ds == 0.0) continue;
          for (int c = 0; c < dh; ++c) {
            dq.at(i, off + c) += ds * lc.k.at(j, off + c);
            dk.at(j, off + c) += ds * lc.q.at(i, off + c);
          }
        }
      }
    }

    auto linear_backward = [&](const Tensor& dout, const Tensor& w, Tensor& dw, Tensor& db) {
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < d; ++j) {
          double g = dout.at(i, j);
          if (g == 0.0) continue;
          db.at(0, j) += g;
          for (int k = 0; k < d; ++k) {
            dw.at(k, j) += lc.x_in.at(i, k) * g;
            dx_in.at(i, k) += g * w.at(k, j);
          }
        }
    };
    linear_backward(dq, lp.wq, gp.wq, gp.bq);
    linear_backward(dk, lp.wk, gp.wk, gp.bk);
    linear_backward(dv, lp.wv, gp.wv, gp.bv);

    dx = dx_in;
  }

  for (int t = 0; t < L; ++t) {
    int id = fc.indices[t];
    for (int j = 0; j < d; ++j) {
      grads.tok_emb.at(id, j) += dx.at(t, j);
      grads.pos_emb.at(t, j) += dx.at(t, j);
    }
  }
  return loss;
}

struct AdamState {
  Parameters m;   // first moment
  Parameters v;   // second moment
  long t = 0;

  static AdamState shaped(const Parameters& like) {
    AdamState s;
    s.m = like;
    s.v = like;
    s.m.for_each([](const std::string&, Tensor& t) { t.zero(); });
    s.v.for_each([](const std::string&, Tensor& t) { t.zero(); });
    return s;
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Standard Adam update with bias correction, fixed tensor order.
inline void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  std::vector<Tensor*> ps, ms, vs;
  std::vector<const Tensor*> gs;
  params.for_each([&](const std::string&, Tensor& t) { ps.push_back(&t); });
  grads.for_each([&](const std::string&, const Tensor& t) { gs.push_back(&t); });
  state.m.for_each([&](const std::string&, Tensor& t) { ms.push_back(&t); });
  state.v.for_each([&](const std::string&, Tensor& t) { vs.push_back(&t); });
  if (ps.size() != gs.size()) throw ConfigError("adam_step: gradient shape mismatch");

  for (size_t i = 0; i < ps.size(); ++i) {
    Tensor& p = *ps[i];
    const Tensor& g = *gs[i];
    Tensor& mm = *ms[i];
    Tensor& vv = *vs[i];
    if (p.size() != g.size()) throw ConfigError("adam_step: gradient shape mismatch");
    for (size_t k = 0; k < p.v.size(); ++k) {
      mm.v[k] = cfg.beta1 * mm.v[k] + (1 - cfg.beta1) * g.v[k];
      vv.v[k] = cfg.beta2 * vv.v[k] + (1 - cfg.beta2) * g.v[k] * g.v[k];
      double mhat = mm.v[k] / bc1;
      double vhat = vv.v[k] / bc2;
      p.v[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---- checkpoint format -------------------------------------------------
// UTF-8 JSON header terminated by a single '\0', followed by little-endian
// float32 payloads at the offsets recorded in the manifest.

inline void save_model(const EncoderModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "qulog-checkpoint";
  header["version"] = 1;
  header["config"] = model.config.to_json();
  header["task"] = model.task.to_json();
  header["vocabulary"] = model.vocabulary.tokens;
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  size_t offset = 0;
  model.params.for_each([&](const std::string& name, const Tensor& t) {
    manifest.push_back({{"name", name},
                        {"shape", {t.rows, t.cols}},
                        {"offset", offset},
                        {"count", t.size()}});
    offset += t.size() * sizeof(float);
  });
  header["manifest"] = manifest;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  std::string htext = header.dump();
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.put('\0');
  model.params.for_each([&](const std::string&, const Tensor& t) {
    for (double x : t.v) {
      float f = static_cast<float>(x);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  });
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

inline EncoderModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t sep = content.find('\0');
  if (sep == std::string::npos) throw DataError("invalid checkpoint: missing header terminator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(content.substr(0, sep));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
  if (header.value("format", "") != "qulog-checkpoint")
    throw DataError("invalid checkpoint: unrecognized format");
  if (header.value("version", -1) != 1)
    throw DataError("invalid checkpoint: unsupported version");

  EncoderModel m;
  m.config = ModelConfig::from_json(header.at("config"));
  m.task = TaskDescriptor::from_json(header.at("task"));
  auto tokens = header.at("vocabulary").get<std::vector<std::string>>();
  if (tokens.size() < 3 || tokens[0] != "[LMT]" || tokens[1] != "[PD]" || tokens[2] != "[UNK]")
    throw DataError("invalid checkpoint: malformed vocabulary");
  m.vocabulary = Vocabulary();
  for (size_t i = 3; i < tokens.size(); ++i) m.vocabulary.add(tokens[i]);
  m.params = Parameters::shaped(m.vocabulary.size(), m.config);

  const char* payload = content.data() + sep + 1;
  size_t payload_size = content.size() - sep - 1;
  size_t mi = 0;
  const auto& manifest = header.at("manifest");
  m.params.for_each([&](const std::string& name, Tensor& t) {
    if (mi >= manifest.size()) throw DataError("invalid checkpoint: manifest too short");
    const auto& e = manifest[mi++];
    if (e.at("name").get<std::string>() != name)
      throw DataError("invalid checkpoint: manifest order mismatch at " + name);
    auto shape = e.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols)
      throw DataError("invalid checkpoint: shape mismatch for " + name);
    size_t offset = e.at("offset").get<size_t>();
    size_t count = e.at("count").get<size_t>();
    if (count != t.size() || offset + count * sizeof(float) > payload_size)
      throw DataError("invalid checkpoint: truncated payload at " + name);
    for (size_t k = 0; k < count; ++k) {
      float f;
      std::memcpy(&f, payload + offset + k * sizeof(float), sizeof(float));
      if (!std::isfinite(f)) throw DataError("invalid checkpoint: non-finite parameter in " + name);
      t.v[k] = static_cast<double>(f);
    }
  });
  if (mi != manifest.size()) throw DataError("invalid checkpoint: manifest too long");
  return m;
}

}  // namespace qulog
