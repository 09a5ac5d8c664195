#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qulog/encoder.hpp"
#include "qulog/preprocess.hpp"

namespace qulog {

enum class TaskKind { kLevelIwe, kLevelIe, kLevelIw, kLevelWe, kLinguistic };

inline std::string task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::kLevelIwe: return "level_iwe";
    case TaskKind::kLevelIe: return "level_ie";
    case TaskKind::kLevelIw: return "level_iw";
    case TaskKind::kLevelWe: return "level_we";
    case TaskKind::kLinguistic: return "linguistic";
  }
  throw ConfigError("unknown task kind");
}

inline std::optional<TaskKind> parse_task_kind(const std::string& s) {
  if (s == "level_iwe" || s == "iwe") return TaskKind::kLevelIwe;
  if (s == "level_ie" || s == "ie") return TaskKind::kLevelIe;
  if (s == "level_iw" || s == "iw") return TaskKind::kLevelIw;
  if (s == "level_we" || s == "we") return TaskKind::kLevelWe;
  if (s == "linguistic") return TaskKind::kLinguistic;
  return std::nullopt;
}

struct TaskSpec {
  TaskKind kind;
  std::vector<std::string> class_names;
  std::string input_channel;  // "tokens" | "structure"

  static TaskSpec make(TaskKind kind) {
    switch (kind) {
      case TaskKind::kLevelIwe: return {kind, {"info", "warning", "error"}, "tokens"};
      case TaskKind::kLevelIe: return {kind, {"info", "error"}, "tokens"};
      case TaskKind::kLevelIw: return {kind, {"info", "warning"}, "tokens"};
      case TaskKind::kLevelWe: return {kind, {"warning", "error"}, "tokens"};
      case TaskKind::kLinguistic: return {kind, {"sufficient", "insufficient"}, "structure"};
    }
    throw ConfigError("unknown task kind");
  }

  int classes() const { return static_cast<int>(class_names.size()); }

  std::optional<int> class_index(const std::string& label) const {
    for (size_t i = 0; i < class_names.size(); ++i)
      if (class_names[i] == label) return static_cast<int>(i);
    return std::nullopt;
  }

  TaskDescriptor descriptor() const {
    return {task_kind_name(kind), class_names, input_channel};
  }

  static TaskSpec from_descriptor(const TaskDescriptor& d) {
    auto kind = parse_task_kind(d.kind);
    if (!kind) throw DataError("checkpoint names unknown task kind: " + d.kind);
    TaskSpec spec = make(*kind);
    if (spec.class_names != d.class_names || spec.input_channel != d.input_channel)
      throw DataError("checkpoint task descriptor inconsistent with kind " + d.kind);
    return spec;
  }
};

// Model-ready record: tokens for the level channel, POS tags for the
// linguistic channel, plus the label text when present.
struct PreparedSample {
  std::string id;       // system:file:line
  std::string system;
  std::vector<std::string> tokens;
  std::vector<std::string> structure;
  std::string label;    // level or sufficiency label; may be empty
};

inline PreparedSample prepare_sample(const LogInstruction& ins, const Stopwords& stopwords,
                                     const PosTagger* tagger) {
  PreparedSample s;
  s.id = ins.system + ":" + ins.file_path + ":" + std::to_string(ins.line);
  s.system = ins.system;
  s.tokens = tokenize(ins.static_text, stopwords);
  if (tagger) s.structure = tagger->tag(ins);
  s.label = ins.level;
  return s;
}

inline std::vector<PreparedSample> prepare_dataset(const Dataset& ds, const Stopwords& stopwords,
                                                   const PosTagger* tagger = nullptr) {
  std::vector<PreparedSample> out;
  out.reserve(ds.samples.size());
  for (const auto& ins : ds.samples) out.push_back(prepare_sample(ins, stopwords, tagger));
  return out;
}

inline const std::vector<std::string>& channel_of(const PreparedSample& s, const std::string& channel) {
  return channel == "structure" ? s.structure : s.tokens;
}

// Keeps only samples whose label belongs to the task; order preserved.
inline std::vector<PreparedSample> filter_for_task(const std::vector<PreparedSample>& samples,
                                                   const TaskSpec& task) {
  std::vector<PreparedSample> out;
  for (const auto& s : samples)
    if (task.class_index(s.label)) out.push_back(s);
  return out;
}

// Deterministic vocabulary: frequency descending, ties lexicographic,
// reserved tokens prepended.
inline Vocabulary build_vocabulary(const std::vector<PreparedSample>& train_samples,
                                   const std::string& channel) {
  if (train_samples.empty()) throw DataError("build_vocabulary: empty training set");
  std::map<std::string, long> freq;
  for (const auto& s : train_samples)
    for (const auto& t : channel_of(s, channel)) freq[t]++;
  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, _] : items) v.add(tok);
  return v;
}

struct TrainConfig {
  int batch_size = 2048;
  int max_epochs = 100;
  int patience = 5;
  double validation_fraction = 0.1;
  uint64_t seed = 0;
  bool class_weighting = false;
  AdamConfig adam;
};

struct EpochLog {
  int epoch;
  double train_loss;
  double val_loss;
};

struct TrainResult {
  EncoderModel model;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0;
};

namespace detail {

// Stratified validation split: per class, every k-th shuffled sample goes to
// validation (at least one when the class has >= 2 members).
inline void split_validation(const std::vector<PreparedSample>& samples, const TaskSpec& task,
                             double fraction, uint64_t seed,
                             std::vector<int>& train_idx, std::vector<int>& val_idx) {
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < samples.size(); ++i)
    by_class[*task.class_index(samples[i].label)].push_back(static_cast<int>(i));
  std::mt19937_64 rng(seed ^ 0x5f5f5f5fULL);
  for (auto& [_, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    size_t n_val = static_cast<size_t>(idx.size() * fraction);
    if (n_val == 0 && idx.size() >= 2) n_val = 1;
    for (size_t i = 0; i < idx.size(); ++i)
      (i < n_val ? val_idx : train_idx).push_back(idx[i]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

}  // namespace detail

inline TrainResult train(const std::vector<PreparedSample>& all_samples, const TaskSpec& task,
                         const TrainConfig& cfg, ModelConfig model_cfg) {
  auto samples = filter_for_task(all_samples, task);
  if (samples.empty()) throw DataError("train: no samples usable for task " + task_kind_name(task.kind));
  {
    std::set<std::string> present;
    for (const auto& s : samples) present.insert(s.label);
    if (present.size() < 2)
      throw DataError("train: fewer than 2 classes present for task " + task_kind_name(task.kind));
  }

  model_cfg.classes = task.classes();
  model_cfg.seed = cfg.seed;
  model_cfg.validate();

  std::vector<int> train_idx, val_idx;
  detail::split_validation(samples, task, cfg.validation_fraction, cfg.seed, train_idx, val_idx);
  if (train_idx.empty() || val_idx.empty())
    throw DataError("train: dataset too small to hold out a validation split");

  std::vector<PreparedSample> train_set;
  for (int i : train_idx) train_set.push_back(samples[i]);

  Vocabulary vocab = build_vocabulary(train_set, task.input_channel);
  EncoderModel model = init_model(model_cfg, vocab, task.descriptor());

  std::vector<std::vector<int>> train_inputs, val_inputs;
  std::vector<int> train_targets, val_targets;
  for (int i : train_idx) {
    train_inputs.push_back(encode_input(channel_of(samples[i], task.input_channel), vocab, model_cfg.max_len));
    train_targets.push_back(*task.class_index(samples[i].label));
  }
  for (int i : val_idx) {
    val_inputs.push_back(encode_input(channel_of(samples[i], task.input_channel), vocab, model_cfg.max_len));
    val_targets.push_back(*task.class_index(samples[i].label));
  }

  std::vector<double> class_weight(task.classes(), 1.0);
  if (cfg.class_weighting) {
    std::vector<long> counts(task.classes(), 0);
    for (int t : train_targets) counts[t]++;
    for (int c = 0; c < task.classes(); ++c)
      class_weight[c] = counts[c] > 0
                            ? static_cast<double>(train_targets.size()) / (task.classes() * counts[c])
                            : 0.0;
  }

  AdamState adam = AdamState::shaped(model.params);
  Parameters grads = model.params;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0xa5a5a5a5ULL);

  TrainResult result;
  Parameters best_params = model.params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;

  std::vector<int> order(train_inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    long seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      grads.for_each([](const std::string&, Tensor& t) { t.zero(); });
      double batch_weight = 0;
      double batch_loss = 0;
      for (size_t k = start; k < end; ++k) {
        int i = order[k];
        double w = class_weight[train_targets[i]];
        batch_loss += w * backward(model, train_inputs[i], train_targets[i], grads, w);
        batch_weight += w;
      }
      if (!std::isfinite(batch_loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(start / cfg.batch_size));
      double inv = 1.0 / std::max(batch_weight, 1e-12);
      grads.for_each([&](const std::string&, Tensor& t) {
        for (double& g : t.v) g *= inv;
      });
      adam_step(model.params, grads, adam, cfg.adam);
      epoch_loss += batch_loss;
      seen += static_cast<long>(end - start);
    }
    double train_loss = epoch_loss / std::max<long>(seen, 1);

    double val_loss = 0;
    for (size_t i = 0; i < val_inputs.size(); ++i)
      val_loss += cross_entropy(forward(model, val_inputs[i]), val_targets[i]);
    val_loss /= std::max<size_t>(val_inputs.size(), 1);

    result.log.push_back({epoch, train_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_params = model.params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  model.params = best_params;
  model.quantize();  // match checkpoint precision so save/load is an identity
  result.model = std::move(model);
  result.best_epoch = best_epoch;
  result.best_val_loss = best_val;
  return result;
}

struct SampleAssessment {
  std::string id;
  int predicted = 0;
  std::vector<double> scores;
  int label = -1;   // -1 when no label available for the task
  bool agree = false;
};

struct Assessment {
  TaskSpec task;
  std::vector<SampleAssessment> samples;

  long agreements() const {
    long n = 0;
    for (const auto& s : samples) n += (s.label >= 0 && s.agree) ? 1 : 0;
    return n;
  }
  long labeled() const {
    long n = 0;
    for (const auto& s : samples) n += s.label >= 0 ? 1 : 0;
    return n;
  }
};

inline int argmax_class(const std::vector<double>& scores) {
  int best = 0;
  for (size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = static_cast<int>(c);  // ties keep lowest index
  return best;
}

inline Assessment assess(const EncoderModel& model, const std::vector<PreparedSample>& samples) {
  TaskSpec task = TaskSpec::from_descriptor(model.task);
  if (model.config.classes != task.classes())
    throw DataError("assess: checkpoint class count does not match its task");
  Assessment a;
  a.task = task;
  for (const auto& s : samples) {
    auto idx = encode_input(channel_of(s, task.input_channel), model.vocabulary, model.config.max_len);
    SampleAssessment sa;
    sa.id = s.id;
    sa.scores = forward(model, idx);
    sa.predicted = argmax_class(sa.scores);
    if (auto li = task.class_index(s.label)) {
      sa.label = *li;
      sa.agree = sa.label == sa.predicted;
    }
    a.samples.push_back(std::move(sa));
  }
  return a;
}

// Multinomial naive-Bayes over bag-of-1,2-grams with additive smoothing;
// harness baseline sharing the Assessment contract.
class NgramBaseline {
 public:
  static NgramBaseline fit(const std::vector<PreparedSample>& all_samples, const TaskSpec& task,
                           double alpha = 1.0) {
    auto samples = filter_for_task(all_samples, task);
    NgramBaseline nb;
    nb.task_ = task;
    nb.alpha_ = alpha;
    nb.class_counts_.assign(task.classes(), 0);
    nb.token_totals_.assign(task.classes(), 0);
    std::set<std::string> present;
    for (const auto& s : samples) {
      int c = *task.class_index(s.label);
      present.insert(s.label);
      nb.class_counts_[c]++;
      for (const auto& g : grams(channel_of(s, task.input_channel))) {
        nb.counts_[g].resize(task.classes(), 0);
        nb.counts_[g][c]++;
        nb.token_totals_[c]++;
      }
    }
    if (present.size() < 2)
      throw DataError("baseline: fewer than 2 classes present for task " + task_kind_name(task.kind));
    return nb;
  }

  std::vector<double> scores(const PreparedSample& s) const {
    long total = std::accumulate(class_counts_.begin(), class_counts_.end(), 0L);
    double vocab = static_cast<double>(counts_.size()) + 1.0;
    std::vector<double> logp(task_.classes());
    for (int c = 0; c < task_.classes(); ++c)
      logp[c] = std::log((class_counts_[c] + alpha_) / (total + alpha_ * task_.classes()));
    for (const auto& g : grams(channel_of(s, task_.input_channel))) {
      auto it = counts_.find(g);
      for (int c = 0; c < task_.classes(); ++c) {
        double cnt = it != counts_.end() ? it->second[c] : 0.0;
        logp[c] += std::log((cnt + alpha_) / (token_totals_[c] + alpha_ * vocab));
      }
    }
    double best = *std::max_element(logp.begin(), logp.end());
    double z = 0;
    std::vector<double> out(logp.size());
    for (size_t c = 0; c < logp.size(); ++c) { out[c] = std::exp(logp[c] - best); z += out[c]; }
    for (double& x : out) x /= z;
    return out;
  }

  Assessment assess(const std::vector<PreparedSample>& samples) const {
    Assessment a;
    a.task = task_;
    for (const auto& s : samples) {
      SampleAssessment sa;
      sa.id = s.id;
      sa.scores = scores(s);
      sa.predicted = argmax_class(sa.scores);
      if (auto li = task_.class_index(s.label)) {
        sa.label = *li;
        sa.agree = sa.label == sa.predicted;
      }
      a.samples.push_back(std::move(sa));
    }
    return a;
  }

  const TaskSpec& task() const { return task_; }

 private:
  static std::vector<std::string> grams(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t);
    for (size_t i = 0; i + 1 < tokens.size(); ++i) out.push_back(tokens[i] + " " + tokens[i + 1]);
    return out;
  }

  TaskSpec task_;
  double alpha_ = 1.0;
  std::vector<long> class_counts_;
  std::vector<long> token_totals_;
  std::map<std::string, std::vector<long>> counts_;
};

}  // namespace qulog
