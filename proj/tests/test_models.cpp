#include <doctest.h>

#include <random>

#include "qulog/models.hpp"

using namespace qulog;

namespace {

PreparedSample mk(const std::string& id, std::vector<std::string> tokens, std::string label,
                  std::string system = "sys") {
  PreparedSample s;
  s.id = id;
  s.system = std::move(system);
  s.tokens = std::move(tokens);
  s.label = std::move(label);
  return s;
}

// Separable synthetic corpus: each level carries a dedicated keyword, plus
// shared filler drawn from a small pool.
std::vector<PreparedSample> separable_corpus(int per_class, uint64_t seed) {
  static const std::vector<std::string> filler = {"request", "worker", "queue", "node",
                                                  "disk", "session", "cache", "index"};
  static const std::vector<std::pair<std::string, std::string>> cue = {
      {"info", "completed"}, {"warning", "slow"}, {"error", "failure"}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, filler.size() - 1);
  std::vector<PreparedSample> out;
  int n = 0;
  for (const auto& [level, kw] : cue)
    for (int i = 0; i < per_class; ++i) {
      std::vector<std::string> toks = {filler[pick(rng)], kw, filler[pick(rng)]};
      out.push_back(mk("s:f:" + std::to_string(++n), toks, level));
    }
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.max_len = 8;
  c.model_dim = 8;
  c.heads = 2;
  c.layers = 1;
  return c;
}

}  // namespace

TEST_CASE("task specs expose the documented class layouts") {
  auto iwe = TaskSpec::make(TaskKind::kLevelIwe);
  CHECK(iwe.classes() == 3);
  CHECK(iwe.class_names == std::vector<std::string>{"info", "warning", "error"});
  CHECK(iwe.input_channel == "tokens");
  auto ie = TaskSpec::make(TaskKind::kLevelIe);
  CHECK(ie.classes() == 2);
  CHECK_FALSE(ie.class_index("warning").has_value());
  auto ling = TaskSpec::make(TaskKind::kLinguistic);
  CHECK(ling.input_channel == "structure");
  CHECK(ling.class_index("insufficient") == 1);
}

TEST_CASE("build_vocabulary counts reserved tokens plus distinct tokens") {
  std::vector<PreparedSample> samples;
  for (int i = 0; i < 10; ++i)
    samples.push_back(mk("s:f:" + std::to_string(i), {"tok" + std::to_string(i)}, "info"));
  auto v = build_vocabulary(samples, "tokens");
  CHECK(v.size() == 13);
}

TEST_CASE("build_vocabulary is deterministic and frequency-ordered") {
  std::vector<PreparedSample> samples = {
      mk("a", {"rare", "common", "common"}, "info"),
      mk("b", {"common", "mid", "mid"}, "error"),
  };
  auto v1 = build_vocabulary(samples, "tokens");
  auto v2 = build_vocabulary(samples, "tokens");
  CHECK(v1.tokens == v2.tokens);
  CHECK(v1.lookup("common") == 3);  // most frequent right after reserved
  CHECK(v1.lookup("mid") == 4);
  CHECK(v1.lookup("rare") == 5);
}

TEST_CASE("structure channel vocabulary stays within the tagset bound") {
  std::vector<PreparedSample> samples;
  for (int i = 0; i < 40; ++i) {
    PreparedSample s = mk("s:f:" + std::to_string(i), {}, "sufficient");
    s.structure = {"NOUN", "VERB", i % 2 ? "ADJ" : "ADV"};
    samples.push_back(s);
  }
  auto v = build_vocabulary(samples, "structure");
  CHECK(v.size() <= static_cast<int>(pos_tagset().size()) + 3);
}

TEST_CASE("filter_for_task preserves order and accounts for every sample") {
  auto samples = separable_corpus(5, 3);
  auto ie = filter_for_task(samples, TaskSpec::make(TaskKind::kLevelIe));
  long warnings = 0;
  for (const auto& s : samples) warnings += s.label == "warning" ? 1 : 0;
  CHECK(ie.size() + warnings == samples.size());
  // order preservation: filtering equals the straightforward erase
  std::vector<std::string> want;
  for (const auto& s : samples)
    if (s.label != "warning") want.push_back(s.id);
  std::vector<std::string> got;
  for (const auto& s : ie) got.push_back(s.id);
  CHECK(got == want);
  for (const auto& s : ie) CHECK(s.label != "warning");
}

TEST_CASE("train fits the separable corpus and early-stops sanely") {
  auto samples = separable_corpus(40, 5);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 60;
  cfg.seed = 1;
  cfg.adam.lr = 5e-3;  // tiny corpus, small step budget
  auto res = train(samples, TaskSpec::make(TaskKind::kLevelIwe), cfg, small_config());

  auto a = assess(res.model, samples);
  long agree = a.agreements();
  CHECK(static_cast<double>(agree) / a.samples.size() >= 0.95);

  // training log well-formed; best epoch's val loss is the reported minimum
  REQUIRE_FALSE(res.log.empty());
  double min_val = res.log.front().val_loss;
  for (const auto& e : res.log) min_val = std::min(min_val, e.val_loss);
  CHECK(res.best_val_loss == doctest::Approx(min_val));
  CHECK(res.best_val_loss <= res.log.back().val_loss + 1e-12);
}

TEST_CASE("same seed and data give identical training trajectories") {
  auto samples = separable_corpus(10, 5);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 8;
  cfg.patience = 8;
  cfg.seed = 9;
  auto r1 = train(samples, TaskSpec::make(TaskKind::kLevelIwe), cfg, small_config());
  auto r2 = train(samples, TaskSpec::make(TaskKind::kLevelIwe), cfg, small_config());
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
    CHECK(r1.log[i].val_loss == r2.log[i].val_loss);
  }
  std::vector<const Tensor*> ta, tb;
  r1.model.params.for_each([&](const std::string&, const Tensor& t) { ta.push_back(&t); });
  r2.model.params.for_each([&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  bool same = true;
  for (size_t i = 0; i < ta.size(); ++i) same = same && ta[i]->v == tb[i]->v;
  CHECK(same);
}

TEST_CASE("train with a single class present is fatal") {
  std::vector<PreparedSample> only_info;
  for (int i = 0; i < 30; ++i)
    only_info.push_back(mk("s:f:" + std::to_string(i), {"worker", "started"}, "info"));
  TrainConfig cfg;
  CHECK_THROWS_AS(train(only_info, TaskSpec::make(TaskKind::kLevelIe), cfg, small_config()),
                  DataError);
}

TEST_CASE("argmax tie-break picks the lowest class index") {
  CHECK(argmax_class({0.2, 0.2, 0.6}) == 2);
  CHECK(argmax_class({0.5, 0.5}) == 0);
  CHECK(argmax_class({0.4, 0.2, 0.4}) == 0);
}

TEST_CASE("argmax is invariant under monotone transformation of scores") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s = {u(rng), u(rng), u(rng)};
    std::vector<double> t = s;
    for (double& x : t) x = std::exp(3 * x) + 1;  // strictly increasing
    CHECK(argmax_class(s) == argmax_class(t));
  }
}

TEST_CASE("assess sets agreement flags against stored labels") {
  auto samples = separable_corpus(20, 21);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 40;
  cfg.seed = 2;
  cfg.adam.lr = 5e-3;
  auto res = train(samples, TaskSpec::make(TaskKind::kLevelIwe), cfg, small_config());
  auto a = assess(res.model, samples);
  REQUIRE(a.samples.size() == samples.size());
  for (const auto& s : a.samples) {
    CHECK(s.scores.size() == 3);
    double sum = 0;
    for (double x : s.scores) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s.label >= 0);
    CHECK(s.agree == (s.predicted == s.label));
  }
}

TEST_CASE("assess rejects a task/class mismatch") {
  auto samples = separable_corpus(10, 5);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 3;
  auto res = train(samples, TaskSpec::make(TaskKind::kLevelIwe), cfg, small_config());
  res.model.config.classes = 2;  // simulate corrupt pairing
  CHECK_THROWS_AS(assess(res.model, samples), DataError);
}

TEST_CASE("ngram baseline fits the separable corpus") {
  auto samples = separable_corpus(40, 17);
  auto nb = NgramBaseline::fit(samples, TaskSpec::make(TaskKind::kLevelIwe));
  auto a = nb.assess(samples);
  CHECK(static_cast<double>(a.agreements()) / a.samples.size() >= 0.95);
}

TEST_CASE("ngram baseline is deterministic and rejects single-class data") {
  auto samples = separable_corpus(10, 23);
  auto a1 = NgramBaseline::fit(samples, TaskSpec::make(TaskKind::kLevelIwe)).assess(samples);
  auto a2 = NgramBaseline::fit(samples, TaskSpec::make(TaskKind::kLevelIwe)).assess(samples);
  REQUIRE(a1.samples.size() == a2.samples.size());
  for (size_t i = 0; i < a1.samples.size(); ++i)
    CHECK(a1.samples[i].scores == a2.samples[i].scores);

  std::vector<PreparedSample> one_class;
  for (int i = 0; i < 5; ++i) one_class.push_back(mk("x:y:" + std::to_string(i), {"a"}, "info"));
  CHECK_THROWS_AS(NgramBaseline::fit(one_class, TaskSpec::make(TaskKind::kLevelIe)), DataError);
}

TEST_CASE("baseline scores sum to one") {
  auto samples = separable_corpus(10, 29);
  auto nb = NgramBaseline::fit(samples, TaskSpec::make(TaskKind::kLevelIwe));
  for (const auto& s : samples) {
    auto sc = nb.scores(s);
    double sum = 0;
    for (double x : sc) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("parse_task_kind accepts the documented aliases") {
  CHECK(parse_task_kind("iwe") == TaskKind::kLevelIwe);
  CHECK(parse_task_kind("ie") == TaskKind::kLevelIe);
  CHECK(parse_task_kind("iw") == TaskKind::kLevelIw);
  CHECK(parse_task_kind("we") == TaskKind::kLevelWe);
  CHECK(parse_task_kind("linguistic") == TaskKind::kLinguistic);
  CHECK_FALSE(parse_task_kind("bogus").has_value());
}
