// qulog: extract log instructions, train/assess quality models, explain
// predictions, and run corpus analytics.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qulog/analysis.hpp"
#include "qulog/corpus.hpp"
#include "qulog/explain.hpp"
#include "qulog/metrics.hpp"
#include "qulog/models.hpp"
#include "qulog/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

uint64_t default_seed() {
  if (const char* env = std::getenv("QULOG_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

std::vector<qulog::ExtractionGrammar> load_grammars(const fs::path& data_dir,
                                                    const std::vector<std::string>& langs) {
  std::vector<qulog::ExtractionGrammar> grammars;
  for (const auto& lang : langs)
    grammars.push_back(qulog::ExtractionGrammar::load(data_dir / "grammars" / (lang + ".json")));
  return grammars;
}

void write_json(const ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw qulog::DataError("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

ordered_json metrics_json(const qulog::MetricSuite& m) {
  ordered_json j;
  j["accuracy"] = m.accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  if (m.specificity) j["specificity"] = *m.specificity;
  j["macro_auc"] = m.macro_auc;
  j["per_class_precision"] = m.per_class_precision;
  j["per_class_recall"] = m.per_class_recall;
  j["per_class_f1"] = m.per_class_f1;
  j["per_class_auc"] = m.per_class_auc;
  j["zero_denominator_warning"] = m.zero_denominator_warning;
  return j;
}

qulog::MetricSuite assessment_metrics(const qulog::Assessment& a) {
  std::vector<int> labels, preds;
  std::vector<std::vector<double>> scores;
  for (const auto& s : a.samples) {
    if (s.label < 0) continue;
    labels.push_back(s.label);
    preds.push_back(s.predicted);
    scores.push_back(s.scores);
  }
  return qulog::classification_metrics(labels, preds, scores, a.task.classes());
}

// Linguistic-task preparation: group by structure, inherit group labels.
std::vector<qulog::PreparedSample> prepare_linguistic(const qulog::Dataset& ds,
                                                      const qulog::Stopwords& stopwords,
                                                      const qulog::PosTagger& tagger,
                                                      const fs::path& labels_path,
                                                      const std::optional<std::string>& default_label) {
  auto groups = qulog::group_by_structure(ds, tagger);
  auto labels = qulog::load_group_labels(labels_path);
  std::vector<std::string> missing;
  auto labeled = qulog::apply_group_labels(groups, labels, default_label, &missing);
  if (!missing.empty())
    std::cerr << "warning: " << missing.size() << " unlabeled groups defaulted to '"
              << *default_label << "'\n";
  std::vector<qulog::PreparedSample> samples;
  for (const auto& li : labeled) {
    auto s = qulog::prepare_sample(li.instruction, stopwords, &tagger);
    s.label = li.label;
    samples.push_back(std::move(s));
  }
  std::sort(samples.begin(), samples.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return samples;
}

struct CommonOpts {
  std::string data_dir = QULOG_DATA_DIR;
  uint64_t seed = default_seed();
};

int cmd_extract(const CommonOpts& common, const std::string& root,
                const std::vector<std::string>& langs, const std::string& out,
                const std::string& system) {
  auto grammars = load_grammars(common.data_dir, langs);
  qulog::SkipReport skips;
  auto ds = qulog::extract_tree(root, grammars, system, &skips);
  qulog::write_dataset(ds, out);
  ordered_json report;
  report["format_version"] = kFormatVersion;
  report["instructions"] = ds.samples.size();
  report["provenance"] = ds.provenance;
  report["skipped_files"] = skips.unreadable_files;
  report["dropped_levels"] = skips.dropped_levels;
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"log instruction quality assessment toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--data-dir", common.data_dir, "bundled data directory");
  app.add_option("--seed", common.seed, "global seed (default: QULOG_SEED env or 0)");

  // ---- extract ----
  auto* extract = app.add_subcommand("extract", "extract log instructions from a source tree");
  std::string ex_root, ex_out, ex_system = "unknown";
  std::vector<std::string> ex_langs;
  extract->add_option("--root", ex_root, "source tree root")->required();
  extract->add_option("--lang", ex_langs, "grammar language(s), e.g. java python")->required();
  extract->add_option("--out", ex_out, "output dataset (JSONL)")->required();
  extract->add_option("--system", ex_system, "system identifier for provenance");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a quality model");
  std::string tr_data, tr_task, tr_out, tr_labels, tr_default_label, tr_log;
  int tr_epochs = 100, tr_batch = -1, tr_patience = 5;
  int tr_max_len = 50, tr_dim = 16, tr_heads = 2, tr_layers = 2;
  double tr_val_fraction = 0.1, tr_lr = 1e-4;
  bool tr_class_weighting = false;
  train->add_option("--data", tr_data, "dataset (JSONL)")->required();
  train->add_option("--task", tr_task, "iwe|ie|iw|we|linguistic")->required();
  train->add_option("--out", tr_out, "checkpoint output path")->required();
  train->add_option("--labels", tr_labels, "structure labels (linguistic task)");
  train->add_option("--default-label", tr_default_label, "default label for unlabeled groups");
  train->add_option("--epochs", tr_epochs, "maximum epochs");
  train->add_option("--batch", tr_batch, "batch size (default 2048, linguistic 64)");
  train->add_option("--patience", tr_patience, "early-stopping patience");
  train->add_option("--val-fraction", tr_val_fraction, "validation fraction");
  train->add_option("--lr", tr_lr, "Adam learning rate");
  train->add_option("--max-len", tr_max_len, "maximum token count");
  train->add_option("--dim", tr_dim, "model dimension");
  train->add_option("--heads", tr_heads, "attention heads");
  train->add_option("--layers", tr_layers, "encoder layers");
  train->add_option("--log", tr_log, "training log CSV path (default <out>.log.csv)");
  train->add_flag("--class-weighting", tr_class_weighting, "inverse-frequency class weights");

  // ---- assess ----
  auto* assess = app.add_subcommand("assess", "assess instructions with a trained model");
  std::string as_model, as_data, as_root, as_out, as_labels;
  std::vector<std::string> as_langs;
  assess->add_option("--model", as_model, "checkpoint")->required();
  assess->add_option("--data", as_data, "dataset (JSONL)");
  assess->add_option("--root", as_root, "source tree root (alternative to --data)");
  assess->add_option("--lang", as_langs, "grammar language(s) for --root");
  assess->add_option("--labels", as_labels, "structure labels (linguistic task)");
  assess->add_option("--out", as_out, "assessment report path")->required();

  // ---- explain ----
  auto* explain = app.add_subcommand("explain", "explain one prediction");
  std::string xp_model, xp_text, xp_mode = "auto", xp_class;
  int xp_budget = qulog::kDefaultShapleyBudget;
  explain->add_option("--model", xp_model, "checkpoint")->required();
  explain->add_option("--text", xp_text, "static text of the instruction")->required();
  explain->add_option("--mode", xp_mode, "exact|sampled|auto");
  explain->add_option("--budget", xp_budget, "permutations in sampled mode");
  explain->add_option("--class", xp_class, "class to explain (default: predicted)");

  // ---- analyze ----
  auto* analyze = app.add_subcommand("analyze", "corpus analytics: entropy and overlap");
  std::string an_data, an_out, an_csv;
  analyze->add_option("--data", an_data, "dataset (JSONL)")->required();
  analyze->add_option("--out", an_out, "analytics report path")->required();
  analyze->add_option("--csv", an_csv, "optional per-n-gram entropy CSV export");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate with a training/evaluation protocol");
  std::string ev_model, ev_data, ev_protocol, ev_out, ev_labels;
  double ev_lr = 1e-4;
  int ev_batch = -1, ev_epochs = 100;
  eval->add_option("--model", ev_model, "checkpoint providing task and model config")->required();
  eval->add_option("--data", ev_data, "dataset (JSONL)")->required();
  eval->add_option("--protocol", ev_protocol, "holdout|leave-one-system-out|repeated-splits")->required();
  eval->add_option("--labels", ev_labels, "structure labels (linguistic task)");
  eval->add_option("--lr", ev_lr, "Adam learning rate for per-fold retraining");
  eval->add_option("--batch", ev_batch, "batch size for per-fold retraining");
  eval->add_option("--epochs", ev_epochs, "maximum epochs for per-fold retraining");
  eval->add_option("--out", ev_out, "metric report path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    fs::path data_dir = common.data_dir;
    auto stopwords = qulog::load_stopwords(data_dir / "stopwords.txt");

    if (*extract) return cmd_extract(common, ex_root, ex_langs, ex_out, ex_system);

    if (*train) {
      auto kind = qulog::parse_task_kind(tr_task);
      if (!kind) throw qulog::ConfigError("unknown task: " + tr_task);
      auto task = qulog::TaskSpec::make(*kind);
      auto ds = qulog::read_dataset(tr_data);

      std::vector<qulog::PreparedSample> samples;
      if (task.input_channel == "structure") {
        if (tr_labels.empty()) throw qulog::ConfigError("linguistic task requires --labels");
        auto tagger = qulog::PosTagger::builtin(data_dir / "postag" / "lexicon.json");
        std::optional<std::string> def;
        if (!tr_default_label.empty()) def = tr_default_label;
        samples = prepare_linguistic(ds, stopwords, tagger, tr_labels, def);
      } else {
        samples = qulog::prepare_dataset(ds, stopwords);
      }

      qulog::TrainConfig cfg;
      cfg.batch_size = tr_batch > 0 ? tr_batch : (*kind == qulog::TaskKind::kLinguistic ? 64 : 2048);
      cfg.max_epochs = tr_epochs;
      cfg.patience = tr_patience;
      cfg.validation_fraction = tr_val_fraction;
      cfg.seed = common.seed;
      cfg.class_weighting = tr_class_weighting;
      cfg.adam.lr = tr_lr;
      qulog::ModelConfig mc;
      mc.max_len = tr_max_len;
      mc.model_dim = tr_dim;
      mc.heads = tr_heads;
      mc.layers = tr_layers;

      auto result = qulog::train(samples, task, cfg, mc);
      qulog::save_model(result.model, tr_out);
      std::string log_path = tr_log.empty() ? tr_out + ".log.csv" : tr_log;
      std::ofstream log(log_path);
      log << "epoch,train_loss,val_loss\n";
      for (const auto& e : result.log)
        log << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
      std::cout << "trained " << qulog::task_kind_name(*kind) << ": best epoch "
                << result.best_epoch << ", validation loss " << result.best_val_loss << "\n";
      return 0;
    }

    if (*assess) {
      auto model = qulog::load_model(as_model);
      auto task = qulog::TaskSpec::from_descriptor(model.task);
      qulog::Dataset ds;
      if (!as_data.empty()) {
        ds = qulog::read_dataset(as_data);
      } else if (!as_root.empty()) {
        if (as_langs.empty()) throw qulog::ConfigError("--root requires --lang");
        auto grammars = load_grammars(data_dir, as_langs);
        qulog::SkipReport skips;
        ds = qulog::extract_tree(as_root, grammars, "assessed", &skips);
      } else {
        throw qulog::ConfigError("assess needs --data or --root");
      }

      std::vector<qulog::PreparedSample> samples;
      if (task.input_channel == "structure") {
        auto tagger = qulog::PosTagger::builtin(data_dir / "postag" / "lexicon.json");
        if (!as_labels.empty()) {
          samples = prepare_linguistic(ds, stopwords, tagger, as_labels, std::nullopt);
        } else {
          samples = qulog::prepare_dataset(ds, stopwords, &tagger);
          for (auto& s : samples) s.label.clear();  // levels are not sufficiency labels
        }
      } else {
        samples = qulog::prepare_dataset(ds, stopwords);
      }

      auto a = qulog::assess(model, samples);

      // disagreements first, most confident disagreeing prediction on top
      std::vector<size_t> order(a.samples.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) {
        const auto& sx = a.samples[x];
        const auto& sy = a.samples[y];
        bool dx = sx.label >= 0 && !sx.agree;
        bool dy = sy.label >= 0 && !sy.agree;
        if (dx != dy) return dx;
        if (dx && dy) return sx.scores[sx.predicted] > sy.scores[sy.predicted];
        return false;
      });

      ordered_json report;
      report["format_version"] = kFormatVersion;
      report["task"] = qulog::task_kind_name(task.kind);
      report["class_names"] = task.class_names;
      report["summary"] = {{"samples", a.samples.size()},
                          {"labeled", a.labeled()},
                          {"agreements", a.agreements()},
                          {"disagreements", a.labeled() - a.agreements()}};
      ordered_json rows = ordered_json::array();
      for (size_t i : order) {
        const auto& s = a.samples[i];
        ordered_json row;
        row["id"] = s.id;
        row["predicted"] = task.class_names[s.predicted];
        row["scores"] = s.scores;
        if (s.label >= 0) {
          row["label"] = task.class_names[s.label];
          row["agree"] = s.agree;
        } else {
          row["label"] = nullptr;
          row["agree"] = nullptr;
        }
        rows.push_back(std::move(row));
      }
      report["samples"] = std::move(rows);
      write_json(report, as_out);
      return 0;
    }

    if (*explain) {
      auto model = qulog::load_model(xp_model);
      auto task = qulog::TaskSpec::from_descriptor(model.task);
      std::vector<std::string> tokens;
      if (task.input_channel == "structure") {
        auto tagger = qulog::PosTagger::builtin(data_dir / "postag" / "lexicon.json");
        tokens = tagger.tag(xp_text);
      } else {
        tokens = qulog::tokenize(xp_text, stopwords);
      }
      if (tokens.empty()) {
        std::cerr << "nothing to explain: no tokens after preprocessing\n";
        return 1;
      }
      std::optional<int> cls;
      if (!xp_class.empty()) {
        cls = task.class_index(xp_class);
        if (!cls) throw qulog::ConfigError("unknown class: " + xp_class);
      }
      auto indices = qulog::encode_input(tokens, model.vocabulary, model.config.max_len);
      int explained = cls ? *cls : qulog::argmax_class(qulog::forward(model, indices));
      int players = 0;
      for (int id : indices)
        if (id != qulog::Vocabulary::kLmt && id != qulog::Vocabulary::kPad) ++players;
      qulog::ShapleyMode mode;
      if (xp_mode == "exact") mode = qulog::ShapleyMode::kExact;
      else if (xp_mode == "sampled") mode = qulog::ShapleyMode::kSampled;
      else mode = players <= qulog::kExactTokenCap ? qulog::ShapleyMode::kExact
                                                  : qulog::ShapleyMode::kSampled;
      auto attr = qulog::shapley_values(model, indices, explained, mode, xp_budget, common.seed);
      std::vector<std::string> kept;
      for (int pos : attr.positions) kept.push_back(tokens[static_cast<size_t>(pos) - 1]);
      auto ex = qulog::importance_scores(attr, kept);

      ordered_json out;
      out["format_version"] = kFormatVersion;
      out["class"] = task.class_names[ex.explained_class];
      out["mode"] = ex.mode == qulog::ShapleyMode::kExact ? "exact" : "sampled";
      ordered_json toks = ordered_json::array();
      int rank = 1;
      for (const auto& t : ex.tokens)
        toks.push_back({{"token", t.token},
                        {"intensity", t.intensity},
                        {"sign", std::string(1, t.sign)},
                        {"rank", rank++}});
      out["tokens"] = std::move(toks);
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*analyze) {
      auto ds = qulog::read_dataset(an_data);
      auto samples = qulog::prepare_dataset(ds, stopwords);
      std::vector<int> ns = {1, 2, 3, 4, 5};
      auto dist = qulog::entropy_distribution(samples, ns);

      auto summary_json = [](const qulog::FiveNumberSummary& s) {
        return ordered_json{{"min", s.min}, {"q1", s.q1}, {"median", s.median},
                            {"q3", s.q3}, {"max", s.max}};
      };
      ordered_json report;
      report["format_version"] = kFormatVersion;
      report["entropy"] = {{"pooled", summary_json(dist.pooled_summary)}};
      for (const auto& [n, s] : dist.per_n_summary)
        report["entropy"]["per_n"][std::to_string(n)] = summary_json(s);

      const char* levels[3] = {"info", "warning", "error"};
      for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
          try {
            double ov = qulog::level_pair_overlap(samples, levels[a], levels[b], ns);
            report["overlap"][std::string(levels[a]) + "-" + levels[b]] = ov;
          } catch (const qulog::DataError&) {
            report["overlap"][std::string(levels[a]) + "-" + levels[b]] = nullptr;
          }
        }
      write_json(report, an_out);

      if (!an_csv.empty()) {
        std::ofstream csv(an_csv);
        csv << "n,ngram,entropy\n";
        for (int n : ns) {
          auto counts = qulog::ngram_counts(samples, n);
          for (const auto& [key, c] : counts.counts) {
            std::string readable = key;
            std::replace(readable.begin(), readable.end(), '\x1f', ' ');
            csv << n << ",\"" << readable << "\"," << qulog::normalized_entropy(c) << "\n";
          }
        }
      }
      return 0;
    }

    if (*eval) {
      auto model = qulog::load_model(ev_model);
      auto task = qulog::TaskSpec::from_descriptor(model.task);
      auto ds = qulog::read_dataset(ev_data);

      std::vector<qulog::PreparedSample> samples;
      std::optional<qulog::PosTagger> tagger;
      if (task.input_channel == "structure") {
        if (ev_labels.empty()) throw qulog::ConfigError("linguistic task requires --labels");
        tagger = qulog::PosTagger::builtin(data_dir / "postag" / "lexicon.json");
        samples = prepare_linguistic(ds, stopwords, *tagger, ev_labels, std::nullopt);
      } else {
        samples = qulog::prepare_dataset(ds, stopwords);
      }
      samples = qulog::filter_for_task(samples, task);

      qulog::TrainConfig tcfg;
      tcfg.batch_size = ev_batch > 0 ? ev_batch
                                     : (task.kind == qulog::TaskKind::kLinguistic ? 64 : 2048);
      tcfg.max_epochs = ev_epochs;
      tcfg.seed = common.seed;
      tcfg.adam.lr = ev_lr;
      qulog::ModelConfig mc = model.config;

      struct Row {
        std::string name;
        qulog::MetricSuite metrics;
      };
      std::vector<Row> rows;

      auto run_fold = [&](const std::string& name, const std::vector<qulog::PreparedSample>& tr,
                          const std::vector<qulog::PreparedSample>& te, uint64_t seed) {
        qulog::TrainConfig cfg = tcfg;
        cfg.seed = seed;
        auto result = qulog::train(tr, task, cfg, mc);
        auto a = qulog::assess(result.model, te);
        rows.push_back({name, assessment_metrics(a)});
      };

      if (ev_protocol == "leave-one-system-out") {
        std::set<std::string> systems;
        for (const auto& s : samples) systems.insert(s.system);
        if (systems.size() < 2) throw qulog::DataError("leave-one-system-out needs >= 2 systems");
        for (const auto& held : systems) {
          std::vector<qulog::PreparedSample> tr, te;
          for (const auto& s : samples) (s.system == held ? te : tr).push_back(s);
          run_fold(held, tr, te, common.seed);
        }
      } else if (ev_protocol == "holdout" || ev_protocol == "repeated-splits") {
        int repeats = ev_protocol == "holdout" ? 1 : 30;
        for (int r = 0; r < repeats; ++r) {
          uint64_t seed = common.seed + static_cast<uint64_t>(r);
          std::map<int, std::vector<size_t>> by_class;
          for (size_t i = 0; i < samples.size(); ++i)
            by_class[*task.class_index(samples[i].label)].push_back(i);
          std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
          std::vector<qulog::PreparedSample> tr, te;
          for (auto& [_, idx] : by_class) {
            std::shuffle(idx.begin(), idx.end(), rng);
            size_t n_test = std::max<size_t>(1, idx.size() / 5);
            for (size_t i = 0; i < idx.size(); ++i)
              (i < n_test ? te : tr).push_back(samples[idx[i]]);
          }
          run_fold(ev_protocol == "holdout" ? "holdout" : "split" + std::to_string(r), tr, te, seed);
        }
      } else {
        throw qulog::ConfigError("unknown protocol: " + ev_protocol);
      }

      auto mean_std = [&](auto getter) {
        double mean = 0;
        for (const auto& r : rows) mean += getter(r.metrics);
        mean /= rows.size();
        double var = 0;
        for (const auto& r : rows) {
          double d = getter(r.metrics) - mean;
          var += d * d;
        }
        var /= rows.size();
        return std::pair<double, double>(mean, std::sqrt(var));
      };

      ordered_json report;
      report["format_version"] = kFormatVersion;
      report["task"] = qulog::task_kind_name(task.kind);
      report["protocol"] = ev_protocol;
      ordered_json jrows = ordered_json::array();
      for (const auto& r : rows) {
        ordered_json jr = metrics_json(r.metrics);
        jr["fold"] = r.name;
        jrows.push_back(std::move(jr));
      }
      report["folds"] = std::move(jrows);
      auto [acc_m, acc_s] = mean_std([](const qulog::MetricSuite& m) { return m.accuracy; });
      auto [f1_m, f1_s] = mean_std([](const qulog::MetricSuite& m) { return m.macro_f1; });
      auto [auc_m, auc_s] = mean_std([](const qulog::MetricSuite& m) { return m.macro_auc; });
      report["summary"] = {{"accuracy", {{"mean", acc_m}, {"std", acc_s}}},
                           {"macro_f1", {{"mean", f1_m}, {"std", f1_s}}},
                           {"macro_auc", {{"mean", auc_m}, {"std", auc_s}}}};
      write_json(report, ev_out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
