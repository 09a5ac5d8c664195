// Generates the bundled evaluation corpus: four synthetic systems with shared
// level cues, per-system jargon, and a linguistic-structure label file. The
// output is committed; rerunning with the default seed reproduces it byte for
// byte.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qulog/corpus.hpp"
#include "qulog/preprocess.hpp"

using namespace qulog;

namespace {

struct SystemSpec {
  std::string name;
  std::vector<std::string> jargon;
  std::vector<std::string> modules;
};

const std::vector<SystemSpec> kSystems = {
    {"orion-db",
     {"tablet", "compaction", "wal", "memtable", "sstable", "rowset", "tombstone", "cursor",
      "btree", "pagecache", "shard", "vacuum"},
     {"storage/Tablet.java", "storage/Compactor.java", "wal/WalWriter.java", "db/Catalog.java"}},
    {"helix-gateway",
     {"route", "upstream", "listener", "handshake", "tls", "proxy", "backend", "header",
      "session", "websocket", "certificate", "endpoint"},
     {"core/Router.java", "net/Listener.java", "tls/Handshaker.java", "proxy/Upstream.java"}},
    {"quartz-scheduler",
     {"job", "trigger", "cron", "executor", "workflow", "slot", "lease", "calendar", "misfire",
      "dispatcher", "tick", "deadline"},
     {"sched/JobRunner.java", "sched/TriggerStore.java", "exec/Executor.java", "cron/CronParser.java"}},
    {"nimbus-store",
     {"bucket", "blob", "chunk", "multipart", "lifecycle", "archive", "mirror", "volume",
      "inode", "ledger", "segment", "tier"},
     {"store/BucketOps.java", "store/BlobWriter.java", "gc/Lifecycle.java", "io/Volume.java"}},
};

// Cue words shared by every system; these are what transfers across systems
// under leave-one-system-out evaluation.
const std::vector<std::string> kInfoCues = {"started", "completed", "initialized", "registered",
                                            "loaded", "established", "finished", "created",
                                            "enabled", "succeeded"};
const std::vector<std::string> kWarnCues = {"slow", "degraded", "stale", "throttled",
                                            "deprecated", "retrying", "delayed", "saturated"};
const std::vector<std::string> kErrorCues = {"failed", "cannot", "unable", "refused", "aborted",
                                             "corrupted", "rejected", "unavailable", "fatal"};

// Nouns shared between level pairs; they drive the n-gram overlap ordering
// (error-warning above warning-info above error-info).
const std::vector<std::string> kErrWarnNouns = {"timeout", "disk", "memory", "latency", "retry",
                                                "lock", "quota", "limit", "connection"};
const std::vector<std::string> kWarnInfoNouns = {"request", "sync", "cache", "snapshot", "batch",
                                                 "poll", "heartbeat", "window", "refresh",
                                                 "rotation", "cycle", "probe"};

// State-verification messages: the level depends on whether the expected and
// observed states agree, two tokens that are never adjacent. Bag-of-n-grams
// models cannot represent that pairing; the encoder can.
const std::vector<std::string> kStates = {"active", "idle", "ready", "closed"};

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& pool) {
  std::uniform_int_distribution<size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

std::string verification_text(std::mt19937_64& rng, bool match) {
  const auto& s1 = pick(rng, kStates);
  std::string s2 = s1;
  while (!match && s2 == s1) s2 = pick(rng, kStates);
  std::uniform_int_distribution<int> d(0, 1);
  if (d(rng)) return "expected " + s1 + " observed " + s2;
  return "state check expected " + s1 + " observed " + s2;
}

std::string info_text(std::mt19937_64& rng, const SystemSpec& sys) {
  std::uniform_int_distribution<int> d(0, 99);
  int roll = d(rng);
  const auto& j = pick(rng, sys.jargon);
  const auto& j2 = pick(rng, sys.jargon);
  const auto& j3 = pick(rng, sys.jargon);
  const auto& cue = pick(rng, kInfoCues);
  // info messages run jargon-heavy: routine events narrate internal state
  if (roll < 18) return j + " " + j2 + " " + cue;
  if (roll < 34) return cue + " " + j + " " + j2 + " " + j3 + " for {}";
  if (roll < 46) return j + " " + j2 + " " + cue + " in {} ms";
  if (roll < 71) return verification_text(rng, true);
  if (roll < 82) return pick(rng, kWarnInfoNouns) + " " + cue + " for " + j;
  // short messages feed the insufficient-structure class
  if (roll < 92) return cue;
  return cue + " {}";
}

std::string warning_text(std::mt19937_64& rng, const SystemSpec& sys) {
  std::uniform_int_distribution<int> d(0, 99);
  int roll = d(rng);
  const auto& j = pick(rng, sys.jargon);
  const auto& cue = pick(rng, kWarnCues);
  const auto& en = pick(rng, kErrWarnNouns);
  // tolerated state mismatches surface as warnings
  if (roll < 30) return verification_text(rng, false) + ", " + cue;
  if (roll < 50) return cue + " " + en + " on " + j;
  if (roll < 68) return en + " " + cue + " in " + j + " {}";
  if (roll < 82) return pick(rng, kWarnInfoNouns) + " " + cue + " for " + j;
  if (roll < 90) return j + " approaching " + en + " limit";
  if (roll < 97) return cue + " {}";
  return cue;
}

std::string error_text(std::mt19937_64& rng, const SystemSpec& sys) {
  std::uniform_int_distribution<int> d(0, 99);
  int roll = d(rng);
  const auto& j = pick(rng, sys.jargon);
  const auto& cue = pick(rng, kErrorCues);
  const auto& en = pick(rng, kErrWarnNouns);
  if (roll < 45) return verification_text(rng, false);
  if (roll < 60) return cue + " to acquire " + en + " on " + j;
  if (roll < 75) return j + " " + cue + ": " + en;
  if (roll < 85) return cue + " " + j + " after {} retry attempts";
  if (roll < 92) return cue + " open " + j + " {}";
  if (roll < 97) return cue + " {}";
  return cue;
}

int count_vars(const std::string& text) {
  int n = 0;
  for (size_t i = 0; i + 1 < text.size(); ++i)
    if (text[i] == '{' && text[i + 1] == '}') ++n;
  return n;
}

// Antonym-style explanation cases: an otherwise neutral message whose only
// error signal is one cue word; that cue is the ground-truth token.
void write_explain_cases(const std::filesystem::path& path, std::mt19937_64& rng) {
  std::ofstream out(path, std::ios::binary);
  std::vector<nlohmann::json> cases;
  for (int i = 0; i < 20; ++i) {
    const auto& sys = kSystems[i % kSystems.size()];
    const auto& j = pick(rng, sys.jargon);
    const auto& j2 = pick(rng, sys.jargon);
    const auto& cue = kErrorCues[i % kErrorCues.size()];
    std::string text = j + " " + j2 + " " + cue;
    cases.push_back({{"text", text}, {"truth", cue}});
  }
  for (const auto& c : cases) out << c.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bundled corpus generator"};
  std::string data_dir = QULOG_DATA_DIR;
  uint64_t seed = 20260824;
  app.add_option("--data-dir", data_dir, "repository data directory");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::path out_dir = std::filesystem::path(data_dir) / "bundled";
  std::filesystem::create_directories(out_dir);

  std::mt19937_64 rng(seed);
  Dataset ds;
  for (const auto& sys : kSystems) {
    long line = 0;
    // 11:3:6 level mix per block of 20 (55% info, 15% warning, 30% error)
    for (int i = 0; i < 600; ++i) {
      int slot = i % 20;
      std::string level = slot < 11 ? "info" : slot < 14 ? "warning" : "error";
      std::string text = level == "info"      ? info_text(rng, sys)
                         : level == "warning" ? warning_text(rng, sys)
                                              : error_text(rng, sys);
      LogInstruction ins;
      ins.system = sys.name;
      ins.file_path = "src/" + sys.modules[i % sys.modules.size()];
      ins.line = (line += 7);
      ins.level = level;
      ins.static_text = text;
      ins.variable_count = count_vars(text);
      std::string call = level == "warning" ? "warn" : level;
      ins.raw = "LOG." + call + "(\"" + text + "\");";
      ds.samples.push_back(ins);
    }
  }
  ds.rebuild_provenance();
  write_dataset(ds, out_dir / "corpus.jsonl");

  // structure labels: a group is insufficient when it carries at most two
  // content-bearing tags (everything except PUNCT and PLACEHOLDER)
  auto tagger = PosTagger::builtin(std::filesystem::path(data_dir) / "postag" / "lexicon.json");
  auto groups = group_by_structure(ds, tagger);
  std::ofstream labels(out_dir / "structure_labels.jsonl", std::ios::binary);
  for (const auto& [key, members] : groups) {
    long content = 0;
    std::istringstream tags(key);
    std::string tag;
    while (tags >> tag)
      if (tag != "PUNCT" && tag != "PLACEHOLDER") ++content;
    nlohmann::json j = {{"structure_key", key},
                        {"label", content <= 2 ? "insufficient" : "sufficient"}};
    labels << j.dump() << "\n";
  }

  write_explain_cases(out_dir / "explain_cases.jsonl", rng);

  std::cout << "wrote " << ds.samples.size() << " instructions, " << groups.size()
            << " structure groups\n";
  return 0;
}
