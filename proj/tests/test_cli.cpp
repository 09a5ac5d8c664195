#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qulog/corpus.hpp"

using namespace qulog;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = QULOG_FIXTURE_DIR;
const std::string kBin = QULOG_BIN;

struct RunResult {
  int status = -1;
  std::string output;  // stdout + stderr interleaved
};

RunResult run(const std::string& args) {
  RunResult r;
  std::string cmd = kBin + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  while (size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  int rc = pclose(pipe);
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return r;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Separable two-system dataset for quick end-to-end runs.
fs::path write_cli_dataset() {
  static fs::path path;
  if (!path.empty()) return path;
  Dataset ds;
  const std::vector<std::tuple<std::string, std::string, int>> rows = {
      {"info", "completed request {}", 1},
      {"info", "completed sync cycle", 0},
      {"warning", "slow response from {}", 1},
      {"warning", "slow disk detected", 0},
      {"error", "failure in worker {}", 1},
      {"error", "failure while writing block", 0},
  };
  long line = 0;
  for (const char* system : {"alpha", "beta"})
    for (int rep = 0; rep < 12; ++rep)
      for (const auto& [level, text, vars] : rows) {
        LogInstruction ins;
        ins.system = system;
        ins.file_path = std::string("src/") + system + ".java";
        ins.line = ++line;
        ins.raw = "LOG." + level + "(\"" + text + "\");";
        ins.static_text = text;
        ins.level = level;
        ins.variable_count = vars;
        ds.samples.push_back(ins);
      }
  ds.rebuild_provenance();
  path = tmp("qulog_cli_dataset.jsonl");
  write_dataset(ds, path);
  return path;
}

const std::string kSmallModelFlags =
    " --epochs 40 --batch 16 --max-len 8 --dim 8 --heads 2 --layers 1 --lr 0.005";

fs::path trained_checkpoint() {
  static fs::path ckpt;
  if (!ckpt.empty()) return ckpt;
  ckpt = tmp("qulog_cli_model.bin");
  auto r = run("--seed 4 train --data " + write_cli_dataset().string() + " --task iwe --out " +
               ckpt.string() + kSmallModelFlags);
  REQUIRE_MESSAGE(r.status == 0, r.output);
  return ckpt;
}

}  // namespace

TEST_CASE("cli extract reproduces the fixture dataset") {
  fs::path out = tmp("qulog_cli_extract.jsonl");
  auto r = run("extract --root " + (kFixtures / "srctree").string() +
               " --lang java --lang python --system fixturesys --out " + out.string());
  REQUIRE_MESSAGE(r.status == 0, r.output);

  auto report = json::parse(r.output);
  CHECK(report.at("format_version") == 1);
  CHECK(report.at("instructions") == 25);
  CHECK(report.at("dropped_levels").at("debug") == 2);
  CHECK(report.at("skipped_files").size() == 1);

  auto ds = read_dataset(out);
  CHECK(ds.samples.size() == 25);
  fs::remove(out);
}

TEST_CASE("cli extract fails loudly on a missing root") {
  auto r = run("extract --root /no/such/tree --lang java --out " + tmp("x.jsonl").string());
  CHECK(r.status != 0);
  CHECK(r.output.find("/no/such/tree") != std::string::npos);
}

TEST_CASE("cli train is reproducible: same seed, identical checkpoint bytes") {
  fs::path c1 = tmp("qulog_cli_m1.bin"), c2 = tmp("qulog_cli_m2.bin");
  auto data = write_cli_dataset().string();
  auto r1 = run("--seed 11 train --data " + data + " --task iwe --out " + c1.string() + kSmallModelFlags);
  auto r2 = run("--seed 11 train --data " + data + " --task iwe --out " + c2.string() + kSmallModelFlags);
  REQUIRE_MESSAGE(r1.status == 0, r1.output);
  REQUIRE_MESSAGE(r2.status == 0, r2.output);
  CHECK(slurp(c1) == slurp(c2));

  // training log CSV exists with the documented header
  std::string log = slurp(c1.string() + ".log.csv");
  CHECK(log.rfind("epoch,train_loss,val_loss\n", 0) == 0);
  fs::remove(c1);
  fs::remove(c2);
  fs::remove(c1.string() + ".log.csv");
  fs::remove(c2.string() + ".log.csv");
}

TEST_CASE("cli train rejects a task/dataset mismatch") {
  Dataset ds;
  for (int i = 0; i < 10; ++i) {
    LogInstruction ins{"s", "f.java", i + 1, "LOG.info(\"x\");", "worker started", "info", 0};
    ds.samples.push_back(ins);
  }
  ds.rebuild_provenance();
  fs::path p = tmp("qulog_cli_onelevel.jsonl");
  write_dataset(ds, p);
  auto r = run("train --data " + p.string() + " --task ie --out " + tmp("nope.bin").string() +
               kSmallModelFlags);
  CHECK(r.status != 0);
  CHECK(r.output.find("error:") != std::string::npos);
  fs::remove(p);
}

TEST_CASE("cli assess reports summary and orders disagreements first") {
  fs::path out = tmp("qulog_cli_assess.json");
  auto r = run("assess --model " + trained_checkpoint().string() + " --data " +
               write_cli_dataset().string() + " --out " + out.string());
  REQUIRE_MESSAGE(r.status == 0, r.output);

  auto report = json::parse(slurp(out));
  CHECK(report.at("format_version") == 1);
  CHECK(report.at("task") == "level_iwe");
  auto summary = report.at("summary");
  CHECK(summary.at("samples") == 144);
  CHECK(summary.at("labeled") == 144);
  CHECK(summary.at("agreements").get<long>() + summary.at("disagreements").get<long>() == 144);

  // once an agreeing row appears, no disagreeing row may follow
  bool seen_agree = false;
  for (const auto& row : report.at("samples")) {
    bool agree = row.at("agree").get<bool>();
    if (agree) seen_agree = true;
    if (seen_agree) CHECK(agree);
  }
  fs::remove(out);
}

TEST_CASE("cli assess rejects an invalid checkpoint") {
  fs::path bad = tmp("qulog_cli_badmodel.bin");
  std::ofstream(bad) << "garbage";
  auto r = run("assess --model " + bad.string() + " --data " + write_cli_dataset().string() +
               " --out " + tmp("r.json").string());
  CHECK(r.status != 0);
  fs::remove(bad);
}

TEST_CASE("cli explain emits ranked tokens as JSON") {
  auto r = run("explain --model " + trained_checkpoint().string() +
               " --text \"failure in worker {}\"");
  REQUIRE_MESSAGE(r.status == 0, r.output);
  auto out = json::parse(r.output);
  CHECK(out.at("format_version") == 1);
  CHECK(out.at("mode") == "exact");
  auto toks = out.at("tokens");
  REQUIRE(toks.size() >= 2);
  for (size_t i = 0; i < toks.size(); ++i) {
    CHECK(toks[i].at("rank") == static_cast<int>(i) + 1);
    CHECK(toks[i].at("intensity").get<double>() >= 0.0);
    std::string sign = toks[i].at("sign");
    CHECK((sign == "+" || sign == "-"));
    if (i > 0)
      CHECK(toks[i].at("intensity").get<double>() <= toks[i - 1].at("intensity").get<double>());
  }
}

TEST_CASE("cli explain with nothing left after preprocessing exits nonzero") {
  auto r = run("explain --model " + trained_checkpoint().string() + " --text \"the of a\"");
  CHECK(r.status == 1);
  CHECK(r.output.find("nothing to explain") != std::string::npos);
}

TEST_CASE("cli explain sampled mode is seed-stable") {
  auto cmd = "--seed 21 explain --model " + trained_checkpoint().string() +
             " --text \"failure in worker {}\" --mode sampled --budget 64";
  auto r1 = run(cmd);
  auto r2 = run(cmd);
  REQUIRE(r1.status == 0);
  CHECK(r1.output == r2.output);
}

TEST_CASE("cli analyze reports entropy summaries and overlaps") {
  fs::path out = tmp("qulog_cli_analyze.json");
  fs::path csv = tmp("qulog_cli_analyze.csv");
  auto r = run("analyze --data " + write_cli_dataset().string() + " --out " + out.string() +
               " --csv " + csv.string());
  REQUIRE_MESSAGE(r.status == 0, r.output);
  auto report = json::parse(slurp(out));
  CHECK(report.at("format_version") == 1);
  auto pooled = report.at("entropy").at("pooled");
  CHECK(pooled.at("min").get<double>() >= 0.0);
  CHECK(pooled.at("max").get<double>() <= 1.0);
  CHECK(report.at("entropy").at("per_n").contains("1"));
  CHECK(report.at("overlap").contains("info-warning"));
  CHECK(report.at("overlap").contains("info-error"));
  CHECK(report.at("overlap").contains("warning-error"));
  std::string head = slurp(csv).substr(0, 16);
  CHECK(head == "n,ngram,entropy\n");
  fs::remove(out);
  fs::remove(csv);
}

TEST_CASE("cli eval runs leave-one-system-out and summarizes folds") {
  fs::path out = tmp("qulog_cli_eval.json");
  auto r = run("--seed 4 eval --model " + trained_checkpoint().string() + " --data " +
               write_cli_dataset().string() + " --protocol leave-one-system-out --out " +
               out.string());
  REQUIRE_MESSAGE(r.status == 0, r.output);
  auto report = json::parse(slurp(out));
  CHECK(report.at("protocol") == "leave-one-system-out");
  REQUIRE(report.at("folds").size() == 2);
  std::set<std::string> folds;
  for (const auto& f : report.at("folds")) folds.insert(f.at("fold").get<std::string>());
  std::set<std::string> want_folds = {"alpha", "beta"};
  CHECK(folds == want_folds);
  CHECK(report.at("summary").at("macro_f1").contains("mean"));
  CHECK(report.at("summary").at("macro_f1").contains("std"));
  fs::remove(out);
}

TEST_CASE("cli eval holdout is deterministic under a fixed seed") {
  fs::path o1 = tmp("qulog_cli_ev1.json"), o2 = tmp("qulog_cli_ev2.json");
  auto base = "--seed 8 eval --model " + trained_checkpoint().string() + " --data " +
              write_cli_dataset().string() + " --protocol holdout --out ";
  REQUIRE(run(base + o1.string()).status == 0);
  REQUIRE(run(base + o2.string()).status == 0);
  CHECK(slurp(o1) == slurp(o2));
  fs::remove(o1);
  fs::remove(o2);
}

TEST_CASE("cli eval rejects an unknown protocol") {
  auto r = run("eval --model " + trained_checkpoint().string() + " --data " +
               write_cli_dataset().string() + " --protocol bogus --out " + tmp("x.json").string());
  CHECK(r.status != 0);
  CHECK(r.output.find("unknown protocol") != std::string::npos);
}
