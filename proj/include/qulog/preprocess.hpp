#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "qulog/corpus.hpp"

namespace qulog {

inline const std::vector<std::string>& pos_tagset() {
  static const std::vector<std::string> tags = {
      "NOUN", "VERB", "ADJ", "ADV", "ADP",  "PART", "PRON",
      "DET",  "AUX",  "NUM", "PUNCT", "SYM", "X",   "PLACEHOLDER"};
  return tags;
}

inline constexpr std::string_view kVarToken = "<var>";

using Stopwords = std::set<std::string>;

inline Stopwords load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stopword file: " + path.string());
  Stopwords words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) words.insert(line);
  }
  return words;
}

namespace detail {

inline bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)); }
inline bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)); }
inline bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

// camelCase / snake_case / letter-digit boundary splitter.
inline std::vector<std::string> split_word(const std::string& w) {
  std::vector<std::string> parts;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) parts.push_back(cur);
    cur.clear();
  };
  for (size_t i = 0; i < w.size(); ++i) {
    char c = w[i];
    if (c == '_') { flush(); continue; }
    if (!cur.empty()) {
      char p = cur.back();
      bool boundary = (is_lower(p) || is_digit(p)) && is_upper(c);
      // acronym end: "HTTPServer" -> HTTP | Server
      if (!boundary && is_upper(p) && is_upper(c) && i + 1 < w.size() && is_lower(w[i + 1]))
        boundary = true;
      if (!boundary && is_digit(p) != is_digit(c) && std::isalpha(static_cast<unsigned char>(c)))
        boundary = is_digit(p);
      if (boundary) flush();
    }
    cur.push_back(c);
  }
  flush();
  return parts;
}

}  // namespace detail

// Tokenization pipeline for the level-prediction channel, fixed order:
// placeholder sentinel, whitespace split, camel/snake split, special-char
// strip, lowercase, stopword removal, empty drop. Idempotent on its own
// output ("<var>" re-parses as the sentinel).
inline std::vector<std::string> tokenize(const std::string& static_text, const Stopwords& stopwords) {
  std::string s;
  s.reserve(static_text.size() + 8);
  for (size_t i = 0; i < static_text.size();) {
    if (i + 1 < static_text.size() && static_text[i] == '{' && static_text[i + 1] == '}') {
      s += " \x01 ";
      i += 2;
    } else if (static_text.compare(i, kVarToken.size(), kVarToken) == 0) {
      s += " \x01 ";
      i += kVarToken.size();
    } else {
      s.push_back(static_text[i]);
      ++i;
    }
  }

  std::vector<std::string> tokens;
  std::string word;
  auto handle_word = [&](const std::string& w) {
    if (w == "\x01") {
      tokens.emplace_back(kVarToken);
      return;
    }
    // special characters separate segments rather than vanishing in place;
    // deleting them could fuse segments and break idempotence
    std::string segment;
    auto flush_segment = [&] {
      for (const auto& piece : detail::split_word(segment)) {
        std::string t;
        for (char c : piece) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (t.empty()) continue;
        if (stopwords.count(t)) continue;
        tokens.push_back(std::move(t));
      }
      segment.clear();
    };
    for (char c : w) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_')
        segment.push_back(c);
      else
        flush_segment();
    }
    flush_segment();
  };
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!word.empty()) { handle_word(word); word.clear(); }
    } else {
      word.push_back(c);
    }
  }
  if (!word.empty()) handle_word(word);
  return tokens;
}

// Word segmentation for POS tagging: whitespace split with leading/trailing
// punctuation peeled off as separate words; "{}" is one placeholder word.
// Tagging sees the pre-stopword sequence.
inline std::vector<std::string> tag_words(const std::string& static_text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    size_t a = 0, b = cur.size();
    std::vector<std::string> lead, trail;
    while (a < b && std::ispunct(static_cast<unsigned char>(cur[a])) &&
           !(a + 1 < b && cur[a] == '{' && cur[a + 1] == '}' && b - a == 2)) {
      if (cur.compare(a, 2, "{}") == 0) break;
      lead.push_back(std::string(1, cur[a]));
      ++a;
    }
    while (b > a && std::ispunct(static_cast<unsigned char>(cur[b - 1]))) {
      if (b >= 2 && cur.compare(b - 2, 2, "{}") == 0) break;
      trail.push_back(std::string(1, cur[b - 1]));
      --b;
    }
    for (auto& p : lead) words.push_back(std::move(p));
    if (b > a) words.push_back(cur.substr(a, b - a));
    for (auto it = trail.rbegin(); it != trail.rend(); ++it) words.push_back(std::move(*it));
    cur.clear();
  };
  std::string s = static_text;
  // isolate placeholders so "session:{}" splits cleanly
  std::string spaced;
  for (size_t i = 0; i < s.size();) {
    if (i + 1 < s.size() && s[i] == '{' && s[i + 1] == '}') {
      spaced += " {} ";
      i += 2;
    } else {
      spaced.push_back(s[i]);
      ++i;
    }
  }
  for (char c : spaced) {
    if (std::isspace(static_cast<unsigned char>(c))) flush();
    else cur.push_back(c);
  }
  flush();
  return words;
}

// Greedy lexicon + suffix-rule tagger. `builtin` mode loads the bundled
// lexicon; `external` mode serves pre-computed tags from a JSONL file keyed
// by (system, file_path, line).
class PosTagger {
 public:
  static PosTagger builtin(const std::filesystem::path& lexicon_path) {
    std::ifstream in(lexicon_path);
    if (!in) throw ConfigError("cannot open tagger lexicon: " + lexicon_path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("tagger lexicon: ") + e.what());
    }
    PosTagger t;
    t.mode_ = Mode::kBuiltin;
    for (auto& [word, tag] : j.at("lexicon").items()) t.lexicon_[word] = tag.get<std::string>();
    for (auto& rule : j.at("suffix_rules"))
      t.suffix_rules_.emplace_back(rule.at(0).get<std::string>(), rule.at(1).get<std::string>());
    t.default_tag_ = j.value("default", std::string("NOUN"));
    return t;
  }

  static PosTagger external(const std::filesystem::path& tagfile) {
    std::ifstream in(tagfile);
    if (!in) throw ConfigError("cannot open external tag file: " + tagfile.string());
    PosTagger t;
    t.mode_ = Mode::kExternal;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      std::string key = j.at("system").get<std::string>() + "\x1f" +
                        j.at("file_path").get<std::string>() + "\x1f" +
                        std::to_string(j.at("line").get<long>());
      t.external_tags_[key] = j.at("tags").get<std::vector<std::string>>();
    }
    return t;
  }

  std::vector<std::string> tag(const std::string& static_text) const {
    if (mode_ != Mode::kBuiltin)
      throw ConfigError("external tagger requires instruction identity; use tag(instruction)");
    return tag_builtin(static_text);
  }

  std::vector<std::string> tag(const LogInstruction& ins) const {
    if (mode_ == Mode::kBuiltin) return tag_builtin(ins.static_text);
    std::string key = ins.system + "\x1f" + ins.file_path + "\x1f" + std::to_string(ins.line);
    auto it = external_tags_.find(key);
    if (it == external_tags_.end())
      throw DataError("no external tag record for " + ins.system + ":" + ins.file_path + ":" +
                      std::to_string(ins.line));
    return it->second;
  }

 private:
  enum class Mode { kBuiltin, kExternal };

  std::vector<std::string> tag_builtin(const std::string& static_text) const {
    std::vector<std::string> tags;
    for (const auto& w : tag_words(static_text)) tags.push_back(tag_word(w));
    return tags;
  }

  std::string tag_word(const std::string& w) const {
    if (w == "{}") return "PLACEHOLDER";
    if (w.size() == 1 && std::ispunct(static_cast<unsigned char>(w[0]))) {
      static const std::string syms = "$%+<>=~^|";
      return syms.find(w[0]) != std::string::npos ? "SYM" : "PUNCT";
    }
    std::string lw;
    bool all_num = true, any_alpha = false;
    for (char c : w) {
      lw.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      if (!std::isdigit(static_cast<unsigned char>(c)) && c != '.' && c != ',') all_num = false;
      if (std::isalpha(static_cast<unsigned char>(c))) any_alpha = true;
    }
    if (all_num && !any_alpha) return "NUM";
    if (auto it = lexicon_.find(lw); it != lexicon_.end()) return it->second;
    for (const auto& [suffix, tag] : suffix_rules_)
      if (lw.size() > suffix.size() + 1 && lw.compare(lw.size() - suffix.size(), suffix.size(), suffix) == 0)
        return tag;
    return default_tag_;
  }

  Mode mode_ = Mode::kBuiltin;
  std::unordered_map<std::string, std::string> lexicon_;
  std::vector<std::pair<std::string, std::string>> suffix_rules_;
  std::string default_tag_ = "NOUN";
  std::unordered_map<std::string, std::vector<std::string>> external_tags_;
};

inline std::string structure_key(const std::vector<std::string>& tags) {
  std::string key;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (i) key.push_back(' ');
    key += tags[i];
  }
  return key;
}

inline std::map<std::string, std::vector<LogInstruction>> group_by_structure(
    const Dataset& dataset, const PosTagger& tagger) {
  std::map<std::string, std::vector<LogInstruction>> groups;
  for (const auto& ins : dataset.samples) groups[structure_key(tagger.tag(ins))].push_back(ins);
  return groups;
}

struct LabeledInstruction {
  LogInstruction instruction;
  std::string structure_key;
  std::string label;  // "sufficient" | "insufficient"
};

// Group labels as ingested from the labels file; each instruction inherits
// its group's label. Missing keys are fatal unless a default label is given.
inline std::vector<LabeledInstruction> apply_group_labels(
    const std::map<std::string, std::vector<LogInstruction>>& groups,
    const std::map<std::string, std::string>& labels,
    const std::optional<std::string>& default_label = std::nullopt,
    std::vector<std::string>* missing_keys = nullptr) {
  std::vector<std::string> missing;
  for (const auto& [key, _] : groups)
    if (!labels.count(key)) missing.push_back(key);
  if (!missing.empty() && !default_label) {
    std::string msg = "unlabeled linguistic groups:";
    for (const auto& k : missing) msg += " [" + k + "]";
    throw DataError(msg);
  }
  if (missing_keys) *missing_keys = missing;
  std::vector<LabeledInstruction> out;
  for (const auto& [key, members] : groups) {
    auto it = labels.find(key);
    const std::string& label = it != labels.end() ? it->second : *default_label;
    for (const auto& ins : members) out.push_back({ins, key, label});
  }
  return out;
}

inline std::map<std::string, std::string> load_group_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open labels file: " + path.string());
  std::map<std::string, std::string> labels;
  std::string line;
  long record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    std::string label = j.at("label").get<std::string>();
    if (label != "sufficient" && label != "insufficient")
      throw DataError("labels record " + std::to_string(record) + ": unknown label '" + label + "'");
    labels[j.at("structure_key").get<std::string>()] = label;
  }
  return labels;
}

}  // namespace qulog
