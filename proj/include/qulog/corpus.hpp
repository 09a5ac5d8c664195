#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace qulog {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One extracted log instruction. `static_text` holds the literal parts with
// every variable replaced by "{}"; `level` is canonical (info/warning/error)
// once the instruction is part of a Dataset.
struct LogInstruction {
  std::string system;
  std::string file_path;
  long line = 0;
  std::string raw;
  std::string static_text;
  std::string level;
  int variable_count = 0;

  bool operator==(const LogInstruction&) const = default;
};

// Canonical three-level unification. Returns nullopt for out-of-scope tags
// (trace, debug, fatal, ...), which callers count in the skip report.
inline std::optional<std::string> unify_level(std::string_view raw_level) {
  std::string t;
  t.reserve(raw_level.size());
  for (char c : raw_level) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "info" || t == "information") return "info";
  if (t == "warn" || t == "warning") return "warning";
  if (t == "error" || t == "err" || t == "severe") return "error";
  return std::nullopt;
}

inline int count_placeholders(std::string_view s) {
  int n = 0;
  for (size_t i = 0; i + 1 < s.size(); ++i)
    if (s[i] == '{' && s[i + 1] == '}') { ++n; ++i; }
  return n;
}

struct CallPattern {
  std::string pattern;
  int level_group = 1;
  std::regex re;
};

// Argument-list dialects: "java" collapses `"a " + x + " b"` concatenations,
// "python" additionally understands %-specifiers and f-strings.
struct ExtractionGrammar {
  std::string language;
  std::vector<std::string> extensions;
  std::vector<CallPattern> call_patterns;
  std::string arg_style = "java";
  bool ignore_case = false;

  static ExtractionGrammar from_json(const nlohmann::json& j) {
    ExtractionGrammar g;
    try {
      g.language = j.at("language").get<std::string>();
      g.extensions = j.at("extensions").get<std::vector<std::string>>();
      g.arg_style = j.value("arg_style", std::string("java"));
      g.ignore_case = j.value("ignore_case", false);
      for (const auto& p : j.at("call_patterns")) {
        CallPattern cp;
        cp.pattern = p.at("pattern").get<std::string>();
        cp.level_group = p.value("level_group", 1);
        if (cp.level_group < 1) throw ConfigError("grammar pattern level_group must be >= 1");
        auto flags = std::regex::ECMAScript;
        if (g.ignore_case) flags |= std::regex::icase;
        cp.re = std::regex(cp.pattern, flags);
        g.call_patterns.push_back(std::move(cp));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed grammar: ") + e.what());
    } catch (const std::regex_error& e) {
      throw ConfigError(std::string("malformed grammar pattern: ") + e.what());
    }
    if (g.call_patterns.empty()) throw ConfigError("grammar has no call patterns");
    return g;
  }

  static ExtractionGrammar load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open grammar file: " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("grammar file " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  bool matches_extension(const std::filesystem::path& p) const {
    auto ext = p.extension().string();
    return std::find(extensions.begin(), extensions.end(), ext) != extensions.end();
  }
};

struct Dataset {
  std::vector<LogInstruction> samples;
  std::map<std::string, long> provenance;

  void rebuild_provenance() {
    provenance.clear();
    for (const auto& s : samples) provenance[s.system]++;
  }
};

struct SkipReport {
  std::vector<std::string> unreadable_files;
  std::map<std::string, long> dropped_levels;  // raw tag -> count

  long total_dropped() const {
    long n = 0;
    for (auto& [_, c] : dropped_levels) n += c;
    return n;
  }
};

namespace detail {

// Scans from an opening '(' to its balanced close, skipping string literals.
// Returns the index one past the closing ')' or npos when unbalanced.
inline size_t scan_balanced(const std::string& text, size_t open) {
  int depth = 0;
  char quote = 0;
  for (size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (quote) {
      if (c == '\\') { ++i; continue; }
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') { quote = c; continue; }
    if (c == '(') ++depth;
    else if (c == ')') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

inline std::vector<std::string> split_top_level(const std::string& args, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  char quote = 0;
  for (size_t i = 0; i < args.size(); ++i) {
    char c = args[i];
    if (quote) {
      cur.push_back(c);
      if (c == '\\' && i + 1 < args.size()) cur.push_back(args[++i]);
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') { quote = c; cur.push_back(c); continue; }
    if (c == '(' || c == '[' || c == '{') ++depth;
    else if (c == ')' || c == ']' || c == '}') --depth;
    if (c == sep && depth == 0) { out.push_back(cur); cur.clear(); continue; }
    cur.push_back(c);
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::string unescape_literal(std::string_view body) {
  std::string out;
  out.reserve(body.size());
  for (size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c == '\\' && i + 1 < body.size()) {
      char n = body[++i];
      switch (n) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        default: out.push_back(n); break;
      }
    } else {
      out.push_back(c);
    }
  }
  return out;
}

// Normalizes every in-literal variable marker (%s-style specifiers, {} and
// {name} braces) to the canonical "{}" placeholder.
inline std::string normalize_format_specs(const std::string& s) {
  static const std::regex pct(R"(%[-+ 0#]?\d*(\.\d+)?[sdifgGeExXro])");
  static const std::regex brace(R"(\{[^{}]*\})");
  std::string tmp;
  tmp.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 1 < s.size() && s[i + 1] == '%') { tmp.push_back('%'); ++i; }
    else tmp.push_back(s[i]);
  }
  tmp = std::regex_replace(tmp, pct, "{}");
  return std::regex_replace(tmp, brace, "{}");
}

// Parses one operand of the first logging argument. Returns the literal text
// (placeholders normalized) or nullopt when the operand is a variable.
inline std::optional<std::string> operand_literal(const std::string& raw_operand,
                                                  const std::string& arg_style) {
  std::string op = trim(raw_operand);
  if (op.empty()) return std::nullopt;
  bool fstring = false;
  size_t start = 0;
  // string prefixes: f"", r"", b"", u"" and combinations
  while (start < op.size() && (std::isalpha(static_cast<unsigned char>(op[start])))) {
    if (op[start] == 'f' || op[start] == 'F') fstring = true;
    ++start;
    if (start > 2) return std::nullopt;  // identifiers are variables
  }
  if (start >= op.size() || (op[start] != '"' && op[start] != '\'')) return std::nullopt;
  char q = op[start];
  if (op.size() < start + 2 || op.back() != q) return std::nullopt;
  std::string body = unescape_literal(std::string_view(op).substr(start + 1, op.size() - start - 2));
  if (arg_style == "python" || fstring) body = normalize_format_specs(body);
  else body = std::regex_replace(body, std::regex(R"(\{\d*\})"), "{}");  // slf4j {} / {0}
  return body;
}

// First-argument parse: concatenation operands joined, non-literal operands
// become "{}". An argument with no literal part at all collapses to "{}".
inline std::string build_static_text(const std::string& first_arg, const std::string& arg_style) {
  auto operands = split_top_level(first_arg, '+');
  std::string text;
  bool any_literal = false;
  for (const auto& opnd : operands) {
    if (trim(opnd).empty()) continue;
    if (auto lit = operand_literal(opnd, arg_style)) {
      any_literal = true;
      text += *lit;
    } else {
      text += "{}";
    }
  }
  if (!any_literal) return "{}";
  return text;
}

}  // namespace detail

// Pure per-file extraction. Levels are the raw captured tags; unification and
// level filtering happen at tree / dataset level.
inline std::vector<LogInstruction> extract_file(const std::string& source,
                                                const ExtractionGrammar& grammar,
                                                const std::string& system,
                                                const std::string& file_path) {
  std::vector<LogInstruction> out;
  for (const auto& cp : grammar.call_patterns) {
    auto begin = std::sregex_iterator(source.begin(), source.end(), cp.re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      const std::smatch& m = *it;
      if (static_cast<size_t>(cp.level_group) >= m.size()) continue;
      size_t match_pos = static_cast<size_t>(m.position(0));
      size_t open = source.find('(', match_pos + m.length(0) - 1);
      if (open == std::string::npos) continue;
      // patterns end at the opening paren; re-locate it defensively
      if (source[match_pos + m.length(0) - 1] == '(') open = match_pos + m.length(0) - 1;
      size_t end = detail::scan_balanced(source, open);
      if (end == std::string::npos) continue;
      std::string args = source.substr(open + 1, end - open - 2);
      auto arglist = detail::split_top_level(args, ',');
      if (arglist.empty()) continue;

      LogInstruction ins;
      ins.system = system;
      ins.file_path = file_path;
      ins.line = 1 + static_cast<long>(std::count(source.begin(), source.begin() + match_pos, '\n'));
      ins.raw = source.substr(match_pos, end - match_pos);
      ins.level = m[cp.level_group].str();
      ins.static_text = detail::build_static_text(arglist[0], grammar.arg_style);
      ins.variable_count = count_placeholders(ins.static_text);
      out.push_back(std::move(ins));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const LogInstruction& a, const LogInstruction& b) { return a.line < b.line; });
  return out;
}

// Walks `root`, extracts with every grammar whose extension matches, unifies
// levels and drops out-of-scope ones into the skip report.
inline Dataset extract_tree(const std::filesystem::path& root,
                            const std::vector<ExtractionGrammar>& grammars,
                            const std::string& system,
                            SkipReport* skips = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::exists(root) || !fs::is_directory(root))
    throw DataError("extraction root does not exist or is not a directory: " + root.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  Dataset ds;
  for (const auto& f : files) {
    for (const auto& g : grammars) {
      if (!g.matches_extension(f)) continue;
      std::ifstream in(f, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string source = buf.str();
      if (source.find('\0') != std::string::npos) {
        if (skips) skips->unreadable_files.push_back(f.string());
        continue;
      }
      auto rel = fs::relative(f, root).generic_string();
      for (auto& ins : extract_file(source, g, system, rel)) {
        if (auto lvl = unify_level(ins.level)) {
          ins.level = *lvl;
          ds.samples.push_back(std::move(ins));
        } else if (skips) {
          std::string tag = ins.level;
          std::transform(tag.begin(), tag.end(), tag.begin(),
                         [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
          skips->dropped_levels[tag]++;
        }
      }
      break;  // first matching grammar wins for a given extension
    }
  }
  std::stable_sort(ds.samples.begin(), ds.samples.end(),
                   [](const LogInstruction& a, const LogInstruction& b) {
                     return std::tie(a.file_path, a.line) < std::tie(b.file_path, b.line);
                   });
  ds.rebuild_provenance();
  return ds;
}

// Dataset JSONL: one object per line, fixed key order, sorted by
// (system, file_path, line). write/read round-trips byte-identically.
inline void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  Dataset sorted = dataset;
  std::stable_sort(sorted.samples.begin(), sorted.samples.end(),
                   [](const LogInstruction& a, const LogInstruction& b) {
                     return std::tie(a.system, a.file_path, a.line) <
                            std::tie(b.system, b.file_path, b.line);
                   });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset: " + path.string());
  for (const auto& s : sorted.samples) {
    nlohmann::ordered_json j;
    j["system"] = s.system;
    j["file_path"] = s.file_path;
    j["line"] = s.line;
    j["raw"] = s.raw;
    j["static_text"] = s.static_text;
    j["level"] = s.level;
    j["variable_count"] = s.variable_count;
    out << j.dump() << "\n";
  }
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  Dataset ds;
  std::string line;
  long record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dataset record " + std::to_string(record) + ": " + e.what());
    }
    LogInstruction s;
    try {
      s.system = j.at("system").get<std::string>();
      s.file_path = j.at("file_path").get<std::string>();
      s.line = j.at("line").get<long>();
      s.raw = j.at("raw").get<std::string>();
      s.static_text = j.at("static_text").get<std::string>();
      s.level = j.at("level").get<std::string>();
      s.variable_count = j.at("variable_count").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dataset record " + std::to_string(record) + ": " + e.what());
    }
    if (s.level != "info" && s.level != "warning" && s.level != "error")
      throw DataError("dataset record " + std::to_string(record) + ": unknown level tag '" + s.level + "'");
    if (s.raw.empty())
      throw DataError("dataset record " + std::to_string(record) + ": empty raw field");
    if (count_placeholders(s.static_text) != s.variable_count)
      throw DataError("dataset record " + std::to_string(record) +
                      ": variable_count does not match placeholders");
    ds.samples.push_back(std::move(s));
  }
  ds.rebuild_provenance();
  return ds;
}

}  // namespace qulog
