#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/common.hpp"

namespace batm {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

struct RawDocument {
  std::string id;
  std::string text;
  std::string label;
};

struct Token {
  std::string text;
  bool alphabetic = false;

  bool operator==(const Token&) const = default;
};

inline bool is_alphabetic(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
    return c >= 'a' && c <= 'z';
  });
}

// Lowercases ASCII and splits on whitespace and ASCII punctuation. Separators
// are dropped; every remaining run of characters is a token. Bytes >= 0x80
// (UTF-8 continuation and lead bytes) are word characters, so multi-byte
// words survive intact but are never flagged alphabetic.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    bool alpha = is_alphabetic(current);
    tokens.push_back({std::move(current), alpha});
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c) || std::iscntrl(c))) {
      flush();
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

class Vocabulary {
 public:
  Vocabulary() {
    tokens_ = {std::string(kPadToken), std::string(kUnkToken)};
    frequencies_ = {0, 0};
  }

  // Ids >= 2 are assigned by descending frequency, ties broken
  // lexicographically.
  static Vocabulary from_counts(const std::unordered_map<std::string, std::size_t>& counts,
                                std::size_t min_count) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [token, count] : counts) {
      if (count >= min_count) kept.emplace_back(token, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary vocab;
    for (auto& [token, count] : kept) vocab.append(std::move(token), count);
    return vocab;
  }

  // Rebuilds a vocabulary from an ordered token list (checkpoint restore).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens,
                                const std::vector<std::size_t>& frequencies) {
    if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
      throw FormatError("vocabulary must start with <pad>, <unk>");
    }
    Vocabulary vocab;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      vocab.append(tokens[i], i < frequencies.size() ? frequencies[i] : 0);
    }
    return vocab;
  }

  std::size_t size() const { return tokens_.size(); }

  TokenId id_of(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnkId : it->second;
  }

  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

  const std::string& token_of(TokenId id) const { return tokens_.at(id); }
  std::size_t frequency(TokenId id) const { return frequencies_.at(id); }
  bool alphabetic(TokenId id) const { return id >= 2 && is_alphabetic(tokens_.at(id)); }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::size_t>& frequencies() const { return frequencies_; }

 private:
  void append(std::string token, std::size_t count) {
    if (token == kPadToken || token == kUnkToken) {
      throw FormatError("corpus token collides with reserved token " + token);
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!ids_.emplace(token, id).second) throw FormatError("duplicate vocabulary token " + token);
    tokens_.push_back(std::move(token));
    frequencies_.push_back(count);
  }

  std::vector<std::string> tokens_;
  std::vector<std::size_t> frequencies_;
  std::unordered_map<std::string, TokenId> ids_;
};

inline Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : docs) {
    for (auto& token : tokenize(doc.text)) ++counts[token.text];
  }
  auto vocab = Vocabulary::from_counts(counts, min_count);
  if (vocab.size() <= 2) throw ConfigError("no token reaches min_count; vocabulary is empty");
  return vocab;
}

// A document as exactly max_len ids with a prefix validity mask.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<bool> mask;
  std::size_t effective_length = 0;

  std::size_t max_len() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

inline TokenSequence encode_tokens(const std::vector<Token>& tokens, const Vocabulary& vocab,
                                   std::size_t max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (tokens.empty()) throw FormatError("document has no tokens; cannot attend over an empty sequence");
  TokenSequence seq;
  seq.effective_length = std::min(tokens.size(), max_len);
  seq.ids.assign(max_len, kPadId);
  seq.mask.assign(max_len, false);
  for (std::size_t i = 0; i < seq.effective_length; ++i) {
    seq.ids[i] = vocab.id_of(tokens[i].text);
    seq.mask[i] = true;
  }
  return seq;
}

inline TokenSequence encode(const RawDocument& doc, const Vocabulary& vocab, std::size_t max_len) {
  try {
    return encode_tokens(tokenize(doc.text), vocab, max_len);
  } catch (const FormatError&) {
    throw FormatError("document '" + doc.id + "' has no tokens; cannot attend over an empty sequence");
  }
}

// ---------------------------------------------------------------------------
// JSON-lines ingestion

using AliasMap = std::unordered_map<std::string, std::string>;

// Two columns per line: old_label<TAB>new_label. Blank lines and lines
// starting with '#' are ignored.
inline AliasMap load_alias_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open alias map: " + path);
  AliasMap aliases;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected old_label<TAB>new_label");
    }
    aliases[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return aliases;
}

struct JsonlOptions {
  std::vector<std::string> text_fields = {"headline", "short_description"};
  std::string label_field = "category";
  // Empty or absent in a record: the id becomes "line-<n>".
  std::string id_field = "id";
  AliasMap aliases;
};

struct LoadedCorpus {
  std::vector<RawDocument> documents;
  std::size_t skipped = 0;
};

inline LoadedCorpus load_jsonl(const std::string& path, const JsonlOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  LoadedCorpus corpus;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  auto skip = [&](const std::string& why) {
    ++corpus.skipped;
    emit_warning(path + ":" + std::to_string(line_no) + ": skipped (" + why + ")");
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      skip("malformed JSON");
      continue;
    }
    if (!record.is_object()) {
      skip("record is not an object");
      continue;
    }
    auto label_it = record.find(options.label_field);
    if (label_it == record.end() || !label_it->is_string() || label_it->get<std::string>().empty()) {
      skip("missing label field '" + options.label_field + "'");
      continue;
    }
    RawDocument doc;
    doc.label = label_it->get<std::string>();
    if (auto alias = options.aliases.find(doc.label); alias != options.aliases.end()) {
      doc.label = alias->second;
    }
    bool any_text = false;
    for (const auto& field : options.text_fields) {
      auto it = record.find(field);
      if (it == record.end() || !it->is_string()) continue;
      if (any_text) doc.text.push_back(' ');
      doc.text += it->get<std::string>();
      any_text = true;
    }
    if (!any_text) {
      skip("no text field present");
      continue;
    }
    if (tokenize(doc.text).empty()) {
      skip("text has no tokens");
      continue;
    }
    auto id_it = options.id_field.empty() ? record.end() : record.find(options.id_field);
    if (id_it != record.end() && id_it->is_string()) {
      doc.id = id_it->get<std::string>();
    } else if (id_it != record.end() && id_it->is_number_integer()) {
      doc.id = std::to_string(id_it->get<long long>());
    } else {
      doc.id = "line-" + std::to_string(line_no);
    }
    if (!seen_ids.insert(doc.id).second) {
      skip("duplicate id '" + doc.id + "'");
      continue;
    }
    corpus.documents.push_back(std::move(doc));
  }
  if (corpus.documents.empty()) throw FormatError("no valid records in " + path);
  return corpus;
}

// ---------------------------------------------------------------------------
// Splitting

struct Example {
  std::string id;
  TokenSequence sequence;
  std::size_t label = 0;
};

struct LabelMap {
  std::vector<std::string> names;
  std::map<std::string, std::size_t> ids;

  // Class ids follow lexicographic order of the label strings.
  static LabelMap from_documents(const std::vector<RawDocument>& docs) {
    std::set<std::string> labels;
    for (const auto& d : docs) labels.insert(d.label);
    return from_names({labels.begin(), labels.end()});
  }

  static LabelMap from_names(std::vector<std::string> names) {
    LabelMap map;
    map.names = std::move(names);
    for (std::size_t i = 0; i < map.names.size(); ++i) map.ids.emplace(map.names[i], i);
    return map;
  }

  std::size_t size() const { return names.size(); }

  std::size_t id_of(const std::string& label) const {
    auto it = ids.find(label);
    if (it == ids.end()) throw FormatError("unknown label '" + label + "'");
    return it->second;
  }
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Validation and test sizes are rounded to nearest; train takes the rest.
inline SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios) {
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9 || ratios.train < 0 ||
      ratios.validation < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  SplitSizes sizes;
  sizes.validation = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
  sizes.test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
  sizes.train = n - sizes.validation - sizes.test;
  return sizes;
}

// Fisher-Yates driven by mt19937_64 with explicit modulo-free index draws, so
// the permutation depends only on the seed and not on the standard library's
// distribution implementation.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Lemire-style bounded draw via 128-bit multiply.
    const auto r = static_cast<unsigned __int128>(rng()) * i;
    const auto j = static_cast<std::size_t>(r >> 64);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

struct LabeledSplit {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
  LabelMap labels;
};

inline LabeledSplit split(const std::vector<RawDocument>& docs, const Vocabulary& vocab,
                          std::size_t max_len, const SplitRatios& ratios, std::uint64_t seed) {
  if (docs.size() < 10) throw ConfigError("at least 10 documents are required to split");
  const auto sizes = split_sizes(docs.size(), ratios);
  LabeledSplit out;
  out.labels = LabelMap::from_documents(docs);
  const auto order = seeded_permutation(docs.size(), seed);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& doc = docs[order[pos]];
    Example ex{doc.id, encode(doc, vocab, max_len), out.labels.id_of(doc.label)};
    if (pos < sizes.train) {
      out.train.push_back(std::move(ex));
    } else if (pos < sizes.train + sizes.validation) {
      out.validation.push_back(std::move(ex));
    } else {
      out.test.push_back(std::move(ex));
    }
  }
  return out;
}

// One JSON object per line: {"id", "split", "class_id"}.
inline void write_split_manifest(const LabeledSplit& s, std::ostream& out) {
  auto emit = [&](const std::vector<Example>& part, const char* name) {
    for (const auto& ex : part) {
      nlohmann::json rec = {{"id", ex.id}, {"split", name}, {"class_id", ex.label}};
      out << rec.dump() << '\n';
    }
  };
  emit(s.train, "train");
  emit(s.validation, "validation");
  emit(s.test, "test");
}

}  // namespace batm
