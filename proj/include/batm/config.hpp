#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "batm/coherence.hpp"
#include "batm/common.hpp"
#include "batm/corpus.hpp"
#include "batm/topics.hpp"
#include "batm/training.hpp"

namespace batm {

// Everything a run needs besides command-line flags.
struct AppConfig {
  std::string preset = "news26";

  // corpus
  std::string data_path;
  std::string alias_path;
  std::vector<std::string> text_fields = {"headline", "short_description"};
  std::string label_field = "category";
  std::string id_field = "id";
  std::size_t min_count = 1;
  SplitRatios ratios;
  std::uint64_t split_seed = 42;

  // embedding
  std::string embeddings_path;

  // model + training
  TrainConfig train;
  std::string precision = "f32";

  // topics + coherence
  std::size_t top_t = 25;
  std::string column_average = "all";
  std::string topic_corpus = "all";
  std::size_t window_size = kDefaultWindowSize;
  double npmi_epsilon = kDefaultNpmiEpsilon;

  // experiments
  std::vector<double> lambdas = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
  std::size_t gradcheck_trials = 20;
  double gradcheck_step = 1e-5;
  double gradcheck_tolerance = 1e-4;

  ColumnAverage column_mode() const {
    return column_average == "containing" ? ColumnAverage::ContainingDocuments : ColumnAverage::AllDocuments;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::string parse_choice(const std::string& key, const std::string& v, std::vector<std::string> choices) {
  if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
    throw ConfigError("key '" + key + "' must be one of {" + join(choices) + "}, got '" + v + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct ConfigField {
  std::string name;
  std::string help;
  std::function<void(AppConfig&, const std::string&)> set;
  std::function<std::string(const AppConfig&)> get;
};

#define BATM_SIZE_FIELD(key, member, help)                                                        \
  ConfigField {                                                                                   \
    key, help, [](AppConfig& c, const std::string& v) { c.member = parse_size(key, v); },         \
        [](const AppConfig& c) { return std::to_string(c.member); }                              \
  }
#define BATM_DOUBLE_FIELD(key, member, help)                                                      \
  ConfigField {                                                                                   \
    key, help, [](AppConfig& c, const std::string& v) { c.member = parse_double(key, v); },       \
        [](const AppConfig& c) { return format_double(c.member); }                               \
  }
#define BATM_STRING_FIELD(key, member, help)                                                      \
  ConfigField {                                                                                   \
    key, help, [](AppConfig& c, const std::string& v) { c.member = v; },                          \
        [](const AppConfig& c) { return c.member; }                                              \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      ConfigField{"preset", "news26 | mind15; supplies num_heads and max_len defaults",
                  [](AppConfig& c, const std::string& v) { c.preset = parse_choice("preset", v, {"news26", "mind15"}); },
                  [](const AppConfig& c) { return c.preset; }},
      BATM_STRING_FIELD("data_path", data_path, "JSON-lines corpus"),
      BATM_STRING_FIELD("alias_path", alias_path, "label alias map, old<TAB>new per line"),
      ConfigField{"text_fields", "comma-separated record fields concatenated into the document text",
                  [](AppConfig& c, const std::string& v) {
                    c.text_fields = split_list(v);
                    if (c.text_fields.empty()) throw ConfigError("key 'text_fields' needs at least one field");
                  },
                  [](const AppConfig& c) { return join(c.text_fields); }},
      BATM_STRING_FIELD("label_field", label_field, "record field holding the category"),
      BATM_STRING_FIELD("id_field", id_field, "record field holding the document id"),
      BATM_SIZE_FIELD("min_count", min_count, "minimum corpus frequency for a vocabulary token"),
      BATM_DOUBLE_FIELD("split_train", ratios.train, "train fraction"),
      BATM_DOUBLE_FIELD("split_validation", ratios.validation, "validation fraction"),
      BATM_DOUBLE_FIELD("split_test", ratios.test, "test fraction"),
      ConfigField{"split_seed", "seed of the train/validation/test shuffle",
                  [](AppConfig& c, const std::string& v) { c.split_seed = parse_size("split_seed", v); },
                  [](const AppConfig& c) { return std::to_string(c.split_seed); }},
      BATM_STRING_FIELD("embeddings_path", embeddings_path, "pretrained word vectors (token f_1 ... f_E per line)"),
      BATM_SIZE_FIELD("embed_dim", train.embed_dim, "embedding size E"),
      BATM_SIZE_FIELD("num_heads", train.num_heads, "first-layer heads (topics) K"),
      BATM_SIZE_FIELD("head_dim", train.head_dim, "head projection size"),
      BATM_SIZE_FIELD("pool_dim", train.pool_dim, "second-layer projection size"),
      BATM_SIZE_FIELD("max_len", train.max_len, "tokens kept per document"),
      BATM_SIZE_FIELD("batch_size", train.batch_size, "examples per Adam step"),
      BATM_SIZE_FIELD("epochs", train.epochs, "training epochs"),
      BATM_DOUBLE_FIELD("learning_rate", train.learning_rate, "base learning rate, halved every epoch"),
      BATM_DOUBLE_FIELD("lambda", train.lambda, "entropy constraint weight"),
      ConfigField{"seed", "model initialization and batch-order seed",
                  [](AppConfig& c, const std::string& v) { c.train.seed = parse_size("seed", v); },
                  [](const AppConfig& c) { return std::to_string(c.train.seed); }},
      ConfigField{"train_embedding", "update the embedding table during training",
                  [](AppConfig& c, const std::string& v) { c.train.train_embedding = parse_bool("train_embedding", v); },
                  [](const AppConfig& c) { return std::string(c.train.train_embedding ? "true" : "false"); }},
      ConfigField{"precision", "f32 | f64",
                  [](AppConfig& c, const std::string& v) { c.precision = parse_choice("precision", v, {"f32", "f64"}); },
                  [](const AppConfig& c) { return c.precision; }},
      BATM_SIZE_FIELD("top_t", top_t, "terms per topic descriptor"),
      ConfigField{"column_average", "all | containing: divisor for descriptor column means",
                  [](AppConfig& c, const std::string& v) {
                    c.column_average = parse_choice("column_average", v, {"all", "containing"});
                  },
                  [](const AppConfig& c) { return c.column_average; }},
      ConfigField{"topic_corpus", "all | train | validation | test: documents used for topic matrices",
                  [](AppConfig& c, const std::string& v) {
                    c.topic_corpus = parse_choice("topic_corpus", v, {"all", "train", "validation", "test"});
                  },
                  [](const AppConfig& c) { return c.topic_corpus; }},
      BATM_SIZE_FIELD("window_size", window_size, "C_v sliding window length"),
      BATM_DOUBLE_FIELD("npmi_epsilon", npmi_epsilon, "smoothing added to joint probabilities"),
      ConfigField{"lambdas", "comma-separated lambda values for lambda-sweep",
                  [](AppConfig& c, const std::string& v) {
                    c.lambdas.clear();
                    for (const auto& item : split_list(v)) c.lambdas.push_back(parse_double("lambdas", item));
                    if (c.lambdas.empty()) throw ConfigError("key 'lambdas' needs at least one value");
                  },
                  [](const AppConfig& c) {
                    std::vector<std::string> parts;
                    for (double l : c.lambdas) parts.push_back(format_double(l));
                    return join(parts);
                  }},
      BATM_SIZE_FIELD("gradcheck_trials", gradcheck_trials, "random configurations per lambda in gradcheck"),
      BATM_DOUBLE_FIELD("gradcheck_step", gradcheck_step, "central-difference step"),
      BATM_DOUBLE_FIELD("gradcheck_tolerance", gradcheck_tolerance, "maximum accepted relative error"),
  };
  return fields;
}

#undef BATM_SIZE_FIELD
#undef BATM_DOUBLE_FIELD
#undef BATM_STRING_FIELD

inline const ConfigField& find_field(const std::string& key) {
  const auto& fields = config_fields();
  for (const auto& f : fields) {
    if (f.name == key) return f;
  }
  std::string best;
  std::size_t best_distance = SIZE_MAX;
  std::string valid;
  for (const auto& f : fields) {
    const auto d = edit_distance(key, f.name);
    if (d < best_distance) {
      best_distance = d;
      best = f.name;
    }
    valid += (valid.empty() ? "" : ", ") + f.name;
  }
  std::string message = "unknown config key '" + key + "'";
  if (best_distance <= 3) message += "; did you mean '" + best + "'?";
  message += " Valid keys: " + valid;
  throw ConfigError(message);
}

inline void apply_preset(AppConfig& c, const std::string& preset) {
  c.train.embed_dim = 300;
  c.train.batch_size = 32;
  c.train.learning_rate = 1e-3;
  if (preset == "mind15") {
    c.train.num_heads = 180;
    c.train.max_len = 512;
  } else {
    c.train.num_heads = 30;
    c.train.max_len = 100;
  }
}

}  // namespace detail

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

inline ConfigEntries read_config_entries(std::istream& in, const std::string& origin) {
  ConfigEntries entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    entries.emplace_back(detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
  }
  return entries;
}

inline ConfigEntries parse_overrides(const std::vector<std::string>& overrides) {
  ConfigEntries entries;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    entries.emplace_back(detail::trim(o.substr(0, eq)), detail::trim(o.substr(eq + 1)));
  }
  return entries;
}

// Preset defaults first, then file entries, then overrides (last wins).
inline AppConfig build_config(const ConfigEntries& file_entries, const ConfigEntries& overrides) {
  AppConfig config;
  std::string preset = config.preset;
  for (const auto* list : {&file_entries, &overrides}) {
    for (const auto& [k, v] : *list) {
      if (k == "preset") preset = v;
    }
  }
  detail::find_field("preset").set(config, preset);
  detail::apply_preset(config, config.preset);
  for (const auto* list : {&file_entries, &overrides}) {
    for (const auto& [k, v] : *list) detail::find_field(k).set(config, v);
  }
  if (config.train.num_heads < 1 || config.train.embed_dim < 1 || config.train.head_dim < 1 ||
      config.train.pool_dim < 1 || config.train.max_len < 1 || config.train.batch_size < 1 ||
      config.train.epochs < 1 || config.top_t < 1 || config.window_size < 1 || config.min_count < 1) {
    throw ConfigError("numeric configuration values must be positive");
  }
  if (config.train.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (config.train.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  split_sizes(100, config.ratios);
  return config;
}

inline AppConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigEntries file_entries;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    file_entries = read_config_entries(in, path);
  }
  return build_config(file_entries, parse_overrides(overrides));
}

// Every key with its effective value, in documented order. Feeding this back
// through parse_config reproduces the configuration.
inline void write_config(const AppConfig& config, std::ostream& out) {
  for (const auto& f : detail::config_fields()) out << f.name << " = " << f.get(config) << '\n';
}

inline std::map<std::string, std::string> config_map(const AppConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& f : detail::config_fields()) out[f.name] = f.get(config);
  return out;
}

inline std::string config_help() {
  std::ostringstream out;
  for (const auto& f : detail::config_fields()) out << "  " << f.name << ": " << f.help << '\n';
  return out.str();
}

}  // namespace batm
