#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/checkpoint.hpp"
#include "batm/coherence.hpp"
#include "batm/config.hpp"
#include "batm/corpus.hpp"
#include "batm/embedding.hpp"
#include "batm/model.hpp"
#include "batm/topics.hpp"
#include "batm/training.hpp"

namespace batm {

// A loaded corpus with its vocabulary and split.
struct PreparedData {
  std::vector<RawDocument> documents;
  std::size_t skipped = 0;
  Vocabulary vocab;
  LabeledSplit split;
};

inline PreparedData prepare_documents(const AppConfig& config, std::vector<RawDocument> documents,
                                      const Vocabulary* vocab = nullptr, const LabelMap* labels = nullptr) {
  PreparedData out;
  out.documents = std::move(documents);
  out.vocab = vocab ? *vocab : build_vocabulary(out.documents, config.min_count);
  out.split = split(out.documents, out.vocab, config.train.max_len, config.ratios, config.split_seed);
  if (labels) {
    // Re-map class ids onto a previously saved label map.
    const LabelMap& fresh = out.split.labels;
    for (auto* part : {&out.split.train, &out.split.validation, &out.split.test}) {
      for (auto& ex : *part) ex.label = labels->id_of(fresh.names[ex.label]);
    }
    out.split.labels = *labels;
  }
  return out;
}

inline PreparedData prepare_data(const AppConfig& config, const Vocabulary* vocab = nullptr,
                                 const LabelMap* labels = nullptr) {
  if (config.data_path.empty()) throw ConfigError("data_path is not set");
  JsonlOptions options;
  options.text_fields = config.text_fields;
  options.label_field = config.label_field;
  options.id_field = config.id_field;
  if (!config.alias_path.empty()) options.aliases = load_alias_map(config.alias_path);
  auto loaded = load_jsonl(config.data_path, options);
  auto out = prepare_documents(config, std::move(loaded.documents), vocab, labels);
  out.skipped = loaded.skipped;
  return out;
}

template <typename T>
EmbeddingMatrix<T> make_embedding(const AppConfig& config, const Vocabulary& vocab) {
  if (config.embeddings_path.empty()) {
    return init_random<T>(vocab.size(), config.train.embed_dim, config.train.seed);
  }
  return load_pretrained_vectors<T>(config.embeddings_path, vocab, config.train.embed_dim, config.train.seed);
}

// Documents selected by `topic_corpus`, in corpus order for "all" and in
// split order otherwise.
inline std::vector<const RawDocument*> topic_documents(const AppConfig& config, const PreparedData& data) {
  std::vector<const RawDocument*> out;
  if (config.topic_corpus == "all") {
    for (const auto& d : data.documents) out.push_back(&d);
    return out;
  }
  std::unordered_map<std::string, const RawDocument*> by_id;
  for (const auto& d : data.documents) by_id.emplace(d.id, &d);
  const auto& part = config.topic_corpus == "train"        ? data.split.train
                     : config.topic_corpus == "validation" ? data.split.validation
                                                           : data.split.test;
  for (const auto& ex : part) out.push_back(by_id.at(ex.id));
  return out;
}

inline std::vector<TokenSequence> topic_sequences(const AppConfig& config, const PreparedData& data) {
  std::vector<TokenSequence> out;
  for (const auto* d : topic_documents(config, data)) out.push_back(encode(*d, data.vocab, config.train.max_len));
  return out;
}

inline std::vector<std::vector<std::string>> topic_texts(const AppConfig& config, const PreparedData& data) {
  std::vector<std::vector<std::string>> out;
  for (const auto* d : topic_documents(config, data)) {
    std::vector<std::string> words;
    for (auto& tok : tokenize(d->text)) words.push_back(std::move(tok.text));
    out.push_back(std::move(words));
  }
  return out;
}

inline nlohmann::json epoch_log_json(const EpochLog& log) {
  return {{"epoch", log.epoch},
          {"learning_rate", log.learning_rate},
          {"train_loss", log.train_loss},
          {"train_ce", log.train_ce},
          {"train_doc_entropy", log.train_doc_entropy},
          {"val_accuracy", log.val_accuracy},
          {"val_macro_f1", log.val_macro_f1},
          {"val_doc_entropy", log.val_doc_entropy}};
}

// Config echo, vocabulary, labels and training history stored alongside the
// tensors so a checkpoint is self-contained.
template <typename T>
nlohmann::json checkpoint_metadata(const AppConfig& config, const PreparedData& data, const TrainResult<T>& result) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : result.log) log.push_back(epoch_log_json(e));
  const auto& best = result.log.at(result.best_epoch);
  return {{"config", config_map(config)},
          {"vocab", {{"tokens", data.vocab.tokens()}, {"frequencies", data.vocab.frequencies()}}},
          {"labels", data.split.labels.names},
          {"epoch", result.best_epoch},
          {"metrics", {{"val_accuracy", best.val_accuracy}, {"val_macro_f1", best.val_macro_f1}}},
          {"epoch_log", log}};
}

struct RestoredModelInfo {
  AppConfig config;
  Vocabulary vocab;
  LabelMap labels;
};

// Rebuilds the run configuration, vocabulary and label map recorded in a
// checkpoint; `overrides` (key=value) are applied on top of the stored config.
inline RestoredModelInfo restore_info(const nlohmann::json& metadata, const std::vector<std::string>& overrides) {
  RestoredModelInfo info;
  ConfigEntries stored;
  for (const auto& [k, v] : metadata.at("config").items()) stored.emplace_back(k, v.get<std::string>());
  info.config = build_config(stored, parse_overrides(overrides));
  info.vocab = Vocabulary::from_tokens(metadata.at("vocab").at("tokens").get<std::vector<std::string>>(),
                                       metadata.at("vocab").at("frequencies").get<std::vector<std::size_t>>());
  info.labels = LabelMap::from_names(metadata.at("labels").get<std::vector<std::string>>());
  return info;
}

struct SweepRow {
  double lambda = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double avg_doc_entropy = 0.0;
  double avg_token_entropy = 0.0;
  double avg_vocab_entropy = 0.0;
};

// Trains one model per lambda from the same seed and split, scores it on the
// test split and reports corpus entropies.
template <typename T>
std::vector<SweepRow> lambda_sweep(const AppConfig& config, const PreparedData& data,
                                   const std::function<void(const SweepRow&, const TrainResult<T>&)>& on_row = {}) {
  std::vector<SweepRow> rows;
  const auto sequences = topic_sequences(config, data);
  for (double lambda : config.lambdas) {
    auto train_config = config.train;
    train_config.lambda = lambda;
    auto result = train<T>(train_config, data.split, make_embedding<T>(config, data.vocab));
    SweepRow row;
    row.lambda = lambda;
    const auto metrics = evaluate(result.params, data.split.test, config.train.threads);
    row.accuracy = metrics.accuracy;
    row.macro_f1 = metrics.macro_f1;
    const auto report = entropy_report(result.params, sequences, config.train.threads);
    row.avg_doc_entropy = report.avg_doc_entropy;
    row.avg_token_entropy = report.avg_token_entropy;
    row.avg_vocab_entropy = report.avg_vocab_entropy;
    if (on_row) on_row(row, result);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace batm
