#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/corpus.hpp"
#include "batm/training.hpp"

namespace batm::fixtures {

// Pseudo-words built from syllables; all lowercase ASCII letters.
inline std::vector<std::string> syllable_words(std::size_t count, std::uint64_t seed) {
  static const char* syllables[] = {"ba", "ko", "ri", "ten", "mu", "sal", "ve", "do", "ni", "par",
                                    "lo", "qui", "fe", "zan", "tor", "pi", "gu", "mel", "ash", "ro"};
  std::mt19937_64 rng(seed);
  std::vector<std::string> words;
  while (words.size() < count) {
    std::string w;
    const std::size_t parts = 2 + rng() % 2;
    for (std::size_t i = 0; i < parts; ++i) w += syllables[rng() % 20];
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return words;
}

inline const std::vector<std::string>& indicator_tokens() {
  static const std::vector<std::string> tokens = {"glacier", "volcano"};
  return tokens;
}

// 200 documents, labels "fire" and "ice" alternating. Every document holds
// ten background words drawn from one shared pool plus exactly one indicator
// ("volcano" for fire, "glacier" for ice) at a random position. Only the
// indicator carries class information.
inline std::vector<RawDocument> indicator_corpus(std::uint64_t seed = 7) {
  const auto background = syllable_words(40, seed);
  std::mt19937_64 rng(seed + 1);
  std::vector<RawDocument> docs;
  for (std::size_t i = 0; i < 200; ++i) {
    const bool fire = i % 2 == 0;
    std::vector<std::string> words;
    for (int j = 0; j < 10; ++j) words.push_back(background[rng() % background.size()]);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng() % 11), fire ? "volcano" : "glacier");
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    docs.push_back({"doc-" + std::to_string(i), text, fire ? "fire" : "ice"});
  }
  return docs;
}

// Small model used with the indicator corpus. The learning rate is raised
// from the 1e-3 default because 200 documents give only 13 Adam steps per
// epoch.
inline TrainConfig indicator_train_config(std::size_t num_heads = 4) {
  TrainConfig c;
  c.num_heads = num_heads;
  c.embed_dim = 16;
  c.head_dim = 8;
  c.pool_dim = 8;
  c.max_len = 16;
  c.batch_size = 16;
  c.epochs = 5;
  c.learning_rate = 1e-2;
  c.seed = 1;
  c.threads = 1;
  return c;
}

inline const std::vector<std::string>& proxy_labels() {
  static const std::vector<std::string> labels = {"business", "politics", "science", "sports", "travel"};
  return labels;
}

// News-like 5-class corpus: headlines mix class-topical words with a Zipfian
// background vocabulary, occasional off-class topical words and stray
// numbers/punctuation. Classes cycle in document order.
inline std::vector<RawDocument> news_proxy_corpus(std::size_t per_class = 400, std::uint64_t seed = 11) {
  static const std::vector<std::vector<std::string>> topical = {
      {"market", "stocks", "earnings", "investors", "bank", "shares", "profit", "merger", "retail", "economy",
       "startup", "inflation"},
      {"senate", "election", "congress", "governor", "vote", "campaign", "policy", "president", "lawmakers",
       "ballot", "debate", "republicans"},
      {"researchers", "study", "planet", "species", "climate", "genome", "telescope", "physics", "fossil", "cells",
       "laboratory", "asteroid"},
      {"coach", "season", "playoffs", "quarterback", "league", "championship", "tournament", "score", "team",
       "injury", "stadium", "medal"},
      {"beach", "island", "flights", "hotel", "vacation", "passport", "resort", "destinations", "cruise",
       "airport", "tourists", "museum"}};
  const auto background = syllable_words(150, seed);
  std::mt19937_64 rng(seed + 1);
  auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  // Zipf(1) weights over the background pool.
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t r = 0; r < background.size(); ++r) cumulative.push_back(total += 1.0 / static_cast<double>(r + 1));
  auto draw_background = [&] {
    const double u = uniform() * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    return background[static_cast<std::size_t>(it - cumulative.begin()) % background.size()];
  };
  std::vector<RawDocument> docs;
  for (std::size_t i = 0; i < per_class * 5; ++i) {
    const std::size_t c = i % 5;
    const std::size_t length = 12 + rng() % 13;
    std::string text;
    for (std::size_t j = 0; j < length; ++j) {
      const double u = uniform();
      std::string w;
      if (u < 0.22) {
        w = topical[c][rng() % topical[c].size()];
      } else if (u < 0.28) {
        w = topical[(c + 1 + rng() % 4) % 5][rng() % 12];
      } else if (u < 0.30) {
        w = std::to_string(1990 + rng() % 35) + ",";
      } else {
        w = draw_background();
      }
      text += (text.empty() ? "" : " ") + w;
    }
    docs.push_back({"news-" + std::to_string(i), text, proxy_labels()[c]});
  }
  return docs;
}

// Writes documents as JSON lines with headline/short_description/category.
// The text is split in two so both default text fields are exercised.
inline void write_jsonl(const std::vector<RawDocument>& docs, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& d : docs) {
    const auto cut = d.text.find(' ', d.text.size() / 2);
    nlohmann::json rec = {{"id", d.id},
                          {"headline", d.text.substr(0, cut)},
                          {"short_description", cut == std::string::npos ? "" : d.text.substr(cut + 1)},
                          {"category", d.label}};
    out << rec.dump() << '\n';
  }
}

}  // namespace batm::fixtures
