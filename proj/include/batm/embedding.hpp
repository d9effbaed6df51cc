#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "batm/common.hpp"
#include "batm/corpus.hpp"

namespace batm {

inline constexpr double kEmbeddingInitStd = 0.1;

// V x E table. Row kPadId is zero and is never updated.
template <typename T>
struct EmbeddingMatrix {
  Matrix<T> table;
  bool trainable = true;
  // Fraction of vocabulary rows copied from a pretrained file.
  double coverage = 0.0;

  std::size_t vocab_size() const { return table.rows; }
  std::size_t dim() const { return table.cols; }
  std::span<const T> row(TokenId id) const { return table.row(id); }

  bool operator==(const EmbeddingMatrix&) const = default;
};

template <typename T>
EmbeddingMatrix<T> init_random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("embedding dim must be >= 1");
  EmbeddingMatrix<T> emb;
  emb.table = Matrix<T>(vocab_size, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kEmbeddingInitStd);
  for (std::size_t r = 0; r < vocab_size; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      const auto v = static_cast<T>(normal(rng));
      if (r != kPadId) emb.table(r, c) = v;
    }
  }
  return emb;
}

// Reads "token f_1 ... f_dim" lines. Rows for vocabulary tokens found in the
// file are copied verbatim; every other row (UNK included) keeps its seeded
// normal(0, 0.1) draw.
template <typename T>
EmbeddingMatrix<T> load_pretrained_vectors(const std::string& path, const Vocabulary& vocab,
                                           std::size_t dim, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path);
  auto emb = init_random<T>(vocab.size(), dim, seed);
  std::vector<bool> found(vocab.size(), false);
  std::string line;
  std::size_t line_no = 0;
  std::vector<T> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    values.clear();
    std::string field;
    while (fields >> field) {
      try {
        values.push_back(static_cast<T>(std::stod(field)));
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + field + "'");
      }
    }
    if (values.size() != dim) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(values.size()));
    }
    if (!vocab.contains(token)) continue;
    const auto id = vocab.id_of(token);
    std::copy(values.begin(), values.end(), emb.table.row(id).begin());
    found[id] = true;
  }
  std::size_t hits = 0;
  for (std::size_t id = 2; id < found.size(); ++id) hits += found[id] ? 1 : 0;
  const std::size_t corpus_rows = vocab.size() - 2;
  emb.coverage = corpus_rows == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(corpus_rows);
  return emb;
}

// Returns max_len rows; masked-off positions map to the zero vector.
template <typename T>
Matrix<T> lookup(const TokenSequence& seq, const EmbeddingMatrix<T>& emb) {
  Matrix<T> out(seq.max_len(), emb.dim());
  for (std::size_t i = 0; i < seq.max_len(); ++i) {
    const auto id = seq.ids[i];
    if (id >= emb.vocab_size()) {
      throw FormatError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                        std::to_string(emb.vocab_size()));
    }
    if (!seq.mask[i]) continue;
    const auto src = emb.row(id);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace batm
