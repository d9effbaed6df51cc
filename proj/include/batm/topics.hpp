#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/common.hpp"
#include "batm/corpus.hpp"
#include "batm/model.hpp"
#include "batm/training.hpp"

namespace batm {

// D x V document-token weights for one head. Row d holds the head's
// attention over document d, with repeated tokens summed into one column.
struct TopicMatrix {
  using Row = std::vector<std::pair<TokenId, double>>;  // sorted by token id

  std::size_t head = 0;
  std::size_t vocab_size = 0;
  std::vector<Row> rows;

  std::size_t documents() const { return rows.size(); }

  double at(std::size_t doc, TokenId token) const {
    const auto& row = rows.at(doc);
    auto it = std::lower_bound(row.begin(), row.end(), token,
                               [](const auto& entry, TokenId t) { return entry.first < t; });
    return it != row.end() && it->first == token ? it->second : 0.0;
  }
};

enum class ColumnAverage {
  AllDocuments,        // divide column sums by D
  ContainingDocuments  // divide by the number of documents with a nonzero entry
};

struct CorpusAttention {
  std::vector<TopicMatrix> matrices;
  Matrix<double> doc_entropy;     // D x K
  std::vector<double> mean_beta;  // K, averaged over documents
};

template <typename T>
CorpusAttention analyze_corpus(const ModelParams<T>& params, const std::vector<TokenSequence>& corpus,
                               std::size_t threads = 1) {
  const std::size_t num_heads = params.num_heads();
  const std::size_t vocab_size = params.embedding.vocab_size();
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.max_len(); ++i) {
      if (seq.mask[i] && seq.ids[i] >= vocab_size) {
        throw FormatError("corpus token id " + std::to_string(seq.ids[i]) +
                          " exceeds model vocabulary; corpus was encoded with a different vocabulary");
      }
    }
  }
  CorpusAttention out;
  out.matrices.resize(num_heads);
  for (std::size_t k = 0; k < num_heads; ++k) {
    out.matrices[k].head = k;
    out.matrices[k].vocab_size = vocab_size;
    out.matrices[k].rows.resize(corpus.size());
  }
  out.doc_entropy = Matrix<double>(corpus.size(), num_heads);
  Matrix<double> betas(corpus.size(), num_heads);
  parallel_for(corpus.size(), threads, [&](std::size_t d) {
    const auto rec = forward(corpus[d], params);
    const auto& mask = corpus[d].mask;
    for (std::size_t k = 0; k < num_heads; ++k) {
      const auto alpha = rec.alpha(k);
      std::map<TokenId, double> scatter;
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) scatter[corpus[d].ids[i]] += static_cast<double>(alpha[i]);
      }
      out.matrices[k].rows[d].assign(scatter.begin(), scatter.end());
      out.doc_entropy(d, k) = static_cast<double>(doc_entropy(alpha, mask));
      betas(d, k) = static_cast<double>(rec.beta()[k]);
    }
  });
  out.mean_beta.assign(num_heads, 0.0);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (std::size_t k = 0; k < num_heads; ++k) out.mean_beta[k] += betas(d, k);
  }
  if (!corpus.empty()) {
    for (auto& b : out.mean_beta) b /= static_cast<double>(corpus.size());
  }
  return out;
}

template <typename T>
std::vector<TopicMatrix> build_topic_matrices(const ModelParams<T>& params, const std::vector<TokenSequence>& corpus,
                                              std::size_t threads = 1) {
  return analyze_corpus(params, corpus, threads).matrices;
}

inline std::vector<double> column_means(const TopicMatrix& m, ColumnAverage mode = ColumnAverage::AllDocuments) {
  std::vector<double> sums(m.vocab_size, 0.0);
  std::vector<std::size_t> support(m.vocab_size, 0);
  for (const auto& row : m.rows) {
    for (const auto& [token, weight] : row) {
      sums[token] += weight;
      if (weight > 0.0) ++support[token];
    }
  }
  for (std::size_t v = 0; v < sums.size(); ++v) {
    const double denom = mode == ColumnAverage::AllDocuments ? static_cast<double>(m.documents())
                                                             : static_cast<double>(support[v]);
    sums[v] = denom == 0.0 ? 0.0 : sums[v] / denom;
  }
  return sums;
}

struct TopicDescriptor {
  std::size_t head = 0;
  std::vector<std::pair<std::string, double>> terms;  // non-increasing weight

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    for (const auto& [word, weight] : terms) out.push_back(word);
    return out;
  }
};

// Top-T alphabetic tokens by column mean. PAD, UNK, non-alphabetic tokens
// and zero-weight columns never appear; ties go to the lexicographically
// smaller token.
inline TopicDescriptor topic_descriptor(const TopicMatrix& m, std::size_t top_t, const Vocabulary& vocab,
                                        ColumnAverage mode = ColumnAverage::AllDocuments) {
  if (top_t < 1) throw ConfigError("descriptor length T must be >= 1");
  if (vocab.size() != m.vocab_size) throw FormatError("vocabulary size does not match topic matrix");
  const auto means = column_means(m, mode);
  std::vector<std::pair<std::string, double>> candidates;
  for (TokenId v = 0; v < means.size(); ++v) {
    if (means[v] > 0.0 && vocab.alphabetic(v)) candidates.emplace_back(vocab.token_of(v), means[v]);
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (candidates.size() < top_t) {
    emit_warning("head " + std::to_string(m.head) + ": only " + std::to_string(candidates.size()) +
                 " alphabetic tokens available for a top-" + std::to_string(top_t) + " descriptor");
  }
  candidates.resize(std::min(candidates.size(), top_t));
  return TopicDescriptor{m.head, std::move(candidates)};
}

inline double entropy_of(const std::vector<double>& distribution) {
  double h = 0.0;
  for (double p : distribution) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// `means[k]` is column_means of head k. The K weights of the token are
// normalized to sum to 1 before taking the entropy; a token no head ever
// attended has no entropy.
inline std::optional<double> token_entropy(const std::vector<std::vector<double>>& means, TokenId token) {
  std::vector<double> p(means.size());
  double total = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    p[k] = means[k].at(token);
    total += p[k];
  }
  if (total <= 0.0) return std::nullopt;
  for (auto& x : p) x /= total;
  return entropy_of(p);
}

inline std::optional<double> token_entropy(const std::vector<TopicMatrix>& matrices, TokenId token) {
  std::vector<std::vector<double>> means;
  for (const auto& m : matrices) means.push_back(column_means(m));
  return token_entropy(means, token);
}

struct EntropyReport {
  double avg_doc_entropy = 0.0;
  double avg_token_entropy = 0.0;
  std::vector<double> per_head_doc_entropy;
  // Entropy of each head's mean weight distribution over the vocabulary.
  std::vector<double> per_head_vocab_entropy;
  double avg_vocab_entropy = 0.0;
  std::vector<std::pair<TokenId, double>> token_entropies;  // present tokens only

  nlohmann::json to_json(const Vocabulary* vocab = nullptr) const {
    nlohmann::json tokens = nlohmann::json::array();
    for (const auto& [id, h] : token_entropies) {
      nlohmann::json rec = {{"token_id", id}, {"entropy", h}};
      if (vocab) rec["token"] = vocab->token_of(id);
      tokens.push_back(rec);
    }
    return {{"avg_doc_entropy", avg_doc_entropy},
            {"avg_token_entropy", avg_token_entropy},
            {"avg_vocab_entropy", avg_vocab_entropy},
            {"per_head_doc_entropy", per_head_doc_entropy},
            {"per_head_vocab_entropy", per_head_vocab_entropy},
            {"token_entropy", tokens}};
  }
};

inline EntropyReport entropy_report(const CorpusAttention& analysis) {
  const std::size_t docs = analysis.doc_entropy.rows;
  const std::size_t num_heads = analysis.doc_entropy.cols;
  if (docs == 0) throw ConfigError("entropy report needs a non-empty corpus");
  EntropyReport r;
  r.per_head_doc_entropy.assign(num_heads, 0.0);
  double total = 0.0;
  for (std::size_t d = 0; d < docs; ++d) {
    for (std::size_t k = 0; k < num_heads; ++k) {
      r.per_head_doc_entropy[k] += analysis.doc_entropy(d, k);
      total += analysis.doc_entropy(d, k);
    }
  }
  for (auto& h : r.per_head_doc_entropy) h /= static_cast<double>(docs);
  r.avg_doc_entropy = total / static_cast<double>(docs * num_heads);

  std::vector<std::vector<double>> means;
  for (const auto& m : analysis.matrices) {
    means.push_back(column_means(m));
    r.per_head_vocab_entropy.push_back(entropy_of(means.back()));
  }
  r.avg_vocab_entropy = 0.0;
  for (double h : r.per_head_vocab_entropy) r.avg_vocab_entropy += h;
  r.avg_vocab_entropy /= static_cast<double>(num_heads);

  const std::size_t vocab_size = means.front().size();
  double token_total = 0.0;
  for (TokenId v = 0; v < vocab_size; ++v) {
    if (auto h = token_entropy(means, v)) {
      r.token_entropies.emplace_back(v, *h);
      token_total += *h;
    }
  }
  r.avg_token_entropy = r.token_entropies.empty() ? 0.0 : token_total / static_cast<double>(r.token_entropies.size());
  return r;
}

template <typename T>
EntropyReport entropy_report(const ModelParams<T>& params, const std::vector<TokenSequence>& corpus,
                             std::size_t threads = 1) {
  if (corpus.empty()) throw ConfigError("entropy report needs a non-empty corpus");
  return entropy_report(analyze_corpus(params, corpus, threads));
}

// CSV triplets: head,doc,token_id,weight.
inline void write_topic_matrices_csv(const std::vector<TopicMatrix>& matrices, std::ostream& out) {
  out << "head,doc,token_id,weight\n";
  out.precision(17);
  for (const auto& m : matrices) {
    for (std::size_t d = 0; d < m.rows.size(); ++d) {
      for (const auto& [token, weight] : m.rows[d]) out << m.head << ',' << d << ',' << token << ',' << weight << '\n';
    }
  }
}

inline nlohmann::json descriptor_to_json(const TopicDescriptor& t) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [word, weight] : t.terms) terms.push_back({word, weight});
  return {{"head", t.head}, {"terms", terms}};
}

}  // namespace batm
