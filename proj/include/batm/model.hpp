#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "batm/common.hpp"
#include "batm/corpus.hpp"
#include "batm/embedding.hpp"

namespace batm {

struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::size_t num_heads = 30;
  std::size_t head_dim = 64;
  std::size_t pool_dim = 64;
  std::size_t num_classes = 2;

  bool operator==(const ModelShape&) const = default;
};

// First-layer head: g_i = query . tanh(weight e_i + bias).
template <typename T>
struct HeadParams {
  Matrix<T> weight;  // head_dim x embed_dim
  std::vector<T> bias;
  std::vector<T> query;

  bool operator==(const HeadParams&) const = default;
};

// Shared across heads: mu_k = context . tanh(weight h_k + bias).
template <typename T>
struct PoolParams {
  Matrix<T> weight;  // pool_dim x embed_dim
  std::vector<T> bias;
  std::vector<T> context;

  bool operator==(const PoolParams&) const = default;
};

template <typename T>
struct ClassifierParams {
  Matrix<T> weight;  // num_classes x embed_dim
  std::vector<T> bias;

  bool operator==(const ClassifierParams&) const = default;
};

template <typename T>
struct ModelParams {
  EmbeddingMatrix<T> embedding;
  std::vector<HeadParams<T>> heads;
  PoolParams<T> pool;
  ClassifierParams<T> classifier;

  std::size_t num_heads() const { return heads.size(); }
  std::size_t embed_dim() const { return embedding.dim(); }
  std::size_t num_classes() const { return classifier.bias.size(); }

  ModelShape shape() const {
    ModelShape s;
    s.vocab_size = embedding.vocab_size();
    s.embed_dim = embedding.dim();
    s.num_heads = heads.size();
    s.head_dim = heads.empty() ? 0 : heads.front().bias.size();
    s.pool_dim = pool.bias.size();
    s.num_classes = classifier.bias.size();
    return s;
  }

  bool operator==(const ModelParams&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
};

// Calls f(info, span_0, span_1, ...) for every trainable tensor, walking the
// given parameter sets in lockstep. Order is fixed and defines the checkpoint
// payload layout.
template <typename F, typename... Ps>
void visit_tensors(F&& f, Ps&... ps) {
  auto& first = std::get<0>(std::forward_as_tuple(ps...));
  const auto shape = first.shape();
  f(TensorInfo{"embedding", {shape.vocab_size, shape.embed_dim}},
    std::span(ps.embedding.table.data)...);
  for (std::size_t k = 0; k < shape.num_heads; ++k) {
    const std::string prefix = "heads." + std::to_string(k) + ".";
    f(TensorInfo{prefix + "weight", {shape.head_dim, shape.embed_dim}},
      std::span(ps.heads[k].weight.data)...);
    f(TensorInfo{prefix + "bias", {shape.head_dim}}, std::span(ps.heads[k].bias)...);
    f(TensorInfo{prefix + "query", {shape.head_dim}}, std::span(ps.heads[k].query)...);
  }
  f(TensorInfo{"pool.weight", {shape.pool_dim, shape.embed_dim}}, std::span(ps.pool.weight.data)...);
  f(TensorInfo{"pool.bias", {shape.pool_dim}}, std::span(ps.pool.bias)...);
  f(TensorInfo{"pool.context", {shape.pool_dim}}, std::span(ps.pool.context)...);
  f(TensorInfo{"classifier.weight", {shape.num_classes, shape.embed_dim}},
    std::span(ps.classifier.weight.data)...);
  f(TensorInfo{"classifier.bias", {shape.num_classes}}, std::span(ps.classifier.bias)...);
}

template <typename T>
ModelParams<T> zero_params(const ModelShape& s) {
  if (s.num_heads < 1) throw ConfigError("num_heads must be >= 1");
  ModelParams<T> p;
  p.embedding.table = Matrix<T>(s.vocab_size, s.embed_dim);
  p.heads.assign(s.num_heads, HeadParams<T>{Matrix<T>(s.head_dim, s.embed_dim),
                                            std::vector<T>(s.head_dim), std::vector<T>(s.head_dim)});
  p.pool = {Matrix<T>(s.pool_dim, s.embed_dim), std::vector<T>(s.pool_dim), std::vector<T>(s.pool_dim)};
  p.classifier = {Matrix<T>(s.num_classes, s.embed_dim), std::vector<T>(s.num_classes)};
  return p;
}

namespace detail {

template <typename T>
void glorot_fill(std::span<T> values, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : values) v = static_cast<T>(dist(rng));
}

}  // namespace detail

// Glorot-uniform matrices and vectors (a vector of length n is treated as an
// n x 1 map), zero biases. The embedding is supplied by the caller.
template <typename T>
ModelParams<T> init_params(const ModelShape& s, EmbeddingMatrix<T> embedding, std::uint64_t seed) {
  if (embedding.vocab_size() != s.vocab_size || embedding.dim() != s.embed_dim) {
    throw ConfigError("embedding shape does not match model shape");
  }
  auto p = zero_params<T>(s);
  p.embedding = std::move(embedding);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& head : p.heads) {
    detail::glorot_fill<T>(head.weight.data, s.embed_dim, s.head_dim, rng);
    detail::glorot_fill<T>(head.query, s.head_dim, 1, rng);
  }
  detail::glorot_fill<T>(p.pool.weight.data, s.embed_dim, s.pool_dim, rng);
  detail::glorot_fill<T>(p.pool.context, s.pool_dim, 1, rng);
  detail::glorot_fill<T>(p.classifier.weight.data, s.embed_dim, s.num_classes, rng);
  return p;
}

template <typename T>
ModelParams<T> init_params(const ModelShape& s, std::uint64_t seed) {
  return init_params<T>(s, init_random<T>(s.vocab_size, s.embed_dim, seed), seed);
}

// ---------------------------------------------------------------------------
// Softmax

template <typename T>
struct LogSoftmax {
  std::vector<T> probs;
  std::vector<T> log_probs;
};

// Max-subtracted softmax over mask-true entries; masked entries get
// probability 0 and log-probability -inf.
template <typename T>
LogSoftmax<T> masked_log_softmax(std::span<const T> scores, const std::vector<bool>& mask) {
  LogSoftmax<T> out;
  out.probs.assign(scores.size(), T(0));
  out.log_probs.assign(scores.size(), -std::numeric_limits<T>::infinity());
  T max_score = -std::numeric_limits<T>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    any = true;
    max_score = std::max(max_score, scores[i]);
  }
  if (!any) throw NumericError("softmax over an all-masked sequence is undefined");
  T sum = T(0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    out.probs[i] = std::exp(scores[i] - max_score);
    sum += out.probs[i];
  }
  const T log_sum = std::log(sum);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    out.probs[i] /= sum;
    out.log_probs[i] = scores[i] - max_score - log_sum;
  }
  return out;
}

template <typename T>
std::vector<T> masked_softmax(std::span<const T> scores, const std::vector<bool>& mask) {
  return masked_log_softmax(scores, mask).probs;
}

template <typename T>
LogSoftmax<T> log_softmax(std::span<const T> scores) {
  return masked_log_softmax(scores, std::vector<bool>(scores.size(), true));
}

// ---------------------------------------------------------------------------
// Layers

template <typename T>
struct HeadAttention {
  std::vector<T> scores;       // g, 0 at masked positions
  std::vector<T> weights;      // alpha
  std::vector<T> log_weights;  // ln alpha, -inf at masked positions
  Matrix<T> activations;       // N x head_dim, tanh(W e_i + b); zero rows where masked
  std::vector<T> head;         // h, length E
};

// `embedded` has one row per position (N x E).
template <typename T>
HeadAttention<T> head_attention(const Matrix<T>& embedded, const std::vector<bool>& mask,
                                const HeadParams<T>& p) {
  if (embedded.rows != mask.size()) throw FormatError("embedded sequence and mask lengths differ");
  const std::size_t n = embedded.rows;
  const std::size_t e = embedded.cols;
  HeadAttention<T> out;
  out.scores.assign(n, T(0));
  out.activations = Matrix<T>(n, p.bias.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    auto act = out.activations.row(i);
    affine<T>(p.weight, p.bias, embedded.row(i), act);
    for (auto& a : act) a = std::tanh(a);
    out.scores[i] = dot<T>(p.query, act);
  }
  auto soft = masked_log_softmax<T>(out.scores, mask);
  out.weights = std::move(soft.probs);
  out.log_weights = std::move(soft.log_probs);
  out.head.assign(e, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const auto row = embedded.row(i);
    for (std::size_t c = 0; c < e; ++c) out.head[c] += out.weights[i] * row[c];
  }
  return out;
}

template <typename T>
struct MultiHeadOutput {
  std::vector<HeadAttention<T>> per_head;
  Matrix<T> heads;  // K x E, row k is h_k
};

template <typename T>
MultiHeadOutput<T> multi_head(const Matrix<T>& embedded, const std::vector<bool>& mask,
                              const ModelParams<T>& params) {
  MultiHeadOutput<T> out;
  out.heads = Matrix<T>(params.num_heads(), embedded.cols);
  out.per_head.reserve(params.num_heads());
  for (std::size_t k = 0; k < params.num_heads(); ++k) {
    out.per_head.push_back(head_attention(embedded, mask, params.heads[k]));
    std::copy(out.per_head[k].head.begin(), out.per_head[k].head.end(), out.heads.row(k).begin());
  }
  return out;
}

template <typename T>
struct DocumentAttention {
  Matrix<T> activations;  // K x pool_dim, tanh(W_H h_k + b_H)
  std::vector<T> scores;   // mu
  std::vector<T> weights;  // beta
  std::vector<T> document; // d
};

template <typename T>
DocumentAttention<T> document_attention(const Matrix<T>& heads, const PoolParams<T>& p) {
  if (heads.rows < 1) throw ConfigError("document attention needs at least one head");
  if (heads.cols != p.weight.cols) throw FormatError("head vector size does not match pool weight");
  DocumentAttention<T> out;
  out.activations = Matrix<T>(heads.rows, p.bias.size());
  out.scores.assign(heads.rows, T(0));
  for (std::size_t k = 0; k < heads.rows; ++k) {
    auto act = out.activations.row(k);
    affine<T>(p.weight, p.bias, heads.row(k), act);
    for (auto& a : act) a = std::tanh(a);
    out.scores[k] = dot<T>(p.context, act);
  }
  out.weights = log_softmax<T>(out.scores).probs;
  out.document.assign(heads.cols, T(0));
  for (std::size_t k = 0; k < heads.rows; ++k) {
    const auto row = heads.row(k);
    for (std::size_t c = 0; c < heads.cols; ++c) out.document[c] += out.weights[k] * row[c];
  }
  return out;
}

template <typename T>
struct ClassOutput {
  std::vector<T> logits;
  std::vector<T> probs;
  std::vector<T> log_probs;
};

template <typename T>
ClassOutput<T> classify(std::span<const T> document, const ClassifierParams<T>& p) {
  if (document.size() != p.weight.cols) throw FormatError("document vector size does not match classifier");
  ClassOutput<T> out;
  out.logits.assign(p.bias.size(), T(0));
  affine<T>(p.weight, p.bias, document, out.logits);
  auto soft = log_softmax<T>(out.logits);
  out.probs = std::move(soft.probs);
  out.log_probs = std::move(soft.log_probs);
  return out;
}

// Everything the backward pass and topic extraction need from one document.
template <typename T>
struct ForwardRecord {
  TokenSequence sequence;
  Matrix<T> embedded;  // N x E
  MultiHeadOutput<T> tokens;
  DocumentAttention<T> document;
  ClassOutput<T> output;

  std::size_t num_heads() const { return tokens.per_head.size(); }
  std::span<const T> alpha(std::size_t k) const { return tokens.per_head[k].weights; }
  std::span<const T> beta() const { return document.weights; }
  std::span<const T> probs() const { return output.probs; }

  std::size_t predicted() const {
    return static_cast<std::size_t>(
        std::max_element(output.probs.begin(), output.probs.end()) - output.probs.begin());
  }
};

template <typename T>
ForwardRecord<T> forward(const TokenSequence& seq, const ModelParams<T>& params) {
  ForwardRecord<T> rec;
  rec.sequence = seq;
  rec.embedded = lookup(seq, params.embedding);
  rec.tokens = multi_head(rec.embedded, seq.mask, params);
  rec.document = document_attention(rec.tokens.heads, params.pool);
  rec.output = classify<T>(rec.document.document, params.classifier);
  return rec;
}

}  // namespace batm
