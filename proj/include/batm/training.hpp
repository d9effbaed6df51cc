#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "batm/common.hpp"
#include "batm/corpus.hpp"
#include "batm/model.hpp"

namespace batm {

// ---------------------------------------------------------------------------
// Loss

template <typename T>
struct LossBreakdown {
  T ce = T(0);
  std::vector<T> per_head_doc_entropy;
  T lambda = T(0);
  T total = T(0);

  T mean_doc_entropy() const {
    if (per_head_doc_entropy.empty()) return T(0);
    T sum = T(0);
    for (auto e : per_head_doc_entropy) sum += e;
    return sum / static_cast<T>(per_head_doc_entropy.size());
  }
};

template <typename T>
T cross_entropy(const ForwardRecord<T>& record, std::size_t label) {
  if (label >= record.output.log_probs.size()) {
    throw FormatError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(record.output.log_probs.size()) + " classes");
  }
  return -record.output.log_probs[label];
}

// -sum alpha ln alpha over unmasked positions, with 0 ln 0 = 0.
template <typename T>
T doc_entropy(std::span<const T> alpha, const std::vector<bool>& mask) {
  T entropy = T(0);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!mask[i] || alpha[i] <= T(0)) continue;
    entropy -= alpha[i] * std::log(alpha[i]);
  }
  return entropy;
}

template <typename T>
LossBreakdown<T> total_loss(const ForwardRecord<T>& record, std::size_t label, T lambda) {
  if (lambda < T(0)) throw ConfigError("lambda must be >= 0");
  LossBreakdown<T> out;
  out.ce = cross_entropy(record, label);
  out.lambda = lambda;
  out.per_head_doc_entropy.reserve(record.num_heads());
  for (std::size_t k = 0; k < record.num_heads(); ++k) {
    out.per_head_doc_entropy.push_back(doc_entropy(record.alpha(k), record.sequence.mask));
  }
  // With lambda = 0 the model is exactly the unregularized one.
  out.total = lambda == T(0) ? out.ce : out.ce + lambda * out.mean_doc_entropy();
  return out;
}

// ---------------------------------------------------------------------------
// Backward

// One gradient tensor per parameter tensor; the PAD embedding row is zero.
template <typename T>
struct GradientSet {
  ModelParams<T> tensors;

  static GradientSet zeros_like(const ModelParams<T>& params) {
    return GradientSet{zero_params<T>(params.shape())};
  }
};

namespace detail {

// Per-example gradient of everything except the embedding table, plus one
// gradient row per sequence position. Scattering the rows into the table is
// deferred so batch reduction can run in a fixed example order.
template <typename T>
struct LocalGradient {
  std::vector<HeadParams<T>> heads;
  PoolParams<T> pool;
  ClassifierParams<T> classifier;
  Matrix<T> positions;  // N x E

  void reset(const ModelParams<T>& like, std::size_t seq_len) {
    const auto s = like.shape();
    heads.assign(s.num_heads, HeadParams<T>{Matrix<T>(s.head_dim, s.embed_dim),
                                            std::vector<T>(s.head_dim), std::vector<T>(s.head_dim)});
    pool = {Matrix<T>(s.pool_dim, s.embed_dim), std::vector<T>(s.pool_dim), std::vector<T>(s.pool_dim)};
    classifier = {Matrix<T>(s.num_classes, s.embed_dim), std::vector<T>(s.num_classes)};
    positions = Matrix<T>(seq_len, s.embed_dim);
  }
};

template <typename T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void backward_local(const ForwardRecord<T>& rec, std::size_t label, T lambda,
                    const ModelParams<T>& params, bool with_entropy, LocalGradient<T>& g) {
  const auto& mask = rec.sequence.mask;
  const std::size_t n = mask.size();
  const std::size_t e = params.embed_dim();
  const std::size_t num_heads = params.num_heads();
  const std::size_t num_classes = params.num_classes();
  if (label >= num_classes) throw FormatError("label out of range");
  g.reset(params, n);

  // Classifier: dL/dlogits = y - onehot(label).
  std::vector<T> dlogits(rec.output.probs);
  dlogits[label] -= T(1);
  const auto& d = rec.document.document;
  std::vector<T> dd(e, T(0));
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto wrow = g.classifier.weight.row(c);
    const auto prow = params.classifier.weight.row(c);
    for (std::size_t j = 0; j < e; ++j) {
      wrow[j] = dlogits[c] * d[j];
      dd[j] += prow[j] * dlogits[c];
    }
    g.classifier.bias[c] = dlogits[c];
  }

  // Document attention: d = sum_k beta_k h_k.
  const auto& heads = rec.tokens.heads;
  const auto& beta = rec.document.weights;
  Matrix<T> dheads(num_heads, e);
  std::vector<T> dbeta(num_heads, T(0));
  T beta_dot = T(0);
  for (std::size_t k = 0; k < num_heads; ++k) {
    dbeta[k] = dot<T>(dd, heads.row(k));
    beta_dot += beta[k] * dbeta[k];
    auto dh = dheads.row(k);
    for (std::size_t j = 0; j < e; ++j) dh[j] = beta[k] * dd[j];
  }
  const std::size_t pool_dim = params.pool.bias.size();
  std::vector<T> dz(pool_dim);
  for (std::size_t k = 0; k < num_heads; ++k) {
    const T dmu = beta[k] * (dbeta[k] - beta_dot);
    const auto act = rec.document.activations.row(k);
    for (std::size_t j = 0; j < pool_dim; ++j) {
      g.pool.context[j] += dmu * act[j];
      dz[j] = dmu * params.pool.context[j] * (T(1) - act[j] * act[j]);
      g.pool.bias[j] += dz[j];
    }
    const auto hk = heads.row(k);
    auto dh = dheads.row(k);
    for (std::size_t j = 0; j < pool_dim; ++j) {
      auto gw = g.pool.weight.row(j);
      const auto w = params.pool.weight.row(j);
      for (std::size_t c = 0; c < e; ++c) {
        gw[c] += dz[j] * hk[c];
        dh[c] += w[c] * dz[j];
      }
    }
  }

  // Token attention per head: h_k = sum_i alpha_i e_i.
  const T entropy_scale = with_entropy ? lambda / static_cast<T>(num_heads) : T(0);
  std::vector<T> dg(n, T(0));
  for (std::size_t k = 0; k < num_heads; ++k) {
    const auto& att = rec.tokens.per_head[k];
    const auto dh = dheads.row(k);
    T alpha_dot = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      dg[i] = T(0);
      if (!mask[i]) continue;
      dg[i] = dot<T>(dh, rec.embedded.row(i));
      alpha_dot += att.weights[i] * dg[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) dg[i] = att.weights[i] * (dg[i] - alpha_dot);
    }
    if (with_entropy) {
      // dE/dg_i = -alpha_i (ln alpha_i + E), using the stable log-weights.
      T entropy = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) entropy -= att.weights[i] * att.log_weights[i];
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) dg[i] += entropy_scale * (-att.weights[i] * (att.log_weights[i] + entropy));
      }
    }
    auto& gh = g.heads[k];
    const auto& ph = params.heads[k];
    const std::size_t head_dim = ph.bias.size();
    std::vector<T> du(head_dim);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      auto de = g.positions.row(i);
      const auto ei = rec.embedded.row(i);
      for (std::size_t c = 0; c < e; ++c) de[c] += att.weights[i] * dh[c];
      const auto act = att.activations.row(i);
      for (std::size_t j = 0; j < head_dim; ++j) {
        gh.query[j] += dg[i] * act[j];
        du[j] = dg[i] * ph.query[j] * (T(1) - act[j] * act[j]);
        gh.bias[j] += du[j];
      }
      for (std::size_t j = 0; j < head_dim; ++j) {
        auto gw = gh.weight.row(j);
        const auto w = ph.weight.row(j);
        for (std::size_t c = 0; c < e; ++c) {
          gw[c] += du[j] * ei[c];
          de[c] += w[c] * du[j];
        }
      }
    }
  }
}

// acc += local, scattering position rows into the embedding table.
template <typename T>
void accumulate(GradientSet<T>& acc, const LocalGradient<T>& local, const TokenSequence& seq,
                bool embedding_trainable) {
  auto& t = acc.tensors;
  for (std::size_t k = 0; k < t.heads.size(); ++k) {
    add_into<T>(t.heads[k].weight.data, local.heads[k].weight.data);
    add_into<T>(t.heads[k].bias, local.heads[k].bias);
    add_into<T>(t.heads[k].query, local.heads[k].query);
  }
  add_into<T>(t.pool.weight.data, local.pool.weight.data);
  add_into<T>(t.pool.bias, local.pool.bias);
  add_into<T>(t.pool.context, local.pool.context);
  add_into<T>(t.classifier.weight.data, local.classifier.weight.data);
  add_into<T>(t.classifier.bias, local.classifier.bias);
  if (!embedding_trainable) return;
  for (std::size_t i = 0; i < seq.max_len(); ++i) {
    if (!seq.mask[i] || seq.ids[i] == kPadId) continue;
    add_into<T>(t.embedding.table.row(seq.ids[i]), local.positions.row(i));
  }
}

template <typename T>
void check_finite(const GradientSet<T>& grads) {
  visit_tensors(
      [](const TensorInfo& info, std::span<const T> values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
          if (!std::isfinite(values[i])) {
            throw NumericError("non-finite gradient in tensor '" + info.name + "' at index " +
                               std::to_string(i));
          }
        }
      },
      grads.tensors);
}

}  // namespace detail

// Exact gradient of total_loss(forward(seq, params), label, lambda).
template <typename T>
GradientSet<T> backward(const ForwardRecord<T>& record, std::size_t label, T lambda,
                        const ModelParams<T>& params) {
  detail::LocalGradient<T> local;
  detail::backward_local(record, label, lambda, params, lambda != T(0), local);
  auto grads = GradientSet<T>::zeros_like(params);
  detail::accumulate(grads, local, record.sequence, params.embedding.trainable);
  detail::check_finite(grads);
  return grads;
}

// Gradient of the cross-entropy term alone.
template <typename T>
GradientSet<T> backward_cross_entropy(const ForwardRecord<T>& record, std::size_t label,
                                      const ModelParams<T>& params) {
  detail::LocalGradient<T> local;
  detail::backward_local(record, label, T(0), params, false, local);
  auto grads = GradientSet<T>::zeros_like(params);
  detail::accumulate(grads, local, record.sequence, params.embedding.trainable);
  detail::check_finite(grads);
  return grads;
}

template <typename T>
struct BatchResult {
  GradientSet<T> grads;  // mean over the batch
  T loss = T(0);         // mean total loss
  T ce = T(0);           // mean cross-entropy
  T doc_entropy = T(0);  // mean over examples and heads
};

// Mean loss and gradient over a batch. Examples are processed in waves of
// `threads` and reduced in example order, so the result is bit-identical for
// any worker count.
template <typename T>
BatchResult<T> batch_gradient(const ModelParams<T>& params, std::span<const Example* const> batch, T lambda,
                              std::size_t threads) {
  if (batch.empty()) throw ConfigError("empty batch");
  BatchResult<T> out{GradientSet<T>::zeros_like(params)};
  const std::size_t wave = std::min(resolve_threads(threads), batch.size());
  std::vector<detail::LocalGradient<T>> locals(wave);
  std::vector<LossBreakdown<T>> losses(wave);
  for (std::size_t start = 0; start < batch.size(); start += wave) {
    const std::size_t count = std::min(wave, batch.size() - start);
    parallel_for(count, threads, [&](std::size_t slot) {
      const Example& ex = *batch[start + slot];
      auto rec = forward(ex.sequence, params);
      losses[slot] = total_loss(rec, ex.label, lambda);
      detail::backward_local(rec, ex.label, lambda, params, lambda != T(0), locals[slot]);
    });
    for (std::size_t slot = 0; slot < count; ++slot) {
      detail::accumulate(out.grads, locals[slot], batch[start + slot]->sequence,
                         params.embedding.trainable);
      out.loss += losses[slot].total;
      out.ce += losses[slot].ce;
      out.doc_entropy += losses[slot].mean_doc_entropy();
    }
  }
  const T denom = static_cast<T>(batch.size());
  visit_tensors([&](const TensorInfo&, std::span<T> values) {
    for (auto& v : values) v /= denom;
  }, out.grads.tensors);
  out.loss /= denom;
  out.ce /= denom;
  out.doc_entropy /= denom;
  detail::check_finite(out.grads);
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference verification (64-bit)

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

// Compares `analytic` against central differences of the total loss, one
// coordinate at a time. The probe loss is evaluated in extended precision:
// in double, cancellation in f(x+h) - f(x-h) leaves ~1e-12 of noise, which
// is 1e-4 of the ~1e-8 pool gradients that near-identical heads produce.
inline GradientCheckResult finite_diff_check(const ModelParams<double>& params, const TokenSequence& seq,
                                             std::size_t label, double lambda, double step,
                                             const GradientSet<double>& analytic) {
  using Wide = long double;
  GradientCheckResult result;
  ModelParams<Wide> probe = zero_params<Wide>(params.shape());
  probe.embedding.trainable = params.embedding.trainable;
  visit_tensors([](const TensorInfo&, std::span<Wide> wide, std::span<const double> narrow) {
    std::copy(narrow.begin(), narrow.end(), wide.begin());
  }, probe, params);
  const Wide wide_lambda = lambda;
  const Wide wide_step = step;
  auto loss_at = [&] { return total_loss(forward(seq, probe), label, wide_lambda).total; };
  visit_tensors(
      [&](const TensorInfo& info, std::span<Wide> values, std::span<const double> grads) {
        for (std::size_t i = 0; i < values.size(); ++i) {
          const Wide saved = values[i];
          values[i] = saved + wide_step;
          const Wide plus = loss_at();
          values[i] = saved - wide_step;
          const Wide minus = loss_at();
          values[i] = saved;
          const double numeric = static_cast<double>((plus - minus) / (2 * wide_step));
          const double err = relative_error(grads[i], numeric);
          ++result.coordinates;
          if (result.tensor.empty() || err > result.max_relative_error) {
            result.max_relative_error = err;
            result.tensor = info.name;
            result.index = i;
            result.analytic = grads[i];
            result.numeric = numeric;
          }
        }
      },
      probe, analytic.tensors);
  return result;
}

inline GradientCheckResult finite_diff_check(const ModelParams<double>& params, const TokenSequence& seq,
                                             std::size_t label, double lambda, double step = 1e-5) {
  const auto grads = backward(forward(seq, params), label, lambda, params);
  return finite_diff_check(params, seq, label, lambda, step, grads);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

template <typename T>
struct AdamState {
  ModelParams<T> first_moment;
  ModelParams<T> second_moment;
  std::uint64_t step = 0;
  AdamHyper hyper;

  static AdamState for_params(const ModelParams<T>& params, AdamHyper hyper = {}) {
    return AdamState{zero_params<T>(params.shape()), zero_params<T>(params.shape()), 0, hyper};
  }

  bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam. The PAD row and a frozen embedding are never touched.
template <typename T>
void adam_step(ModelParams<T>& params, const GradientSet<T>& grads, AdamState<T>& state) {
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const T correction1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
  const T beta1 = static_cast<T>(h.beta1);
  const T beta2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.learning_rate);
  const T eps = static_cast<T>(h.epsilon);
  const bool train_embedding = params.embedding.trainable;
  const std::size_t pad_end = (kPadId + 1) * params.embed_dim();
  visit_tensors(
      [&](const TensorInfo& info, std::span<T> theta, std::span<const T> g, std::span<T> m, std::span<T> v) {
        std::size_t begin = 0;
        if (info.name == "embedding") {
          if (!train_embedding) return;
          begin = pad_end;
        }
        for (std::size_t i = begin; i < theta.size(); ++i) {
          m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
          v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
          const T m_hat = m[i] / correction1;
          const T v_hat = v[i] / correction2;
          theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
      },
      params, grads.tensors, state.first_moment, state.second_moment);
}

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

// Macro-F1 averages per-class F1 over all num_classes classes; a class whose
// precision + recall is 0 scores F1 = 0 and still counts.
inline Metrics classification_metrics(const std::vector<std::size_t>& truth,
                                      const std::vector<std::size_t>& predicted, std::size_t num_classes) {
  if (truth.empty() || truth.size() != predicted.size()) {
    throw ConfigError("metrics need equally sized, non-empty label vectors");
  }
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) throw FormatError("class id out of range");
    if (truth[i] == predicted[i]) {
      ++correct;
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double precision = tp[c] + fp[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
    const double recall = tp[c] + fn[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
    f1_sum += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return m;
}

template <typename T>
std::vector<std::size_t> predict(const ModelParams<T>& params, const std::vector<Example>& data,
                                 std::size_t threads = 1) {
  std::vector<std::size_t> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) { out[i] = forward(data[i].sequence, params).predicted(); });
  return out;
}

template <typename T>
Metrics evaluate(const ModelParams<T>& params, const std::vector<Example>& data, std::size_t threads = 1) {
  if (data.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  std::vector<std::size_t> truth;
  truth.reserve(data.size());
  for (const auto& ex : data) truth.push_back(ex.label);
  return classification_metrics(truth, predict(params, data, threads), params.num_classes());
}

// Mean over examples and heads of the per-document attention entropy.
template <typename T>
double mean_doc_entropy(const ModelParams<T>& params, const std::vector<Example>& data, std::size_t threads = 1) {
  if (data.empty()) return 0.0;
  std::vector<double> per_doc(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto rec = forward(data[i].sequence, params);
    double sum = 0.0;
    for (std::size_t k = 0; k < rec.num_heads(); ++k) sum += doc_entropy(rec.alpha(k), rec.sequence.mask);
    per_doc[i] = sum / static_cast<double>(rec.num_heads());
  });
  return std::accumulate(per_doc.begin(), per_doc.end(), 0.0) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  std::size_t num_heads = 30;
  std::size_t embed_dim = 300;
  std::size_t head_dim = 64;
  std::size_t pool_dim = 64;
  std::size_t max_len = 100;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  double learning_rate = 1e-3;
  double lambda = 0.0;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  bool train_embedding = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double train_ce = 0.0;
  double train_doc_entropy = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double val_doc_entropy = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;  // best validation accuracy
  AdamState<T> state;     // optimizer state at that epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

inline double epoch_learning_rate(double base, std::size_t epoch) {
  return base * std::pow(0.5, static_cast<double>(epoch));
}

template <typename T>
TrainResult<T> train(const TrainConfig& config, const LabeledSplit& data, EmbeddingMatrix<T> embedding,
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (config.batch_size < 1 || config.epochs < 1) throw ConfigError("batch_size and epochs must be >= 1");
  if (config.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (data.train.empty() || data.validation.empty()) throw ConfigError("train and validation splits must be non-empty");
  embedding.trainable = config.train_embedding;
  ModelShape shape;
  shape.vocab_size = embedding.vocab_size();
  shape.embed_dim = embedding.dim();
  shape.num_heads = config.num_heads;
  shape.head_dim = config.head_dim;
  shape.pool_dim = config.pool_dim;
  shape.num_classes = data.labels.size();
  auto params = init_params<T>(shape, std::move(embedding), config.seed);
  auto state = AdamState<T>::for_params(params, AdamHyper{config.learning_rate});

  TrainResult<T> result{params, state, {}, 0};
  double best_accuracy = -1.0;
  const T lambda = static_cast<T>(config.lambda);
  std::vector<const Example*> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    state.hyper.learning_rate = epoch_learning_rate(config.learning_rate, epoch);
    const auto order = seeded_permutation(data.train.size(), config.seed * 1000003ULL + epoch);
    double loss_sum = 0.0, ce_sum = 0.0, entropy_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.train[order[i]]);
      auto step = batch_gradient<T>(params, batch, lambda, config.threads);
      if (!std::isfinite(step.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + " (ce=" + std::to_string(step.ce) +
                           ", doc_entropy=" + std::to_string(step.doc_entropy) + ")");
      }
      adam_step(params, step.grads, state);
      const double weight = static_cast<double>(batch.size());
      loss_sum += static_cast<double>(step.loss) * weight;
      ce_sum += static_cast<double>(step.ce) * weight;
      entropy_sum += static_cast<double>(step.doc_entropy) * weight;
    }
    const double n = static_cast<double>(order.size());
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = state.hyper.learning_rate;
    log.train_loss = loss_sum / n;
    log.train_ce = ce_sum / n;
    log.train_doc_entropy = entropy_sum / n;
    const auto metrics = evaluate(params, data.validation, config.threads);
    log.val_accuracy = metrics.accuracy;
    log.val_macro_f1 = metrics.macro_f1;
    log.val_doc_entropy = mean_doc_entropy(params, data.validation, config.threads);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (metrics.accuracy > best_accuracy) {
      best_accuracy = metrics.accuracy;
      result.params = params;
      result.state = state;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace batm
