#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/model.hpp"
#include "batm/training.hpp"

namespace batm {

struct TinyInstance {
  ModelParams<double> params;
  TokenSequence sequence;
  std::size_t label = 0;
};

// Random configuration with N <= 5, K <= 3, E <= 4, head/pool dims <= 3 and
// 2 <= C <= 3. Every parameter, biases included, is drawn from N(0, 0.5) so
// no gradient is trivially zero.
inline TinyInstance random_tiny_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ModelShape shape;
  const std::size_t max_len = pick(1, 5);
  shape.num_heads = pick(1, 3);
  shape.embed_dim = pick(1, 4);
  shape.head_dim = pick(1, 3);
  shape.pool_dim = pick(1, 3);
  shape.num_classes = pick(2, 3);
  shape.vocab_size = pick(3, 8);

  TinyInstance inst;
  inst.params = zero_params<double>(shape);
  std::normal_distribution<double> normal(0.0, 0.5);
  visit_tensors([&](const TensorInfo&, std::span<double> values) {
    for (auto& v : values) v = normal(rng);
  }, inst.params);
  for (auto& v : inst.params.embedding.table.row(kPadId)) v = 0.0;

  inst.sequence.ids.assign(max_len, kPadId);
  inst.sequence.mask.assign(max_len, false);
  inst.sequence.effective_length = pick(1, max_len);
  for (std::size_t i = 0; i < inst.sequence.effective_length; ++i) {
    inst.sequence.ids[i] = static_cast<TokenId>(pick(1, shape.vocab_size - 1));
    inst.sequence.mask[i] = true;
  }
  inst.label = pick(0, shape.num_classes - 1);
  return inst;
}

struct GradcheckTrial {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  ModelShape shape;
  GradientCheckResult result;
};

struct GradcheckSummary {
  std::vector<GradcheckTrial> trials;
  double max_relative_error = 0.0;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }

  nlohmann::json to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : trials) {
      list.push_back({{"seed", t.seed},
                      {"lambda", t.lambda},
                      {"num_heads", t.shape.num_heads},
                      {"embed_dim", t.shape.embed_dim},
                      {"head_dim", t.shape.head_dim},
                      {"pool_dim", t.shape.pool_dim},
                      {"num_classes", t.shape.num_classes},
                      {"coordinates", t.result.coordinates},
                      {"max_relative_error", t.result.max_relative_error},
                      {"worst_tensor", t.result.tensor},
                      {"worst_index", t.result.index}});
    }
    return {{"max_relative_error", max_relative_error}, {"trials", list}};
  }
};

inline GradcheckSummary run_gradcheck(std::size_t trials, std::uint64_t base_seed, const std::vector<double>& lambdas,
                                      double step) {
  GradcheckSummary summary;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto inst = random_tiny_instance(base_seed + t);
    for (double lambda : lambdas) {
      GradcheckTrial trial;
      trial.seed = base_seed + t;
      trial.lambda = lambda;
      trial.shape = inst.params.shape();
      trial.result = finite_diff_check(inst.params, inst.sequence, inst.label, lambda, step);
      summary.max_relative_error = std::max(summary.max_relative_error, trial.result.max_relative_error);
      summary.trials.push_back(std::move(trial));
    }
  }
  return summary;
}

}  // namespace batm
