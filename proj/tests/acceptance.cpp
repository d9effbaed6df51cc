// Acceptance runner: `batm_acceptance --criterion N` (N in 1..8, 4-proxy, or all).
// Prints one "criterion N: PASS|FAIL|SKIP ..." line per criterion. Exit code 0
// on pass, 1 on fail, 77 on skip.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "batm/batm.hpp"
#include "batm/cli.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace batm;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kSumTolerance = 1e-6;
// 32-bit rounding slack on E_doc <= ln L; uniform attention sits exactly on the bound.
constexpr double kDocEntropySlack = 1e-5;
constexpr double kTokenEntropySlack = 1e-12;
constexpr double kSweepSeconds = 30.0 * 60.0;
constexpr double kSanitySeconds = 60.0;
constexpr double kCvTolerance = 1e-9;
constexpr double kPerfectCvTolerance = 1e-6;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("batm_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  Stopwatch clock;
  const auto summary = run_gradcheck(20, 1000, {0.0, 1e-3}, kGradStep);
  const double elapsed = clock.seconds();
  bool tiny = true;
  for (const auto& t : summary.trials) {
    const auto& s = t.shape;
    tiny = tiny && s.num_heads <= 3 && s.embed_dim <= 4 && s.head_dim <= 3 && s.pool_dim <= 3 && s.num_classes <= 3;
  }
  for (std::size_t i = 0; i < 20; ++i) tiny = tiny && random_tiny_instance(1000 + i).sequence.max_len() <= 5;
  const bool ok = summary.passed(kGradTolerance) && elapsed < kGradSeconds && tiny && summary.trials.size() == 40;
  return verdict(ok, "max relative error " + fmt(summary.max_relative_error) + " over " +
                         std::to_string(summary.trials.size()) + " checks (tol " + fmt(kGradTolerance) + "), " +
                         fmt(elapsed) + " s" + (tiny ? "" : ", shape limits exceeded"));
}

// ---------------------------------------------------------------------------

Outcome lambda_zero_equivalence() {
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_tiny_instance(5000 + seed);
    const auto rec = forward(inst.sequence, inst.params);
    const auto loss = total_loss(rec, inst.label, 0.0);
    const bool same_loss = loss.total == cross_entropy(rec, inst.label);
    const bool same_grad = backward(rec, inst.label, 0.0, inst.params).tensors ==
                           backward_cross_entropy(rec, inst.label, inst.params).tensors;

    const auto narrow = init_params<float>(inst.params.shape(), 5000 + seed);
    const auto rec32 = forward(inst.sequence, narrow);
    const bool same32 = total_loss(rec32, inst.label, 0.0f).total == cross_entropy(rec32, inst.label) &&
                        backward(rec32, inst.label, 0.0f, narrow).tensors ==
                            backward_cross_entropy(rec32, inst.label, narrow).tensors;
    if (!same_loss || !same_grad || !same32) ++mismatches;
  }
  return verdict(mismatches == 0, std::to_string(100 - mismatches) + "/100 instances bit-identical (64- and 32-bit)");
}

// ---------------------------------------------------------------------------

Outcome normalization_suite() {
  std::mt19937_64 rng(31337);
  auto uniform = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::size_t forwards = 0, failures = 0;
  double worst_sum = 0.0, worst_doc = -1e300, worst_token = -1e300;
  bool masked_zero = true;
  for (std::size_t model = 0; model < 100; ++model) {
    ModelShape shape{uniform(5, 40), uniform(1, 12), uniform(1, 8), uniform(1, 6), uniform(1, 6), uniform(2, 6)};
    auto params = init_params<float>(shape, 700 + model);
    // Scale embeddings so some attention distributions are sharply peaked.
    const float scale = std::uniform_real_distribution<float>(0.5f, 40.0f)(rng);
    for (auto& v : params.embedding.table.data) v *= scale;

    std::vector<TokenSequence> corpus;
    for (std::size_t s = 0; s < 10; ++s) {
      const std::size_t max_len = uniform(1, 24);
      const std::size_t len = uniform(1, max_len);
      TokenSequence seq;
      seq.ids.assign(max_len, kPadId);
      seq.mask.assign(max_len, false);
      seq.effective_length = len;
      for (std::size_t i = 0; i < len; ++i) {
        seq.ids[i] = static_cast<TokenId>(uniform(1, shape.vocab_size - 1));
        seq.mask[i] = true;
      }
      // Garbage ids behind the mask must not matter.
      for (std::size_t i = len; i < max_len; ++i) seq.ids[i] = static_cast<TokenId>(uniform(0, shape.vocab_size - 1));
      corpus.push_back(seq);

      const auto rec = forward(seq, params);
      ++forwards;
      bool ok = true;
      auto check_sum = [&](std::span<const float> p) {
        double sum = 0.0;
        for (float x : p) sum += x;
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        ok = ok && std::abs(sum - 1.0) <= kSumTolerance;
      };
      for (std::size_t k = 0; k < shape.num_heads; ++k) {
        const auto alpha = rec.alpha(k);
        check_sum(alpha);
        for (std::size_t i = len; i < max_len; ++i) masked_zero = masked_zero && alpha[i] == 0.0f;
        const double e = static_cast<double>(doc_entropy(alpha, seq.mask));
        const double bound = std::log(static_cast<double>(len));
        worst_doc = std::max(worst_doc, e - bound);
        ok = ok && e <= bound + kDocEntropySlack;
      }
      check_sum(rec.beta());
      check_sum(rec.probs());
      if (!ok) ++failures;
    }

    const auto report = entropy_report(params, corpus);
    const double bound = std::log(static_cast<double>(shape.num_heads));
    for (const auto& [id, h] : report.token_entropies) {
      worst_token = std::max(worst_token, h - bound);
      if (h > bound + kTokenEntropySlack) ++failures;
    }
  }
  const bool ok = failures == 0 && masked_zero && forwards == 1000;
  return verdict(ok, std::to_string(forwards) + " forwards; max |sum-1| " + fmt(worst_sum) + ", max E_doc - ln L " +
                         fmt(worst_doc) + ", max E_token - ln K " + fmt(worst_token) +
                         (masked_zero ? ", masked weights exactly 0" : ", nonzero masked weight"));
}

// ---------------------------------------------------------------------------

// Keeps the five most frequent labels and the first `per_class` documents of
// each, in file order.
std::vector<RawDocument> five_class_subset(const std::vector<RawDocument>& docs, std::size_t per_class) {
  std::map<std::string, std::size_t> counts;
  for (const auto& d : docs) ++counts[d.label];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > 5) ranked.resize(5);
  std::map<std::string, std::size_t> taken;
  for (const auto& [label, n] : ranked) taken[label] = 0;
  std::vector<RawDocument> out;
  for (const auto& d : docs) {
    auto it = taken.find(d.label);
    if (it == taken.end() || it->second >= per_class) continue;
    ++it->second;
    out.push_back(d);
  }
  return out;
}

Outcome sweep_trend(const std::vector<RawDocument>& docs, const std::string& what) {
  Stopwatch clock;
  const auto config = build_config({}, parse_overrides({"num_heads=10", "embed_dim=50", "epochs=3", "seed=1",
                                                        "max_len=100", "batch_size=32", "learning_rate=0.001",
                                                        "lambdas=0,1e-4,1e-3,1e-2", "precision=f32"}));
  const auto data = prepare_documents(config, docs);
  const auto rows = lambda_sweep<float>(config, data);
  const double elapsed = clock.seconds();

  bool decreasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i) decreasing = decreasing && rows[i].avg_doc_entropy < rows[i - 1].avg_doc_entropy;
  const bool accuracy_drop = rows.size() == 4 && rows[3].accuracy <= rows[2].accuracy;

  std::ostringstream detail;
  detail << what << " (" << docs.size() << " docs, " << data.split.labels.size() << " classes): ";
  for (const auto& r : rows) {
    detail << "[lambda " << fmt(r.lambda) << " acc " << fmt(r.accuracy) << " E_doc " << fmt(r.avg_doc_entropy)
           << " E_token " << fmt(r.avg_token_entropy) << "] ";
  }
  detail << (decreasing ? "E_doc strictly decreasing" : "E_doc NOT strictly decreasing") << ", "
         << (accuracy_drop ? "accuracy non-increasing from 1e-3" : "accuracy rose from 1e-3 to 1e-2") << ", "
         << fmt(elapsed) << " s";
  const bool ok = rows.size() == 4 && docs.size() == 2000 && data.split.labels.size() == 5 && decreasing &&
                  accuracy_drop && elapsed < kSweepSeconds;
  return verdict(ok, detail.str());
}

Outcome table_trend_news() {
  const char* path = std::getenv("BATM_NEWS_CATEGORY_JSONL");
  if (!path || !*path) {
    return {Status::Skip, "News Category Dataset not available; set BATM_NEWS_CATEGORY_JSONL to run"};
  }
  JsonlOptions options;
  if (const char* aliases = std::getenv("BATM_NEWS_CATEGORY_ALIASES"); aliases && *aliases) {
    options.aliases = load_alias_map(aliases);
  }
  const auto loaded = load_jsonl(path, options);
  return sweep_trend(five_class_subset(loaded.documents, 400), "News Category subset");
}

Outcome table_trend_proxy() {
  return sweep_trend(fixtures::news_proxy_corpus(400), "synthetic proxy corpus, not the News Category Dataset");
}

// ---------------------------------------------------------------------------

Outcome learning_sanity() {
  Stopwatch clock;
  const auto docs = fixtures::indicator_corpus();
  const auto config = fixtures::indicator_train_config(4);
  const auto vocab = build_vocabulary(docs, 1);
  const auto data = split(docs, vocab, config.max_len, SplitRatios{}, 42);
  const auto result = train<float>(config, data, init_random<float>(vocab.size(), config.embed_dim, config.seed));

  double best_val = 0.0;
  std::size_t reached_at = 0;
  for (const auto& e : result.log) {
    best_val = std::max(best_val, e.val_accuracy);
    if (e.val_accuracy == 1.0 && reached_at == 0) reached_at = e.epoch + 1;
  }

  std::vector<TokenSequence> corpus;
  for (const auto& d : docs) corpus.push_back(encode(d, vocab, config.max_len));
  const auto analysis = analyze_corpus(result.params, corpus);
  const auto top = static_cast<std::size_t>(
      std::max_element(analysis.mean_beta.begin(), analysis.mean_beta.end()) - analysis.mean_beta.begin());
  const auto words = topic_descriptor(analysis.matrices[top], 5, vocab).words();
  bool has_indicators = true;
  for (const auto& token : fixtures::indicator_tokens()) {
    has_indicators = has_indicators && std::find(words.begin(), words.end(), token) != words.end();
  }
  const double elapsed = clock.seconds();

  std::string listed;
  for (const auto& w : words) listed += (listed.empty() ? "" : " ") + w;
  const bool ok = reached_at > 0 && reached_at <= 5 && has_indicators && elapsed < kSanitySeconds;
  return verdict(ok, "best validation accuracy " + fmt(best_val) +
                         (reached_at ? " (1.0 at epoch " + std::to_string(reached_at) + ")" : "") +
                         "; highest-beta head " + std::to_string(top) + " (mean beta " +
                         fmt(analysis.mean_beta[top]) + ") top-5: " + listed + "; " + fmt(elapsed) + " s");
}

// ---------------------------------------------------------------------------

// Random corpus with exactly 10 sliding windows of length `window`.
std::vector<std::vector<std::string>> ten_window_corpus(std::mt19937_64& rng, std::size_t window,
                                                       const std::vector<std::string>& alphabet) {
  auto uniform = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::vector<std::vector<std::string>> docs;
  std::size_t remaining = 10;
  while (remaining > 0) {
    if (uniform(0, 9) == 0) docs.emplace_back();
    const std::size_t windows = uniform(1, std::min<std::size_t>(remaining, 4));
    const std::size_t length = windows == 1 ? uniform(1, window) : window + windows - 1;
    std::vector<std::string> doc;
    for (std::size_t i = 0; i < length; ++i) doc.push_back(alphabet[uniform(0, alphabet.size() - 1)]);
    docs.push_back(std::move(doc));
    remaining -= windows;
  }
  return docs;
}

Outcome coherence_oracle() {
  std::mt19937_64 rng(90210);
  const std::vector<std::string> alphabet = {"apple", "bread", "cheese", "dates", "eggs", "figs", "grapes"};
  std::size_t compared = 0, attempts = 0;
  double worst = 0.0;
  bool ten_windows = true;
  while (compared < 150 && attempts < 1000) {
    ++attempts;
    const std::size_t window = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const auto docs = ten_window_corpus(rng, window, alphabet);
    std::vector<std::string> words = alphabet;
    std::shuffle(words.begin(), words.end(), rng);
    words.resize(std::uniform_int_distribution<std::size_t>(2, 6)(rng));
    words.push_back("missing");
    const auto counts = WindowCounts::build(docs, words, window);
    ten_windows = ten_windows && counts.total_windows() == 10;
    const auto cv = cv_score(words, counts);
    if (!cv.score) continue;
    const double expected = oracle::brute_force_cv(docs, words, window, kDefaultNpmiEpsilon);
    worst = std::max(worst, std::abs(*cv.score - expected));
    ++compared;
  }

  std::vector<std::vector<std::string>> perfect;
  for (int i = 0; i < 5; ++i) {
    perfect.push_back({"alpha", "beta", "noise"});
    perfect.push_back({"gamma", "delta"});
  }
  const auto perfect_cv = cv_score({"alpha", "beta"}, WindowCounts::build(perfect, {"alpha", "beta"}, 110));
  const double perfect_error = perfect_cv.score ? std::abs(*perfect_cv.score - 1.0) : 1e300;

  const bool ok = compared >= 100 && ten_windows && worst <= kCvTolerance && perfect_error <= kPerfectCvTolerance;
  return verdict(ok, std::to_string(compared) + " ten-window fixtures, max |cv - oracle| " + fmt(worst) +
                         "; perfect co-occurrence |C_v - 1| " + fmt(perfect_error));
}

// ---------------------------------------------------------------------------

Outcome determinism_and_persistence() {
  const auto dir = scratch("c7");
  const auto jsonl = dir / "news.jsonl";
  fixtures::write_jsonl(fixtures::news_proxy_corpus(30), jsonl.string());
  auto train_run = [&](const std::string& name, const std::string& threads) {
    return cli::run({"train", "--out", (dir / name).string(), "--threads", threads, "--seed", "5",
                     "--set", "data_path=" + jsonl.string(), "--set", "embed_dim=16", "--set", "num_heads=4",
                     "--set", "head_dim=8", "--set", "pool_dim=8", "--set", "max_len=24", "--set", "epochs=3",
                     "--set", "batch_size=8", "--set", "learning_rate=0.01", "--set", "lambda=0.001"});
  };
  const int a = train_run("threads-1", "1");
  const int b = train_run("threads-3", "3");
  const bool ckpt_same = a == 0 && b == 0 && slurp(dir / "threads-1" / "model.ckpt") == slurp(dir / "threads-3" / "model.ckpt");
  const bool log_same = a == 0 && b == 0 && slurp(dir / "threads-1" / "epochs.jsonl") == slurp(dir / "threads-3" / "epochs.jsonl");

  // save -> load -> forward against the in-memory model.
  const auto docs = fixtures::news_proxy_corpus(10);
  const auto vocab = build_vocabulary(docs, 1);
  const auto data = split(docs, vocab, 24, SplitRatios{}, 42);
  TrainConfig config;
  config.embed_dim = 12;
  config.num_heads = 3;
  config.head_dim = 6;
  config.pool_dim = 6;
  config.max_len = 24;
  config.batch_size = 8;
  config.epochs = 2;
  config.learning_rate = 1e-2;
  config.lambda = 1e-3;
  config.threads = 1;
  bool forward_same = true;
  for (const bool wide : {false, true}) {
    auto check = [&]<typename T>() {
      const auto result = train<T>(config, data, init_random<T>(vocab.size(), config.embed_dim, config.seed));
      const auto path = (dir / (wide ? "wide.ckpt" : "narrow.ckpt")).string();
      save_checkpoint(Checkpoint<T>{result.params, result.state, {{"probe", true}}}, path);
      const auto loaded = load_checkpoint<T>(path);
      for (const auto* part : {&data.train, &data.validation, &data.test}) {
        for (const auto& ex : *part) {
          const auto before = forward(ex.sequence, result.params);
          const auto after = forward(ex.sequence, loaded.params);
          forward_same = forward_same && before.output.probs == after.output.probs &&
                         before.document.document == after.document.document && before.tokens.heads == after.tokens.heads;
        }
      }
    };
    if (wide) {
      check.template operator()<double>();
    } else {
      check.template operator()<float>();
    }
  }
  return verdict(ckpt_same && log_same && forward_same,
                 std::string("threads 1 vs 3: checkpoint ") + (ckpt_same ? "identical" : "DIFFERS") + ", epoch log " +
                     (log_same ? "identical" : "DIFFERS") + "; save/load/forward " +
                     (forward_same ? "bit-identical (f32, f64)" : "DIFFERS"));
}

// ---------------------------------------------------------------------------

Outcome metric_correctness() {
  // Two tokens A, B with one-hot embeddings; the classifier predicts the
  // class named by the token, so (A,A) and (B,B) are right and the swapped
  // pair is wrong.
  auto params = zero_params<double>({4, 2, 1, 2, 2, 2});
  params.embedding.table(2, 0) = 1.0;
  params.embedding.table(3, 1) = 1.0;
  params.classifier.weight(0, 0) = 10.0;
  params.classifier.weight(1, 1) = 10.0;
  auto example = [](TokenId token, std::size_t label) { return Example{"", TokenSequence{{token}, {true}, 1}, label}; };
  const std::vector<Example> data = {example(2, 0), example(3, 0), example(2, 1), example(3, 1)};
  const auto m = evaluate(params, data);
  const auto direct = classification_metrics({0, 0, 1, 1}, {0, 1, 0, 1}, 2);
  const bool ok = m.accuracy == 0.5 && m.macro_f1 == 0.5 && direct.accuracy == 0.5 && direct.macro_f1 == 0.5;
  return verdict(ok, "accuracy " + fmt(m.accuracy) + ", macro-F1 " + fmt(m.macro_f1) + " (expected 0.5, 0.5)");
}

// ---------------------------------------------------------------------------

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"1", gradient_oracle},
      {"2", lambda_zero_equivalence},
      {"3", normalization_suite},
      {"4", table_trend_news},
      {"4-proxy", table_trend_proxy},
      {"5", learning_sanity},
      {"6", coherence_oracle},
      {"7", determinism_and_persistence},
      {"8", metric_correctness}};
  return all;
}

int run_one(const std::string& id, const std::function<Outcome()>& f) {
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {Status::Fail, std::string("exception: ") + e.what()};
  }
  const char* label = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
  std::cout << "criterion " << id << ": " << label << " " << o.detail << std::endl;
  return o.status == Status::Pass ? 0 : o.status == Status::Skip ? 77 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::string wanted = "all";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      wanted = argv[++i];
    } else {
      std::cerr << "usage: batm_acceptance [--criterion 1..8|4-proxy|all]\n";
      return 2;
    }
  }
  if (wanted == "all") {
    int worst = 0;
    for (const auto& [id, f] : criteria()) {
      const int code = run_one(id, f);
      if (code == 1) worst = 1;
    }
    return worst;
  }
  for (const auto& [id, f] : criteria()) {
    if (id == wanted) return run_one(id, f);
  }
  std::cerr << "unknown criterion '" << wanted << "'\n";
  return 2;
}
