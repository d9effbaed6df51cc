#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "batm/checkpoint.hpp"
#include "batm/coherence.hpp"
#include "batm/config.hpp"
#include "batm/gradcheck.hpp"
#include "batm/pipeline.hpp"
#include "batm/topics.hpp"
#include "batm/training.hpp"

namespace batm::cli {

struct RunOptions {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> threads;
};

namespace detail {

namespace fs = std::filesystem;

inline std::size_t effective_threads(const RunOptions& run) {
  if (run.threads) return *run.threads;
  if (const char* env = std::getenv("BATM_THREADS")) {
    try {
      return static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      throw ConfigError(std::string("BATM_THREADS must be a non-negative integer, got '") + env + "'");
    }
  }
  return 0;
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { open_output(path) << j.dump(2) << '\n'; }

inline void echo_config(const AppConfig& config, const fs::path& dir) {
  auto out = open_output(dir / "effective_config.txt");
  write_config(config, out);
}

inline std::string checkpoint_path(const RunOptions& run) {
  return run.checkpoint.empty() ? (fs::path(run.out_dir) / "model.ckpt").string() : run.checkpoint;
}

inline AppConfig load_run_config(const RunOptions& run) {
  auto config = parse_config(run.config_path, run.overrides);
  if (run.seed) config.train.seed = *run.seed;
  config.train.threads = effective_threads(run);
  return config;
}

template <typename F>
auto with_precision(const std::string& precision, F&& f) {
  if (precision == "f64") return f.template operator()<double>();
  return f.template operator()<float>();
}

inline void log_epoch(const EpochLog& e) {
  std::cerr << "epoch " << e.epoch << ": lr=" << e.learning_rate << " loss=" << e.train_loss
            << " val_acc=" << e.val_accuracy << " val_macro_f1=" << e.val_macro_f1
            << " val_doc_entropy=" << e.val_doc_entropy << '\n';
}

inline int cmd_prepare(const RunOptions& run) {
  const auto config = load_run_config(run);
  fs::create_directories(run.out_dir);
  echo_config(config, run.out_dir);
  const auto data = prepare_data(config);
  {
    auto out = open_output(fs::path(run.out_dir) / "splits.jsonl");
    write_split_manifest(data.split, out);
  }
  {
    auto out = open_output(fs::path(run.out_dir) / "vocab.tsv");
    for (TokenId id = 0; id < data.vocab.size(); ++id) {
      out << id << '\t' << data.vocab.token_of(id) << '\t' << data.vocab.frequency(id) << '\n';
    }
  }
  {
    auto out = open_output(fs::path(run.out_dir) / "labels.tsv");
    for (std::size_t c = 0; c < data.split.labels.size(); ++c) out << c << '\t' << data.split.labels.names[c] << '\n';
  }
  write_json(fs::path(run.out_dir) / "summary.json",
             {{"documents", data.documents.size()},
              {"skipped_records", data.skipped},
              {"vocab_size", data.vocab.size()},
              {"classes", data.split.labels.size()},
              {"train", data.split.train.size()},
              {"validation", data.split.validation.size()},
              {"test", data.split.test.size()}});
  std::cerr << "prepared " << data.documents.size() << " documents (" << data.skipped << " skipped), "
            << data.vocab.size() << " vocabulary entries, " << data.split.labels.size() << " classes\n";
  return 0;
}

template <typename T>
nlohmann::json train_once(const AppConfig& config, const PreparedData& data, const fs::path& dir) {
  fs::create_directories(dir);
  echo_config(config, dir);
  auto epochs = open_output(dir / "epochs.jsonl");
  auto result = train<T>(config.train, data.split, make_embedding<T>(config, data.vocab), [&](const EpochLog& e) {
    log_epoch(e);
    epochs << epoch_log_json(e).dump() << '\n';
    epochs.flush();
  });
  Checkpoint<T> ckpt{result.params, result.state, checkpoint_metadata(config, data, result)};
  save_checkpoint(ckpt, (dir / "model.ckpt").string());
  const auto test = evaluate(result.params, data.split.test, config.train.threads);
  const auto& best = result.log.at(result.best_epoch);
  nlohmann::json summary = {{"seed", config.train.seed},
                            {"best_epoch", result.best_epoch},
                            {"val_accuracy", best.val_accuracy},
                            {"val_macro_f1", best.val_macro_f1},
                            {"test_accuracy", test.accuracy},
                            {"test_macro_f1", test.macro_f1}};
  write_json(dir / "summary.json", summary);
  return summary;
}

inline int cmd_train(const RunOptions& run) {
  auto config = load_run_config(run);
  fs::create_directories(run.out_dir);
  const auto data = prepare_data(config);
  if (run.seeds.empty()) {
    with_precision(config.precision, [&]<typename T>() { return train_once<T>(config, data, run.out_dir); });
    return 0;
  }
  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> acc, f1;
  for (auto seed : run.seeds) {
    config.train.seed = seed;
    const auto dir = fs::path(run.out_dir) / ("seed-" + std::to_string(seed));
    auto summary = with_precision(config.precision, [&]<typename T>() { return train_once<T>(config, data, dir); });
    acc.push_back(summary["test_accuracy"].get<double>());
    f1.push_back(summary["test_macro_f1"].get<double>());
    runs.push_back(summary);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return nlohmann::json{{"mean", mean}, {"std", v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0}};
  };
  write_json(fs::path(run.out_dir) / "summary.json",
             {{"runs", runs}, {"test_accuracy", mean_std(acc)}, {"test_macro_f1", mean_std(f1)}});
  return 0;
}

template <typename T>
struct LoadedRun {
  Checkpoint<T> ckpt;
  AppConfig config;
  PreparedData data;
};

template <typename T>
LoadedRun<T> load_run(const RunOptions& run) {
  LoadedRun<T> out;
  out.ckpt = load_checkpoint<T>(checkpoint_path(run));
  auto info = restore_info(out.ckpt.metadata, run.overrides);
  out.config = std::move(info.config);
  out.config.train.threads = effective_threads(run);
  out.data = prepare_data(out.config, &info.vocab, &info.labels);
  fs::create_directories(run.out_dir);
  echo_config(out.config, run.out_dir);
  return out;
}

inline std::string checkpoint_precision(const RunOptions& run, const std::vector<std::string>& overrides) {
  const auto header = read_checkpoint_header(checkpoint_path(run));
  std::string precision = header.at("dtype").get<std::string>();
  for (const auto& [k, v] : parse_overrides(overrides)) {
    if (k == "precision") precision = v;
  }
  return precision;
}

inline int cmd_eval(const RunOptions& run) {
  return with_precision(checkpoint_precision(run, run.overrides), [&]<typename T>() {
    const auto loaded = load_run<T>(run);
    const auto threads = loaded.config.train.threads;
    const auto val = evaluate(loaded.ckpt.params, loaded.data.split.validation, threads);
    const auto test = evaluate(loaded.ckpt.params, loaded.data.split.test, threads);
    const nlohmann::json report = {{"validation", {{"accuracy", val.accuracy}, {"macro_f1", val.macro_f1}}},
                                   {"test", {{"accuracy", test.accuracy}, {"macro_f1", test.macro_f1}}}};
    write_json(fs::path(run.out_dir) / "eval.json", report);
    std::cerr << "validation accuracy=" << val.accuracy << " macro_f1=" << val.macro_f1 << "; test accuracy="
              << test.accuracy << " macro_f1=" << test.macro_f1 << '\n';
    return 0;
  });
}

template <typename T>
std::vector<TopicDescriptor> descriptors_for(const LoadedRun<T>& loaded, const CorpusAttention& analysis) {
  std::vector<TopicDescriptor> out;
  for (const auto& m : analysis.matrices) {
    out.push_back(topic_descriptor(m, loaded.config.top_t, loaded.data.vocab, loaded.config.column_mode()));
  }
  return out;
}

inline int cmd_topics(const RunOptions& run) {
  return with_precision(checkpoint_precision(run, run.overrides), [&]<typename T>() {
    const auto loaded = load_run<T>(run);
    const auto analysis = analyze_corpus(loaded.ckpt.params, topic_sequences(loaded.config, loaded.data),
                                         loaded.config.train.threads);
    const auto descriptors = descriptors_for(loaded, analysis);
    auto out = open_output(fs::path(run.out_dir) / "topics.jsonl");
    for (const auto& d : descriptors) {
      auto rec = descriptor_to_json(d);
      rec["mean_beta"] = analysis.mean_beta[d.head];
      out << rec.dump() << '\n';
    }
    auto csv = open_output(fs::path(run.out_dir) / "topic_matrix.csv");
    write_topic_matrices_csv(analysis.matrices, csv);
    std::cerr << "wrote " << descriptors.size() << " topic descriptors\n";
    return 0;
  });
}

inline int cmd_coherence(const RunOptions& run) {
  return with_precision(checkpoint_precision(run, run.overrides), [&]<typename T>() {
    const auto loaded = load_run<T>(run);
    const auto analysis = analyze_corpus(loaded.ckpt.params, topic_sequences(loaded.config, loaded.data),
                                         loaded.config.train.threads);
    const auto result = coherence_report(descriptors_for(loaded, analysis), topic_texts(loaded.config, loaded.data),
                                         loaded.config.window_size, loaded.config.top_t, loaded.config.npmi_epsilon);
    write_json(fs::path(run.out_dir) / "coherence.json", result.to_json());
    auto table = open_output(fs::path(run.out_dir) / "coherence.txt");
    result.write_table(table);
    if (result.average_cv) std::cerr << "average C_v = " << *result.average_cv << '\n';
    return 0;
  });
}

inline int cmd_entropy_report(const RunOptions& run) {
  return with_precision(checkpoint_precision(run, run.overrides), [&]<typename T>() {
    const auto loaded = load_run<T>(run);
    const auto report = entropy_report(loaded.ckpt.params, topic_sequences(loaded.config, loaded.data),
                                       loaded.config.train.threads);
    write_json(fs::path(run.out_dir) / "entropy.json", report.to_json(&loaded.data.vocab));
    std::cerr << "avg E_doc=" << report.avg_doc_entropy << " avg E_token=" << report.avg_token_entropy << '\n';
    return 0;
  });
}

inline int cmd_gradcheck(const RunOptions& run) {
  const auto config = load_run_config(run);
  fs::create_directories(run.out_dir);
  echo_config(config, run.out_dir);
  const auto summary = run_gradcheck(config.gradcheck_trials, config.train.seed, {0.0, 1e-3}, config.gradcheck_step);
  write_json(fs::path(run.out_dir) / "gradcheck.json", summary.to_json());
  std::cout << "max relative error: " << summary.max_relative_error << " over " << summary.trials.size()
            << " trials\n";
  if (!summary.passed(config.gradcheck_tolerance)) {
    throw NumericError("gradient check failed: max relative error " + std::to_string(summary.max_relative_error) +
                       " >= " + std::to_string(config.gradcheck_tolerance));
  }
  return 0;
}

inline int cmd_lambda_sweep(const RunOptions& run) {
  const auto config = load_run_config(run);
  fs::create_directories(run.out_dir);
  echo_config(config, run.out_dir);
  const auto data = prepare_data(config);
  auto csv = open_output(fs::path(run.out_dir) / "lambda_sweep.csv");
  csv << "lambda,accuracy,macro_f,avg_E_doc,avg_E_token\n";
  csv.precision(10);
  std::size_t index = 0;
  with_precision(config.precision, [&]<typename T>() {
    lambda_sweep<T>(config, data, [&](const SweepRow& row, const TrainResult<T>& result) {
      const auto dir = fs::path(run.out_dir) / ("lambda-" + std::to_string(index++));
      fs::create_directories(dir);
      auto run_config = config;
      run_config.train.lambda = row.lambda;
      save_checkpoint(Checkpoint<T>{result.params, result.state, checkpoint_metadata(run_config, data, result)},
                      (dir / "model.ckpt").string());
      csv << row.lambda << ',' << row.accuracy << ',' << row.macro_f1 << ',' << row.avg_doc_entropy << ','
          << row.avg_token_entropy << '\n';
      csv.flush();
      std::cerr << "lambda=" << row.lambda << " accuracy=" << row.accuracy << " avg_E_doc=" << row.avg_doc_entropy
                << '\n';
    });
    return 0;
  });
  return 0;
}

inline void write_error_record(const RunOptions& run, const std::string& kind, const std::string& message) {
  const nlohmann::json record = {{"status", "error"}, {"subcommand", run.subcommand}, {"error", kind}, {"message", message}};
  std::cerr << record.dump() << '\n';
  std::error_code ec;
  fs::create_directories(run.out_dir, ec);
  if (ec) return;
  std::ofstream out(fs::path(run.out_dir) / "error.json", std::ios::trunc);
  if (out) out << record.dump(2) << '\n';
}

}  // namespace detail

inline int dispatch(const RunOptions& run) {
  using namespace detail;
  try {
    if (run.subcommand == "prepare") return cmd_prepare(run);
    if (run.subcommand == "train") return cmd_train(run);
    if (run.subcommand == "eval") return cmd_eval(run);
    if (run.subcommand == "topics") return cmd_topics(run);
    if (run.subcommand == "coherence") return cmd_coherence(run);
    if (run.subcommand == "entropy-report") return cmd_entropy_report(run);
    if (run.subcommand == "gradcheck") return cmd_gradcheck(run);
    if (run.subcommand == "lambda-sweep") return cmd_lambda_sweep(run);
    throw ConfigError("unknown subcommand '" + run.subcommand + "'");
  } catch (const ConfigError& e) {
    write_error_record(run, "config", e.what());
    return 2;
  } catch (const IoError& e) {
    write_error_record(run, "io", e.what());
    return 3;
  } catch (const FormatError& e) {
    write_error_record(run, "format", e.what());
    return 4;
  } catch (const NumericError& e) {
    write_error_record(run, "numeric", e.what());
    return 5;
  } catch (const std::exception& e) {
    write_error_record(run, "internal", e.what());
    return 1;
  }
}

// Parses argv-style arguments (without the program name) and runs.
inline int run(std::vector<std::string> args) {
  CLI::App app{"Two-level attention text classifier: training, topics, coherence and entropy diagnostics"};
  app.require_subcommand(1);
  RunOptions opts;
  std::string seeds_text;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prepare", "load the corpus, build the vocabulary and write split manifests"},
      {"train", "train a model and checkpoint the best validation epoch"},
      {"eval", "evaluate a checkpoint on the validation and test splits"},
      {"topics", "extract topic descriptors and document-token matrices"},
      {"coherence", "score topic descriptors with C_v"},
      {"entropy-report", "document- and token-level attention entropies"},
      {"gradcheck", "compare analytic gradients with central finite differences"},
      {"lambda-sweep", "train across lambda values and tabulate accuracy and entropy"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_path, "key = value configuration file");
    sub->add_option("--set", opts.overrides, "override a configuration key (key=value), repeatable");
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--seed", opts.seed, "model seed");
    sub->add_option("--seeds", seeds_text, "comma-separated seed list (train); bare --seeds means 1,2,3,4,5")
        ->expected(0, 1);
    sub->add_option("--threads", opts.threads, "worker threads (default: BATM_THREADS or all cores)");
    sub->add_option("--checkpoint", opts.checkpoint, "checkpoint to load (default: <out>/model.ckpt)");
    sub->final_callback([&opts, name = name] { opts.subcommand = name; });
  }
  app.footer("Configuration keys:\n" + config_help());
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  bool bare_seeds = false;
  for (auto* sub : app.get_subcommands()) bare_seeds = bare_seeds || sub->count("--seeds") > 0;
  if (bare_seeds && batm::detail::trim(seeds_text).empty()) seeds_text = "1,2,3,4,5";
  for (const auto& item : batm::detail::split_list(seeds_text)) {
    try {
      opts.seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      std::cerr << "invalid seed '" << item << "'\n";
      return 2;
    }
  }
  return dispatch(opts);
}

}  // namespace batm::cli
