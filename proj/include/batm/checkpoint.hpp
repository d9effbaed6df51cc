#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/common.hpp"
#include "batm/model.hpp"
#include "batm/training.hpp"

namespace batm {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

// Layout:
//   8 bytes   magic "BATMCKPT"
//   uint32    format version
//   uint64    header length in bytes
//   header    UTF-8 JSON: dtype, shape, tensor table, Adam step/hyper and
//             caller metadata (config, vocabulary, labels, metrics)
//   payload   raw little-endian tensors in header order: parameters, then
//             Adam first moments, then Adam second moments
inline constexpr char kCheckpointMagic[8] = {'B', 'A', 'T', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  AdamState<T> state;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json shape_to_json(const ModelShape& s) {
  return {{"vocab_size", s.vocab_size}, {"embed_dim", s.embed_dim}, {"num_heads", s.num_heads},
          {"head_dim", s.head_dim},     {"pool_dim", s.pool_dim},   {"num_classes", s.num_classes}};
}

inline ModelShape shape_from_json(const nlohmann::json& j) {
  ModelShape s;
  s.vocab_size = j.at("vocab_size").get<std::size_t>();
  s.embed_dim = j.at("embed_dim").get<std::size_t>();
  s.num_heads = j.at("num_heads").get<std::size_t>();
  s.head_dim = j.at("head_dim").get<std::size_t>();
  s.pool_dim = j.at("pool_dim").get<std::size_t>();
  s.num_classes = j.at("num_classes").get<std::size_t>();
  return s;
}

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& value, const std::string& what) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("checkpoint truncated while reading " + what);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::string& path) {
  nlohmann::json header;
  header["format"] = "batm-checkpoint";
  header["dtype"] = dtype_name<T>();
  header["shape"] = detail::shape_to_json(ckpt.params.shape());
  header["embedding_trainable"] = ckpt.params.embedding.trainable;
  header["embedding_coverage"] = ckpt.params.embedding.coverage;
  header["adam"] = {{"step", ckpt.state.step},
                    {"learning_rate", ckpt.state.hyper.learning_rate},
                    {"beta1", ckpt.state.hyper.beta1},
                    {"beta2", ckpt.state.hyper.beta2},
                    {"epsilon", ckpt.state.hyper.epsilon}};
  nlohmann::json tensors = nlohmann::json::array();
  visit_tensors([&](const TensorInfo& info, std::span<const T>) {
    tensors.push_back({{"name", info.name}, {"shape", info.shape}});
  }, ckpt.params);
  header["tensors"] = tensors;
  header["metadata"] = ckpt.metadata;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_raw(out, kCheckpointVersion);
  detail::write_raw(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto dump = [&](const ModelParams<T>& p) {
    visit_tensors([&](const TensorInfo&, std::span<const T> values) {
      out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    }, p);
  };
  dump(ckpt.params);
  dump(ckpt.state.first_moment);
  dump(ckpt.state.second_moment);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

// Reads only the JSON header.
inline nlohmann::json read_checkpoint_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError(path + ": not a BATM checkpoint");
  }
  std::uint32_t version = 0;
  detail::read_raw(in, version, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  std::uint64_t length = 0;
  detail::read_raw(in, length, "header length");
  if (length > (1ULL << 32)) throw FormatError(path + ": implausible header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw FormatError(path + ": checkpoint truncated in header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": corrupt checkpoint header: " + e.what());
  }
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint_header(in, path);
}

// Loads into precision T. A f64 checkpoint loaded as f32 is rounded to
// nearest with a warning; f32 into f64 is exact.
template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const auto header = read_checkpoint_header(in, path);
  Checkpoint<T> ckpt;
  try {
    const auto dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw FormatError(path + ": unknown dtype " + dtype);
    const bool stored_double = dtype == "f64";
    if (stored_double && std::is_same_v<T, float>) {
      emit_warning(path + ": converting 64-bit checkpoint to 32-bit (values rounded to nearest float)");
    }
    const auto shape = detail::shape_from_json(header.at("shape"));
    ckpt.params = zero_params<T>(shape);
    ckpt.params.embedding.trainable = header.at("embedding_trainable").get<bool>();
    ckpt.params.embedding.coverage = header.at("embedding_coverage").get<double>();
    ckpt.state = AdamState<T>::for_params(ckpt.params);
    const auto& adam = header.at("adam");
    ckpt.state.step = adam.at("step").get<std::uint64_t>();
    ckpt.state.hyper = {adam.at("learning_rate").get<double>(), adam.at("beta1").get<double>(),
                        adam.at("beta2").get<double>(), adam.at("epsilon").get<double>()};
    ckpt.metadata = header.value("metadata", nlohmann::json::object());

    const auto& table = header.at("tensors");
    std::size_t index = 0;
    visit_tensors([&](const TensorInfo& info, std::span<const T>) {
      if (index >= table.size() || table[index].at("name").get<std::string>() != info.name ||
          table[index].at("shape").get<std::vector<std::size_t>>() != info.shape) {
        throw FormatError(path + ": tensor table does not match declared shape at '" + info.name + "'");
      }
      ++index;
    }, ckpt.params);
    if (index != table.size()) throw FormatError(path + ": unexpected extra tensors in checkpoint");

    auto fill = [&](ModelParams<T>& p) {
      visit_tensors([&](const TensorInfo& info, std::span<T> values) {
        if (stored_double) {
          std::vector<double> buffer(values.size());
          in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * sizeof(double)));
          if (!in) throw FormatError(path + ": checkpoint truncated in tensor '" + info.name + "'");
          for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(buffer[i]);
        } else {
          std::vector<float> buffer(values.size());
          in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * sizeof(float)));
          if (!in) throw FormatError(path + ": checkpoint truncated in tensor '" + info.name + "'");
          for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(buffer[i]);
        }
      }, p);
    };
    fill(ckpt.params);
    fill(ckpt.state.first_moment);
    fill(ckpt.state.second_moment);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed checkpoint header: " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes after payload");
  return ckpt;
}

}  // namespace batm
