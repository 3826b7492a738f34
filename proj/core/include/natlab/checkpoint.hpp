#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlab/adam.hpp"
#include "natlab/config.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

// Checkpoint container: 8-byte magic, u32 container version, u64 JSON header
// length, JSON header, then the raw little-endian tensor blob. The header
// describes every tensor (name, store, dtype, shape, offset) and carries the
// flat run config, the step counter, the master seed and the vocabulary, so
// a checkpoint is self-contained for decoding and for exact resume.
//
// Stores: "online" (theta), "average" (theta'), "adam.m"/"adam.v" (moments).

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as raw little-endian values");

constexpr char kCheckpointMagic[8] = {'N', 'A', 'T', 'L', 'A', 'B', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  uint32_t version = kCheckpointVersion;
  int64_t step = 0;
  uint64_t seed = 0;
  std::string precision;  // "f32" | "f64"
  KvMap config;
  std::vector<std::string> vocab_tokens;  // corpus tokens; reserved ids implied
};

template <class T>
struct Checkpoint {
  CheckpointHeader header;
  TensorMap<T> online;
  TensorMap<T> average;
  AdamState<T> adam;
  bool has_adam = false;
};

namespace ckpt_detail {

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

template <class T>
void describe_store(nlohmann::json& tensors, const char* store, const TensorMap<T>& map,
                    uint64_t& offset) {
  for (const auto& [name, t] : map) {
    nlohmann::json e;
    e["name"] = name;
    e["store"] = store;
    e["dtype"] = dtype_name<T>();
    e["shape"] = t.shape;
    e["offset"] = offset;
    e["bytes"] = static_cast<uint64_t>(t.v.size() * sizeof(T));
    tensors.push_back(e);
    offset += t.v.size() * sizeof(T);
  }
}

template <class T>
void write_store(std::ofstream& out, const TensorMap<T>& map) {
  for (const auto& [name, t] : map)
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(T)));
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const TensorMap<T>& online, const TensorMap<T>& average,
                     const AdamState<T>* adam) {
  using nlohmann::json;
  json j;
  j["version"] = header.version;
  j["step"] = header.step;
  j["seed"] = header.seed;
  j["precision"] = ckpt_detail::dtype_name<T>();
  j["config"] = header.config;
  j["vocab"] = header.vocab_tokens;
  json tensors = json::array();
  uint64_t offset = 0;
  ckpt_detail::describe_store(tensors, "online", online, offset);
  ckpt_detail::describe_store(tensors, "average", average, offset);
  if (adam) {
    ckpt_detail::describe_store(tensors, "adam.m", adam->m, offset);
    ckpt_detail::describe_store(tensors, "adam.v", adam->v, offset);
  }
  j["tensors"] = std::move(tensors);

  const std::string head = j.dump();
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write checkpoint '", path, "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  ckpt_detail::write_store(out, online);
  ckpt_detail::write_store(out, average);
  if (adam) {
    ckpt_detail::write_store(out, adam->m);
    ckpt_detail::write_store(out, adam->v);
  }
  check(out.good(), "write failed for checkpoint '", path, "'");
}

namespace ckpt_detail {

struct RawHeader {
  nlohmann::json json;
  uint64_t blob_start = 0;
};

inline RawHeader read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  check(in.good() && std::equal(magic, magic + 8, kCheckpointMagic),
        "'", path, "' is not a checkpoint file (bad magic)");
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  check(in.good() && version == kCheckpointVersion, "unsupported checkpoint version ", version,
        " in '", path, "'");
  uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  check(in.good(), "truncated checkpoint header in '", path, "'");
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  check(in.good(), "truncated checkpoint header in '", path, "'");
  RawHeader raw;
  raw.json = nlohmann::json::parse(head);
  raw.blob_start = sizeof(kCheckpointMagic) + sizeof(version) + sizeof(head_len) + head_len;
  return raw;
}

inline CheckpointHeader header_from_json(const nlohmann::json& j) {
  CheckpointHeader h;
  h.version = j.at("version").get<uint32_t>();
  h.step = j.at("step").get<int64_t>();
  h.seed = j.at("seed").get<uint64_t>();
  h.precision = j.at("precision").get<std::string>();
  h.config = j.at("config").get<KvMap>();
  h.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  return h;
}

}  // namespace ckpt_detail

inline CheckpointHeader peek_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint '", path, "'");
  return ckpt_detail::header_from_json(ckpt_detail::read_header(in, path).json);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint '", path, "'");
  auto raw = ckpt_detail::read_header(in, path);
  Checkpoint<T> ckpt;
  ckpt.header = ckpt_detail::header_from_json(raw.json);
  check(ckpt.header.precision == ckpt_detail::dtype_name<T>(), "checkpoint '", path,
        "' stores ", ckpt.header.precision, " tensors, loader expects ",
        ckpt_detail::dtype_name<T>());

  for (const auto& e : raw.json.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const std::string store = e.at("store").get<std::string>();
    const std::string dtype = e.at("dtype").get<std::string>();
    check(dtype == ckpt_detail::dtype_name<T>(), "tensor '", name, "' has dtype ", dtype);
    Shape shape = e.at("shape").get<Shape>();
    const uint64_t offset = e.at("offset").get<uint64_t>();
    const uint64_t bytes = e.at("bytes").get<uint64_t>();
    check(bytes == static_cast<uint64_t>(numel(shape)) * sizeof(T), "tensor '", name,
          "' byte count disagrees with shape ", shape_str(shape));
    TensorData<T> t(shape);
    in.seekg(static_cast<std::streamoff>(raw.blob_start + offset));
    in.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(bytes));
    check(in.good(), "truncated tensor '", name, "' in '", path, "'");
    if (store == "online") ckpt.online.emplace(name, std::move(t));
    else if (store == "average") ckpt.average.emplace(name, std::move(t));
    else if (store == "adam.m") { ckpt.adam.m.emplace(name, std::move(t)); ckpt.has_adam = true; }
    else if (store == "adam.v") { ckpt.adam.v.emplace(name, std::move(t)); ckpt.has_adam = true; }
    else fatal("unknown store '", store, "' in checkpoint '", path, "'");
  }
  ckpt.adam.t = ckpt.header.step;
  return ckpt;
}

}  // namespace natlab
