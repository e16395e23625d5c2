#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextclip/binio.hpp"
#include "nextclip/error.hpp"
#include "nextclip/model.hpp"

namespace nextclip {

// Checkpoint container: "NCKP", u32 version, u32 header byte length, UTF-8
// JSON header, then fp32 little-endian tensor payloads. The header holds
// the model config, a manifest {name, shape, offset} with byte offsets
// relative to the start of the payload area, and free-form metadata.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlob {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<float> values;
};

struct CheckpointFile {
  nlohmann::json header;
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file) {
  nlohmann::json header = file.header;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : file.tensors) {
    manifest.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.values.size()) * sizeof(float);
  }
  header["tensors"] = manifest;
  const std::string text = header.dump();
  binio::Writer w;
  w.bytes("NCKP", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  for (const auto& t : file.tensors) w.floats(t.values);
  return w.buffer();
}

inline CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string_view(magic, 4) != "NCKP") fail(ErrorCode::BadMagic, "not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::VersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = r.get<std::uint32_t>();
  std::string text(len, '\0');
  r.bytes(text.data(), len);
  CheckpointFile file;
  try {
    file.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigMismatch, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::size_t base = r.position();
  for (const auto& entry : file.header.at("tensors")) {
    TensorBlob t;
    t.name = entry.at("name").get<std::string>();
    t.rows = entry.at("shape").at(0).get<int>();
    t.cols = entry.at("shape").at(1).get<int>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
    if (base + offset + n * sizeof(float) > bytes.size()) fail(ErrorCode::Truncated, "tensor " + t.name + " truncated");
    binio::Reader tr(bytes.subspan(base + offset, n * sizeof(float)));
    t.values.resize(n);
    tr.floats(t.values);
    file.tensors.push_back(std::move(t));
  }
  return file;
}

/// Appends every parameter tensor, names prefixed with `prefix`.
inline void append_params(CheckpointFile& file, const ModelParams<float>& params, const std::string& prefix = "") {
  params.for_each([&](const std::string& name, const Matrix<float>& m, bool) {
    TensorBlob t{prefix + name, static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                 std::vector<float>(m.data(), m.data() + m.size())};
    file.tensors.push_back(std::move(t));
  });
}

/// Fills a parameter set shaped by `cfg` from the file's tensors named
/// prefix + name. Missing tensors or shape disagreements are rejected.
inline ModelParams<float> extract_params(const CheckpointFile& file, const ModelConfig& cfg,
                                         const std::string& prefix = "") {
  ModelParams<float> params = ModelParams<float>::allocate<float>(cfg);
  params.for_each([&](const std::string& name, Matrix<float>& m, bool) {
    const TensorBlob* t = file.find(prefix + name);
    if (!t) fail(ErrorCode::ConfigMismatch, "checkpoint lacks tensor " + prefix + name);
    if (t->rows != m.rows() || t->cols != m.cols()) {
      fail(ErrorCode::ConfigMismatch, "tensor " + prefix + name + " has shape " + std::to_string(t->rows) + "x" +
                                          std::to_string(t->cols) + ", config implies " +
                                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    std::copy(t->values.begin(), t->values.end(), m.data());
  });
  return params;
}

inline void save_model(const std::string& path, const ModelParams<float>& params, nlohmann::json meta = {}) {
  CheckpointFile file;
  file.header = nlohmann::json::object();
  file.header["config"] = params.config;
  if (!meta.is_null()) file.header["meta"] = std::move(meta);
  append_params(file, params);
  binio::write_file(path, encode_checkpoint(file));
}

inline ModelParams<float> load_model(const std::string& path) {
  const CheckpointFile file = decode_checkpoint(binio::read_file(path));
  ModelConfig cfg;
  try {
    cfg = file.header.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigMismatch, std::string("checkpoint config unreadable: ") + e.what());
  }
  return extract_params(file, cfg);
}

/// JSON header of a checkpoint (config, stage, meta, ...), payloads skipped.
inline nlohmann::json read_checkpoint_header(const std::string& path) {
  return decode_checkpoint(binio::read_file(path)).header;
}

}  // namespace nextclip
