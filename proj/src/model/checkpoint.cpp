// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "nf/bytes.hpp"
#include "nf/error.hpp"

namespace nf {

namespace {

constexpr char kMagic[4] = {'N', 'F', 'R', 'G'};
constexpr std::uint8_t kFloat32 = 1;

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string text = model.config().to_config().to_text();
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text.data(), text.size());
  for (const auto& p : model.parameters()) {
    w.put_string(p.name);
    w.put<std::uint8_t>(kFloat32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.put<std::uint64_t>(d);
    w.put_bytes(p.tensor.data().data(), p.tensor.numel() * sizeof(float));
  }
  return w.take();
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic, not a model checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto length = r.get<std::uint64_t>();
  if (length > r.remaining()) throw FormatError("checkpoint: truncated config");
  std::string text(length, '\0');
  r.get_bytes(text.data(), length);
  Model model(ModelConfig::from_config(KeyValueConfig::parse(text)), 0);

  std::map<std::string, Tensor> params;
  for (const auto& p : model.parameters()) params.emplace(p.name, p.tensor);
  std::size_t loaded = 0;
  while (r.remaining() > 0) {
    const std::string name = r.get_string();
    auto it = params.find(name);
    if (it == params.end()) throw FormatError("checkpoint: unknown parameter '" + name + "'");
    if (r.get<std::uint8_t>() != kFloat32) {
      throw FormatError("checkpoint: parameter '" + name + "' has an unsupported dtype");
    }
    Shape shape(r.get<std::uint32_t>());
    for (std::size_t& d : shape) d = r.get<std::uint64_t>();
    Tensor& t = it->second;
    if (shape != t.shape()) {
      throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                        ", config implies " + shape_str(t.shape()));
    }
    r.get_bytes(t.mutable_data().data(), t.numel() * sizeof(float));
    ++loaded;
  }
  if (loaded != params.size()) {
    throw FormatError("checkpoint: " + std::to_string(params.size() - loaded) +
                      " parameters missing");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace nf
