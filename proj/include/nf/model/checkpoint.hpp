// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nf/model/model.hpp"

namespace nf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, little-endian:
//   "NFRG"  u32 version  u64 config_length  config text (canonical key = value)
//   per parameter: u32 name_length, name, u8 dtype (1 = f32), u32 rank,
//                  u64 dims[rank], raw values
std::vector<std::uint8_t> serialize_model(const Model& model);
// Throws FormatError for a bad magic, an unsupported version, truncation or
// parameters that do not match the embedded config.
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace nf
