// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "nf/bytes.hpp"
#include "nf/quant/mxfp8.hpp"
#include "nf/quant/nvfp4.hpp"

namespace nf::quant {

// Layout: u8 format tag (1 = NVFP4, 2 = MXFP8), u32 rank, u64 dims, u8 block
// layout (NVFP4 only), then scales, then element codes. NVFP4 stores the f32
// global scale before its block scales and packs codes two per byte with the
// even index in the low nibble. All integers little-endian.
void write_nvfp4(ByteWriter& w, const QuantizedNvfp4& q);
QuantizedNvfp4 read_nvfp4(ByteReader& r);
void write_mxfp8(ByteWriter& w, const QuantizedMxfp8& q);
QuantizedMxfp8 read_mxfp8(ByteReader& r);

std::vector<std::uint8_t> pack_nibbles(const std::vector<std::uint8_t>& codes);
std::vector<std::uint8_t> unpack_nibbles(const std::vector<std::uint8_t>& packed,
                                         std::size_t count);

}  // namespace nf::quant
