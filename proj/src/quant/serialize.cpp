// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/serialize.hpp"

#include "nf/error.hpp"

namespace nf::quant {

namespace {

constexpr std::uint8_t kTagNvfp4 = 1;
constexpr std::uint8_t kTagMxfp8 = 2;

void write_shape(ByteWriter& w, const Shape& shape) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.put<std::uint64_t>(d);
}

Shape read_shape(ByteReader& r) {
  const std::uint32_t rank = r.get<std::uint32_t>();
  if (rank > 8) throw FormatError("quantized tensor rank " + std::to_string(rank) + " too large");
  Shape shape(rank);
  for (auto& d : shape) d = r.get<std::uint64_t>();
  return shape;
}

void expect_tag(ByteReader& r, std::uint8_t tag) {
  const std::uint8_t got = r.get<std::uint8_t>();
  if (got != tag) {
    throw FormatError("quantized tensor tag " + std::to_string(got) + ", expected " +
                      std::to_string(tag));
  }
}

std::size_t rows_of(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

std::vector<std::uint8_t> pack_nibbles(const std::vector<std::uint8_t>& codes) {
  std::vector<std::uint8_t> packed((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::uint8_t nib = codes[i] & 0xF;
    packed[i / 2] |= (i % 2 == 0) ? nib : static_cast<std::uint8_t>(nib << 4);
  }
  return packed;
}

std::vector<std::uint8_t> unpack_nibbles(const std::vector<std::uint8_t>& packed,
                                         std::size_t count) {
  if (packed.size() * 2 < count) throw FormatError("packed code buffer too short");
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    codes[i] = (i % 2 == 0) ? (packed[i / 2] & 0xF) : (packed[i / 2] >> 4);
  }
  return codes;
}

void write_nvfp4(ByteWriter& w, const QuantizedNvfp4& q) {
  w.put<std::uint8_t>(kTagNvfp4);
  write_shape(w, q.shape);
  w.put<std::uint8_t>(q.layout == BlockLayout::k1d16 ? 1 : 2);
  w.put<float>(q.global_scale);
  w.put<std::uint64_t>(q.block_scales.size());
  w.put_bytes(q.block_scales.data(), q.block_scales.size());
  const std::vector<std::uint8_t> packed = pack_nibbles(q.codes);
  w.put<std::uint64_t>(q.codes.size());
  w.put_bytes(packed.data(), packed.size());
}

QuantizedNvfp4 read_nvfp4(ByteReader& r) {
  expect_tag(r, kTagNvfp4);
  QuantizedNvfp4 q;
  q.shape = read_shape(r);
  const std::uint8_t layout = r.get<std::uint8_t>();
  if (layout != 1 && layout != 2) throw FormatError("unknown NVFP4 block layout");
  q.layout = layout == 1 ? BlockLayout::k1d16 : BlockLayout::k2d16x16;
  q.cols = q.shape.empty() ? 1 : q.shape.back();
  q.rows = rows_of(q.shape);
  q.padded_cols = (q.cols + kNvfp4Block - 1) / kNvfp4Block * kNvfp4Block;
  q.padded_rows = q.layout == BlockLayout::k1d16
                      ? q.rows
                      : (q.rows + kNvfp4Block - 1) / kNvfp4Block * kNvfp4Block;
  q.global_scale = r.get<float>();
  const std::uint64_t nscales = r.get<std::uint64_t>();
  if (nscales != q.block_rows() * q.block_cols()) {
    throw FormatError("NVFP4 block scale count does not match shape");
  }
  q.block_scales.resize(nscales);
  r.get_bytes(q.block_scales.data(), nscales);
  const std::uint64_t ncodes = r.get<std::uint64_t>();
  if (ncodes != q.padded_rows * q.padded_cols) {
    throw FormatError("NVFP4 code count does not match shape");
  }
  std::vector<std::uint8_t> packed((ncodes + 1) / 2);
  r.get_bytes(packed.data(), packed.size());
  q.codes = unpack_nibbles(packed, ncodes);
  return q;
}

void write_mxfp8(ByteWriter& w, const QuantizedMxfp8& q) {
  w.put<std::uint8_t>(kTagMxfp8);
  write_shape(w, q.shape);
  w.put<std::uint64_t>(q.block_scales.size());
  w.put_bytes(q.block_scales.data(), q.block_scales.size());
  w.put<std::uint64_t>(q.codes.size());
  w.put_bytes(q.codes.data(), q.codes.size());
}

QuantizedMxfp8 read_mxfp8(ByteReader& r) {
  expect_tag(r, kTagMxfp8);
  QuantizedMxfp8 q;
  q.shape = read_shape(r);
  q.cols = q.shape.empty() ? 1 : q.shape.back();
  q.rows = rows_of(q.shape);
  q.padded_cols = (q.cols + kMxfp8Block - 1) / kMxfp8Block * kMxfp8Block;
  const std::uint64_t nscales = r.get<std::uint64_t>();
  if (nscales != q.rows * (q.padded_cols / kMxfp8Block)) {
    throw FormatError("MXFP8 block scale count does not match shape");
  }
  q.block_scales.resize(nscales);
  r.get_bytes(q.block_scales.data(), nscales);
  const std::uint64_t ncodes = r.get<std::uint64_t>();
  if (ncodes != q.rows * q.padded_cols) throw FormatError("MXFP8 code count does not match shape");
  q.codes.resize(ncodes);
  r.get_bytes(q.codes.data(), ncodes);
  return q;
}

}  // namespace nf::quant
