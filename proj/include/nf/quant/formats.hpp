// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "nf/rng.hpp"

namespace nf::quant {

enum class Format { kReference, kNvfp4, kMxfp8 };

std::string format_name(Format f);
// Accepts "reference", "nvfp4", "mxfp8" (case-insensitive).
Format parse_format(const std::string& s);

// Stochastic rounding draws its uniform from counter_uniform(seed, element
// index), so results depend only on (seed, index) and never on call order.
struct RoundingMode {
  enum class Kind { kNearestEven, kStochastic };
  Kind kind = Kind::kNearestEven;
  std::uint64_t seed = 0;

  static RoundingMode nearest_even() { return {}; }
  static RoundingMode stochastic(std::uint64_t seed) { return {Kind::kStochastic, seed}; }
  bool is_stochastic() const { return kind == Kind::kStochastic; }
};

// E2M1: 1 sign, 2 exponent, 1 mantissa bit. Codes 0-7 are the magnitudes
// {0, 0.5, 1, 1.5, 2, 3, 4, 6}; bit 3 is the sign.
using E2m1Code = std::uint8_t;

inline constexpr float kE2m1Max = 6.0f;

float decode_e2m1(E2m1Code code);
// Nearest-even picks the closest grid value and breaks exact ties toward the
// even code; stochastic picks one of the two bracketing values. Magnitudes
// above 6 clamp to 6. Results that round to zero use the +0 code.
E2m1Code encode_e2m1(double x, RoundingMode mode = {}, std::uint64_t index = 0);

// E4M3 without infinities: bias 7, max 448, smallest subnormal 2^-9. Codes
// 0x7F and 0xFF are NaN.
inline constexpr float kE4m3Max = 448.0f;

enum class E4m3Rounding { kNearestEven, kUp, kStochastic };

float decode_e4m3(std::uint8_t code);
// kUp returns the smallest representable magnitude >= |x| (saturating at
// 448). Magnitudes above 448 saturate for every mode.
std::uint8_t encode_e4m3(double x, E4m3Rounding rounding = E4m3Rounding::kNearestEven,
                         std::uint64_t seed = 0, std::uint64_t index = 0);
inline std::uint8_t encode_e4m3(double x, RoundingMode mode, std::uint64_t index) {
  return encode_e4m3(x,
                     mode.is_stochastic() ? E4m3Rounding::kStochastic
                                          : E4m3Rounding::kNearestEven,
                     mode.seed, index);
}

// E8M0 power-of-two scale: value 2^(code − 127); code 0xFF is NaN.
inline constexpr int kE8m0MinExponent = -127;
inline constexpr int kE8m0MaxExponent = 127;
float decode_e8m0(std::uint8_t code);
// Clamps the exponent to [-127, 127].
std::uint8_t encode_e8m0(int exponent);

// Rounds x to one of the two grid points bracketing it, the upper one with
// probability (x − lower) / (upper − lower), using uniform draw u in [0, 1).
// grid must be sorted ascending; x is clamped to its range.
double stochastic_round_to_grid(double x, std::span<const double> grid, double u);
double stochastic_round_to_grid(double x, std::span<const double> grid, Rng& rng);

}  // namespace nf::quant
