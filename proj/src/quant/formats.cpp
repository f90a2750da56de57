// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/formats.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "nf/error.hpp"

namespace nf::quant {

namespace {

constexpr std::array<double, 8> kE2m1Grid = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};

double e4m3_magnitude(std::uint8_t code7) {
  const int exp = (code7 >> 3) & 0xF;
  const int man = code7 & 0x7;
  if (exp == 0) return std::ldexp(double(man), -9);
  return std::ldexp(1.0 + man / 8.0, exp - 7);
}

// Magnitudes of codes 0..126, ascending.
const std::array<double, 127>& e4m3_grid() {
  static const std::array<double, 127> grid = [] {
    std::array<double, 127> g{};
    for (int c = 0; c < 127; ++c) g[c] = e4m3_magnitude(static_cast<std::uint8_t>(c));
    return g;
  }();
  return grid;
}

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw NumericInputError(std::string(what) + ": non-finite input");
  }
}

enum class Pick { kNearestEven, kUp, kStochastic };

// Index into an ascending magnitude grid for magnitude m >= 0.
template <std::size_t N>
std::size_t round_on_grid(const std::array<double, N>& grid, double m, Pick pick, double u) {
  if (m >= grid[N - 1]) return N - 1;
  const auto it = std::upper_bound(grid.begin(), grid.end(), m);
  const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  const std::size_t lo = hi - 1;
  if (grid[lo] == m) return lo;
  switch (pick) {
    case Pick::kUp:
      return hi;
    case Pick::kStochastic:
      return u < (m - grid[lo]) / (grid[hi] - grid[lo]) ? hi : lo;
    case Pick::kNearestEven:
      break;
  }
  const double dlo = m - grid[lo], dhi = grid[hi] - m;
  if (dlo < dhi) return lo;
  if (dhi < dlo) return hi;
  return (lo % 2 == 0) ? lo : hi;
}

}  // namespace

std::string format_name(Format f) {
  switch (f) {
    case Format::kReference:
      return "reference";
    case Format::kNvfp4:
      return "nvfp4";
    case Format::kMxfp8:
      return "mxfp8";
  }
  return "unknown";
}

Format parse_format(const std::string& s) {
  std::string low(s);
  std::transform(low.begin(), low.end(), low.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (low == "reference" || low == "ref" || low == "fp32") return Format::kReference;
  if (low == "nvfp4") return Format::kNvfp4;
  if (low == "mxfp8") return Format::kMxfp8;
  throw ConfigError("unknown number format '" + s + "'");
}

float decode_e2m1(E2m1Code code) {
  const double mag = kE2m1Grid[code & 0x7];
  return static_cast<float>((code & 0x8) ? -mag : mag);
}

E2m1Code encode_e2m1(double x, RoundingMode mode, std::uint64_t index) {
  require_finite(x, "encode_e2m1");
  const double u = mode.is_stochastic() ? counter_uniform(mode.seed, index) : 0.0;
  const std::size_t c = round_on_grid(
      kE2m1Grid, std::abs(x), mode.is_stochastic() ? Pick::kStochastic : Pick::kNearestEven,
      u);
  if (c == 0) return 0;
  return static_cast<E2m1Code>(c | (x < 0 ? 0x8 : 0x0));
}

float decode_e4m3(std::uint8_t code) {
  if ((code & 0x7F) == 0x7F) throw FormatError("E4M3 NaN code");
  const double mag = e4m3_magnitude(code & 0x7F);
  return static_cast<float>((code & 0x80) ? -mag : mag);
}

std::uint8_t encode_e4m3(double x, E4m3Rounding rounding, std::uint64_t seed,
                         std::uint64_t index) {
  require_finite(x, "encode_e4m3");
  Pick pick = Pick::kNearestEven;
  double u = 0.0;
  if (rounding == E4m3Rounding::kUp) pick = Pick::kUp;
  if (rounding == E4m3Rounding::kStochastic) {
    pick = Pick::kStochastic;
    u = counter_uniform(seed, index);
  }
  const std::size_t c = round_on_grid(e4m3_grid(), std::abs(x), pick, u);
  if (c == 0) return 0;
  return static_cast<std::uint8_t>(c | (x < 0 ? 0x80 : 0x00));
}

float decode_e8m0(std::uint8_t code) {
  if (code == 0xFF) throw FormatError("E8M0 NaN code");
  return std::ldexp(1.0f, int(code) - 127);
}

std::uint8_t encode_e8m0(int exponent) {
  exponent = std::clamp(exponent, kE8m0MinExponent, kE8m0MaxExponent);
  return static_cast<std::uint8_t>(exponent + 127);
}

double stochastic_round_to_grid(double x, std::span<const double> grid, double u) {
  if (grid.empty()) throw ContractError("stochastic_round_to_grid: empty grid");
  if (x <= grid.front()) return grid.front();
  if (x >= grid.back()) return grid.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const double upper = *it;
  const double lower = *(it - 1);
  if (lower == x) return x;
  return u < (x - lower) / (upper - lower) ? upper : lower;
}

double stochastic_round_to_grid(double x, std::span<const double> grid, Rng& rng) {
  return stochastic_round_to_grid(x, grid, rng.uniform());
}

}  // namespace nf::quant
