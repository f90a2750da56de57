// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace nf::testing {

// Independent decode of the E2M1 bit layout: sign | 2-bit exponent (bias 1) |
// 1-bit mantissa.
inline double e2m1_bits(int code) {
  const int s = (code >> 3) & 1, e = (code >> 1) & 3, m = code & 1;
  const double mag = e == 0 ? 0.5 * m : std::ldexp(1.0 + 0.5 * m, e - 1);
  return s ? -mag : mag;
}

// Independent decode of E4M3 (bias 7, no infinities).
inline double e4m3_bits(int code) {
  const int s = (code >> 7) & 1, e = (code >> 3) & 0xF, m = code & 7;
  const double mag = e == 0 ? m * std::ldexp(1.0, -9) : (1.0 + m / 8.0) * std::ldexp(1.0, e - 7);
  return s ? -mag : mag;
}

inline std::vector<double> e4m3_magnitudes() {
  std::vector<double> v;
  for (int c = 0; c < 0x7F; ++c) v.push_back(e4m3_bits(c));
  return v;
}

// Brute-force nearest-even over the 8 E2M1 magnitudes.
inline double e2m1_nearest_oracle(double x) {
  const double m = std::min(std::abs(x), 6.0);
  int best = 0;
  for (int c = 1; c < 8; ++c) {
    const double d = std::abs(e2m1_bits(c) - m), db = std::abs(e2m1_bits(best) - m);
    if (d < db || (d == db && c % 2 == 0)) best = c;
  }
  return x < 0 ? -e2m1_bits(best) : e2m1_bits(best);
}

}  // namespace nf::testing
