// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/error.hpp"

namespace nf {

ParseError::ParseError(const std::string& what, std::size_t position)
    : Error(what + " (at index " + std::to_string(position) + ")"),
      position_(position) {}

}  // namespace nf
