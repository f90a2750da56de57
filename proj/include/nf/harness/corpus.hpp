// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nf/kv_config.hpp"
#include "nf/model/train.hpp"

namespace nf {

enum class TaskKind { kCharLm, kModularArith, kCopyLookup, kLongRangeKv, kThinkAnswer };

std::string task_name(TaskKind task);
// Throws ConfigError for an unknown name.
TaskKind parse_task(const std::string& name);

// Token ids 0..3 are pad, eos, think-open and think-close in every task.
// Every sequence is exactly seq_len tokens long and ends with eos.
struct CorpusSpec {
  TaskKind task = TaskKind::kCharLm;
  std::size_t vocab_size = 64;
  std::size_t seq_len = 64;
  std::size_t count = 256;  // sequences
  std::uint64_t seed = 0;
  // Index of the first generated sequence. Sequence i is a function of the
  // seed and its index only, so a corpus starting past another one's last
  // index is a disjoint sample from the same distribution.
  std::size_t first_index = 0;
  // modular-arith and think-answer: numbers 0..modulus−1.
  std::size_t modulus = 10;
  // long-range-kv: key→value pairs per sequence and the gap range between a
  // key's first occurrence and its recurrence.
  std::size_t pairs = 2;
  std::size_t min_gap = 8;
  std::size_t max_gap = 32;

  // Throws ConfigError when the vocabulary cannot hold the task's reserved
  // tokens or the length cannot hold one example.
  void validate() const;
  // Keys under `section`: task, vocab_size, seq_len, count, seed,
  // first_index, modulus, pairs, min_gap, max_gap.
  static CorpusSpec from_config(const KeyValueConfig& section);
  void to_config(KeyValueConfig& out, const std::string& section) const;
};

// Pure function of the spec.
std::vector<Sequence> generate_corpus(const CorpusSpec& spec);

// Positions whose tokens are determined by earlier tokens: sums, copied
// halves, recurring values and final answers. char-lm has none.
std::vector<std::size_t> answer_positions(const CorpusSpec& spec, const Sequence& seq);

// think-answer layout: operands, think-open, running sums, think-close,
// answer, eos.
struct ThinkAnswerExample {
  Sequence prompt;  // operands followed by think-open
  std::size_t steps = 0;
  TokenId answer = 0;
};
ThinkAnswerExample split_think_answer(const CorpusSpec& spec, const Sequence& seq);

// "NFTK" file: 16-byte header {magic, u32 version, u32 vocab, u32 count}
// followed by `count` little-endian u32 token ids. Sequences are stored back
// to back, each terminated by eos.
inline constexpr std::uint32_t kCorpusVersion = 1;

std::vector<std::uint8_t> serialize_corpus(const std::vector<Sequence>& sequences,
                                           std::size_t vocab_size);
// Throws FormatError for a bad header, truncation, ids outside the
// vocabulary or a missing final eos.
std::vector<Sequence> deserialize_corpus(const std::vector<std::uint8_t>& bytes,
                                         std::size_t* vocab_size = nullptr);
// Throw IoError when the file cannot be written or read.
void save_corpus(const std::filesystem::path& path, const std::vector<Sequence>& sequences,
                 std::size_t vocab_size);
std::vector<Sequence> load_corpus(const std::filesystem::path& path,
                                  std::size_t* vocab_size = nullptr);

}  // namespace nf
