// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/harness/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <numeric>
#include <utility>

#include "nf/bytes.hpp"
#include "nf/error.hpp"
#include "nf/inference/probes.hpp"
#include "nf/rng.hpp"

namespace nf {

namespace {

constexpr TokenId kEos = 1;
constexpr TokenId kThinkOpen = 2;
constexpr TokenId kThinkClose = 3;
constexpr TokenId kFirstFree = 4;
constexpr char kMagic[4] = {'N', 'F', 'T', 'K'};

TokenId pick(Rng& rng, TokenId begin, std::size_t count) {
  return begin + static_cast<TokenId>(rng.uniform_int(0, static_cast<std::int64_t>(count) - 1));
}

// modular-arith symbols after the numbers.
struct ArithTokens {
  TokenId plus, equals, sep;
};
ArithTokens arith_tokens(std::size_t modulus) {
  const auto base = kFirstFree + static_cast<TokenId>(modulus);
  return {base, base + 1, base + 2};
}

Sequence char_lm(const CorpusSpec& spec, std::size_t index) {
  // Each symbol has three successors with probabilities 0.6, 0.3 and 0.1;
  // the table is shared by every sequence of the corpus.
  const std::size_t alphabet = spec.vocab_size - kFirstFree;
  Rng table_rng(mix_seed({spec.seed, 0}));
  std::vector<std::array<TokenId, 3>> next(alphabet);
  for (auto& succ : next) {
    for (TokenId& t : succ) t = pick(table_rng, kFirstFree, alphabet);
  }
  Rng rng(mix_seed({spec.seed, 1, index}));
  Sequence s;
  s.push_back(pick(rng, kFirstFree, alphabet));
  while (s.size() + 1 < spec.seq_len) {
    const double u = rng.uniform();
    const auto& succ = next[static_cast<std::size_t>(s.back() - kFirstFree)];
    s.push_back(u < 0.6 ? succ[0] : (u < 0.9 ? succ[1] : succ[2]));
  }
  s.push_back(kEos);
  return s;
}

Sequence modular_arith(const CorpusSpec& spec, std::size_t index) {
  const ArithTokens sym = arith_tokens(spec.modulus);
  Rng rng(mix_seed({spec.seed, 1, index}));
  Sequence s;
  while (s.size() + 6 <= spec.seq_len - 1) {
    const auto a = rng.uniform_int(0, static_cast<std::int64_t>(spec.modulus) - 1);
    const auto b = rng.uniform_int(0, static_cast<std::int64_t>(spec.modulus) - 1);
    const auto c = (a + b) % static_cast<std::int64_t>(spec.modulus);
    s.insert(s.end(), {kFirstFree + static_cast<TokenId>(a), sym.plus,
                       kFirstFree + static_cast<TokenId>(b), sym.equals,
                       kFirstFree + static_cast<TokenId>(c), sym.sep});
  }
  s.resize(spec.seq_len - 1, sym.sep);
  s.push_back(kEos);
  return s;
}

Sequence copy_lookup(const CorpusSpec& spec, std::size_t index) {
  const auto sep = static_cast<TokenId>(spec.vocab_size - 1);
  const std::size_t n = (spec.seq_len - 2) / 2;
  Rng rng(mix_seed({spec.seed, 1, index}));
  Sequence s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(pick(rng, kFirstFree, spec.vocab_size - 5));
  s.push_back(sep);
  for (std::size_t i = 0; i < n; ++i) s.push_back(s[i]);
  s.resize(spec.seq_len - 1, sep);
  s.push_back(kEos);
  return s;
}

Sequence long_range_kv(const CorpusSpec& spec, std::size_t index) {
  const KvVocab v = KvVocab::for_vocab(spec.vocab_size);
  Rng rng(mix_seed({spec.seed, 1, index}));
  const std::size_t body = spec.seq_len - 1;
  Sequence s(body);
  for (TokenId& t : s) t = pick(rng, v.filler_begin, v.filler_count);
  std::vector<TokenId> keys(v.key_count);
  std::iota(keys.begin(), keys.end(), v.key_begin);
  std::shuffle(keys.begin(), keys.end(), rng.engine());
  std::vector<bool> used(body, false);
  std::size_t placed = 0;
  for (std::size_t attempt = 0; placed < spec.pairs && attempt < 64 * spec.pairs; ++attempt) {
    const auto gap = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(spec.min_gap), static_cast<std::int64_t>(spec.max_gap)));
    if (gap + 2 > body) continue;
    const auto p = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(body - gap - 2)));
    const std::size_t slots[4] = {p, p + 1, p + gap, p + gap + 1};
    if (std::any_of(std::begin(slots), std::end(slots), [&](std::size_t i) { return used[i]; })) {
      continue;
    }
    const TokenId key = keys[placed++];
    const TokenId value = pick(rng, v.value_begin, v.value_count);
    s[p] = s[p + gap] = key;
    s[p + 1] = s[p + gap + 1] = value;
    for (std::size_t i : slots) used[i] = true;
  }
  s.push_back(kEos);
  return s;
}

Sequence think_answer(const CorpusSpec& spec, std::size_t index) {
  const std::size_t n = (spec.seq_len - 4) / 2;
  Rng rng(mix_seed({spec.seed, 1, index}));
  Sequence operands, sums;
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = rng.uniform_int(0, static_cast<std::int64_t>(spec.modulus) - 1);
    acc = (acc + a) % static_cast<std::int64_t>(spec.modulus);
    operands.push_back(kFirstFree + static_cast<TokenId>(a));
    sums.push_back(kFirstFree + static_cast<TokenId>(acc));
  }
  Sequence s = operands;
  s.push_back(kThinkOpen);
  s.insert(s.end(), sums.begin(), sums.end());
  s.push_back(kThinkClose);
  s.push_back(sums.back());
  s.push_back(kEos);
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::string task_name(TaskKind task) {
  switch (task) {
    case TaskKind::kCharLm:
      return "char-lm";
    case TaskKind::kModularArith:
      return "modular-arith";
    case TaskKind::kCopyLookup:
      return "copy-lookup";
    case TaskKind::kLongRangeKv:
      return "long-range-kv";
    case TaskKind::kThinkAnswer:
      return "think-answer";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  for (TaskKind t : {TaskKind::kCharLm, TaskKind::kModularArith, TaskKind::kCopyLookup,
                     TaskKind::kLongRangeKv, TaskKind::kThinkAnswer}) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown corpus task '" + name + "'");
}

void CorpusSpec::validate() const {
  auto need_vocab = [&](std::size_t n, const std::string& why) {
    if (vocab_size < n) {
      throw ConfigError(task_name(task) + ": vocab " + std::to_string(vocab_size) +
                        " is too small for " + why + " (needs " + std::to_string(n) + ")");
    }
  };
  if (count == 0) throw ConfigError("corpus count must be positive");
  switch (task) {
    case TaskKind::kCharLm:
      need_vocab(kFirstFree + 2, "the reserved tokens and an alphabet");
      if (seq_len < 2) throw ConfigError("char-lm needs seq_len >= 2");
      break;
    case TaskKind::kModularArith:
      if (modulus < 2) throw ConfigError("modular-arith needs modulus >= 2");
      need_vocab(kFirstFree + modulus + 3, "numbers and the + = ; symbols");
      if (seq_len < 7) throw ConfigError("modular-arith needs seq_len >= 7");
      break;
    case TaskKind::kCopyLookup:
      need_vocab(kFirstFree + 2, "the reserved tokens, symbols and a separator");
      if (seq_len < 4) throw ConfigError("copy-lookup needs seq_len >= 4");
      break;
    case TaskKind::kLongRangeKv:
      KvVocab::for_vocab(vocab_size);
      if (pairs == 0 || min_gap < 2 || min_gap > max_gap || max_gap + 3 > seq_len) {
        throw ConfigError("long-range-kv needs pairs > 0 and 2 <= min_gap <= max_gap <= seq_len - 3");
      }
      if (pairs > 16) throw ConfigError("long-range-kv supports at most 16 pairs");
      break;
    case TaskKind::kThinkAnswer:
      if (modulus < 2) throw ConfigError("think-answer needs modulus >= 2");
      need_vocab(kFirstFree + modulus, "numbers");
      if (seq_len < 6 || seq_len % 2 != 0) {
        throw ConfigError("think-answer needs an even seq_len >= 6");
      }
      break;
  }
}

CorpusSpec CorpusSpec::from_config(const KeyValueConfig& c) {
  CorpusSpec s;
  s.task = parse_task(c.get_string("task", task_name(s.task)));
  auto size = [&](const char* key, std::size_t fallback) {
    const std::int64_t v = c.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(std::string("data.") + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  s.vocab_size = size("vocab_size", s.vocab_size);
  s.seq_len = size("seq_len", s.seq_len);
  s.count = size("count", s.count);
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  s.first_index = size("first_index", s.first_index);
  s.modulus = size("modulus", s.modulus);
  s.pairs = size("pairs", s.pairs);
  s.min_gap = size("min_gap", s.min_gap);
  s.max_gap = size("max_gap", s.max_gap);
  return s;
}

void CorpusSpec::to_config(KeyValueConfig& out, const std::string& section) const {
  const std::string p = section + ".";
  out.set(p + "task", task_name(task));
  out.set(p + "vocab_size", std::to_string(vocab_size));
  out.set(p + "seq_len", std::to_string(seq_len));
  out.set(p + "count", std::to_string(count));
  out.set(p + "seed", std::to_string(seed));
  out.set(p + "first_index", std::to_string(first_index));
  out.set(p + "modulus", std::to_string(modulus));
  out.set(p + "pairs", std::to_string(pairs));
  out.set(p + "min_gap", std::to_string(min_gap));
  out.set(p + "max_gap", std::to_string(max_gap));
}

std::vector<Sequence> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<Sequence> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    switch (spec.task) {
      case TaskKind::kCharLm:
        out.push_back(char_lm(spec, spec.first_index + i));
        break;
      case TaskKind::kModularArith:
        out.push_back(modular_arith(spec, spec.first_index + i));
        break;
      case TaskKind::kCopyLookup:
        out.push_back(copy_lookup(spec, spec.first_index + i));
        break;
      case TaskKind::kLongRangeKv:
        out.push_back(long_range_kv(spec, spec.first_index + i));
        break;
      case TaskKind::kThinkAnswer:
        out.push_back(think_answer(spec, spec.first_index + i));
        break;
    }
  }
  return out;
}

std::vector<std::size_t> answer_positions(const CorpusSpec& spec, const Sequence& seq) {
  std::vector<std::size_t> out;
  switch (spec.task) {
    case TaskKind::kCharLm:
      break;
    case TaskKind::kModularArith: {
      const ArithTokens sym = arith_tokens(spec.modulus);
      for (std::size_t i = 1; i < seq.size(); ++i) {
        if (seq[i - 1] == sym.equals) out.push_back(i);
      }
      break;
    }
    case TaskKind::kCopyLookup: {
      const std::size_t n = (spec.seq_len - 2) / 2;
      for (std::size_t i = n + 1; i < 2 * n + 1 && i < seq.size(); ++i) out.push_back(i);
      break;
    }
    case TaskKind::kLongRangeKv: {
      const KvVocab v = KvVocab::for_vocab(spec.vocab_size);
      std::vector<bool> seen(v.key_count, false);
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        if (!v.is_key(seq[i])) continue;
        auto flag = seen[static_cast<std::size_t>(seq[i] - v.key_begin)];
        if (flag) out.push_back(i + 1);
        flag = true;
      }
      break;
    }
    case TaskKind::kThinkAnswer: {
      const std::size_t n = (spec.seq_len - 4) / 2;
      for (std::size_t i = n + 1; i < 2 * n + 1; ++i) out.push_back(i);
      out.push_back(2 * n + 2);
      break;
    }
  }
  return out;
}

ThinkAnswerExample split_think_answer(const CorpusSpec& spec, const Sequence& seq) {
  if (spec.task != TaskKind::kThinkAnswer || seq.size() != spec.seq_len) {
    throw ContractError("split_think_answer needs a think-answer sequence");
  }
  const std::size_t n = (spec.seq_len - 4) / 2;
  ThinkAnswerExample ex;
  ex.prompt.assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(n + 1));
  ex.steps = n;
  ex.answer = seq[2 * n + 2];
  return ex;
}

std::vector<std::uint8_t> serialize_corpus(const std::vector<Sequence>& sequences,
                                           std::size_t vocab_size) {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size();
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCorpusVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(vocab_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(total));
  for (const auto& s : sequences) {
    if (s.empty() || s.back() != kEos) throw ContractError("corpus sequences must end with eos");
    for (TokenId t : s) w.put<std::uint32_t>(static_cast<std::uint32_t>(t));
  }
  return w.take();
}

std::vector<Sequence> deserialize_corpus(const std::vector<std::uint8_t>& bytes,
                                         std::size_t* vocab_size) {
  ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a corpus file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCorpusVersion) {
    throw FormatError("unsupported corpus version " + std::to_string(version));
  }
  const auto vocab = r.get<std::uint32_t>();
  const auto count = r.get<std::uint32_t>();
  if (r.remaining() != std::size_t{count} * 4) {
    throw FormatError("corpus body holds " + std::to_string(r.remaining()) + " bytes, header says " +
                      std::to_string(count) + " ids");
  }
  std::vector<Sequence> out;
  Sequence cur;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto id = r.get<std::uint32_t>();
    if (id >= vocab) throw FormatError("token id " + std::to_string(id) + " outside vocabulary");
    cur.push_back(static_cast<TokenId>(id));
    if (static_cast<TokenId>(id) == kEos) out.push_back(std::exchange(cur, {}));
  }
  if (!cur.empty()) throw FormatError("corpus ends without eos");
  if (vocab_size != nullptr) *vocab_size = vocab;
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Sequence>& sequences,
                 std::size_t vocab_size) {
  const auto bytes = serialize_corpus(sequences, vocab_size);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing corpus " + path.string());
}

std::vector<Sequence> load_corpus(const std::filesystem::path& path, std::size_t* vocab_size) {
  return deserialize_corpus(read_file(path), vocab_size);
}

}  // namespace nf
