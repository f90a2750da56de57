// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/model/model.hpp"

#include <cmath>

#include "nf/error.hpp"
#include "nf/ops.hpp"

namespace nf {

using quant::LinearKind;

namespace {

void scale_in_place(const Linear& l, double factor) {
  Tensor w = l.weight();
  for (float& v : w.mutable_data()) v = static_cast<float>(v * factor);
}

std::vector<Linear*> block_linears(Block& b) {
  switch (b.kind) {
    case LayerKind::kMamba: return {&b.mamba.in_proj(), &b.mamba.out_proj()};
    case LayerKind::kAttention: return {&b.attention.qkv(), &b.attention.out_proj()};
    case LayerKind::kMoe: return b.moe.linears();
  }
  return {};
}

std::vector<Linear*> head_linears(MtpHead& h) {
  return {&h.proj, &h.ffn.gate(), &h.ffn.up(), &h.ffn.down()};
}

}  // namespace

std::size_t DecodeState::bytes() const {
  std::size_t total = 0;
  for (const MambaState& s : mamba) total += s.bytes();
  for (const KvCache& c : kv) total += c.bytes();
  return total;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  pattern_ = parse_layer_pattern(config_.pattern);
  const std::size_t d = config_.d_model;
  const double std0 = config_.init_std;
  // Residual-branch output projections start smaller so the stream's
  // variance stays bounded in depth.
  const double out_scale = 1.0 / std::sqrt(2.0 * double(pattern_.size()));
  Rng rng(seed);
  embedding_ = normal_tensor({config_.vocab_size, d}, rng, std0);
  for (LayerKind kind : pattern_.layers) {
    Block b;
    b.kind = kind;
    b.norm = Tensor::filled({d}, 1.0f).set_requires_grad(true);
    switch (kind) {
      case LayerKind::kMamba:
        b.mamba = Mamba2Layer(config_.mamba_config(), rng, std0);
        scale_in_place(b.mamba.out_proj(), out_scale);
        break;
      case LayerKind::kAttention:
        b.attention = AttentionLayer(config_.attention_config(), rng, std0);
        scale_in_place(b.attention.out_proj(), out_scale);
        break;
      case LayerKind::kMoe:
        b.moe = MoeLayer(config_.moe_config(), rng, std0);
        for (Expert& e : b.moe.experts()) scale_in_place(e.down(), out_scale);
        if (config_.moe.shared_expert) scale_in_place(b.moe.shared().down(), out_scale);
        if (config_.moe.latent()) scale_in_place(b.moe.latent_up(), out_scale);
        break;
    }
    blocks_.push_back(std::move(b));
  }
  final_norm_ = Tensor::filled({d}, 1.0f).set_requires_grad(true);
  for (std::size_t k = 0; k < config_.mtp_depth; ++k) {
    MtpHead h;
    h.hidden_norm = Tensor::filled({d}, 1.0f).set_requires_grad(true);
    h.embed_norm = Tensor::filled({d}, 1.0f).set_requires_grad(true);
    h.ffn_norm = Tensor::filled({d}, 1.0f).set_requires_grad(true);
    h.out_norm = Tensor::filled({d}, 1.0f).set_requires_grad(true);
    h.proj = Linear(2 * d, d, LinearKind::kMtpHead, rng, std0);
    h.ffn = Expert(d, d, LinearKind::kMtpHead, rng, std0);
    scale_in_place(h.ffn.down(), out_scale);
    mtp_.push_back(std::move(h));
  }
  std::uint64_t next_id = 1;
  for (Block& b : blocks_) {
    for (Linear* l : block_linears(b)) l->set_id(next_id++);
  }
  for (MtpHead& h : mtp_) {
    for (Linear* l : head_linears(h)) l->set_id(next_id++);
  }
  apply_precision(config_.precision);
}

void Model::apply_precision(const quant::PrecisionPolicy& policy) {
  config_.precision = policy;
  const std::size_t total = blocks_.size();
  for (std::size_t i = 0; i < total; ++i) {
    for (Linear* l : block_linears(blocks_[i])) {
      l->set_format(quant::resolve_precision({l->kind(), i, total}, policy));
    }
  }
  for (MtpHead& h : mtp_) {
    for (Linear* l : head_linears(h)) {
      l->set_format(quant::resolve_precision({l->kind(), total - 1, total}, policy));
    }
  }
}

DecodeState Model::new_decode_state() const {
  DecodeState s;
  for (const Block& b : blocks_) {
    if (b.kind == LayerKind::kMamba) s.mamba.push_back(b.mamba.initial_state());
    if (b.kind == LayerKind::kAttention) s.kv.push_back(b.attention.empty_cache());
  }
  return s;
}

TrunkOutput Model::extend(std::span<const TokenId> tokens, DecodeState& state,
                          const ForwardContext& ctx) const {
  if (state.mamba.size() != pattern_.mamba || state.kv.size() != pattern_.attention) {
    throw ContractError("decode state does not belong to this model");
  }
  if (tokens.empty()) throw ContractError("extend needs at least one token");
  Tensor x = nf::embedding(embedding_, tokens);
  Tensor aux = Tensor::scalar(0.0f);
  std::size_t mi = 0, ai = 0;
  for (const Block& b : blocks_) {
    Tensor n = rms_norm(x, b.norm, config_.norm_eps);
    Tensor y;
    switch (b.kind) {
      case LayerKind::kMamba:
        y = b.mamba.extend(n, state.mamba[mi++], ctx);
        break;
      case LayerKind::kAttention:
        y = b.attention.extend(n, state.kv[ai++], ctx);
        break;
      case LayerKind::kMoe: {
        MoeOutput out = b.moe.forward(n, ctx);
        y = out.y;
        aux = add(aux, out.aux_loss);
        break;
      }
    }
    x = add(x, y);
  }
  state.position += tokens.size();
  return {x, aux};
}

Tensor Model::head_logits(const Tensor& hidden) const {
  return matmul(rms_norm(hidden, final_norm_, config_.norm_eps), transpose(embedding_));
}

Tensor Model::mtp_logits(std::size_t depth, const Tensor& hidden,
                         std::span<const TokenId> shifted) const {
  if (depth == 0 || depth > mtp_.size()) {
    throw ContractError("MTP depth " + std::to_string(depth) + " not present");
  }
  if (hidden.dim(0) != shifted.size()) {
    throw DimensionError("mtp_logits: " + std::to_string(hidden.dim(0)) + " states but " +
                         std::to_string(shifted.size()) + " tokens");
  }
  const MtpHead& h = mtp_[depth - 1];
  const float eps = config_.norm_eps;
  const ForwardContext ref{false, 0};
  Tensor z = h.proj.forward(concat_cols({rms_norm(hidden, h.hidden_norm, eps),
                                         rms_norm(nf::embedding(embedding_, shifted), h.embed_norm, eps)}),
                            ref);
  z = add(z, h.ffn.forward(rms_norm(z, h.ffn_norm, eps), ref));
  return matmul(rms_norm(z, h.out_norm, eps), transpose(embedding_));
}

ModelOutput Model::forward(std::span<const TokenId> tokens, const ForwardContext& ctx) const {
  DecodeState state = new_decode_state();
  TrunkOutput trunk = extend(tokens, state, ctx);
  ModelOutput out;
  out.main_logits = head_logits(trunk.hidden);
  out.aux_loss = trunk.aux_loss;
  const std::size_t steps = tokens.size();
  for (std::size_t k = 1; k <= mtp_.size(); ++k) {
    if (steps < k + 2) {
      out.mtp_logits.push_back(Tensor({0, config_.vocab_size}));
      continue;
    }
    const std::size_t rows = steps - 1 - k;
    std::vector<std::size_t> idx(rows);
    for (std::size_t t = 0; t < rows; ++t) idx[t] = t;
    out.mtp_logits.push_back(mtp_logits(k, gather_rows(trunk.hidden, idx), tokens.subspan(k, rows)));
  }
  return out;
}

ParameterList Model::parameters() const {
  ParameterList out;
  out.push_back({"embedding", embedding_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    const std::string prefix = "block" + std::to_string(i);
    out.push_back({prefix + ".norm", b.norm});
    switch (b.kind) {
      case LayerKind::kMamba: b.mamba.append_parameters(prefix + ".mamba", out); break;
      case LayerKind::kAttention: b.attention.append_parameters(prefix + ".attention", out); break;
      case LayerKind::kMoe: b.moe.append_parameters(prefix + ".moe", out); break;
    }
  }
  out.push_back({"final_norm", final_norm_});
  for (std::size_t k = 0; k < mtp_.size(); ++k) {
    const MtpHead& h = mtp_[k];
    const std::string prefix = "mtp" + std::to_string(k + 1);
    out.push_back({prefix + ".hidden_norm", h.hidden_norm});
    out.push_back({prefix + ".embed_norm", h.embed_norm});
    h.proj.append_parameters(prefix + ".proj", out);
    out.push_back({prefix + ".ffn_norm", h.ffn_norm});
    h.ffn.append_parameters(prefix + ".ffn", out);
    out.push_back({prefix + ".out_norm", h.out_norm});
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

std::size_t Model::active_parameter_count() const {
  std::size_t inactive = 0;
  for (const Block& b : blocks_) {
    if (b.kind == LayerKind::kMoe) inactive += b.moe.total_parameters() - b.moe.active_parameters();
  }
  return parameter_count() - inactive;
}

std::vector<std::pair<quant::LayerDescriptor, const Linear*>> Model::linears() const {
  std::vector<std::pair<quant::LayerDescriptor, const Linear*>> out;
  const std::size_t total = blocks_.size();
  for (std::size_t i = 0; i < total; ++i) {
    for (Linear* l : block_linears(const_cast<Block&>(blocks_[i]))) {
      out.push_back({{l->kind(), i, total}, l});
    }
  }
  for (const MtpHead& h : mtp_) {
    for (Linear* l : head_linears(const_cast<MtpHead&>(h))) {
      out.push_back({{l->kind(), total - 1, total}, l});
    }
  }
  return out;
}

}  // namespace nf
