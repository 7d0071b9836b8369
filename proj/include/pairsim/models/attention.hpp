#pragma once

#include <string>
#include <vector>

#include "pairsim/models/common.hpp"

namespace pairsim {

// Per-layer state of the encoder stack: hidden[l] is the stacked matrix of
// the n per-position hidden vectors after layer l (hidden[0] holds the
// position-encoded embeddings).
struct AttentionLayerStates {
  std::vector<Tensor> hidden;
  const Tensor& final_stack() const { return hidden.back(); }
};

inline AttentionLayerStates attention_encode(const std::vector<int>& ids, const ParamMap& live,
                                             const ModelConfig& cfg) {
  AttentionLayerStates states;
  Tensor x = gather(live.at("embed"), ids, Vocabulary::kPad);
  x = add(x, positional_encoding(ids.size(), cfg.model_dim));
  states.hidden.push_back(x);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    x = detail::encoder_layer(x, live, "attn.enc" + std::to_string(l), cfg);
    states.hidden.push_back(x);
  }
  return states;
}

// Stacked self-attention encoder over the CONCAT sequence (residual and
// layer norm off by default, per the reference configuration) with a
// single learned query decoding the final hidden stack into two logits.
inline Tensor attention_pair_logits(const EncodedPair& pair, const ParamMap& live,
                                    const ModelConfig& cfg) {
  if (pair.scheme != PackingScheme::kConcat)
    throw ShapeError("attention forward requires CONCAT packing");
  std::vector<int> ids(pair.seq_a.begin(), pair.seq_a.begin() + static_cast<long>(pair.len_a));
  AttentionLayerStates states = attention_encode(ids, live, cfg);
  Tensor y = multi_head_attention(live.at("attn.dec.query"), states.final_stack(),
                                  states.final_stack(), live, "attn.dec", cfg.heads);
  return affine(row(y, 0), live.at("attn.out.w"), live.at("attn.out.b"));
}

namespace detail {

inline void add_attention_params(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  add_embedding(ps, "embed", cfg.vocab_size, cfg.model_dim, seed, cfg.init_scale);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    add_encoder_layer_params(ps, "attn.enc" + std::to_string(l), cfg, seed);
  add_weight(ps, "attn.dec.query", {1, cfg.model_dim}, seed, cfg.init_scale);
  std::size_t d = cfg.model_dim, dk = d / cfg.heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    std::string hp = "attn.dec.head" + std::to_string(h);
    add_projection(ps, hp + ".wq", {d, dk}, seed);
    add_projection(ps, hp + ".wk", {d, dk}, seed);
    add_projection(ps, hp + ".wv", {d, dk}, seed);
  }
  add_projection(ps, "attn.dec.wo", {d, d}, seed);
  add_projection(ps, "attn.out.w", {d, 2}, seed);
  add_zeros(ps, "attn.out.b", {2});
}

inline std::size_t attention_param_count(const ModelConfig& cfg) {
  std::size_t d = cfg.model_dim;
  std::size_t n = cfg.vocab_size * d;
  n += cfg.layers * encoder_layer_param_count(cfg);
  n += d;              // decoder query
  n += 3 * d * d + d * d;  // decoder head projections + output projection
  n += d * 2 + 2;      // softmax head
  return n;
}

}  // namespace detail

}  // namespace pairsim
