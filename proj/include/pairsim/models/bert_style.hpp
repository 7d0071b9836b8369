#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pairsim/models/common.hpp"

namespace pairsim {

// Masking for the masked-language-model objective: every non-special,
// non-PAD position is selected independently with probability `ratio`; if
// that selects nothing and a candidate exists, one seeded pick is forced.
struct MaskedTokens {
  std::vector<int> ids;                 // sequence with MASK substituted
  std::vector<std::size_t> positions;   // masked positions
  std::vector<int> targets;             // original ids at those positions
};

inline MaskedTokens mask_tokens(const std::vector<int>& seq, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ShapeError("mask_tokens: ratio must be in [0,1]");
  MaskedTokens out;
  out.ids = seq;
  SplitMix64 rng(seed);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] >= Vocabulary::kNumSpecials) candidates.push_back(i);
  for (std::size_t i : candidates) {
    if (rng.uniform() < ratio) {
      out.positions.push_back(i);
      out.targets.push_back(seq[i]);
      out.ids[i] = Vocabulary::kMask;
    }
  }
  if (out.positions.empty() && ratio > 0.0 && !candidates.empty()) {
    std::size_t i = candidates[rng.next_below(candidates.size())];
    out.positions.push_back(i);
    out.targets.push_back(seq[i]);
    out.ids[i] = Vocabulary::kMask;
  }
  return out;
}

namespace detail {

// Transformer encoder over token + position + segment embeddings, with
// residual connections and layer norm (post-norm); this is what separates
// the BERT-style model from the plain attention model.
inline Tensor bert_encode(const std::vector<int>& ids, const std::vector<int>& segments,
                          const ParamMap& live, const ModelConfig& cfg) {
  std::size_t len = ids.size();
  if (len > cfg.max_seq_len)
    throw DataError("sequence length " + std::to_string(len) + " exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
  std::vector<int> positions(len);
  for (std::size_t i = 0; i < len; ++i) positions[i] = static_cast<int>(i);
  Tensor x = add(add(gather(live.at("embed"), ids, Vocabulary::kPad),
                     gather(live.at("pos_embed"), positions)),
                 gather(live.at("seg_embed"), segments));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    x = encoder_layer(x, live, "bert.enc" + std::to_string(l), cfg);
  return x;
}

}  // namespace detail

// Classification logits read from the CLS (index 0) representation.
inline Tensor bert_pair_logits(const EncodedPair& pair, const ParamMap& live,
                               const ModelConfig& cfg) {
  if (pair.scheme != PackingScheme::kPaired)
    throw ShapeError("bert forward requires PAIRED packing");
  std::size_t len = pair.len_a;
  std::vector<int> ids(pair.seq_a.begin(), pair.seq_a.begin() + static_cast<long>(len));
  std::vector<int> segs(pair.segment_ids.begin(),
                        pair.segment_ids.begin() + static_cast<long>(len));
  Tensor h = detail::bert_encode(ids, segs, live, cfg);
  return affine(row(h, 0), live.at("bert.cls.w"), live.at("bert.cls.b"));
}

// Mean cross-entropy of vocabulary predictions at the masked positions of a
// batch. A batch with no masked position has no defined mean and is an error.
inline Tensor mlm_loss(const std::vector<std::pair<MaskedTokens, std::vector<int>>>& batch,
                       const ParamMap& live, const ModelConfig& cfg) {
  std::vector<Tensor> losses;
  for (const auto& [masked, segments] : batch) {
    if (masked.positions.empty()) continue;
    Tensor h = detail::bert_encode(masked.ids, segments, live, cfg);
    for (std::size_t i = 0; i < masked.positions.size(); ++i) {
      Tensor logits =
          affine(row(h, masked.positions[i]), live.at("bert.mlm.w"), live.at("bert.mlm.b"));
      losses.push_back(cross_entropy(logits, masked.targets[i]));
    }
  }
  if (losses.empty()) throw NumericError("mlm_loss: no masked positions in batch");
  return mean_scalars(losses);
}

namespace detail {

inline void add_bert_params(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  add_embedding(ps, "embed", cfg.vocab_size, cfg.model_dim, seed, cfg.init_scale);
  add_weight(ps, "pos_embed", {cfg.max_seq_len, cfg.model_dim}, seed, cfg.init_scale);
  add_weight(ps, "seg_embed", {2, cfg.model_dim}, seed, cfg.init_scale);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    add_encoder_layer_params(ps, "bert.enc" + std::to_string(l), cfg, seed);
  add_projection(ps, "bert.cls.w", {cfg.model_dim, 2}, seed);
  add_zeros(ps, "bert.cls.b", {2});
  add_projection(ps, "bert.mlm.w", {cfg.model_dim, cfg.vocab_size}, seed);
  add_zeros(ps, "bert.mlm.b", {cfg.vocab_size});
}

inline std::size_t bert_param_count(const ModelConfig& cfg) {
  std::size_t d = cfg.model_dim, v = cfg.vocab_size;
  std::size_t n = v * d + cfg.max_seq_len * d + 2 * d;
  n += cfg.layers * encoder_layer_param_count(cfg);
  n += d * 2 + 2;      // classifier head
  n += d * v + v;      // masked-token prediction head
  return n;
}

}  // namespace detail

}  // namespace pairsim
