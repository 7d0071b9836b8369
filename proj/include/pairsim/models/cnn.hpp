#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "pairsim/models/common.hpp"

namespace pairsim {

// Siamese convolutional model: both questions pass through the same tower
// (shared weights), similarity is the cosine of the two pooled features and
// the label probability is a trainable logistic on that similarity.

namespace detail {

// One tower over the non-PAD prefix of a question. Each block runs the
// parallel filter widths, pools, aligns branch lengths and concatenates
// along channels; the final block output is globally max-pooled.
inline Tensor cnn_tower(const std::vector<int>& prefix_ids, const ParamMap& live,
                        const ModelConfig& cfg) {
  std::size_t wmax = *std::max_element(cfg.filter_widths.begin(), cfg.filter_widths.end());
  Tensor x = gather(live.at("embed"), prefix_ids, Vocabulary::kPad);
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    if (x.dim(0) < wmax) x = pad_rows(x, wmax);  // zero rows, not PAD lookups
    std::vector<Tensor> pooled;
    std::size_t min_len = SIZE_MAX;
    for (std::size_t i = 0; i < cfg.filter_widths.size(); ++i) {
      std::string p = "cnn.b" + std::to_string(b) + ".w" + std::to_string(cfg.filter_widths[i]);
      Tensor h = relu(conv1d(x, live.at(p + ".kernel"), live.at(p + ".bias")));
      Tensor m = max_pool1d(h, cfg.pool_window);
      min_len = std::min(min_len, m.dim(0));
      pooled.push_back(std::move(m));
    }
    for (Tensor& t : pooled)
      if (t.dim(0) > min_len) t = slice_rows(t, 0, min_len);
    x = concat(pooled, 1);
  }
  return global_max_pool(x);
}

}  // namespace detail

// Probability-of-similar logits for a SIAMESE-encoded pair. The two logits
// are [0, a*s + b] so that softmax reproduces sigmoid(a*s + b).
inline Tensor cnn_pair_logits(const EncodedPair& pair, const ParamMap& live,
                              const ModelConfig& cfg) {
  if (pair.scheme != PackingScheme::kSiamese)
    throw ShapeError("cnn forward requires SIAMESE packing");
  std::vector<int> a(pair.seq_a.begin(), pair.seq_a.begin() + static_cast<long>(pair.len_a));
  std::vector<int> b(pair.seq_b.begin(), pair.seq_b.begin() + static_cast<long>(pair.len_b));
  Tensor f1 = detail::cnn_tower(a, live, cfg);
  Tensor f2 = detail::cnn_tower(b, live, cfg);
  Tensor s = cosine_similarity(f1, f2);
  Tensor z = add(mul(live.at("cnn.head.scale"), s), live.at("cnn.head.bias"));
  return concat({Tensor::scalar(0.0), z}, 0);
}

namespace detail {

inline void add_cnn_params(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  add_embedding(ps, "embed", cfg.vocab_size, cfg.embed_dim, seed, cfg.init_scale);
  std::size_t c_in = cfg.embed_dim;
  std::size_t block_out = 0;
  for (std::size_t f : cfg.filters_per_width) block_out += f;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    for (std::size_t i = 0; i < cfg.filter_widths.size(); ++i) {
      std::string p = "cnn.b" + std::to_string(b) + ".w" + std::to_string(cfg.filter_widths[i]);
      add_projection(ps, p + ".kernel", {cfg.filter_widths[i], c_in, cfg.filters_per_width[i]},
                     seed);
      // small positive bias keeps fresh filters alive and off the relu kink
      ps.add(p + ".bias", Tensor({cfg.filters_per_width[i]}, 0.01));
    }
    c_in = block_out;
  }
  ps.add("cnn.head.scale", Tensor::scalar(1.0));
  ps.add("cnn.head.bias", Tensor::scalar(0.0));
}

inline std::size_t cnn_param_count(const ModelConfig& cfg) {
  std::size_t n = cfg.vocab_size * cfg.embed_dim;
  std::size_t c_in = cfg.embed_dim;
  std::size_t block_out = 0;
  for (std::size_t f : cfg.filters_per_width) block_out += f;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    for (std::size_t i = 0; i < cfg.filter_widths.size(); ++i)
      n += cfg.filter_widths[i] * c_in * cfg.filters_per_width[i] + cfg.filters_per_width[i];
    c_in = block_out;
  }
  return n + 2;  // logistic head scale + bias
}

}  // namespace detail

}  // namespace pairsim
