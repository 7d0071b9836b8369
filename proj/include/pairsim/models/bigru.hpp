#pragma once

#include <string>
#include <vector>

#include "pairsim/models/common.hpp"

namespace pairsim {

// One GRU step:
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   hh = tanh(W_h x + U_h (r . h) + b_h)
//   h' = (1 - z) . h + z . hh
inline Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const ParamMap& live,
                       const std::string& prefix) {
  Tensor z = sigmoid(add(affine(x, live.at(prefix + ".w_z"), live.at(prefix + ".b_z")),
                         linear(h_prev, live.at(prefix + ".u_z"))));
  Tensor r = sigmoid(add(affine(x, live.at(prefix + ".w_r"), live.at(prefix + ".b_r")),
                         linear(h_prev, live.at(prefix + ".u_r"))));
  Tensor hh = tanh_op(add(affine(x, live.at(prefix + ".w_h"), live.at(prefix + ".b_h")),
                          linear(mul(r, h_prev), live.at(prefix + ".u_h"))));
  return add(mul(one_minus(z), h_prev), mul(z, hh));
}

// Bidirectional GRU over the non-PAD prefix of a CONCAT-encoded pair; the
// final forward and backward states feed a 2-way softmax head. Running only
// over the prefix is what makes appended padding a no-op.
inline Tensor bigru_pair_logits(const EncodedPair& pair, const ParamMap& live,
                                const ModelConfig& cfg) {
  if (pair.scheme != PackingScheme::kConcat)
    throw ShapeError("bigru forward requires CONCAT packing");
  std::size_t len = pair.len_a;
  std::vector<int> ids(pair.seq_a.begin(), pair.seq_a.begin() + static_cast<long>(len));
  Tensor x = gather(live.at("embed"), ids, Vocabulary::kPad);

  Tensor h_fwd({cfg.hidden}, 0.0);
  for (std::size_t t = 0; t < len; ++t) h_fwd = gru_cell(row(x, t), h_fwd, live, "gru.fwd");

  Tensor rep = h_fwd;
  if (cfg.bidirectional) {
    Tensor h_bwd({cfg.hidden}, 0.0);
    for (std::size_t t = len; t-- > 0;) h_bwd = gru_cell(row(x, t), h_bwd, live, "gru.bwd");
    rep = concat({h_fwd, h_bwd}, 0);
  }
  return affine(rep, live.at("gru.head.w"), live.at("gru.head.b"));
}

namespace detail {

inline void add_gru_direction(ParameterSet& ps, const std::string& prefix, std::size_t in_dim,
                              std::size_t hidden, std::uint64_t seed) {
  for (const char* gate : {"z", "r", "h"}) {
    add_projection(ps, prefix + ".w_" + gate, {in_dim, hidden}, seed);
    add_projection(ps, prefix + ".u_" + gate, {hidden, hidden}, seed);
    add_zeros(ps, prefix + ".b_" + gate, {hidden});
  }
}

inline void add_bigru_params(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  add_embedding(ps, "embed", cfg.vocab_size, cfg.embed_dim, seed, cfg.init_scale);
  add_gru_direction(ps, "gru.fwd", cfg.embed_dim, cfg.hidden, seed);
  if (cfg.bidirectional)
    add_gru_direction(ps, "gru.bwd", cfg.embed_dim, cfg.hidden, seed);
  std::size_t rep = cfg.bidirectional ? 2 * cfg.hidden : cfg.hidden;
  add_projection(ps, "gru.head.w", {rep, 2}, seed);
  add_zeros(ps, "gru.head.b", {2});
}

inline std::size_t bigru_param_count(const ModelConfig& cfg) {
  std::size_t dirs = cfg.bidirectional ? 2 : 1;
  std::size_t per_dir = 3 * (cfg.embed_dim * cfg.hidden + cfg.hidden * cfg.hidden + cfg.hidden);
  std::size_t rep = dirs * cfg.hidden;
  return cfg.vocab_size * cfg.embed_dim + dirs * per_dir + rep * 2 + 2;
}

}  // namespace detail

}  // namespace pairsim
