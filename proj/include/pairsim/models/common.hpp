#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pairsim/model_config.hpp"
#include "pairsim/ops.hpp"
#include "pairsim/params.hpp"
#include "pairsim/prng.hpp"

namespace pairsim {

// Stable per-parameter init seed: independent of the order parameters are
// created in, so adding one parameter never reshuffles the others.
inline std::uint64_t param_seed(std::uint64_t master_seed, const std::string& name) {
  return SplitMix64(master_seed ^ fnv1a(name)).next();
}

namespace detail {

inline void add_weight(ParameterSet& ps, const std::string& name, std::vector<std::size_t> shape,
                       std::uint64_t seed, double scale) {
  ps.add(name, Tensor::seeded(std::move(shape), param_seed(seed, name), scale));
}

// LeCun-uniform: U[-s, s] with s = sqrt(3 / fan_in), so activation variance
// is preserved through stacked projections (matters most for the
// residual-free attention stack, where a flat scale vanishes geometrically).
inline void add_projection(ParameterSet& ps, const std::string& name,
                           std::vector<std::size_t> shape, std::uint64_t seed) {
  std::size_t fan_in = shape.size() == 3 ? shape[0] * shape[1] : shape[0];
  double s = std::sqrt(3.0 / static_cast<double>(fan_in));
  ps.add(name, Tensor::seeded(std::move(shape), param_seed(seed, name), s));
}

inline void add_zeros(ParameterSet& ps, const std::string& name, std::vector<std::size_t> shape) {
  ps.add(name, Tensor(std::move(shape), 0.0));
}

inline void add_ones(ParameterSet& ps, const std::string& name, std::vector<std::size_t> shape) {
  ps.add(name, Tensor(std::move(shape), 1.0));
}

// Token embedding with the PAD row pinned to zero (and excluded from
// gradient flow wherever it is gathered with skip_grad_id = kPad).
inline void add_embedding(ParameterSet& ps, const std::string& name, std::size_t vocab,
                          std::size_t dim, std::uint64_t seed, double scale) {
  Tensor t = Tensor::seeded({vocab, dim}, param_seed(seed, name), scale);
  for (std::size_t j = 0; j < dim; ++j) t.at(static_cast<std::size_t>(Vocabulary::kPad), j) = 0.0;
  ps.add(name, t);
}

}  // namespace detail

// Sinusoidal position table: PE[p,2i] = sin(p / 10000^(2i/d)),
// PE[p,2i+1] = cos(p / 10000^(2i/d)). Returned untracked.
inline Tensor positional_encoding(std::size_t n, std::size_t d) {
  if (d % 2 != 0) throw ShapeError("positional_encoding: model_dim must be even");
  Tensor pe({n, d});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i * 2 < d; ++i) {
      double angle = static_cast<double>(p) /
                     std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d));
      pe.at(p, 2 * i) = std::sin(angle);
      pe.at(p, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

// Scaled dot-product attention over `heads` learned subspaces. Keys beyond
// `valid_keys` are excluded from the softmax (the PAD mask); by default all
// key rows count. Parameters: {prefix}.head{h}.wq/wk/wv and {prefix}.wo.
inline Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                   const ParamMap& live, const std::string& prefix,
                                   std::size_t heads, std::size_t valid_keys = SIZE_MAX) {
  std::size_t d = queries.dim(1);
  if (d % heads != 0) throw ShapeError("multi_head_attention: dim not divisible by heads");
  std::size_t dk = d / heads;
  Tensor k = keys, v = values;
  if (valid_keys != SIZE_MAX && valid_keys < keys.dim(0)) {
    if (valid_keys == 0) throw ShapeError("multi_head_attention: no valid key positions");
    k = slice_rows(keys, 0, valid_keys);
    v = slice_rows(values, 0, valid_keys);
  }
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> contexts;
  contexts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    std::string hp = prefix + ".head" + std::to_string(h);
    Tensor qh = matmul(queries, live.at(hp + ".wq"));
    Tensor kh = matmul(k, live.at(hp + ".wk"));
    Tensor vh = matmul(v, live.at(hp + ".wv"));
    Tensor attn = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt_dk));
    contexts.push_back(matmul(attn, vh));
  }
  return matmul(concat(contexts, 1), live.at(prefix + ".wo"));
}

// Position-wise feed-forward: relu(x.w1 + b1).w2 + b2.
inline Tensor feed_forward(const Tensor& x, const ParamMap& live, const std::string& prefix) {
  Tensor h = relu(affine(x, live.at(prefix + ".w1"), live.at(prefix + ".b1")));
  return affine(h, live.at(prefix + ".w2"), live.at(prefix + ".b2"));
}

namespace detail {

inline void add_encoder_layer_params(ParameterSet& ps, const std::string& prefix,
                                     const ModelConfig& cfg, std::uint64_t seed) {
  std::size_t d = cfg.model_dim, dk = d / cfg.heads, f = cfg.resolved_ffn_dim();
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    std::string hp = prefix + ".head" + std::to_string(h);
    add_projection(ps, hp + ".wq", {d, dk}, seed);
    add_projection(ps, hp + ".wk", {d, dk}, seed);
    add_projection(ps, hp + ".wv", {d, dk}, seed);
  }
  add_projection(ps, prefix + ".wo", {d, d}, seed);
  add_projection(ps, prefix + ".ffn.w1", {d, f}, seed);
  add_zeros(ps, prefix + ".ffn.b1", {f});
  add_projection(ps, prefix + ".ffn.w2", {f, d}, seed);
  add_zeros(ps, prefix + ".ffn.b2", {d});
  if (cfg.use_layer_norm) {
    add_ones(ps, prefix + ".ln1.gamma", {d});
    add_zeros(ps, prefix + ".ln1.beta", {d});
    add_ones(ps, prefix + ".ln2.gamma", {d});
    add_zeros(ps, prefix + ".ln2.beta", {d});
  }
}

inline std::size_t encoder_layer_param_count(const ModelConfig& cfg) {
  std::size_t d = cfg.model_dim, f = cfg.resolved_ffn_dim();
  std::size_t n = 3 * d * d + d * d;       // per-head q/k/v projections + output
  n += d * f + f + f * d + d;              // feed-forward
  if (cfg.use_layer_norm) n += 4 * d;      // two layer norms
  return n;
}

// Self-attention encoder layer; residual and layer norm per config flags.
inline Tensor encoder_layer(const Tensor& x, const ParamMap& live, const std::string& prefix,
                            const ModelConfig& cfg) {
  Tensor a = multi_head_attention(x, x, x, live, prefix, cfg.heads);
  Tensor x1 = cfg.use_residual ? add(x, a) : a;
  if (cfg.use_layer_norm)
    x1 = layer_norm(x1, live.at(prefix + ".ln1.gamma"), live.at(prefix + ".ln1.beta"));
  Tensor f = feed_forward(x1, live, prefix + ".ffn");
  Tensor x2 = cfg.use_residual ? add(x1, f) : f;
  if (cfg.use_layer_norm)
    x2 = layer_norm(x2, live.at(prefix + ".ln2.gamma"), live.at(prefix + ".ln2.beta"));
  return x2;
}

}  // namespace detail

}  // namespace pairsim
