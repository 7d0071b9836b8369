#pragma once

#include <cmath>
#include <thread>
#include <vector>

#include "pairsim/models/attention.hpp"
#include "pairsim/models/bert_style.hpp"
#include "pairsim/models/bigru.hpp"
#include "pairsim/models/cnn.hpp"
#include "pairsim/models/common.hpp"

namespace pairsim {

inline ParameterSet build_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet ps;
  switch (cfg.family) {
    case Family::kCnn: detail::add_cnn_params(ps, cfg, seed); break;
    case Family::kBigru: detail::add_bigru_params(ps, cfg, seed); break;
    case Family::kAttention: detail::add_attention_params(ps, cfg, seed); break;
    case Family::kBertStyle: detail::add_bert_params(ps, cfg, seed); break;
  }
  return ps;
}

// Closed-form trainable-scalar count; asserted against the built set in tests.
inline std::size_t param_count(const ModelConfig& cfg) {
  switch (cfg.family) {
    case Family::kCnn: return detail::cnn_param_count(cfg);
    case Family::kBigru: return detail::bigru_param_count(cfg);
    case Family::kAttention: return detail::attention_param_count(cfg);
    case Family::kBertStyle: return detail::bert_param_count(cfg);
  }
  return 0;
}

// Two logits for a pair; softmax index 1 is the probability of "similar".
inline Tensor pair_logits(const ModelConfig& cfg, const ParamMap& live, const EncodedPair& pair) {
  switch (cfg.family) {
    case Family::kCnn: return cnn_pair_logits(pair, live, cfg);
    case Family::kBigru: return bigru_pair_logits(pair, live, cfg);
    case Family::kAttention: return attention_pair_logits(pair, live, cfg);
    case Family::kBertStyle: return bert_pair_logits(pair, live, cfg);
  }
  throw ShapeError("unknown family");
}

inline Tensor pair_loss(const ModelConfig& cfg, const ParamMap& live, const EncodedPair& pair) {
  if (!pair.label.has_value()) throw ShapeError("pair_loss: unlabeled pair");
  return cross_entropy(pair_logits(cfg, live, pair), *pair.label);
}

inline double probability_from_logits(const Tensor& logits) {
  double l0 = logits.at(0), l1 = logits.at(1);
  return detail::stable_sigmoid(l1 - l0);
}

inline double predict_probability(const ModelConfig& cfg, const ParamMap& raw,
                                  const EncodedPair& pair) {
  return probability_from_logits(pair_logits(cfg, raw, pair));
}

// Batch inference; `threads` bounds worker count (outputs are slot-assigned,
// so the result is identical for any thread count).
inline std::vector<double> predict_probabilities(const ModelConfig& cfg, const ParameterSet& params,
                                                 const std::vector<EncodedPair>& pairs,
                                                 unsigned threads = 1) {
  std::vector<double> probs(pairs.size());
  const ParamMap& raw = params.map();
  if (threads <= 1 || pairs.size() < 2) {
    for (std::size_t i = 0; i < pairs.size(); ++i)
      probs[i] = predict_probability(cfg, raw, pairs[i]);
    return probs;
  }
  unsigned n_workers = std::min<unsigned>(threads, static_cast<unsigned>(pairs.size()));
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < n_workers; ++w)
    workers.emplace_back([&, w]() {
      for (std::size_t i = w; i < pairs.size(); i += n_workers)
        probs[i] = predict_probability(cfg, raw, pairs[i]);
    });
  for (std::thread& t : workers) t.join();
  return probs;
}

// Threshold rule: probability >= 0.5 predicts label 1.
inline int predict_label(double probability) { return probability >= 0.5 ? 1 : 0; }

}  // namespace pairsim
