#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pairsim/corpus.hpp"
#include "pairsim/metrics.hpp"
#include "pairsim/models.hpp"
#include "pairsim/params.hpp"

namespace pairsim {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t min_count = 1;
  std::size_t mlm_epochs = 0;  // BERT_STYLE: masked-token pretraining passes

  void validate() const {
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (learning_rate <= 0.0) throw DataError("learning_rate must be > 0");
    if (min_count < 1) throw DataError("min_count must be >= 1");
  }
};

// Table-4 schedules.
inline TrainConfig train_defaults(Family f) {
  TrainConfig tc;
  if (f == Family::kBertStyle) {
    tc.epochs = 50;
    tc.batch_size = 8;
    tc.learning_rate = 2e-5;
  } else {
    tc.epochs = 10;
    tc.batch_size = 512;
    tc.learning_rate = 1e-3;
  }
  return tc;
}

using GradientsByName = std::map<std::string, std::vector<double>>;

// First/second moment estimates mirroring the parameter shapes.
class AdamState {
 public:
  explicit AdamState(const ParameterSet& params) {
    for (const auto& [name, t] : params.map()) {
      m_.emplace(name, std::vector<double>(t.size(), 0.0));
      v_.emplace(name, std::vector<double>(t.size(), 0.0));
    }
  }

  std::size_t step_count() const { return t_; }

  friend void adam_step(ParameterSet&, const GradientsByName&, AdamState&, double, double, double,
                        double);

 private:
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
  std::size_t t_ = 0;
};

// Standard bias-corrected Adam, applied in place. Parameters missing from
// `grads` take a zero gradient.
inline void adam_step(ParameterSet& params, const GradientsByName& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  state.t_ += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t_));
  for (auto& [name, t] : params.map()) {
    auto git = grads.find(name);
    const std::vector<double>* g = git == grads.end() ? nullptr : &git->second;
    if (g && g->size() != t.size())
      throw ShapeError("adam_step: gradient size mismatch for " + name);
    std::vector<double>& m = state.m_.at(name);
    std::vector<double>& v = state.v_.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      double gi = g ? (*g)[i] : 0.0;
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      t.values()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct EpochStats {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> valid_f1;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  ModelConfig config;  // with vocab_size resolved
  ParameterSet params;
  Vocabulary vocab;
  TrainHistory history;
};

namespace detail {

inline double validation_f1(const ModelConfig& cfg, const ParameterSet& params,
                            const std::vector<EncodedPair>& valid, unsigned threads) {
  std::vector<double> probs = predict_probabilities(cfg, params, valid, threads);
  std::vector<int> preds, labels;
  preds.reserve(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) {
    preds.push_back(predict_label(probs[i]));
    labels.push_back(*valid[i].label);
  }
  return f1_score(confusion(preds, labels)).f1;
}

}  // namespace detail

// Seeded mini-batch training. Everything downstream of (config, data, seed)
// is deterministic: parameter init keys off the seed, epoch shuffles use
// seed+epoch (1-based), and a non-finite loss aborts rather than skipping.
inline TrainResult train(ModelConfig cfg, const std::vector<QuestionPair>& train_pairs,
                         const std::vector<QuestionPair>& valid_pairs, const TrainConfig& tc,
                         unsigned threads = 1) {
  tc.validate();
  if (train_pairs.empty()) throw DataError("train: empty training data");
  for (const QuestionPair& p : train_pairs)
    if (!p.label.has_value()) throw DataError("train: unlabeled training pair '" + p.id + "'");
  for (const QuestionPair& p : valid_pairs)
    if (!p.label.has_value()) throw DataError("train: unlabeled validation pair '" + p.id + "'");

  Vocabulary vocab = Vocabulary::build(train_pairs, tc.min_count);
  cfg.vocab_size = vocab.size();
  cfg.validate();

  PackingScheme scheme = scheme_for(cfg.family);
  std::vector<EncodedPair> train_enc, valid_enc;
  train_enc.reserve(train_pairs.size());
  for (const QuestionPair& p : train_pairs)
    train_enc.push_back(encode_pair(p, vocab, scheme, cfg.encode_len()));
  for (const QuestionPair& p : valid_pairs)
    valid_enc.push_back(encode_pair(p, vocab, scheme, cfg.encode_len()));

  ParameterSet params = build_parameters(cfg, tc.seed);
  AdamState state(params);

  // Masked-token pretraining (off unless requested).
  if (cfg.family == Family::kBertStyle && tc.mlm_epochs > 0) {
    std::uint64_t mlm_base = SplitMix64(tc.seed ^ fnv1a("mlm")).next();
    for (std::size_t epoch = 1; epoch <= tc.mlm_epochs; ++epoch) {
      SplitMix64 mask_rng(mlm_base + epoch);
      auto batches = make_batches(train_enc, tc.batch_size, mlm_base + epoch, true);
      for (std::size_t b = 0; b < batches.size(); ++b) {
        std::vector<std::pair<MaskedTokens, std::vector<int>>> masked;
        std::size_t n_targets = 0;
        for (const EncodedPair& pair : batches[b]) {
          std::vector<int> ids(pair.seq_a.begin(), pair.seq_a.begin() + static_cast<long>(pair.len_a));
          std::vector<int> segs(pair.segment_ids.begin(),
                                pair.segment_ids.begin() + static_cast<long>(pair.len_a));
          MaskedTokens mt = mask_tokens(ids, cfg.mask_ratio, mask_rng.next());
          n_targets += mt.positions.size();
          masked.emplace_back(std::move(mt), std::move(segs));
        }
        if (n_targets == 0) continue;
        Tape tape;
        ParamMap live = params.attached(tape);
        Tensor loss = mlm_loss(masked, live, cfg);
        if (!std::isfinite(loss.value()))
          throw NumericError("non-finite masked-token loss at pretrain epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(b));
        auto grads = tape.backward(loss);
        GradientsByName by_name;
        for (auto& [name, t] : live)
          if (t.node() >= 0 && !grads[static_cast<std::size_t>(t.node())].empty())
            by_name.emplace(name, std::move(grads[static_cast<std::size_t>(t.node())]));
        adam_step(params, by_name, state, tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
      }
    }
  }

  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    auto batches = make_batches(train_enc, tc.batch_size, tc.seed + epoch, true);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      ParamMap live = params.attached(tape);
      std::vector<Tensor> losses;
      losses.reserve(batches[b].size());
      for (const EncodedPair& pair : batches[b]) {
        Tensor logits = pair_logits(cfg, live, pair);
        losses.push_back(cross_entropy(logits, *pair.label));
        if (predict_label(probability_from_logits(logits)) == *pair.label) ++correct;
      }
      Tensor batch_loss = mean_scalars(losses);
      if (!std::isfinite(batch_loss.value()))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      loss_sum += batch_loss.value() * static_cast<double>(losses.size());
      auto grads = tape.backward(batch_loss);
      GradientsByName by_name;
      for (auto& [name, t] : live)
        if (t.node() >= 0 && !grads[static_cast<std::size_t>(t.node())].empty())
          by_name.emplace(name, std::move(grads[static_cast<std::size_t>(t.node())]));
      adam_step(params, by_name, state, tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
    }
    EpochStats es;
    es.mean_loss = loss_sum / static_cast<double>(train_enc.size());
    es.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_enc.size());
    if (!valid_enc.empty()) es.valid_f1 = detail::validation_f1(cfg, params, valid_enc, threads);
    history.epochs.push_back(es);
  }

  return TrainResult{cfg, std::move(params), std::move(vocab), std::move(history)};
}

}  // namespace pairsim
