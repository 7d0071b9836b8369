#pragma once

#include <cstdint>
#include <vector>

#include "pairsim/grad_check.hpp"
#include "pairsim/models.hpp"
#include "pairsim/trainer.hpp"

// Per-family gradient-check fixtures: tiny configurations whose batch loss
// is swept entry-by-entry against central finite differences.
//
// Fixture sizing is deliberate. With h = 1e-5 in double precision the
// difference quotient carries ~5e-12 of rounding jitter, so a parameter
// whose true gradient lies between ~1e-12 and ~5e-8 cannot be certified at
// 1e-4 relative error no matter how correct the backward pass is. The
// residual-free attention stack collapses row diversity doubly
// exponentially with depth, which drives its decoder score projections
// into exactly that dead zone at two layers; its fixture therefore uses a
// single encoder layer (the two-layer encoder path is still swept via the
// BERT-style family, whose layer norm keeps gradients healthy). Default
// seeds are pinned to keep every gradient out of the dead zone; other
// seeds may report noise-floor failures on near-cancelled entries.

namespace pairsim {

struct GradCheckCase {
  ModelConfig config;
  std::vector<EncodedPair> batch;
  std::uint64_t default_seed = 1;
};

inline GradCheckCase gradcheck_case(Family family) {
  std::vector<QuestionPair> pairs = {
      {"a", "tok1 tok2 tok3", "tok2 tok4", 1},
      {"b", "tok4 tok5", "tok3 tok5 tok1", 0},
  };
  Vocabulary vocab = Vocabulary::build(pairs);

  GradCheckCase gc;
  gc.config = model_defaults(family);
  gc.config.init_scale = 0.5;
  switch (family) {
    case Family::kCnn:
      gc.config.embed_dim = 6;
      gc.config.filters_per_width = {3, 3, 3};
      gc.config.max_len = 8;
      gc.default_seed = 25;
      break;
    case Family::kBigru:
      gc.config.embed_dim = 6;
      gc.config.hidden = 8;
      gc.config.max_len = 8;
      gc.default_seed = 6;
      break;
    case Family::kAttention:
      gc.config.model_dim = 8;
      gc.config.heads = 2;
      gc.config.layers = 1;
      gc.config.ffn_dim = 12;
      gc.config.max_len = 8;
      gc.default_seed = 16;
      break;
    case Family::kBertStyle:
      gc.config.model_dim = 16;
      gc.config.heads = 4;
      gc.config.layers = 2;
      gc.config.ffn_dim = 24;
      gc.config.max_seq_len = 12;
      gc.default_seed = 5;
      break;
  }
  gc.config.vocab_size = vocab.size();
  for (const QuestionPair& p : pairs)
    gc.batch.push_back(encode_pair(p, vocab, scheme_for(family), gc.config.encode_len()));
  return gc;
}

// Sweep the family's fixture loss; `fault_scale` != 1 corrupts the analytic
// gradient (the checker must then report a large error).
inline GradCheckReport run_family_gradcheck(Family family, std::uint64_t seed,
                                            double fault_scale = 1.0, double h = 1e-5) {
  GradCheckCase gc = gradcheck_case(family);
  ParameterSet params = build_parameters(gc.config, seed);
  auto loss = [&](const ParamMap& live, Tape*) {
    std::vector<Tensor> losses;
    losses.reserve(gc.batch.size());
    for (const EncodedPair& pair : gc.batch) losses.push_back(pair_loss(gc.config, live, pair));
    return mean_scalars(losses);
  };
  return grad_check(loss, params, h, fault_scale);
}

inline std::uint64_t gradcheck_default_seed(Family family) {
  return gradcheck_case(family).default_seed;
}

}  // namespace pairsim
