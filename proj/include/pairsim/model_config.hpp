#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pairsim/corpus.hpp"
#include "pairsim/errors.hpp"

namespace pairsim {

enum class Family { kCnn, kBigru, kAttention, kBertStyle };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::kCnn: return "CNN";
    case Family::kBigru: return "BIGRU";
    case Family::kAttention: return "ATTENTION";
    case Family::kBertStyle: return "BERT_STYLE";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "CNN") return Family::kCnn;
  if (s == "BIGRU") return Family::kBigru;
  if (s == "ATTENTION") return Family::kAttention;
  if (s == "BERT_STYLE") return Family::kBertStyle;
  throw DataError("unknown model family: '" + s + "' (expected CNN, BIGRU, ATTENTION or BERT_STYLE)");
}

inline PackingScheme scheme_for(Family f) {
  switch (f) {
    case Family::kCnn: return PackingScheme::kSiamese;
    case Family::kBigru: return PackingScheme::kConcat;
    case Family::kAttention: return PackingScheme::kConcat;
    case Family::kBertStyle: return PackingScheme::kPaired;
  }
  return PackingScheme::kConcat;
}

struct ModelConfig {
  Family family = Family::kBigru;
  std::size_t vocab_size = 0;  // set from the built vocabulary
  std::size_t embed_dim = 64;  // CNN / BIGRU token embedding width
  std::size_t max_len = 50;    // SIAMESE per-question / CONCAT total length

  // CNN
  std::vector<std::size_t> filters_per_width = {50, 50, 50};
  std::vector<std::size_t> filter_widths = {2, 3, 4};
  std::size_t num_blocks = 2;
  std::size_t pool_window = 2;

  // BIGRU
  std::size_t hidden = 128;
  bool bidirectional = true;

  // ATTENTION / BERT_STYLE (model_dim doubles as their embedding width)
  std::size_t heads = 8;
  std::size_t layers = 2;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 0;  // 0 -> 4 * model_dim
  bool use_residual = false;
  bool use_layer_norm = false;
  std::size_t max_seq_len = 50;  // PAIRED total length
  double mask_ratio = 0.15;

  double init_scale = 0.05;

  std::size_t resolved_ffn_dim() const { return ffn_dim != 0 ? ffn_dim : 4 * model_dim; }

  std::size_t encode_len() const {
    return family == Family::kBertStyle ? max_seq_len : max_len;
  }

  void validate() const {
    if (vocab_size < Vocabulary::kNumSpecials)
      throw DataError("vocab_size must cover the special ids");
    if (family == Family::kCnn) {
      if (filter_widths.empty() || filters_per_width.size() != filter_widths.size())
        throw DataError("filters_per_width and filter_widths must be nonempty and aligned");
      for (std::size_t w : filter_widths)
        if (w == 0) throw DataError("filter widths must be positive");
      if (num_blocks == 0 || pool_window == 0)
        throw DataError("num_blocks and pool_window must be positive");
      if (embed_dim == 0) throw DataError("embed_dim must be positive");
    }
    if (family == Family::kBigru && hidden == 0) throw DataError("hidden must be > 0");
    if (family == Family::kAttention || family == Family::kBertStyle) {
      if (heads == 0 || model_dim == 0 || layers == 0)
        throw DataError("heads, layers and model_dim must be positive");
      if (model_dim % heads != 0)
        throw DataError("model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                        std::to_string(heads));
    }
    if (family == Family::kBertStyle) {
      if (mask_ratio < 0.0 || mask_ratio > 1.0) throw DataError("mask_ratio must be in [0,1]");
      if (max_seq_len < 4) throw DataError("max_seq_len must be >= 4 for PAIRED packing");
    }
    if (init_scale <= 0.0) throw DataError("init_scale must be positive");
  }
};

// Table-4 architecture defaults per family; vocab_size stays unset.
inline ModelConfig model_defaults(Family f) {
  ModelConfig c;
  c.family = f;
  switch (f) {
    case Family::kCnn:
      c.filters_per_width = {50, 50, 50};
      c.filter_widths = {2, 3, 4};
      c.num_blocks = 2;
      break;
    case Family::kBigru:
      c.hidden = 128;
      c.bidirectional = true;
      break;
    case Family::kAttention:
      c.heads = 8;
      c.layers = 2;
      c.model_dim = 64;
      c.use_residual = false;
      c.use_layer_norm = false;
      break;
    case Family::kBertStyle:
      c.heads = 4;
      c.layers = 2;
      c.model_dim = 64;
      c.use_residual = true;
      c.use_layer_norm = true;
      c.max_seq_len = 50;
      c.mask_ratio = 0.15;
      break;
  }
  return c;
}

}  // namespace pairsim
