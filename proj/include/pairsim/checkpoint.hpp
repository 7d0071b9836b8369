#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pairsim/corpus.hpp"
#include "pairsim/model_config.hpp"
#include "pairsim/params.hpp"
#include "pairsim/trainer.hpp"

// Checkpoint file, little-endian throughout:
//   magic "PSIM" | version u32 | config text (u64 length + UTF-8 bytes) |
//   parameter count u64 | per parameter: name (u64 length + bytes),
//   rank u64, dims u64..., payload raw f64.
// The config text is the flat key=value run configuration plus the
// vocabulary (id order, space-joined; tokens never contain whitespace).

namespace pairsim {

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }
  double f64() {
    std::uint64_t bits = raw(8);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  std::uint64_t raw(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) throw DataError(path_ + ": truncated checkpoint");
  }
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, ',')) out.push_back(std::stoull(part));
  return out;
}

}  // namespace detail

// Canonical flat key=value text: fixed key order, %.17g floats, so
// serialize(parse(text)) == text.
inline std::string serialize_run_config(const ModelConfig& mc, const TrainConfig& tc,
                                        const Vocabulary& vocab) {
  std::ostringstream os;
  os << "family = " << family_name(mc.family) << '\n';
  os << "vocab_size = " << mc.vocab_size << '\n';
  os << "embed_dim = " << mc.embed_dim << '\n';
  os << "max_len = " << mc.max_len << '\n';
  os << "filters = " << detail::fmt_sizes(mc.filters_per_width) << '\n';
  os << "filter_widths = " << detail::fmt_sizes(mc.filter_widths) << '\n';
  os << "num_blocks = " << mc.num_blocks << '\n';
  os << "pool_window = " << mc.pool_window << '\n';
  os << "hidden = " << mc.hidden << '\n';
  os << "bidirectional = " << (mc.bidirectional ? 1 : 0) << '\n';
  os << "heads = " << mc.heads << '\n';
  os << "layers = " << mc.layers << '\n';
  os << "model_dim = " << mc.model_dim << '\n';
  os << "ffn_dim = " << mc.ffn_dim << '\n';
  os << "use_residual = " << (mc.use_residual ? 1 : 0) << '\n';
  os << "use_layer_norm = " << (mc.use_layer_norm ? 1 : 0) << '\n';
  os << "max_seq_len = " << mc.max_seq_len << '\n';
  os << "mask_ratio = " << detail::fmt_double(mc.mask_ratio) << '\n';
  os << "init_scale = " << detail::fmt_double(mc.init_scale) << '\n';
  os << "epochs = " << tc.epochs << '\n';
  os << "batch_size = " << tc.batch_size << '\n';
  os << "learning_rate = " << detail::fmt_double(tc.learning_rate) << '\n';
  os << "seed = " << tc.seed << '\n';
  os << "min_count = " << tc.min_count << '\n';
  os << "mlm_epochs = " << tc.mlm_epochs << '\n';
  os << "vocab =";
  for (const std::string& tok : vocab.payload_tokens()) os << ' ' << tok;
  os << '\n';
  return os.str();
}

// Overlay `text` onto existing configs; `vocab` may be null when the text
// is a user config file rather than a checkpoint block.
inline void apply_run_config(const std::string& text, ModelConfig& mc, TrainConfig& tc,
                             Vocabulary* vocab) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "family") mc.family = parse_family(value);
      else if (key == "vocab_size") mc.vocab_size = std::stoull(value);
      else if (key == "embed_dim") mc.embed_dim = std::stoull(value);
      else if (key == "max_len") mc.max_len = std::stoull(value);
      else if (key == "filters") mc.filters_per_width = detail::parse_sizes(value);
      else if (key == "filter_widths") mc.filter_widths = detail::parse_sizes(value);
      else if (key == "num_blocks") mc.num_blocks = std::stoull(value);
      else if (key == "pool_window") mc.pool_window = std::stoull(value);
      else if (key == "hidden") mc.hidden = std::stoull(value);
      else if (key == "bidirectional") mc.bidirectional = value != "0";
      else if (key == "heads") mc.heads = std::stoull(value);
      else if (key == "layers") mc.layers = std::stoull(value);
      else if (key == "model_dim") mc.model_dim = std::stoull(value);
      else if (key == "ffn_dim") mc.ffn_dim = std::stoull(value);
      else if (key == "use_residual") mc.use_residual = value != "0";
      else if (key == "use_layer_norm") mc.use_layer_norm = value != "0";
      else if (key == "max_seq_len") mc.max_seq_len = std::stoull(value);
      else if (key == "mask_ratio") mc.mask_ratio = std::stod(value);
      else if (key == "init_scale") mc.init_scale = std::stod(value);
      else if (key == "epochs") tc.epochs = std::stoull(value);
      else if (key == "batch_size") tc.batch_size = std::stoull(value);
      else if (key == "learning_rate") tc.learning_rate = std::stod(value);
      else if (key == "seed") tc.seed = std::stoull(value);
      else if (key == "min_count") tc.min_count = std::stoull(value);
      else if (key == "mlm_epochs") tc.mlm_epochs = std::stoull(value);
      else if (key == "vocab") {
        if (vocab != nullptr) {
          std::istringstream toks(value);
          std::vector<std::string> tokens;
          std::string t;
          while (toks >> t) tokens.push_back(t);
          *vocab = Vocabulary::from_tokens(tokens);
        }
      } else {
        throw DataError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw DataError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    } catch (const std::out_of_range&) {
      throw DataError("config line " + std::to_string(lineno) + ": value out of range for '" + key + "'");
    }
  }
}

struct ParsedRunConfig {
  ModelConfig model;
  TrainConfig train;
  Vocabulary vocab;
};

inline ParsedRunConfig parse_run_config(const std::string& text) {
  ParsedRunConfig out;
  apply_run_config(text, out.model, out.train, &out.vocab);
  return out;
}

inline void save_checkpoint(const ParameterSet& params, const std::string& config_text,
                            const std::string& path) {
  std::string out;
  out += "PSIM";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, config_text.size());
  out += config_text;
  detail::put_u64(out, params.count());
  for (const auto& [name, t] : params.map()) {
    detail::put_u64(out, name.size());
    out += name;
    detail::put_u64(out, t.rank());
    for (std::size_t d : t.shape()) detail::put_u64(out, d);
    for (double v : t.values()) detail::put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint: " + path);
}

struct LoadedCheckpoint {
  ParameterSet params;
  std::string config_text;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(data, path);
  if (r.bytes(4) != "PSIM") throw DataError(path + ": bad checkpoint magic (expected PSIM)");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint out;
  std::uint64_t config_len = r.u64();
  out.config_text = r.bytes(config_len);
  std::uint64_t n_params = r.u64();
  for (std::uint64_t p = 0; p < n_params; ++p) {
    std::uint64_t name_len = r.u64();
    std::string name = r.bytes(name_len);
    std::uint64_t rank = r.u64();
    if (rank > 8) throw DataError(path + ": implausible tensor rank in shape table");
    std::vector<std::size_t> shape;
    std::uint64_t count = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      std::uint64_t dim = r.u64();
      if (dim == 0 || count > (1ULL << 40) / std::max<std::uint64_t>(dim, 1))
        throw DataError(path + ": shape table inconsistent with payload length");
      shape.push_back(dim);
      count *= dim;
    }
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i) values[i] = r.f64();
    out.params.add(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!r.exhausted()) throw DataError(path + ": trailing bytes after parameter table");
  return out;
}

}  // namespace pairsim
