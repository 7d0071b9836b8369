#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pairsim/csv.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/prng.hpp"

namespace pairsim {

struct QuestionPair {
  std::string id;
  std::string q1;
  std::string q2;
  std::optional<int> label;  // {0,1}; absent for test records
};

// ---------------------------------------------------------------------------
// tokenization
// ---------------------------------------------------------------------------

// Whitespace-run split; no lowercasing, no stemming. Unification of names is
// the only text transformation applied upstream.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

// ---------------------------------------------------------------------------
// name normalization
// ---------------------------------------------------------------------------

// Ordered variant -> canonical table, matched on whole tokens. Canonicals
// are rewritten to their fixpoint at load so normalize_text is idempotent;
// a table whose rewrites never settle (a cycle) is rejected.
class NormalizationTable {
 public:
  NormalizationTable() = default;

  static NormalizationTable from_entries(std::vector<std::pair<std::string, std::string>> entries) {
    NormalizationTable t;
    for (auto& [variant, canonical] : entries) {
      if (variant.empty() || canonical.empty())
        throw DataError("normalization entry with empty variant or canonical");
      if (tokenize(variant).size() != 1)
        throw DataError("normalization variant must be a single token: '" + variant + "'");
      auto it = t.lookup_.find(variant);
      if (it != t.lookup_.end()) {
        if (it->second != canonical)
          throw DataError("variant '" + variant + "' maps to two canonicals");
        continue;
      }
      t.entries_.emplace_back(variant, canonical);
      t.lookup_.emplace(variant, canonical);
    }
    t.resolve_chains();
    return t;
  }

  // Tab-separated `variant<TAB>canonical`, one per line, '#' comments.
  static NormalizationTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open normalization table: " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string trimmed = line;
      std::size_t first = trimmed.find_first_not_of(" \t");
      if (first == std::string::npos || trimmed[first] == '#') continue;
      std::size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError(path + ": line " + std::to_string(lineno) + ": expected variant<TAB>canonical");
      entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return from_entries(std::move(entries));
  }

  const std::string* canonical_for(const std::string& token) const {
    auto it = lookup_.find(token);
    return it == lookup_.end() ? nullptr : &it->second;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  // Rewrite each canonical to its terminal form so a second normalize pass
  // can never change anything; a variant whose expansion reaches itself
  // again (other than a plain identity entry) never terminates and is
  // rejected.
  void resolve_chains() {
    std::unordered_map<std::string, std::string> original = lookup_;
    for (auto& [variant, canonical] : entries_) {
      std::vector<std::string> stack = {variant};
      canonical = resolve_string(canonical, original, stack);
      lookup_[variant] = canonical;
    }
  }

  static std::string resolve_string(const std::string& text,
                                    const std::unordered_map<std::string, std::string>& map,
                                    std::vector<std::string>& stack) {
    std::ostringstream out;
    bool first = true;
    for (const std::string& tok : tokenize(text)) {
      if (!first) out << ' ';
      first = false;
      auto it = map.find(tok);
      if (it == map.end() || it->second == tok) {
        out << tok;
        continue;
      }
      if (std::find(stack.begin(), stack.end(), tok) != stack.end())
        throw DataError("normalization table contains a rewrite cycle through '" + tok + "'");
      stack.push_back(tok);
      out << resolve_string(it->second, map, stack);
      stack.pop_back();
    }
    return out.str();
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  std::unordered_map<std::string, std::string> lookup_;
};

// Replace each whole-token variant occurrence by its canonical; whitespace
// and all other characters pass through untouched.
inline std::string normalize_text(const std::string& text, const NormalizationTable& table) {
  if (table.empty()) return text;
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string token = text.substr(i, j - i);
    const std::string* canonical = table.canonical_for(token);
    out += canonical ? *canonical : token;
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// vocabulary
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSep = 2;
  static constexpr int kCls = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;

  Vocabulary() { init_specials(); }

  // Tokens with frequency >= min_count get ids from 5 in order of
  // descending frequency, ties broken lexicographically.
  static Vocabulary build(const std::vector<QuestionPair>& pairs, std::size_t min_count = 1) {
    if (min_count < 1) throw ShapeError("build_vocabulary: min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const QuestionPair& p : pairs) {
      for (const std::string& t : tokenize(p.q1)) ++counts[t];
      for (const std::string& t : tokenize(p.q2)) ++counts[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, cnt] : counts) {
      if (cnt < min_count) continue;
      if (is_special_literal(tok)) continue;  // reserved surface forms
      ranked.emplace_back(tok, cnt);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (auto& [tok, cnt] : ranked) {
      v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
      v.id_to_token_.push_back(tok);
    }
    return v;
  }

  // Rebuild from the non-special token list in id order (checkpoint load).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const std::string& tok : tokens) {
      if (v.token_to_id_.count(tok))
        throw DataError("vocabulary contains duplicate token: " + tok);
      v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
      v.id_to_token_.push_back(tok);
    }
    return v;
  }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
      throw ShapeError("vocabulary id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return id_to_token_.size(); }

  // Non-special tokens in id order (ids 5..).
  std::vector<std::string> payload_tokens() const {
    return {id_to_token_.begin() + kNumSpecials, id_to_token_.end()};
  }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(id(t));
    return ids;
  }

 private:
  void init_specials() {
    static const char* kSpecials[] = {"[PAD]", "[UNK]", "[SEP]", "[CLS]", "[MASK]"};
    for (const char* s : kSpecials) {
      token_to_id_.emplace(s, static_cast<int>(id_to_token_.size()));
      id_to_token_.push_back(s);
    }
  }

  static bool is_special_literal(const std::string& tok) {
    return tok == "[PAD]" || tok == "[UNK]" || tok == "[SEP]" || tok == "[CLS]" ||
           tok == "[MASK]";
  }

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// ---------------------------------------------------------------------------
// pair loading
// ---------------------------------------------------------------------------

// CSV with header id,question1,question2[,label]. All malformed rows are
// collected and reported together, each with its line number.
inline std::vector<QuestionPair> load_pairs(const std::string& path, bool has_labels) {
  std::vector<CsvRecord> records = read_csv(path);
  if (records.empty()) throw DataError(path + ": empty file, expected a header row");

  const std::vector<std::string>& header = records[0].fields;
  std::vector<std::string> expected = {"id", "question1", "question2"};
  if (has_labels) expected.push_back("label");
  if (header.size() < expected.size())
    throw DataError(path + ": missing column; expected header id,question1,question2" +
                    std::string(has_labels ? ",label" : ""));
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (header[i] != expected[i])
      throw DataError(path + ": expected column '" + expected[i] + "', found '" + header[i] + "'");

  std::vector<QuestionPair> pairs;
  std::ostringstream errors;
  std::size_t error_count = 0;
  auto record_error = [&](std::size_t line, const std::string& msg) {
    if (error_count) errors << '\n';
    errors << path << ": line " << line << ": " << msg;
    ++error_count;
  };

  for (std::size_t r = 1; r < records.size(); ++r) {
    const CsvRecord& rec = records[r];
    if (rec.fields.size() < expected.size()) {
      record_error(rec.line, "expected " + std::to_string(expected.size()) + " columns, found " +
                                 std::to_string(rec.fields.size()));
      continue;
    }
    QuestionPair p;
    p.id = rec.fields[0];
    p.q1 = rec.fields[1];
    p.q2 = rec.fields[2];
    if (tokenize(p.q1).empty()) {
      record_error(rec.line, "empty question1");
      continue;
    }
    if (tokenize(p.q2).empty()) {
      record_error(rec.line, "empty question2");
      continue;
    }
    if (has_labels) {
      const std::string& raw = rec.fields[3];
      if (raw == "0") p.label = 0;
      else if (raw == "1") p.label = 1;
      else {
        record_error(rec.line, "label must be 0 or 1, got '" + raw + "'");
        continue;
      }
    }
    pairs.push_back(std::move(p));
  }
  if (error_count) throw DataError(errors.str());
  return pairs;
}

// ---------------------------------------------------------------------------
// encoding
// ---------------------------------------------------------------------------

enum class PackingScheme { kSiamese, kConcat, kPaired };

inline const char* scheme_name(PackingScheme s) {
  switch (s) {
    case PackingScheme::kSiamese: return "SIAMESE";
    case PackingScheme::kConcat: return "CONCAT";
    case PackingScheme::kPaired: return "PAIRED";
  }
  return "?";
}

struct EncodedPair {
  PackingScheme scheme = PackingScheme::kConcat;
  std::vector<int> seq_a;        // the sequence (q1 for SIAMESE)
  std::vector<int> seq_b;        // SIAMESE only: q2
  std::vector<int> segment_ids;  // PAIRED only: 0 over CLS+q1+SEP, 1 after
  std::size_t len_a = 0;         // true (non-PAD) length of seq_a
  std::size_t len_b = 0;         // true length of seq_b (SIAMESE)
  std::optional<int> label;
};

namespace detail {
inline void pad_to(std::vector<int>& ids, std::size_t len) {
  while (ids.size() < len) ids.push_back(Vocabulary::kPad);
}
}  // namespace detail

inline EncodedPair encode_pair(const QuestionPair& pair, const Vocabulary& vocab,
                               PackingScheme scheme, std::size_t max_len) {
  EncodedPair e;
  e.scheme = scheme;
  e.label = pair.label;
  std::vector<int> a = vocab.encode(tokenize(pair.q1));
  std::vector<int> b = vocab.encode(tokenize(pair.q2));

  switch (scheme) {
    case PackingScheme::kSiamese: {
      if (a.size() > max_len) a.resize(max_len);
      if (b.size() > max_len) b.resize(max_len);
      e.len_a = a.size();
      e.len_b = b.size();
      detail::pad_to(a, max_len);
      detail::pad_to(b, max_len);
      e.seq_a = std::move(a);
      e.seq_b = std::move(b);
      break;
    }
    case PackingScheme::kConcat: {
      std::vector<int> seq = std::move(a);
      seq.push_back(Vocabulary::kSep);
      seq.insert(seq.end(), b.begin(), b.end());
      if (seq.size() > max_len) seq.resize(max_len);
      e.len_a = seq.size();
      detail::pad_to(seq, max_len);
      e.seq_a = std::move(seq);
      break;
    }
    case PackingScheme::kPaired: {
      if (max_len < 4)
        throw DataError("PAIRED packing needs max_len >= 4, got " + std::to_string(max_len));
      // Balanced truncation: trim the longer question's tail (q2 on ties).
      while (a.size() + b.size() + 3 > max_len) {
        if (a.size() > b.size()) a.pop_back();
        else b.pop_back();
      }
      std::vector<int> seq;
      seq.reserve(max_len);
      seq.push_back(Vocabulary::kCls);
      seq.insert(seq.end(), a.begin(), a.end());
      seq.push_back(Vocabulary::kSep);
      std::size_t seg0 = seq.size();
      seq.insert(seq.end(), b.begin(), b.end());
      seq.push_back(Vocabulary::kSep);
      e.len_a = seq.size();
      detail::pad_to(seq, max_len);
      e.segment_ids.assign(seg0, 0);
      e.segment_ids.resize(max_len, 1);
      e.seq_a = std::move(seq);
      break;
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

inline std::vector<std::vector<EncodedPair>> make_batches(const std::vector<EncodedPair>& encoded,
                                                          std::size_t batch_size,
                                                          std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw ShapeError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) {
    SplitMix64 rng(seed);
    rng.shuffle(order);
  }
  std::vector<std::vector<EncodedPair>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::size_t end = std::min(start + batch_size, order.size());
    std::vector<EncodedPair> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(encoded[order[i]]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace pairsim
