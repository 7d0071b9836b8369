#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pairsim/csv.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/prng.hpp"

namespace pairsim {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

inline ConfusionCounts confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw ShapeError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1)
      labels[i] == 1 ? ++c.tp : ++c.fp;
    else
      labels[i] == 1 ? ++c.fn : ++c.tn;
  }
  return c;
}

struct MetricReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// p = tp/(tp+fp), r = tp/(tp+fn), f1 = 2pr/(p+r); every degenerate
// denominator yields 0 by convention.
inline MetricReport f1_score(const ConfusionCounts& c) {
  MetricReport m;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

// Half-up rounding of fraction*n with the fraction read at micro precision;
// exact integer arithmetic so 0.30 of 3715 is 1115, not the 1114 that naive
// double rounding produces.
inline std::size_t public_count(double fraction, std::size_t n) {
  auto micro = static_cast<std::uint64_t>(std::llround(fraction * 1e6));
  return static_cast<std::size_t>((micro * static_cast<std::uint64_t>(n) + 500000ULL) / 1000000ULL);
}

struct SplitAssignment {
  std::vector<std::string> public_ids;
  std::vector<std::string> private_ids;
  double fraction = 0.30;
  std::uint64_t seed = 0;
};

inline SplitAssignment split_public_private(const std::vector<std::string>& ids,
                                            double fraction = 0.30, std::uint64_t seed = 0) {
  if (ids.empty()) throw DataError("split_public_private: empty id list");
  if (fraction <= 0.0 || fraction >= 1.0)
    throw DataError("split fraction must be in (0,1)");
  std::vector<std::string> shuffled = ids;
  SplitMix64 rng(seed);
  rng.shuffle(shuffled);
  std::size_t k = public_count(fraction, ids.size());
  SplitAssignment s;
  s.fraction = fraction;
  s.seed = seed;
  s.public_ids.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(k));
  s.private_ids.assign(shuffled.begin() + static_cast<long>(k), shuffled.end());
  return s;
}

// F1 over the public and private segments independently.
inline std::pair<MetricReport, MetricReport> score_submission(
    const std::map<std::string, int>& preds, const std::map<std::string, int>& labels,
    const SplitAssignment& split) {
  std::vector<std::string> missing;
  for (const auto& [id, label] : labels)
    if (!preds.count(id)) {
      missing.push_back(id);
      if (missing.size() >= 10) break;
    }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "submission is missing " << (missing.size() >= 10 ? "at least " : "")
       << missing.size() << " prediction(s):";
    for (const std::string& id : missing) os << ' ' << id;
    throw DataError(os.str());
  }
  auto tally = [&](const std::vector<std::string>& segment) {
    std::vector<int> p, l;
    for (const std::string& id : segment) {
      auto it = labels.find(id);
      if (it == labels.end()) continue;  // split may cover more ids than labeled
      p.push_back(preds.at(id));
      l.push_back(it->second);
    }
    return f1_score(confusion(p, l));
  };
  return {tally(split.public_ids), tally(split.private_ids)};
}

// CSV `QuestionPairID,Prediction`; predictions validated before any byte is
// written.
inline void write_submission(const std::vector<std::string>& ids, const std::vector<int>& preds,
                             const std::string& path) {
  if (ids.size() != preds.size())
    throw ShapeError("write_submission: id/prediction length mismatch");
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] != 0 && preds[i] != 1)
      throw DataError("write_submission: prediction for '" + ids[i] + "' is not binary: " +
                      std::to_string(preds[i]));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "QuestionPairID,Prediction\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    write_csv_row(out, {ids[i], std::to_string(preds[i])});
  }
  if (!out) throw DataError("failed writing submission: " + path);
}

inline std::map<std::string, int> read_submission(const std::string& path) {
  std::vector<CsvRecord> records = read_csv(path);
  if (records.empty() || records[0].fields.size() < 2 ||
      records[0].fields[0] != "QuestionPairID" || records[0].fields[1] != "Prediction")
    throw DataError(path + ": expected header QuestionPairID,Prediction");
  std::map<std::string, int> preds;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const CsvRecord& rec = records[r];
    if (rec.fields.size() < 2)
      throw DataError(path + ": line " + std::to_string(rec.line) + ": expected 2 columns");
    const std::string& raw = rec.fields[1];
    if (raw != "0" && raw != "1")
      throw DataError(path + ": line " + std::to_string(rec.line) +
                      ": prediction must be 0 or 1, got '" + raw + "'");
    preds[rec.fields[0]] = raw == "1" ? 1 : 0;
  }
  return preds;
}

// Split manifest `id,segment` with segment in {public, private}.
inline void write_split_manifest(const SplitAssignment& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "id,segment\n";
  for (const std::string& id : split.public_ids) write_csv_row(out, {id, "public"});
  for (const std::string& id : split.private_ids) write_csv_row(out, {id, "private"});
}

}  // namespace pairsim
