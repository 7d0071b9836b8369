#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pairsim/csv.hpp"
#include "pairsim/errors.hpp"

namespace pairsim {

// Per-pair binary predictions from one seeded run, plus the validation
// score that decides its priority in the panel.
struct PredictionSet {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<int> predictions;
  double validation_score = 0.0;
};

// Majority vote; an exact tie returns the vote of the highest-priority
// voter, which callers place first.
inline int hard_vote(const std::vector<int>& votes) {
  if (votes.empty()) throw ShapeError("hard_vote: empty vote list");
  std::size_t ones = 0;
  for (int v : votes) {
    if (v != 0 && v != 1) throw ShapeError("hard_vote: non-binary vote");
    ones += static_cast<std::size_t>(v);
  }
  std::size_t zeros = votes.size() - ones;
  if (ones > zeros) return 1;
  if (zeros > ones) return 0;
  return votes.front();
}

// Prediction sets ordered by descending validation score (run id breaks
// ties); all members must share one id list.
class VoterPanel {
 public:
  static VoterPanel of(std::vector<PredictionSet> runs) {
    if (runs.empty()) throw ShapeError("VoterPanel: no runs");
    std::stable_sort(runs.begin(), runs.end(), [](const PredictionSet& a, const PredictionSet& b) {
      if (a.validation_score != b.validation_score) return a.validation_score > b.validation_score;
      return a.run_id < b.run_id;
    });
    for (const PredictionSet& r : runs) {
      if (r.ids != runs.front().ids)
        throw DataError("prediction sets are not aligned: '" + r.run_id + "' has a different id list");
      if (r.predictions.size() != r.ids.size())
        throw DataError("prediction set '" + r.run_id + "' has " +
                        std::to_string(r.predictions.size()) + " predictions for " +
                        std::to_string(r.ids.size()) + " ids");
    }
    VoterPanel p;
    p.members_ = std::move(runs);
    return p;
  }

  const std::vector<PredictionSet>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

 private:
  VoterPanel() = default;
  std::vector<PredictionSet> members_;
};

// Top-k runs by validation score, stable order.
inline VoterPanel select_best_k(const std::vector<PredictionSet>& runs, std::size_t k) {
  if (k == 0 || k > runs.size())
    throw DataError("select_best_k: k=" + std::to_string(k) + " with " +
                    std::to_string(runs.size()) + " runs");
  VoterPanel all = VoterPanel::of(runs);
  std::vector<PredictionSet> top(all.members().begin(), all.members().begin() + static_cast<long>(k));
  return VoterPanel::of(std::move(top));
}

// Per-pair hard vote across the panel, in priority order.
inline PredictionSet ensemble_predict(const VoterPanel& panel) {
  const auto& members = panel.members();
  PredictionSet out;
  out.ids = members.front().ids;
  out.predictions.resize(out.ids.size());
  std::ostringstream name;
  name << "ensemble_k" << members.size() << '(';
  for (std::size_t m = 0; m < members.size(); ++m) name << (m ? "," : "") << members[m].run_id;
  name << ')';
  out.run_id = name.str();
  std::vector<int> votes(members.size());
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    for (std::size_t m = 0; m < members.size(); ++m) votes[m] = members[m].predictions[i];
    out.predictions[i] = hard_vote(votes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// prediction-set files: CSV id,prediction with one '#' metadata line
// ---------------------------------------------------------------------------

inline void write_prediction_set(const PredictionSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  char score[64];
  std::snprintf(score, sizeof score, "%.17g", set.validation_score);
  out << "# run=" << set.run_id << " seed=" << set.seed << " validation_score=" << score << '\n';
  out << "id,prediction\n";
  for (std::size_t i = 0; i < set.ids.size(); ++i)
    write_csv_row(out, {set.ids[i], std::to_string(set.predictions[i])});
  if (!out) throw DataError("failed writing prediction set: " + path);
}

inline PredictionSet load_prediction_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open prediction set: " + path);
  PredictionSet set;
  // default run id: file stem
  std::size_t slash = path.find_last_of("/\\");
  std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
  std::size_t dot = stem.find_last_of('.');
  set.run_id = dot == std::string::npos ? stem : stem.substr(0, dot);

  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string token;
      while (ls >> token) {
        std::size_t eq = token.find('=');
        if (eq == std::string::npos) continue;
        std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "run") set.run_id = value;
        else if (key == "seed") set.seed = std::stoull(value);
        else if (key == "validation_score") set.validation_score = std::stod(value);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "id,prediction")
        throw DataError(path + ": line " + std::to_string(lineno) + ": expected header id,prediction");
      header_seen = true;
      continue;
    }
    std::size_t comma = line.find_last_of(',');
    if (comma == std::string::npos)
      throw DataError(path + ": line " + std::to_string(lineno) + ": expected id,prediction");
    std::string id = line.substr(0, comma), value = line.substr(comma + 1);
    // ids may be quoted by the writer when they contain commas
    if (id.size() >= 2 && id.front() == '"' && id.back() == '"') {
      std::string unq;
      for (std::size_t i = 1; i + 1 < id.size(); ++i) {
        if (id[i] == '"' && i + 2 < id.size() && id[i + 1] == '"') ++i;
        unq.push_back(id[i]);
      }
      id = unq;
    }
    if (value != "0" && value != "1")
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": prediction must be 0 or 1, got '" + value + "'");
    set.ids.push_back(id);
    set.predictions.push_back(value == "1" ? 1 : 0);
  }
  if (!header_seen) throw DataError(path + ": missing id,prediction header");
  return set;
}

}  // namespace pairsim
