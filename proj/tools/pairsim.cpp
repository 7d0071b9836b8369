// pairsim: batch question-pair similarity pipeline.
//
// Subcommands: preprocess, train, predict, ensemble, evaluate, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pairsim/pairsim.hpp"

namespace fs = std::filesystem;
using namespace pairsim;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

unsigned env_threads() {
  const char* raw = std::getenv("PAIRSIM_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1)
    throw UsageError("PAIRSIM_THREADS must be a positive integer, got '" + std::string(raw) + "'");
  return static_cast<unsigned>(v);
}

std::string iso_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Run configuration = family defaults overlaid with the config file and then
// with explicit flags. The file uses the same flat key=value grammar the
// checkpoint embeds.
struct CliOverrides {
  std::optional<std::string> family;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::size_t> max_len;
  std::optional<std::size_t> mlm_epochs;
};

// True when the config text has a line whose key is `key`.
bool config_names_key(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::size_t last = line.find_last_not_of(" \t", eq - 1);
    if (last == std::string::npos) continue;
    if (line.substr(first, last - first + 1) == key) return true;
  }
  return false;
}

std::pair<ModelConfig, TrainConfig> resolve_config(const std::string& config_path,
                                                   const CliOverrides& over) {
  std::string text = config_path.empty() ? std::string() : read_text_file(config_path);

  // Discover the family first so the remaining defaults can be family-specific;
  // the config file overrides the defaults and explicit flags override both.
  Family family;
  if (over.family) {
    family = parse_family(*over.family);
  } else if (!text.empty() && config_names_key(text, "family")) {
    ModelConfig probe;
    TrainConfig probe_tc;
    apply_run_config(text, probe, probe_tc, nullptr);
    family = probe.family;
  } else {
    throw UsageError("no model family: pass --family or a --config file naming one");
  }

  ModelConfig mc = model_defaults(family);
  TrainConfig tc = train_defaults(family);
  if (!text.empty()) apply_run_config(text, mc, tc, nullptr);
  mc.family = family;
  if (over.seed) tc.seed = *over.seed;
  if (over.epochs) tc.epochs = *over.epochs;
  if (over.batch_size) tc.batch_size = *over.batch_size;
  if (over.learning_rate) tc.learning_rate = *over.learning_rate;
  if (over.max_len) {
    mc.max_len = *over.max_len;
    mc.max_seq_len = *over.max_len;
  }
  if (over.mlm_epochs) tc.mlm_epochs = *over.mlm_epochs;
  return {mc, tc};
}

int cmd_preprocess(const std::string& input, const std::string& table_path,
                   const std::string& out) {
  NormalizationTable table =
      table_path.empty() ? NormalizationTable() : NormalizationTable::load(table_path);
  std::vector<CsvRecord> records = read_csv(input);
  if (records.empty()) throw DataError(input + ": empty file");
  const std::vector<std::string>& header = records[0].fields;
  bool labeled = header.size() >= 4 && header[3] == "label";
  std::vector<QuestionPair> pairs = load_pairs(input, labeled);

  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + out);
  write_csv_row(os, labeled ? std::vector<std::string>{"id", "question1", "question2", "label"}
                            : std::vector<std::string>{"id", "question1", "question2"});
  for (const QuestionPair& p : pairs) {
    std::vector<std::string> row{p.id, normalize_text(p.q1, table), normalize_text(p.q2, table)};
    if (labeled) row.push_back(std::to_string(*p.label));
    write_csv_row(os, row);
  }
  if (!os) throw DataError("failed writing: " + out);
  std::cout << "preprocessed " << pairs.size() << " pairs -> " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& train_csv,
              const std::string& valid_csv, const std::string& out_dir,
              const CliOverrides& over) {
  std::string started = iso_timestamp();
  auto [mc, tc] = resolve_config(config_path, over);
  unsigned threads = env_threads();

  std::vector<QuestionPair> train_pairs = load_pairs(train_csv, true);
  std::vector<QuestionPair> valid_pairs;
  if (!valid_csv.empty()) valid_pairs = load_pairs(valid_csv, true);

  TrainResult res = train(mc, train_pairs, valid_pairs, tc, threads);

  fs::create_directories(out_dir);
  std::string checkpoint_path = out_dir + "/checkpoint.psim";
  save_checkpoint(res.params, serialize_run_config(res.config, tc, res.vocab), checkpoint_path);

  std::string history_path = out_dir + "/history.csv";
  {
    std::ofstream os(history_path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + history_path);
    os << "epoch,mean_loss,train_accuracy,valid_f1\n";
    char buf[160];
    for (std::size_t e = 0; e < res.history.epochs.size(); ++e) {
      const EpochStats& s = res.history.epochs[e];
      if (s.valid_f1.has_value())
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e + 1, s.mean_loss,
                      s.train_accuracy, *s.valid_f1);
      else
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,\n", e + 1, s.mean_loss,
                      s.train_accuracy);
      os << buf;
    }
  }

  std::string predset_path = out_dir + "/valid_predictions.csv";
  double valid_f1 = 0.0;
  if (!valid_pairs.empty()) {
    std::vector<EncodedPair> enc;
    enc.reserve(valid_pairs.size());
    for (const QuestionPair& p : valid_pairs)
      enc.push_back(encode_pair(p, res.vocab, scheme_for(res.config.family), res.config.encode_len()));
    std::vector<double> probs = predict_probabilities(res.config, res.params, enc, threads);
    PredictionSet set;
    set.run_id = "seed" + std::to_string(tc.seed);
    set.seed = tc.seed;
    for (std::size_t i = 0; i < valid_pairs.size(); ++i) {
      set.ids.push_back(valid_pairs[i].id);
      set.predictions.push_back(predict_label(probs[i]));
    }
    std::vector<int> labels;
    for (const QuestionPair& p : valid_pairs) labels.push_back(*p.label);
    valid_f1 = f1_score(confusion(set.predictions, labels)).f1;
    set.validation_score = valid_f1;
    write_prediction_set(set, predset_path);
  }

  {
    std::ofstream os(out_dir + "/manifest.txt", std::ios::binary);
    os << "started = " << started << "\n"
       << "finished = " << iso_timestamp() << "\n"
       << "config_file = " << (config_path.empty() ? "(none)" : config_path) << "\n"
       << "train_csv = " << train_csv << "\n"
       << "valid_csv = " << (valid_csv.empty() ? "(none)" : valid_csv) << "\n"
       << "out_dir = " << out_dir << "\n"
       << "seeds = " << tc.seed << "\n"
       << "threads = " << threads << "\n"
       << "checkpoint = checkpoint.psim\n"
       << "history = history.csv\n";
    if (!valid_pairs.empty()) os << "valid_predictions = valid_predictions.csv\n";
    os << "# resolved configuration\n" << serialize_run_config(res.config, tc, res.vocab);
  }

  std::cout << "trained " << family_name(res.config.family) << " for " << tc.epochs
            << " epochs; final loss " << res.history.epochs.back().mean_loss
            << ", train accuracy " << res.history.epochs.back().train_accuracy;
  if (!valid_pairs.empty()) std::cout << ", validation F1 " << valid_f1;
  std::cout << "\nartifacts in " << out_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& input_csv,
                const std::string& out) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  ParsedRunConfig rc = parse_run_config(ck.config_text);
  if (rc.vocab.size() != rc.model.vocab_size)
    throw DataError(checkpoint_path + ": vocabulary mismatch: config says " +
                    std::to_string(rc.model.vocab_size) + " ids, vocab block has " +
                    std::to_string(rc.vocab.size()));
  const Tensor& embed = ck.params.get("embed");
  if (embed.dim(0) != rc.model.vocab_size)
    throw DataError(checkpoint_path + ": vocabulary mismatch: embedding has " +
                    std::to_string(embed.dim(0)) + " rows for vocab of " +
                    std::to_string(rc.model.vocab_size));

  std::vector<QuestionPair> pairs = load_pairs(input_csv, false);
  std::vector<EncodedPair> enc;
  enc.reserve(pairs.size());
  for (const QuestionPair& p : pairs)
    enc.push_back(encode_pair(p, rc.vocab, scheme_for(rc.model.family), rc.model.encode_len()));
  std::vector<double> probs = predict_probabilities(rc.model, ck.params, enc, env_threads());

  std::vector<std::string> ids;
  std::vector<int> preds;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ids.push_back(pairs[i].id);
    preds.push_back(predict_label(probs[i]));
  }
  write_submission(ids, preds, out);
  std::cout << "wrote " << preds.size() << " predictions -> " << out << "\n";
  return 0;
}

int cmd_ensemble(const std::vector<std::string>& set_paths, std::size_t k,
                 const std::string& out) {
  std::vector<PredictionSet> runs;
  runs.reserve(set_paths.size());
  for (const std::string& p : set_paths) runs.push_back(load_prediction_set(p));
  if (k == 0) k = runs.size();
  VoterPanel panel = select_best_k(runs, k);
  PredictionSet result = ensemble_predict(panel);
  write_submission(result.ids, result.predictions, out);
  std::cout << "ensembled " << panel.size() << " of " << runs.size() << " runs (" << result.run_id
            << ") -> " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& submission_path, const std::string& labels_csv,
                 double fraction, std::uint64_t seed, const std::string& split_out) {
  std::map<std::string, int> preds = read_submission(submission_path);
  std::vector<QuestionPair> labeled = load_pairs(labels_csv, true);
  std::vector<std::string> ids;
  std::map<std::string, int> labels;
  for (const QuestionPair& p : labeled) {
    ids.push_back(p.id);
    labels[p.id] = *p.label;
  }
  SplitAssignment split = split_public_private(ids, fraction, seed);
  auto [pub, priv] = score_submission(preds, labels, split);
  if (!split_out.empty()) write_split_manifest(split, split_out);
  std::printf("public_f1=%.5f private_f1=%.5f\n", pub.f1, priv.f1);
  return 0;
}

int cmd_gradcheck(const std::string& family_str, std::optional<std::uint64_t> seed,
                  bool inject_fault) {
  Family family;
  try {
    family = parse_family(family_str);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  std::uint64_t used_seed = seed.value_or(gradcheck_default_seed(family));
  GradCheckReport rep = run_family_gradcheck(family, used_seed, inject_fault ? 1.1 : 1.0);
  std::printf("family=%s max_rel_err=%.6g\n", family_name(family), rep.max_rel_err);
  return rep.max_rel_err <= 1e-4 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairsim: neural question-pair similarity pipeline"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "normalize country names in a pair CSV");
  std::string pre_in, pre_table, pre_out;
  pre->add_option("--input", pre_in, "input pair CSV")->required();
  pre->add_option("--table", pre_table, "normalization table (variant<TAB>canonical)");
  pre->add_option("--out", pre_out, "output CSV")->required();

  // train
  auto* tr = app.add_subcommand("train", "train one seeded model");
  std::string tr_config, tr_train, tr_valid, tr_out;
  CliOverrides over;
  std::string tr_family;
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 0, tr_batch = 0, tr_maxlen = 0, tr_mlm = 0;
  double tr_lr = 0.0;
  tr->add_option("--config", tr_config, "flat key = value config file");
  tr->add_option("--train", tr_train, "training pair CSV")->required();
  tr->add_option("--valid", tr_valid, "validation pair CSV");
  tr->add_option("--out", tr_out, "output directory")->required();
  auto* fam_opt = tr->add_option("--family", tr_family, "CNN | BIGRU | ATTENTION | BERT_STYLE");
  auto* seed_opt = tr->add_option("--seed", tr_seed, "training seed");
  auto* ep_opt = tr->add_option("--epochs", tr_epochs, "override epochs");
  auto* ba_opt = tr->add_option("--batch-size", tr_batch, "override batch size");
  auto* lr_opt = tr->add_option("--lr", tr_lr, "override learning rate");
  auto* ml_opt = tr->add_option("--max-len", tr_maxlen, "override max sequence length");
  auto* mm_opt = tr->add_option("--mlm-epochs", tr_mlm, "masked-token pretraining epochs");

  // predict
  auto* pr = app.add_subcommand("predict", "write a submission from a checkpoint");
  std::string pr_ck, pr_in, pr_out;
  pr->add_option("--checkpoint", pr_ck, "checkpoint file")->required();
  pr->add_option("--input", pr_in, "test pair CSV")->required();
  pr->add_option("--out", pr_out, "submission CSV")->required();

  // ensemble
  auto* en = app.add_subcommand("ensemble", "hard-vote prediction sets");
  std::vector<std::string> en_sets;
  std::size_t en_k = 0;
  std::string en_out;
  en->add_option("sets", en_sets, "prediction-set files")->required();
  en->add_option("-k,--k", en_k, "panel size (default: all)");
  en->add_option("--out", en_out, "submission CSV")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "public/private F1 of a submission");
  std::string ev_sub, ev_labels, ev_split_out;
  double ev_fraction = 0.30;
  std::uint64_t ev_seed = 0;
  ev->add_option("--submission", ev_sub, "submission CSV")->required();
  ev->add_option("--labels", ev_labels, "labeled pair CSV")->required();
  ev->add_option("--fraction", ev_fraction, "public fraction (default 0.30)");
  ev->add_option("--seed", ev_seed, "split shuffle seed");
  ev->add_option("--split-out", ev_split_out, "write the id,segment split manifest here");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference sweep of one family");
  std::string gc_family;
  std::uint64_t gc_seed = 0;
  bool gc_fault = false;
  gc->add_option("--family", gc_family, "CNN | BIGRU | ATTENTION | BERT_STYLE")->required();
  auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "parameter init seed");
  gc->add_flag("--inject-fault", gc_fault, "corrupt the analytic gradient (self-test)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (*pre) return cmd_preprocess(pre_in, pre_table, pre_out);
    if (*tr) {
      if (*fam_opt) over.family = tr_family;
      if (*seed_opt) over.seed = tr_seed;
      if (*ep_opt) over.epochs = tr_epochs;
      if (*ba_opt) over.batch_size = tr_batch;
      if (*lr_opt) over.learning_rate = tr_lr;
      if (*ml_opt) over.max_len = tr_maxlen;
      if (*mm_opt) over.mlm_epochs = tr_mlm;
      return cmd_train(tr_config, tr_train, tr_valid, tr_out, over);
    }
    if (*pr) return cmd_predict(pr_ck, pr_in, pr_out);
    if (*en) return cmd_ensemble(en_sets, en_k, en_out);
    if (*ev) return cmd_evaluate(ev_sub, ev_labels, ev_fraction, ev_seed, ev_split_out);
    if (*gc)
      return cmd_gradcheck(gc_family, *gc_seed_opt ? std::optional<std::uint64_t>(gc_seed)
                                                   : std::nullopt,
                           gc_fault);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
