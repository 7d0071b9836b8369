#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pairsim/pairsim.hpp"

using namespace pairsim;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("pairsim_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  fs::path out_file = work_dir() / ("out_" + std::to_string(counter++) + ".txt");
  std::string cmd = env + (env.empty() ? "" : " ") + PAIRSIM_CLI_PATH + " " + args + " > " +
                    out_file.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::string output((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {code, output};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string data_file(const std::string& name) {
  return std::string(PAIRSIM_DATA_DIR) + "/" + name;
}

fs::path write_file(const std::string& name, const std::string& contents) {
  fs::path p = work_dir() / name;
  std::ofstream out(p, std::ios::binary);
  out << contents;
  return p;
}

}  // namespace

TEST_CASE("cli: usage errors exit 1, data errors exit 2") {
  REQUIRE(run_cli("no-such-command").exit_code == 1);
  REQUIRE(run_cli("train --train x.csv").exit_code == 1);  // missing required --out
  CliResult missing = run_cli("predict --checkpoint /nonexistent.psim --input " +
                              data_file("sample_test.csv") + " --out " +
                              (work_dir() / "never.csv").string());
  REQUIRE(missing.exit_code == 2);
}

TEST_CASE("cli: preprocess normalizes both questions and is idempotent") {
  fs::path once = work_dir() / "pre1.csv";
  fs::path twice = work_dir() / "pre2.csv";
  CliResult r1 = run_cli("preprocess --input " + data_file("sample_train.csv") + " --table " +
                         data_file("country_names.tsv") + " --out " + once.string());
  REQUIRE(r1.exit_code == 0);
  std::string normalized = slurp(once);
  REQUIRE(normalized.find("united_states") != std::string::npos);
  REQUIRE(normalized.find(" usa,") == std::string::npos);

  CliResult r2 = run_cli("preprocess --input " + once.string() + " --table " +
                         data_file("country_names.tsv") + " --out " + twice.string());
  REQUIRE(r2.exit_code == 0);
  REQUIRE(slurp(twice) == normalized);  // re-running is a no-op

  // empty table: output equals input modulo canonical quoting
  fs::path empty_table = write_file("empty.tsv", "# nothing\n");
  fs::path identity = work_dir() / "pre3.csv";
  CliResult r3 = run_cli("preprocess --input " + data_file("sample_train.csv") + " --table " +
                         empty_table.string() + " --out " + identity.string());
  REQUIRE(r3.exit_code == 0);
  REQUIRE(slurp(identity) == slurp(data_file("sample_train.csv")));
}

TEST_CASE("cli: preprocess reports malformed rows with line numbers") {
  fs::path bad = write_file("bad_rows.csv",
                            "id,question1,question2,label\n"
                            "a,x,y,1\n"
                            "b,,y,0\n");
  CliResult r = run_cli("preprocess --input " + bad.string() + " --out " +
                        (work_dir() / "never2.csv").string());
  REQUIRE(r.exit_code == 2);
  REQUIRE(r.output.find("line 3") != std::string::npos);
}

namespace {
std::string tiny_bigru_config() {
  static fs::path p = write_file("bigru_tiny.conf",
                                 "family = BIGRU\n"
                                 "embed_dim = 8\n"
                                 "hidden = 6\n"
                                 "max_len = 12\n"
                                 "epochs = 2\n"
                                 "batch_size = 16\n"
                                 "learning_rate = 0.01\n");
  return p.string();
}
}  // namespace

TEST_CASE("cli: train writes checkpoint, history, prediction set and manifest") {
  fs::path out = work_dir() / "run_a";
  CliResult r = run_cli("train --config " + tiny_bigru_config() + " --train " +
                        data_file("sample_train.csv") + " --valid " + data_file("sample_valid.csv") +
                        " --seed 17 --out " + out.string());
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(out / "checkpoint.psim"));
  REQUIRE(fs::exists(out / "history.csv"));
  REQUIRE(fs::exists(out / "valid_predictions.csv"));
  REQUIRE(fs::exists(out / "manifest.txt"));

  std::string history = slurp(out / "history.csv");
  REQUIRE(history.rfind("epoch,mean_loss,train_accuracy,valid_f1", 0) == 0);
  REQUIRE(std::count(history.begin(), history.end(), '\n') == 3);  // header + 2 epochs

  PredictionSet set = load_prediction_set((out / "valid_predictions.csv").string());
  REQUIRE(set.run_id == "seed17");
  REQUIRE(set.seed == 17);
  REQUIRE(set.ids.size() == 10);

  std::string manifest = slurp(out / "manifest.txt");
  REQUIRE(manifest.find("seeds = 17") != std::string::npos);
  REQUIRE(manifest.find("family = BIGRU") != std::string::npos);
}

TEST_CASE("cli: identical train invocations produce identical artifacts") {
  fs::path out1 = work_dir() / "det_a";
  fs::path out2 = work_dir() / "det_b";
  std::string common = "train --config " + tiny_bigru_config() + " --train " +
                       data_file("sample_train.csv") + " --valid " +
                       data_file("sample_valid.csv") + " --seed 3 --out ";
  REQUIRE(run_cli(common + out1.string()).exit_code == 0);
  REQUIRE(run_cli(common + out2.string()).exit_code == 0);
  REQUIRE(slurp(out1 / "checkpoint.psim") == slurp(out2 / "checkpoint.psim"));
  REQUIRE(slurp(out1 / "history.csv") == slurp(out2 / "history.csv"));
  REQUIRE(slurp(out1 / "valid_predictions.csv") == slurp(out2 / "valid_predictions.csv"));
}

TEST_CASE("cli: predict writes one row per test pair and is thread-count invariant") {
  fs::path out = work_dir() / "run_predict";
  REQUIRE(run_cli("train --config " + tiny_bigru_config() + " --train " +
                  data_file("sample_train.csv") + " --seed 5 --out " + out.string())
              .exit_code == 0);

  fs::path sub1 = work_dir() / "sub1.csv";
  fs::path sub2 = work_dir() / "sub2.csv";
  CliResult r1 = run_cli("predict --checkpoint " + (out / "checkpoint.psim").string() +
                         " --input " + data_file("sample_test.csv") + " --out " + sub1.string());
  REQUIRE(r1.exit_code == 0);
  CliResult r2 = run_cli("predict --checkpoint " + (out / "checkpoint.psim").string() +
                         " --input " + data_file("sample_test.csv") + " --out " + sub2.string(),
                         "PAIRSIM_THREADS=3");
  REQUIRE(r2.exit_code == 0);
  std::string s1 = slurp(sub1);
  REQUIRE(s1 == slurp(sub2));  // parallel prediction is slot-assigned
  REQUIRE(std::count(s1.begin(), s1.end(), '\n') == 13);  // header + 12 rows
  REQUIRE(s1.rfind("QuestionPairID,Prediction\n", 0) == 0);
}

TEST_CASE("cli: ensemble of one run reproduces its predictions") {
  PredictionSet s;
  s.run_id = "only";
  s.seed = 1;
  s.validation_score = 0.8;
  s.ids = {"a", "b", "c"};
  s.predictions = {1, 0, 1};
  fs::path set_path = work_dir() / "only.csv";
  write_prediction_set(s, set_path.string());
  fs::path out = work_dir() / "ens1.csv";
  CliResult r = run_cli("ensemble " + set_path.string() + " -k 1 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  auto parsed = read_submission(out.string());
  REQUIRE(parsed.at("a") == 1);
  REQUIRE(parsed.at("b") == 0);
  REQUIRE(parsed.at("c") == 1);
}

TEST_CASE("cli: odd ensemble matches the majority oracle on a 3-run fixture") {
  std::vector<std::vector<int>> votes = {{1, 1, 0, 0}, {1, 0, 1, 0}, {0, 1, 1, 0}};
  std::vector<std::string> paths;
  for (std::size_t m = 0; m < votes.size(); ++m) {
    PredictionSet s;
    s.run_id = "m" + std::to_string(m);
    s.seed = m;
    s.validation_score = 0.9 - 0.05 * static_cast<double>(m);
    s.ids = {"a", "b", "c", "d"};
    s.predictions = votes[m];
    fs::path p = work_dir() / ("vote_" + std::to_string(m) + ".csv");
    write_prediction_set(s, p.string());
    paths.push_back(p.string());
  }
  fs::path out = work_dir() / "ens3.csv";
  CliResult r = run_cli("ensemble " + paths[0] + " " + paths[1] + " " + paths[2] + " -k 3 --out " +
                        out.string());
  REQUIRE(r.exit_code == 0);
  auto parsed = read_submission(out.string());
  REQUIRE(parsed.at("a") == 1);  // 2/3
  REQUIRE(parsed.at("b") == 1);  // 2/3
  REQUIRE(parsed.at("c") == 1);  // 2/3
  REQUIRE(parsed.at("d") == 0);  // 0/3
}

TEST_CASE("cli: evaluate prints public and private F1 with five decimals") {
  // perfect submission over the sample labels
  auto labeled = load_pairs(data_file("sample_test_labels.csv"), true);
  std::vector<std::string> ids;
  std::vector<int> preds;
  for (const auto& p : labeled) {
    ids.push_back(p.id);
    preds.push_back(*p.label);
  }
  fs::path sub = work_dir() / "perfect.csv";
  write_submission(ids, preds, sub.string());
  CliResult r = run_cli("evaluate --submission " + sub.string() + " --labels " +
                        data_file("sample_test_labels.csv") + " --fraction 0.30 --seed 9");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output == "public_f1=1.00000 private_f1=1.00000\n");
}

TEST_CASE("cli: evaluate reproduces the tp=3 fp=1 fn=2 fixture") {
  // six pairs, predictions engineered to tp=3 fp=1 fn=2 tn=0
  std::string labels_csv = "id,question1,question2,label\n";
  std::vector<int> labels = {1, 1, 1, 0, 1, 1};
  std::vector<int> preds = {1, 1, 1, 1, 0, 0};
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::string id = "e" + std::to_string(i);
    ids.push_back(id);
    labels_csv += id + ",qa,qb," + std::to_string(labels[i]) + "\n";
  }
  fs::path labels_path = write_file("eval_fixture.csv", labels_csv);
  fs::path sub = work_dir() / "fixture_sub.csv";
  write_submission(ids, preds, sub.string());
  // fraction ~1 puts every pair in the public segment
  CliResult r = run_cli("evaluate --submission " + sub.string() + " --labels " +
                        labels_path.string() + " --fraction 0.999999 --seed 1");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output == "public_f1=0.66667 private_f1=0.00000\n");
}

TEST_CASE("cli: evaluate fails loudly on missing predictions") {
  fs::path sub = work_dir() / "partial.csv";
  write_submission({"q50"}, {1}, sub.string());
  CliResult r = run_cli("evaluate --submission " + sub.string() + " --labels " +
                        data_file("sample_test_labels.csv"));
  REQUIRE(r.exit_code == 2);
  REQUIRE(r.output.find("missing") != std::string::npos);
}

TEST_CASE("cli: evaluate writes the split manifest on request") {
  auto labeled = load_pairs(data_file("sample_test_labels.csv"), true);
  std::vector<std::string> ids;
  std::vector<int> preds;
  for (const auto& p : labeled) {
    ids.push_back(p.id);
    preds.push_back(*p.label);
  }
  fs::path sub = work_dir() / "split_sub.csv";
  write_submission(ids, preds, sub.string());
  fs::path split = work_dir() / "split.csv";
  CliResult r = run_cli("evaluate --submission " + sub.string() + " --labels " +
                        data_file("sample_test_labels.csv") + " --split-out " + split.string());
  REQUIRE(r.exit_code == 0);
  std::string manifest = slurp(split);
  REQUIRE(manifest.rfind("id,segment", 0) == 0);
  // 12 ids at 0.30 -> 4 public
  REQUIRE(std::count(manifest.begin(), manifest.end(), '\n') == 13);
}

TEST_CASE("cli: gradcheck emits a machine-parseable line and honest exit codes") {
  CliResult ok = run_cli("gradcheck --family CNN");
  REQUIRE(ok.exit_code == 0);
  REQUIRE(ok.output.rfind("family=CNN max_rel_err=", 0) == 0);

  CliResult fault = run_cli("gradcheck --family CNN --inject-fault");
  REQUIRE(fault.exit_code == 3);

  CliResult bad = run_cli("gradcheck --family NOPE");
  REQUIRE(bad.exit_code == 1);
}

TEST_CASE("cli: probability exactly one half maps to label 1") {
  REQUIRE(predict_label(0.5) == 1);
  REQUIRE(predict_label(0.4999999) == 0);
}

TEST_CASE("cli: family flags resolve the reference schedules") {
  fs::path out = work_dir() / "defaults_gru";
  CliResult r = run_cli("train --family BIGRU --train " + data_file("sample_train.csv") +
                        " --epochs 1 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  std::string manifest = slurp(out / "manifest.txt");
  REQUIRE(manifest.find("batch_size = 512") != std::string::npos);
  REQUIRE(manifest.find("learning_rate = 0.001") != std::string::npos);
  REQUIRE(manifest.find("hidden = 128") != std::string::npos);

  fs::path out2 = work_dir() / "defaults_bert";
  CliResult r2 = run_cli("train --family BERT_STYLE --train " + data_file("sample_train.csv") +
                         " --epochs 1 --out " + out2.string());
  REQUIRE(r2.exit_code == 0);
  std::string manifest2 = slurp(out2 / "manifest.txt");
  REQUIRE(manifest2.find("batch_size = 8") != std::string::npos);
  REQUIRE(manifest2.find("learning_rate = 2.") != std::string::npos);  // 2e-5
  REQUIRE(manifest2.find("e-05") != std::string::npos);
  REQUIRE(manifest2.find("max_seq_len = 50") != std::string::npos);
}

TEST_CASE("cli: a numerical abort exits with code 3 and names the batch") {
  fs::path out = work_dir() / "nan_run";
  CliResult r = run_cli("train --family BIGRU --train " + data_file("sample_train.csv") +
                        " --epochs 3 --lr 1e200 --out " + out.string());
  REQUIRE(r.exit_code == 3);
  REQUIRE(r.output.find("non-finite loss") != std::string::npos);
  REQUIRE(r.output.find("batch") != std::string::npos);
}
