#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dlm/parse.hpp"
#include "dlm/rng.hpp"

using namespace dlm;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

const char* cli_path() {
  const char* p = std::getenv("DLM_CLI");
  REQUIRE(p != nullptr);
  return p;
}

RunResult run_cli(const std::string& args) {
  const auto dir = fs::temp_directory_path() / "dlm_cli_io";
  fs::create_directories(dir);
  const std::string out_file = (dir / "stdout.txt").string();
  const std::string err_file = (dir / "stderr.txt").string();
  const std::string cmd = std::string(cli_path()) + " " + args + " > " + out_file + " 2> " +
                          err_file;
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(raw);
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

// Shared tiny workspace built once: config, corpus, pretrained base.
struct Workspace {
  std::string dir;
  std::string config_path;

  Workspace() {
    dir = (fs::temp_directory_path() / "dlm_cli_ws").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    config_path = dir + "/toy.conf";
    std::ofstream f(config_path);
    f << "seed = 5\n"
      << "taxonomy.n_sectors = 3\n"
      << "corpus.datasets_per_sector = 4\n"
      << "corpus.eval_datasets_per_sector = 2\n"
      << "model.d_model = 32\n"
      << "model.n_layers = 2\n"
      << "model.n_heads = 2\n"
      << "model.d_ff = 64\n"
      << "train.steps = 20\n"
      << "train.batch = 4\n"
      << "finetune.steps = 20\n"
      << "eval.n_seeds = 1\n"
      << "eval.n_datasets = 1\n"
      << "eval.folds = 3\n"
      << "paths.out = " << dir << "/out\n";
  }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("missing --config is a usage error on stderr") {
  const RunResult r = run_cli("identify somefile.csv");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("unknown subcommand is a usage error") {
  const RunResult r = run_cli("frobnicate --config /dev/null");
  CHECK(r.exit_code == 1);
}

TEST_CASE("unknown config key is rejected") {
  const auto& ws = workspace();
  const std::string bad = ws.dir + "/bad.conf";
  {
    std::ofstream f(bad);
    f << "definitely.not.a.key = 1\n";
  }
  const RunResult r = run_cli("gen-corpus --config " + bad);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("ConfigError") != std::string::npos);
}

TEST_CASE("gen-corpus then pretrain produce a working model") {
  const auto& ws = workspace();
  const RunResult gen = run_cli("gen-corpus --config " + ws.config_path);
  CHECK(gen.exit_code == 0);
  CHECK(fs::exists(ws.dir + "/out/corpus/manifest.csv"));
  CHECK(fs::exists(ws.dir + "/out/heldout/manifest.csv"));
  CHECK(fs::exists(ws.dir + "/out/taxonomy.json"));

  const RunResult pre = run_cli("pretrain --config " + ws.config_path);
  CHECK(pre.exit_code == 0);
  REQUIRE(fs::exists(ws.dir + "/out/base.tdlm"));

  // identify: CSV ranking on stdout.
  {
    std::ofstream f(ws.dir + "/probe.csv");
    f << "a,b\n1.5,2.5\n2.5,3.5\n0.5,1.5\n4,2\n1,1\n2,2\n3,3\n1,4\n";
  }
  const RunResult ident = run_cli("identify " + ws.dir + "/probe.csv --config " +
                                  ws.config_path + " --model " + ws.dir + "/out/base.tdlm");
  CHECK(ident.exit_code == 0);
  CHECK(ident.out.rfind("rank,sector_id,probability", 0) == 0);

  // impute: fully observed file round-trips to identical cells.
  const RunResult imp = run_cli("impute " + ws.dir + "/probe.csv --config " +
                                ws.config_path + " --model " + ws.dir + "/out/base.tdlm");
  CHECK(imp.exit_code == 0);
  REQUIRE(fs::exists(ws.dir + "/probe.csv.imputed.csv"));
  const RawTable orig = parse_table_file(ws.dir + "/probe.csv");
  const RawTable round = parse_table_file(ws.dir + "/probe.csv.imputed.csv");
  REQUIRE(orig.cells.size() == round.cells.size());
  for (std::size_t i = 0; i < orig.cells.size(); ++i) CHECK(orig.cells[i] == round.cells[i]);

  // impute fills a hole.
  {
    std::ofstream f(ws.dir + "/holey.csv");
    f << "a,b\n1.5,2.5\n,3.5\n0.5,1.5\n4,2\n1,1\n2,2\n3,3\n1,4\n";
  }
  const RunResult imp2 = run_cli("impute " + ws.dir + "/holey.csv --config " +
                                 ws.config_path + " --model " + ws.dir + "/out/base.tdlm");
  CHECK(imp2.exit_code == 0);
  const RawTable filled = parse_table_file(ws.dir + "/holey.csv.imputed.csv");
  CHECK_FALSE(filled.at(1, 0).is_missing());

  // predict: per-row class probabilities on stdout.
  {
    std::ofstream f(ws.dir + "/task.csv");
    f << "f0,f1,y\n";
    Rng rng(4);
    for (int r = 0; r < 30; ++r) {
      const double a = rng.normal(), b = rng.normal();
      f << a << ',' << b << ',' << (a + b > 0 ? "pos" : "neg") << "\n";
    }
  }
  const RunResult pred = run_cli("predict " + ws.dir + "/task.csv --target 2 --config " +
                                 ws.config_path + " --model " + ws.dir + "/out/base.tdlm");
  CHECK(pred.exit_code == 0);
  CHECK(pred.out.rfind("row,neg,pos", 0) == 0);

  // Data errors exit 2.
  const RunResult missing = run_cli("identify " + ws.dir + "/does_not_exist.csv --config " +
                                    ws.config_path + " --model " + ws.dir + "/out/base.tdlm");
  CHECK(missing.exit_code == 2);
}

TEST_CASE("gen-corpus is byte-deterministic across reruns") {
  const auto& ws = workspace();
  REQUIRE(fs::exists(ws.dir + "/out/corpus/manifest.csv"));
  const std::string manifest_before = slurp(ws.dir + "/out/corpus/manifest.csv");
  std::string sample_name;
  for (const auto& entry : fs::directory_iterator(ws.dir + "/out/corpus")) {
    if (entry.path().extension() == ".csv" && entry.path().filename() != "manifest.csv") {
      sample_name = entry.path().string();
      break;
    }
  }
  REQUIRE_FALSE(sample_name.empty());
  const std::string sample_before = slurp(sample_name);
  const RunResult gen = run_cli("gen-corpus --config " + ws.config_path);
  CHECK(gen.exit_code == 0);
  CHECK(slurp(ws.dir + "/out/corpus/manifest.csv") == manifest_before);
  CHECK(slurp(sample_name) == sample_before);
}
