#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hat/io_util.hpp"

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "hat_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string cli_binary() {
  if (const char* env = std::getenv("HAT_CLI_BIN")) return env;
  return "./hat";  // layout when running from the build directory
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = work_dir() / ("out" + std::to_string(counter));
  const fs::path err = work_dir() / ("err" + std::to_string(counter));
  ++counter;
  const std::string cmd =
      cli_binary() + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small geometry so train/eval runs finish in well under a second.
void write_tiny_config(const fs::path& path) {
  std::ofstream cfg(path);
  cfg << "text.model_dim=8\n"
      << "text.num_layers=2\n"
      << "text.num_heads=2\n"
      << "text.tap_layers=2\n"
      << "image.stage_dims=6,8\n"
      << "image.blocks_per_stage=1,1\n"
      << "image.tap_stages=2\n"
      << "align.dim=8\n";
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("binary exists where the suite expects it") {
  REQUIRE_MESSAGE(fs::exists(cli_binary()),
                  "set HAT_CLI_BIN to the hat binary before running the cli suite");
}

TEST_CASE("no arguments is a usage error with exit code 2") {
  const RunResult r = run_cli("");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("usage error") != std::string::npos);
}

TEST_CASE("unknown subcommands and flags exit with code 2") {
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("gen-data --does-not-exist 1 --out x").exit_code == 2);
}

TEST_CASE("help exits cleanly") {
  const RunResult r = run_cli("--help");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("gen-data") != std::string::npos);
  CHECK(r.out.find("train") != std::string::npos);
}

TEST_CASE("domain errors exit with code 1 and an error line") {
  const fs::path dir = work_dir() / "bad_gen";
  const RunResult r = run_cli("gen-data --pairs 0 --out " + dir.string());
  CHECK(r.exit_code == 1);
  CHECK(r.err.rfind("error:", 0) == 0);
}

TEST_CASE("gen-data writes the corpus files and echoes its configuration") {
  const fs::path dir = work_dir() / "corpus";
  const RunResult r = run_cli(
      "gen-data --pairs 6 --vocab 24 --concepts 4 --concepts-per-pair 2 "
      "--captions-per-image 1 --grid 4 --patch-dim 6 --sentence-len-min 4 "
      "--sentence-len-max 6 --seed 5 --out " +
      dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(fs::exists(dir / "images.hatf"));
  CHECK(fs::exists(dir / "texts.txt"));
  CHECK(r.out.find("# effective configuration") != std::string::npos);
  CHECK(r.out.find("data.num_pairs=6") != std::string::npos);
}

TEST_CASE("train, eval, retrieve, and export-attn work end to end") {
  const fs::path dir = work_dir() / "pipeline";
  const fs::path cfg = work_dir() / "tiny.cfg";
  write_tiny_config(cfg);

  REQUIRE(run_cli("gen-data --pairs 6 --vocab 24 --concepts 4 --concepts-per-pair 2 "
                  "--captions-per-image 1 --grid 4 --patch-dim 6 --sentence-len-min 4 "
                  "--sentence-len-max 6 --seed 5 --out " +
                  dir.string())
              .exit_code == 0);

  const fs::path model_dir = work_dir() / "model";
  const RunResult train = run_cli("train --data " + dir.string() + " --out " +
                                  model_dir.string() + " --config " + cfg.string() +
                                  " --epochs 2 --freeze-epochs 1 --batch-size 6");
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(model_dir / "model.ckpt"));
  CHECK(fs::exists(model_dir / "run.cfg"));
  CHECK(fs::exists(model_dir / "train.log"));
  // the log mirrors stdout
  const std::string log = slurp(model_dir / "train.log");
  CHECK(log == train.out);
  CHECK(log.find("# epoch\tlr\tmean_loss") != std::string::npos);

  const fs::path report = work_dir() / "report.kv";
  const RunResult eval = run_cli("eval --data " + dir.string() + " --ckpt " +
                                 model_dir.string() + " --out " + report.string());
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.out.find("image-to-text") != std::string::npos);
  const std::string kv = slurp(report);
  CHECK(kv.find("i2t.r1=") != std::string::npos);
  CHECK(kv.find("t2i.r10=") != std::string::npos);

  const RunResult retrieve = run_cli("retrieve --data " + dir.string() + " --ckpt " +
                                     model_dir.string() +
                                     " --query-kind image --query-id 0 --topk 3");
  REQUIRE(retrieve.exit_code == 0);
  CHECK(retrieve.out.find("rank\tcandidate\tscore\tmatch") != std::string::npos);

  const RunResult bad_query = run_cli("retrieve --data " + dir.string() + " --ckpt " +
                                      model_dir.string() +
                                      " --query-kind image --query-id 99");
  CHECK(bad_query.exit_code == 1);

  const fs::path attn = work_dir() / "attn.csv";
  const RunResult exp = run_cli("export-attn --data " + dir.string() + " --ckpt " +
                                model_dir.string() + " --image-id 0 --text-id 0 --direction i2t " +
                                "--out " + attn.string());
  REQUIRE(exp.exit_code == 0);
  const std::string csv = slurp(attn);
  CHECK(csv.rfind("level,query_token,candidate_token,weight", 0) == 0);

  // ensemble direction has no single attention matrix to export
  const RunResult amb = run_cli("export-attn --data " + dir.string() + " --ckpt " +
                                model_dir.string() + " --image-id 0 --text-id 0 --out " +
                                attn.string());
  CHECK(amb.exit_code == 1);
  CHECK(amb.err.find("direction") != std::string::npos);
}

TEST_CASE("eval accepts fold flags") {
  const fs::path dir = work_dir() / "pipeline";
  const fs::path model_dir = work_dir() / "model";
  REQUIRE(fs::exists(model_dir / "model.ckpt"));  // produced by the pipeline case
  const RunResult r = run_cli("eval --data " + dir.string() + " --ckpt " + model_dir.string() +
                              " --folds 2 --fold-size 3");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("fold") != std::string::npos);

  const RunResult bad = run_cli("eval --data " + dir.string() + " --ckpt " + model_dir.string() +
                                " --folds 9 --fold-size 3");
  CHECK(bad.exit_code == 1);
}

TEST_SUITE_END();
