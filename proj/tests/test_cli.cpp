#include "mccl/cli.hpp"
#include "mccl/config.hpp"
#include "tmpdir.hpp"

#include <doctest.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Captured {
  int code;
  std::string err;
};

Captured run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mccl");
  std::ostringstream err, out;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  const int code = mccl::run(args);
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  return {code, err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string> kSmallSynth = {"--set", "synth.T=20", "synth.H=10", "synth.W=10", "synth.threshold=1.2"};
const std::vector<std::string> kSmallData = {"--set", "data.w=3", "data.h=3", "data.hist_len=3"};
const std::vector<std::string> kSmallModel = {"--set", "model.hidden_dyn=8", "model.hidden_stat=4",
                                              "model.hidden_head=4", "model.latent_dim=4"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("cli: exit codes and error lines") {
  TempDir dir("cli_err");
  const auto unknown_flag = run_cli({"synth", "--out", (dir.path / "c").string(), "--bogus"});
  CHECK(unknown_flag.code == mccl::kExitUsage);
  CHECK(unknown_flag.err.find("mccl: error kind=") == 0);

  const auto unknown_key = run_cli({"synth", "--out", (dir.path / "c").string(), "--set", "synth.colour=3"});
  CHECK(unknown_key.code == mccl::kExitUnknownKey);
  CHECK(unknown_key.err.find("synth.colour") != std::string::npos);

  const auto missing = run_cli({"prepare", "--cube", (dir.path / "nowhere").string()});
  CHECK(missing.code == mccl::kExitMissingPath);

  const auto bad_value = run_cli({"synth", "--out", (dir.path / "c").string(), "--set", "synth.regimes=1"});
  CHECK(bad_value.code == mccl::kExitConfig);

  CHECK(run_cli(cat({"synth", "--out", (dir.path / "c").string()}, kSmallSynth)).code == 0);
  const auto forbidden = run_cli({"train", "--prepared", (dir.path / "p").string(), "--protocol", "full",
                                  "--strategy", "historical"});
  CHECK(forbidden.code == mccl::kExitConfig);
  CHECK(forbidden.err.find("forbidden combination protocol=full strategy=historical") != std::string::npos);

  // Truncated dynamic array.
  fs::resize_file(dir.path / "c" / "dyn.f32", 100);
  const auto bad_data = run_cli(cat({"prepare", "--cube", (dir.path / "c").string()}, kSmallData));
  CHECK(bad_data.code == mccl::kExitData);
  CHECK(bad_data.err.find("dyn.f32") != std::string::npos);

  CHECK(run_cli({}).code == mccl::kExitUsage);
}

TEST_CASE("cli: five-command pipeline with resume") {
  TempDir dir("cli_pipe");
  const std::string cube = (dir.path / "cube").string();
  const std::string prep = (dir.path / "prep").string();
  const std::string run = (dir.path / "run").string();
  REQUIRE(run_cli(cat({"synth", "--out", cube, "--seed", "2"}, kSmallSynth)).code == 0);
  CHECK(fs::exists(dir.path / "cube" / "manifest.txt"));
  REQUIRE(run_cli(cat({"prepare", "--cube", cube, "--out", prep, "--strategy", "curriculum"}, kSmallData)).code == 0);
  CHECK(fs::exists(dir.path / "prep" / "maps.bin"));
  CHECK(fs::exists(dir.path / "prep" / "standardization.txt"));
  CHECK(run_cli({"prepare", "--cube", cube, "--out", prep, "--strategy", "nearest"}).code == mccl::kExitConfig);

  const std::vector<std::string> train_args = cat({"train", "--prepared", prep, "--out", run, "--epochs-pre", "2",
                                                   "--epochs-cl", "2"}, kSmallModel);
  REQUIRE(run_cli(train_args).code == 0);
  const std::string history = read_file(dir.path / "run" / "history.csv");
  const std::string ckpt = read_file(dir.path / "run" / "checkpoint.bin");

  // Stop after two epochs, then resume from that checkpoint.
  const std::string run2 = (dir.path / "run2").string();
  auto head = train_args;
  head[4] = run2;
  REQUIRE(run_cli(cat(head, {"--stop-after", "2"})).code == 0);
  fs::copy_file(dir.path / "run2" / "checkpoint.bin", dir.path / "half.bin");
  REQUIRE(run_cli(cat(head, {"--resume", (dir.path / "half.bin").string()})).code == 0);
  CHECK(read_file(dir.path / "run2" / "history.csv") == history);
  CHECK(read_file(dir.path / "run2" / "checkpoint.bin") == ckpt);

  const std::string metrics = (dir.path / "run" / "metrics.csv").string();
  REQUIRE(run_cli(cat({"eval", "--prepared", prep, "--checkpoint", run + "/checkpoint.bin", "--out", metrics},
                      kSmallModel)).code == 0);
  CHECK(read_file(metrics).find("aggregate_macro,") != std::string::npos);

  const std::string diag = (dir.path / "diag").string();
  REQUIRE(run_cli(cat({"diagnose", "--prepared", prep, "--out", diag, "--checkpoint", "ctl=" + run + "/checkpoint.bin",
                       "--svg", "--set", "diagnose.pairs=3"},
                      {"model.hidden_dyn=8", "model.hidden_stat=4", "model.hidden_head=4", "model.latent_dim=4"}))
              .code == 0);
  CHECK(read_file(dir.path / "diag" / "latent_distances.csv").rfind("distance,ctl\n", 0) == 0);
  CHECK(fs::exists(dir.path / "diag" / "feature_diff.csv"));
  CHECK(fs::exists(dir.path / "diag" / "feature_ratio.svg"));

  // Every artifact is listed in the run summary of its directory.
  const auto summary = mccl::Config::load(dir.path / "run" / "run_summary.txt");
  CHECK(summary.get_string("train.checkpoint", "") == run + "/checkpoint.bin");
  CHECK(summary.get_string("train.history", "") == run + "/history.csv");
  CHECK(summary.get_string("eval.metrics", "") == metrics);
  CHECK(mccl::Config::load(dir.path / "prep" / "run_summary.txt").has("prepare.maps"));
}
