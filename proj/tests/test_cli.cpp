// Copyright 2026 MMT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// End-to-end tests that drive the installed `mmt` binary (path injected as
// MMT_BIN at compile time) through every subcommand and check exit codes,
// stdout, and the artifacts left on disk.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mmt/checkpoint.hpp"
#include "mmt/config.hpp"
#include "mmt/data.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MMT_BIN + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
  const int status = pclose(pipe);
  CmdResult res;
  res.output = out;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A configuration small enough that train finishes in well under a second.
const char* kMicroConfig = R"({
  "model": {"layers_audio": 2, "layers_label": 1, "dim": 16, "dim_ff": 32,
            "heads": 2, "dim_joint": 8, "vocab": 8, "features": 8,
            "downsample": 4},
  "task": {"min_tokens": 2, "max_tokens": 4},
  "train": {"steps": 8, "batch_size": 2, "warmup_steps": 2, "hold_steps": 2,
            "eval_every": 4, "keep_best_k": 2, "peak_lr": 0.002},
  "seed": 11,
  "splits": {"train": 12, "valid": 4, "test": 4}
})";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_micro_config(const fs::path& dir) {
  const fs::path path = dir / "micro.json";
  std::ofstream out(path);
  out << kMicroConfig;
  out.close();
  return path;
}

}  // namespace

TEST_CASE("cli: latency prints per-schedule values and exits 0") {
  CmdResult r = run_cli("latency --schedules fixed:1,fixed:0,full --layers 12");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("1-1-1-1-1-1-1-1-1-1-1-1 480.0") != std::string::npos);
  CHECK(r.output.find("0-0-0-0-0-0-0-0-0-0-0-0 0.0") != std::string::npos);
  CHECK(r.output.find("full unbounded") != std::string::npos);
}

TEST_CASE("cli: latency respects frame parameters") {
  CmdResult r = run_cli(
      "latency --schedules fixed:1 --layers 2 --frame-ms 25 --downsample 2 "
      "--frontend-frames 3");
  // (2 schedule frames * 2x downsampling + 3 frontend frames) * 25 ms
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("1-1 175.0") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 1") {
  CHECK(run_cli("latency --schedules nonsense").exit_code == 1);
  CHECK(run_cli("latency --schedules nonsense").output.find("nonsense") !=
        std::string::npos);
  CHECK(run_cli("").exit_code == 1);                 // missing subcommand
  CHECK(run_cli("latency --bogus 3").exit_code == 1);  // unknown flag
  CHECK(run_cli("sample-masks --sampler not-a-sampler --n 1").exit_code == 1);
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("train --config /nonexistent/config.json").exit_code == 2);
}

TEST_CASE("cli: sample-masks lists schedules with totals and latency") {
  CmdResult r = run_cli("sample-masks --sampler fixed:2 --layers 4 --n 3");
  CHECK(r.exit_code == 0);
  CHECK(count_lines(r.output) == 3);
  // every drawn schedule is 2-2-2-2: total 8, latency 8*4*10ms
  std::istringstream lines(r.output);
  std::string line;
  while (std::getline(lines, line)) {
    CHECK(line.find("2-2-2-2") == 0);
    CHECK(line.find("C=8") != std::string::npos);
    CHECK(line.find("latency=320.0 ms") != std::string::npos);
  }
}

TEST_CASE("cli: sample-masks draws respect a budget constraint") {
  CmdResult r =
      run_cli("sample-masks --sampler constrained:6:2 --layers 4 --n 200");
  CHECK(r.exit_code == 0);
  CHECK(count_lines(r.output) == 200);
  std::istringstream lines(r.output);
  std::string line;
  while (std::getline(lines, line)) {
    const auto pos = line.find("C=");
    REQUIRE(pos != std::string::npos);
    CHECK(std::atoi(line.c_str() + pos + 2) <= 6);
  }
}

TEST_CASE("cli: gen-data writes three reloadable splits plus the config") {
  const fs::path dir = fresh_dir("mmt_cli_gen");
  const fs::path cfg_path = write_micro_config(dir);
  CmdResult r = run_cli("gen-data --config " + cfg_path.string() + " --out " +
                        (dir / "d1").string());
  CHECK(r.exit_code == 0);

  const mmt::RunConfig cfg = mmt::load_config_file(cfg_path.string());
  const mmt::Dataset train = mmt::load_dataset((dir / "d1/train.mmds").string());
  const mmt::Dataset valid = mmt::load_dataset((dir / "d1/valid.mmds").string());
  const mmt::Dataset test = mmt::load_dataset((dir / "d1/test.mmds").string());
  CHECK(train.utterances.size() == 12);
  CHECK(valid.utterances.size() == 4);
  CHECK(test.utterances.size() == 4);
  CHECK(train.config_hash == mmt::config_hash(cfg));
  CHECK(train.seed == cfg.seed);
  CHECK(train.spec == cfg.task);
  // splits are disjoint by construction of their seeds: compare first ids
  CHECK(train.utterances[0].id == "train-0");
  CHECK(test.utterances[0].id == "test-0");
  CHECK(train.utterances[0].features.data() !=
        test.utterances[0].features.data());

  // the dumped config reloads to the same effective configuration
  const mmt::RunConfig dumped =
      mmt::load_config_file((dir / "d1/config.json").string());
  CHECK(dumped == cfg);

  // same command, second directory: byte-identical artifacts
  CmdResult r2 = run_cli("gen-data --config " + cfg_path.string() + " --out " +
                         (dir / "d2").string());
  CHECK(r2.exit_code == 0);
  for (const char* f : {"train.mmds", "valid.mmds", "test.mmds", "config.json"})
    CHECK(slurp(dir / "d1" / f) == slurp(dir / "d2" / f));
}

TEST_CASE("cli: gen-data accepts zero-utterance splits") {
  const fs::path dir = fresh_dir("mmt_cli_gen0");
  const fs::path cfg_path = dir / "zero.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"splits": {"train": 0, "valid": 0, "test": 0}})";
  }
  CmdResult r = run_cli("gen-data --config " + cfg_path.string() + " --out " +
                        (dir / "d").string());
  CHECK(r.exit_code == 0);
  CHECK(mmt::load_dataset((dir / "d/train.mmds").string()).utterances.empty());
}

TEST_CASE("cli: train then sweep produces the full artifact set") {
  const fs::path dir = fresh_dir("mmt_cli_train");
  const fs::path cfg_path = write_micro_config(dir);
  const fs::path run = dir / "run";

  CmdResult tr = run_cli("train --config " + cfg_path.string() + " --out " +
                         run.string());
  CHECK(tr.exit_code == 0);
  CHECK(tr.output.find("trained 8 steps") != std::string::npos);

  const mmt::RunConfig cfg = mmt::load_config_file(cfg_path.string());
  const std::uint64_t hash = mmt::config_hash(cfg);
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(hash));

  // log exists, starts with the provenance header, and has step lines
  const std::string log = slurp(run / "train.log");
  CHECK(log.find(std::string("config ") + hash_hex + " seed 11") == 0);
  CHECK(log.find("step 1 ") != std::string::npos);
  CHECK(log.find("averaged 2 checkpoints") != std::string::npos);

  // the final checkpoint reloads and carries the provenance metadata
  const mmt::Checkpoint ck =
      mmt::load_checkpoint((run / "final.ckpt").string());
  CHECK(ck.config == cfg.model);
  CHECK(ck.config_hash == hash);
  CHECK(ck.seed == cfg.seed);

  // sweep the checkpoint with the default schedule list
  CmdResult sw = run_cli("sweep --config " + cfg_path.string() + " --ckpt " +
                         (run / "final.ckpt").string() + " --out " +
                         run.string());
  CHECK(sw.exit_code == 0);
  const std::string txt = slurp(run / "report.txt");
  const std::string csv = slurp(run / "report.csv");
  CHECK(txt.find(std::string("config ") + hash_hex + " seed 11") == 0);
  CHECK(csv.find(std::string("# config ") + hash_hex + " seed 11") == 0);
  CHECK(count_lines(txt) == 2 + 4);  // header + column row + 4 schedules
  CHECK(csv.find("\nfull,unbounded,") != std::string::npos);

  // a single-schedule sweep produces exactly one row
  CmdResult sw1 = run_cli("sweep --config " + cfg_path.string() + " --ckpt " +
                          (run / "final.ckpt").string() + " --schedules full" +
                          " --out " + (dir / "one").string());
  CHECK(sw1.exit_code == 0);
  CHECK(count_lines(slurp(dir / "one/report.txt")) == 2 + 1);

  // re-running sweep reproduces the report bytes exactly
  CmdResult sw2 = run_cli("sweep --config " + cfg_path.string() + " --ckpt " +
                          (run / "final.ckpt").string() + " --out " +
                          (dir / "again").string());
  CHECK(sw2.exit_code == 0);
  CHECK(slurp(dir / "again/report.txt") == txt);
  CHECK(slurp(dir / "again/report.csv") == csv);

  // re-running train reproduces the log and final checkpoint bytes exactly
  CmdResult tr2 = run_cli("train --config " + cfg_path.string() + " --out " +
                          (dir / "run2").string());
  CHECK(tr2.exit_code == 0);
  CHECK(slurp(dir / "run2/train.log") == log);
  CHECK(slurp(dir / "run2/final.ckpt") == slurp(run / "final.ckpt"));
}

TEST_CASE("cli: train flag overrides beat config-file values") {
  const fs::path dir = fresh_dir("mmt_cli_override");
  const fs::path cfg_path = write_micro_config(dir);
  CmdResult r = run_cli("train --config " + cfg_path.string() +
                        " --seed 99 --sampler fixed:1 --out " +
                        (dir / "run").string());
  CHECK(r.exit_code == 0);
  const std::string log = slurp(dir / "run/train.log");
  CHECK(log.find("seed 99 sampler fixed:1") != std::string::npos);
  CHECK(log.find("sched 1-1") != std::string::npos);
  // the dumped config records the effective (overridden) values
  const mmt::RunConfig dumped =
      mmt::load_config_file((dir / "run/config.json").string());
  CHECK(dumped.seed == 99);
  CHECK(dumped.sampler == "fixed:1");
}

TEST_CASE("cli: sweep never replaces a run's differing config.json") {
  const fs::path dir = fresh_dir("mmt_cli_keepcfg");
  const fs::path cfg_path = write_micro_config(dir);
  const fs::path run = dir / "run";
  CmdResult tr = run_cli("train --config " + cfg_path.string() +
                         " --seed 21 --out " + run.string());
  CHECK(tr.exit_code == 0);
  const std::string before = slurp(run / "config.json");

  // sweeping into the run directory under different settings keeps the
  // training record, says so, and still writes its reports
  CmdResult sw = run_cli("sweep --config " + cfg_path.string() +
                         " --seed 22 --ckpt " + (run / "final.ckpt").string() +
                         " --out " + run.string());
  CHECK(sw.exit_code == 0);
  CHECK(sw.output.find("leaving it as is") != std::string::npos);
  CHECK(slurp(run / "config.json") == before);
  CHECK(fs::exists(run / "report.txt"));

  // matching settings rewrite the same bytes and stay quiet
  CmdResult sw2 = run_cli("sweep --config " + cfg_path.string() +
                          " --seed 21 --ckpt " + (run / "final.ckpt").string() +
                          " --out " + run.string());
  CHECK(sw2.exit_code == 0);
  CHECK(sw2.output.find("note:") == std::string::npos);
  CHECK(slurp(run / "config.json") == before);
}

TEST_CASE("cli: sweep rejects a checkpoint from a different architecture") {
  const fs::path dir = fresh_dir("mmt_cli_mismatch");
  const fs::path cfg_path = write_micro_config(dir);
  run_cli("train --config " + cfg_path.string() + " --out " +
          (dir / "run").string());

  // same task, different encoder width
  const fs::path other_cfg = dir / "other.json";
  {
    std::ofstream out(other_cfg);
    out << R"({
      "model": {"layers_audio": 2, "layers_label": 1, "dim": 24, "dim_ff": 32,
                "heads": 2, "dim_joint": 8, "vocab": 8, "features": 8,
                "downsample": 4},
      "task": {"min_tokens": 2, "max_tokens": 4},
      "splits": {"train": 12, "valid": 4, "test": 4}
    })";
  }
  CmdResult r = run_cli("sweep --config " + other_cfg.string() + " --ckpt " +
                        (dir / "run/final.ckpt").string() + " --out " +
                        (dir / "sw").string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("different model architecture") != std::string::npos);
}

TEST_CASE("cli: divergence aborts with exit 2 and keeps the partial log") {
  const fs::path dir = fresh_dir("mmt_cli_diverge");
  const fs::path cfg_path = dir / "diverge.json";
  {
    // a divergence threshold below any real loss trips on the first step
    std::ofstream out(cfg_path);
    out << R"({
      "model": {"layers_audio": 2, "layers_label": 1, "dim": 16, "dim_ff": 32,
                "heads": 2, "dim_joint": 8, "vocab": 8, "features": 8,
                "downsample": 4},
      "task": {"min_tokens": 2, "max_tokens": 4},
      "train": {"steps": 8, "batch_size": 2, "divergence_threshold": 1e-6},
      "splits": {"train": 12, "valid": 4, "test": 4}
    })";
  }
  CmdResult r = run_cli("train --config " + cfg_path.string() + " --out " +
                        (dir / "run").string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("training diverged at step 1") != std::string::npos);
  const std::string log = slurp(dir / "run/train.log");
  CHECK(log.find("training diverged at step 1") != std::string::npos);
}
