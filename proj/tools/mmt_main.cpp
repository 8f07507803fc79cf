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
// Command-line entry point.  Subcommands:
//   gen-data      synthesise train/valid/test datasets
//   train         run the multi-mode training loop
//   sweep         evaluate a checkpoint across context schedules
//   sample-masks  print schedules drawn from a sampler (with totals/latency)
//   latency       print the algorithmic latency of schedules
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmt/checkpoint.hpp"
#include "mmt/config.hpp"
#include "mmt/data.hpp"
#include "mmt/eval.hpp"
#include "mmt/masking.hpp"
#include "mmt/model.hpp"
#include "mmt/train.hpp"

namespace fs = std::filesystem;

namespace {

// File config with flag overrides applied (flags win), then validated.
mmt::RunConfig effective_config(const std::string& config_path,
                                const std::optional<std::uint64_t>& seed,
                                const std::optional<std::string>& sampler) {
  mmt::RunConfig cfg = config_path.empty()
                           ? mmt::RunConfig{}
                           : mmt::load_config_file(config_path);
  if (seed) cfg.seed = *seed;
  if (sampler) cfg.sampler = *sampler;
  cfg.validate();
  return cfg;
}

// Split seeds are derived from the run seed and the split name, so the three
// splits never share utterances and each is independently reproducible.
std::vector<mmt::Utterance> make_split(const mmt::RunConfig& cfg,
                                       const std::string& name, int count) {
  return mmt::gen_split(cfg.task, cfg.seed ^ mmt::fnv1a64(name), count, name);
}

std::vector<mmt::ContextSchedule> parse_schedule_list(const std::string& list,
                                                      int layers) {
  std::vector<mmt::ContextSchedule> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(mmt::parse_schedule(tok, layers));
  if (out.empty())
    throw std::invalid_argument("schedule list \"" + list + "\" is empty");
  return out;
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void run_gen_data(const std::string& config_path,
                  const std::optional<std::uint64_t>& seed,
                  const std::string& out_dir) {
  const mmt::RunConfig cfg = effective_config(config_path, seed, std::nullopt);
  const std::uint64_t hash = mmt::config_hash(cfg);
  fs::create_directories(out_dir);

  const std::pair<std::string, int> splits[] = {{"train", cfg.train_utts},
                                                {"valid", cfg.valid_utts},
                                                {"test", cfg.test_utts}};
  for (const auto& [name, count] : splits) {
    mmt::Dataset ds{cfg.task, make_split(cfg, name, count), hash, cfg.seed};
    const std::string path = (fs::path(out_dir) / (name + ".mmds")).string();
    mmt::save_dataset(path, ds);
    std::cout << "wrote " << path << " (" << count << " utterances)\n";
  }
  mmt::save_config_file(cfg, (fs::path(out_dir) / "config.json").string());
  std::cout << "config " << hash_hex(hash) << "\n";
}

void run_train(const std::string& config_path,
               const std::optional<std::uint64_t>& seed,
               const std::optional<std::string>& sampler,
               const std::string& out_dir) {
  const mmt::RunConfig cfg = effective_config(config_path, seed, sampler);
  const std::uint64_t hash = mmt::config_hash(cfg);
  fs::create_directories(out_dir);

  const std::vector<mmt::Utterance> train_split =
      make_split(cfg, "train", cfg.train_utts);
  const std::vector<mmt::Utterance> valid_split =
      make_split(cfg, "valid", cfg.valid_utts);

  mmt::Rng init_rng(mmt::Rng::mix(cfg.seed ^ mmt::fnv1a64("model-init")));
  mmt::Model model = mmt::Model::init(cfg.model, init_rng);

  const std::string log_path = (fs::path(out_dir) / "train.log").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open " + log_path + " for write");

  mmt::save_config_file(cfg, (fs::path(out_dir) / "config.json").string());
  const mmt::TrainResult res =
      mmt::train(model, train_split, valid_split, cfg.train,
                 mmt::parse_sampler(cfg.sampler), cfg.seed, hash, out_dir, log);

  std::cout << "trained " << res.steps_run << " steps, best valid loss "
            << res.best_valid << "\n"
            << "final checkpoint " << res.final_path << "\n"
            << "config " << hash_hex(hash) << "\n";
}

void run_sweep(const std::string& config_path,
               const std::optional<std::uint64_t>& seed,
               const std::string& ckpt_path, const std::string& schedules,
               const std::string& out_dir) {
  const mmt::RunConfig cfg = effective_config(config_path, seed, std::nullopt);
  const std::uint64_t hash = mmt::config_hash(cfg);

  const mmt::Checkpoint ck = mmt::load_checkpoint(ckpt_path);
  if (!(ck.config == cfg.model))
    throw std::invalid_argument(
        "checkpoint " + ckpt_path +
        " was trained with a different model architecture than the config");
  const mmt::Model model = mmt::model_from_checkpoint(ck);

  const std::vector<mmt::Utterance> test_split =
      make_split(cfg, "test", cfg.test_utts);
  const std::vector<mmt::ContextSchedule> scheds =
      parse_schedule_list(schedules, cfg.model.layers_audio);

  const mmt::EvalReport report =
      mmt::context_sweep(model, test_split, scheds, cfg.frame_ms,
                         cfg.frontend_frames, hash, cfg.seed);

  fs::create_directories(out_dir);
  const std::string txt = (fs::path(out_dir) / "report.txt").string();
  const std::string csv = (fs::path(out_dir) / "report.csv").string();
  mmt::write_report_txt(report, txt);
  mmt::write_report_csv(report, csv);

  // A run directory's config.json records what produced the artifacts already
  // in it; never replace it with a different configuration (the reports carry
  // their own config-hash header either way).
  const std::string cfg_path = (fs::path(out_dir) / "config.json").string();
  bool keep_existing = false;
  if (fs::exists(cfg_path)) {
    try {
      keep_existing = !(mmt::load_config_file(cfg_path) == cfg);
    } catch (const std::exception&) {
      keep_existing = true;  // unreadable: preserve it all the same
    }
  }
  if (keep_existing)
    std::cerr << "note: " << cfg_path
              << " records a different configuration; leaving it as is"
              << " (this sweep ran under config " << hash_hex(hash) << ")\n";
  else
    mmt::save_config_file(cfg, cfg_path);

  std::ifstream in(txt);
  std::cout << in.rdbuf();
  std::cout << "wrote " << txt << " and " << csv << "\n";
}

void run_sample_masks(const std::string& sampler_text, int layers, int n,
                      std::uint64_t seed, double frame_ms, int downsample,
                      int frontend_frames) {
  const mmt::SamplerSpec spec = mmt::parse_sampler(sampler_text);
  mmt::Rng rng(seed);
  char line[160];
  for (int i = 0; i < n; ++i) {
    const mmt::ContextSchedule sched =
        mmt::sample_schedule(spec, layers, rng);
    std::string total = sched.full_context ? "-"
                                           : std::to_string(sched.total());
    const std::optional<double> lat =
        mmt::latency_ms(sched, frame_ms, downsample, frontend_frames);
    std::string lat_text = "unbounded";
    if (lat) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f ms", *lat);
      lat_text = buf;
    }
    std::snprintf(line, sizeof line, "%-32s C=%-4s latency=%s",
                  sched.str().c_str(), total.c_str(), lat_text.c_str());
    std::cout << line << "\n";
  }
}

void run_latency(const std::string& schedules, int layers, double frame_ms,
                 int downsample, int frontend_frames) {
  for (const mmt::ContextSchedule& sched :
       parse_schedule_list(schedules, layers)) {
    const std::optional<double> lat =
        mmt::latency_ms(sched, frame_ms, downsample, frontend_frames);
    if (lat) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f", *lat);
      std::cout << sched.str() << " " << buf << "\n";
    } else {
      std::cout << sched.str() << " unbounded\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-mode context-scheduled transducer toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> sampler_override;
  std::string out_dir = "out";
  std::string ckpt_path;
  std::string schedules = "fixed:0,fixed:1,fixed:2,full";
  std::string sampler_text;
  int layers = 12;
  int n = 10;
  std::uint64_t mask_seed = 1;
  double frame_ms = 10.0;
  int downsample = 4;
  int frontend_frames = 0;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "synthesise train/valid/test datasets");
  gen->add_option("--config", config_path, "run configuration file (JSON)");
  gen->add_option("--seed", seed, "override the run seed");
  gen->add_option("--out", out_dir, "output directory");
  gen->callback([&] { run_gen_data(config_path, seed, out_dir); });

  CLI::App* tr = app.add_subcommand("train", "run multi-mode training");
  tr->add_option("--config", config_path, "run configuration file (JSON)");
  tr->add_option("--seed", seed, "override the run seed");
  tr->add_option("--sampler", sampler_override,
                 "override the training context sampler");
  tr->add_option("--out", out_dir, "output directory");
  tr->callback([&] { run_train(config_path, seed, sampler_override, out_dir); });

  CLI::App* sw = app.add_subcommand(
      "sweep", "evaluate a checkpoint across context schedules");
  sw->add_option("--config", config_path, "run configuration file (JSON)");
  sw->add_option("--seed", seed, "override the run seed");
  sw->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  sw->add_option("--schedules", schedules,
                 "comma-separated schedules (full, fixed:c, or c1-c2-...)");
  sw->add_option("--out", out_dir, "output directory");
  sw->callback(
      [&] { run_sweep(config_path, seed, ckpt_path, schedules, out_dir); });

  CLI::App* sm = app.add_subcommand(
      "sample-masks", "print schedules drawn from a sampler");
  sm->add_option("--sampler", sampler_text, "sampler text, e.g. tied-uniform:0:2")
      ->required();
  sm->add_option("--layers", layers, "number of self-attention layers");
  sm->add_option("--n", n, "number of schedules to draw");
  sm->add_option("--seed", mask_seed, "sampling seed");
  sm->add_option("--frame-ms", frame_ms, "raw feature frame shift (ms)");
  sm->add_option("--downsample", downsample, "frontend downsampling factor");
  sm->add_option("--frontend-frames", frontend_frames,
                 "frontend lookahead in raw frames");
  sm->callback([&] {
    run_sample_masks(sampler_text, layers, n, mask_seed, frame_ms, downsample,
                     frontend_frames);
  });

  CLI::App* lat = app.add_subcommand(
      "latency", "print the algorithmic latency of schedules");
  lat->add_option("--schedules", schedules,
                  "comma-separated schedules (full, fixed:c, or c1-c2-...)")
      ->required();
  lat->add_option("--layers", layers, "number of self-attention layers");
  lat->add_option("--frame-ms", frame_ms, "raw feature frame shift (ms)");
  lat->add_option("--downsample", downsample, "frontend downsampling factor");
  lat->add_option("--frontend-frames", frontend_frames,
                  "frontend lookahead in raw frames");
  lat->callback([&] {
    run_latency(schedules, layers, frame_ms, downsample, frontend_frames);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
