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

#include "mmt/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"

using namespace mmt;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.layers_audio = 2;
  cfg.layers_label = 1;
  cfg.dim = 8;
  cfg.dim_ff = 12;
  cfg.heads = 2;
  cfg.dim_joint = 6;
  cfg.vocab = 4;
  cfg.features = 4;
  cfg.downsample = 2;
  return cfg;
}

TaskSpec tiny_task() {
  TaskSpec spec;
  spec.features = 4;
  spec.vocab = 4;
  spec.lookahead_k = 2;
  spec.frames_per_token = 4;
  spec.noise_sigma = 0.1f;
  spec.min_tokens = 2;
  spec.max_tokens = 3;
  return spec;
}

TrainConfig smoke_tc() {
  TrainConfig tc;
  tc.steps = 10;
  tc.batch_size = 2;
  tc.peak_lr = 1e-3;
  tc.warmup_steps = 4;
  tc.hold_steps = 2;
  tc.eval_every = 5;
  tc.keep_best_k = 2;
  return tc;
}

}  // namespace

TEST_CASE("learning rate: linear warmup, flat hold, exponential decay") {
  TrainConfig tc;
  tc.peak_lr = 2.0;
  tc.warmup_steps = 4;
  tc.hold_steps = 3;
  tc.decay_rate = 0.5;
  CHECK(lr_at(tc, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lr_at(tc, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(lr_at(tc, 3) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(lr_at(tc, 4) == 2.0);
  CHECK(lr_at(tc, 6) == 2.0);
  CHECK(lr_at(tc, 7) == doctest::Approx(2.0).epsilon(1e-15));  // 0.5^0
  CHECK(lr_at(tc, 8) == doctest::Approx(1.0).epsilon(1e-15));  // 0.5^1
  CHECK(lr_at(tc, 10) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.steps = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.peak_lr = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.attn_dropout = 1.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.decay_rate = 1.5;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.keep_best_k = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("one Adam step on a single weight matches the hand computation") {
  ParamSet params;
  Tensor w = Tensor::from({1}, {5.0}, true);
  params.add("w", w);
  // plant a gradient of 1.0
  w.impl_ptr()->ensure_grad();
  w.impl_ptr()->grad[0] = 1.0;

  Adam opt(params, 0.9, 0.98, 1e-9);
  opt.step(0.1);
  // bias-corrected first step: m_hat = g, v_hat = g^2, so the update is
  // lr * g / (|g| + eps) = lr
  CHECK(params.at("w").value() == doctest::Approx(4.9).epsilon(1e-9));

  // a second identical gradient keeps walking the same direction
  params.at("w").impl_ptr()->grad[0] = 1.0;
  opt.step(0.1);
  CHECK(params.at("w").value() < 4.9);
  CHECK(params.at("w").value() > 4.7);
}

TEST_CASE("gradient norm helpers") {
  ParamSet params;
  Tensor a = Tensor::from({2}, {0.0, 0.0}, true);
  Tensor b = Tensor::from({1}, {0.0}, true);
  params.add("a", a);
  params.add("b", b);
  a.impl_ptr()->ensure_grad();
  a.impl_ptr()->grad = {3.0, 0.0};
  b.impl_ptr()->ensure_grad();
  b.impl_ptr()->grad = {4.0};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0).epsilon(1e-12));
  scale_grads(params, 0.5);
  CHECK(params.at("a").grad()[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(params.at("b").grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(global_grad_norm(params) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("checkpoint averaging is the element-wise mean") {
  ModelConfig cfg = tiny_model();
  Rng rng(1);
  Model a = Model::init(cfg, rng);
  Model b = Model::init(cfg, rng);
  save_checkpoint("avg_a.ckpt", a.config, a.params, 7, 1);
  save_checkpoint("avg_b.ckpt", b.config, b.params, 7, 1);
  Checkpoint avg = average_checkpoints({"avg_a.ckpt", "avg_b.ckpt"});
  auto ia = a.params.begin();
  auto ib = b.params.begin();
  for (const auto& [name, t] : avg.params) {
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(t.data()[i] == doctest::Approx((ia->second.data()[i] +
                                            ib->second.data()[i]) /
                                           2.0)
                               .epsilon(1e-15));
    ++ia;
    ++ib;
  }
  CHECK_THROWS_AS(average_checkpoints({}), std::invalid_argument);

  // a mismatched architecture is rejected
  ModelConfig other = tiny_model();
  other.dim_ff = 16;
  Rng rng2(2);
  Model c = Model::init(other, rng2);
  save_checkpoint("avg_c.ckpt", c.config, c.params, 7, 1);
  CHECK_THROWS_AS(average_checkpoints({"avg_a.ckpt", "avg_c.ckpt"}),
                  std::invalid_argument);
  for (const char* p : {"avg_a.ckpt", "avg_b.ckpt", "avg_c.ckpt"})
    fs::remove(p);
}

TEST_CASE("a short training run produces every artifact deterministically") {
  TaskSpec task = tiny_task();
  std::vector<Utterance> train_data = gen_split(task, 5, 8, "tr");
  std::vector<Utterance> valid_data = gen_split(task, 6, 3, "va");

  auto run = [&](const std::string& dir, std::string& log_out) {
    fs::remove_all(dir);
    Rng init_rng(123);
    Model model = Model::init(tiny_model(), init_rng);
    std::ostringstream log;
    TrainResult res = train(model, train_data, valid_data, smoke_tc(),
                            parse_sampler("tied-uniform:0:1"), 99, 0xABCD,
                            dir, log);
    log_out = log.str();
    return res;
  };

  std::string log_a, log_b;
  TrainResult ra = run("tmp_train_a", log_a);
  TrainResult rb = run("tmp_train_b", log_b);

  CHECK(ra.steps_run == 10);
  REQUIRE(ra.valid_history.size() == 2);  // steps 5 and 10
  CHECK(ra.valid_history[0].first == 5);
  CHECK(ra.valid_history[1].first == 10);
  CHECK(std::isfinite(ra.best_valid));
  CHECK(log_a.find("step 1 ") != std::string::npos);
  CHECK(log_a.find("eval step 10") != std::string::npos);
  CHECK(log_a.find("averaged 2 checkpoints") != std::string::npos);

  // identical seeds mean identical logs and byte-identical checkpoints
  CHECK(log_a == log_b);
  std::ifstream fa(ra.final_path, std::ios::binary);
  std::ifstream fb(rb.final_path, std::ios::binary);
  std::string bytes_a((std::istreambuf_iterator<char>(fa)),
                      std::istreambuf_iterator<char>());
  std::string bytes_b((std::istreambuf_iterator<char>(fb)),
                      std::istreambuf_iterator<char>());
  CHECK(bytes_a.size() > 0);
  CHECK(bytes_a == bytes_b);

  // the averaged checkpoint reloads into a usable model
  Checkpoint ck = load_checkpoint(ra.final_path);
  CHECK(ck.config == tiny_model());
  CHECK(ck.config_hash == 0xABCD);
  CHECK(ck.seed == 99);
  fs::remove_all("tmp_train_a");
  fs::remove_all("tmp_train_b");
}

TEST_CASE("training aborts with step information when the loss explodes") {
  TaskSpec task = tiny_task();
  std::vector<Utterance> train_data = gen_split(task, 5, 4, "tr");
  std::vector<Utterance> valid_data = gen_split(task, 6, 2, "va");
  Rng init_rng(3);
  Model model = Model::init(tiny_model(), init_rng);
  TrainConfig tc = smoke_tc();
  tc.divergence_threshold = 1e-3;  // any real batch loss trips this
  std::ostringstream log;
  CHECK_THROWS_WITH_AS(
      train(model, train_data, valid_data, tc,
            parse_sampler("fixed:1"), 7, 0, "tmp_train_div", log),
      doctest::Contains("diverged at step 1"), std::runtime_error);
  fs::remove_all("tmp_train_div");
}
