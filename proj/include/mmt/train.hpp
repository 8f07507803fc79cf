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

#ifndef MMT_TRAIN_HPP_
#define MMT_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mmt/checkpoint.hpp"
#include "mmt/data.hpp"
#include "mmt/losses.hpp"
#include "mmt/masking.hpp"
#include "mmt/model.hpp"

namespace mmt {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double peak_lr = 3e-3;
  // learning rate: linear warmup, flat hold, then exponential decay
  int warmup_steps = 200;
  int hold_steps = 500;
  double decay_rate = 0.999;  // per-step multiplier after the hold
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip = 5.0;  // global-norm ceiling; <= 0 disables
  double attn_dropout = 0.1;
  int eval_every = 50;
  int keep_best_k = 3;  // checkpoints retained and averaged at the end
  int distill_shift = 0;
  double weight_stream = 1.0;
  double weight_full = 1.0;
  double weight_distill = 1.0;
  double divergence_threshold = 1e4;  // abort when a batch loss passes this

  void validate() const;  // throws std::invalid_argument
  bool operator==(const TrainConfig&) const = default;
};

// Learning rate at a 0-based step index.
double lr_at(const TrainConfig& tc, int step);

// Adam over every parameter in the set, in registration order.  step()
// consumes the accumulated gradients; the caller zeroes them afterwards.
class Adam {
 public:
  Adam(ParamSet& params, double beta1, double beta2, double eps);
  void step(double lr);

 private:
  ParamSet& params_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// sqrt of the summed squared gradients across the whole set (tensors with
// no accumulated gradient count as zero).
double global_grad_norm(const ParamSet& params);
// Multiplies every accumulated gradient in place.
void scale_grads(ParamSet& params, double factor);

struct TrainResult {
  std::vector<std::pair<int, double>> valid_history;  // (step, valid loss)
  double best_valid = 0.0;
  int steps_run = 0;
  std::string final_path;  // averaged checkpoint
};

// Runs the multi-mode objective: every step draws ONE context schedule from
// `sampler` for the whole mini-batch, accumulates utterance gradients, clips,
// and applies Adam.  Every eval_every steps the full-context validation loss
// is computed; the keep_best_k best checkpoints are retained and averaged
// into <out_dir>/final.ckpt at the end.  Log lines are deterministic (no
// timestamps), so identical runs produce identical logs.  Throws
// std::runtime_error("training diverged ...") when the loss explodes.
TrainResult train(Model& model, const std::vector<Utterance>& train_data,
                  const std::vector<Utterance>& valid_data,
                  const TrainConfig& tc, const SamplerSpec& sampler,
                  std::uint64_t seed, std::uint64_t config_hash,
                  const std::string& out_dir, std::ostream& log);

// Mean full-context transducer loss per utterance, no dropout, no tape.
double mean_valid_loss(const Model& model,
                       const std::vector<Utterance>& data);

// Element-wise mean of the parameters across checkpoints whose configs all
// match; metadata (hash, seed) is taken from the first.
Checkpoint average_checkpoints(const std::vector<std::string>& paths);

}  // namespace mmt

#endif  // MMT_TRAIN_HPP_
