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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <stdexcept>

namespace mmt {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (steps < 1 || batch_size < 1)
    throw std::invalid_argument("TrainConfig: steps and batch_size must be >= 1");
  if (peak_lr <= 0)
    throw std::invalid_argument("TrainConfig: peak_lr must be positive");
  if (warmup_steps < 1 || hold_steps < 0)
    throw std::invalid_argument(
        "TrainConfig: need warmup_steps >= 1 and hold_steps >= 0");
  if (decay_rate <= 0 || decay_rate > 1)
    throw std::invalid_argument("TrainConfig: decay_rate outside (0, 1]");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
    throw std::invalid_argument("TrainConfig: Adam betas outside [0, 1)");
  if (adam_eps <= 0)
    throw std::invalid_argument("TrainConfig: adam_eps must be positive");
  if (attn_dropout < 0 || attn_dropout >= 1)
    throw std::invalid_argument("TrainConfig: attn_dropout outside [0, 1)");
  if (eval_every < 1)
    throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  if (keep_best_k < 1)
    throw std::invalid_argument("TrainConfig: keep_best_k must be >= 1");
  if (distill_shift < 0)
    throw std::invalid_argument("TrainConfig: distill_shift must be >= 0");
  if (weight_stream < 0 || weight_full < 0 || weight_distill < 0)
    throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
  if (divergence_threshold <= 0)
    throw std::invalid_argument(
        "TrainConfig: divergence_threshold must be positive");
}

double lr_at(const TrainConfig& tc, int step) {
  if (step < tc.warmup_steps)
    return tc.peak_lr * (step + 1) / tc.warmup_steps;
  if (step < tc.warmup_steps + tc.hold_steps) return tc.peak_lr;
  return tc.peak_lr *
         std::pow(tc.decay_rate, step - tc.warmup_steps - tc.hold_steps);
}

Adam::Adam(ParamSet& params, double beta1, double beta2, double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  std::size_t p = 0;
  for (auto& [name, t] : params_) {
    auto& data = t.data();
    const bool has = t.has_grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has ? t.grad()[i] : 0.0;
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g;
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g * g;
      data[i] -= lr * (m_[p][i] / bc1) / (std::sqrt(v_[p][i] / bc2) + eps_);
    }
    ++p;
  }
}

double global_grad_norm(const ParamSet& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  return std::sqrt(sq);
}

void scale_grads(ParamSet& params, double factor) {
  for (auto& [name, t] : params)
    if (t.has_grad())
      for (double& g : t.mutable_grad()) g *= factor;
}

double mean_valid_loss(const Model& model,
                       const std::vector<Utterance>& data) {
  if (data.empty())
    throw std::invalid_argument("mean_valid_loss: empty data");
  double total = 0.0;
  for (const Utterance& utt : data) {
    PosteriorLattice lat =
        model.forward(utt.features, utt.tokens, full_schedule());
    total += transducer_loss(lat, utt.tokens).value();
  }
  return total / static_cast<double>(data.size());
}

Checkpoint average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty())
    throw std::invalid_argument("average_checkpoints: no paths");
  Checkpoint avg = load_checkpoint(paths[0]);
  for (std::size_t i = 1; i < paths.size(); ++i) {
    Checkpoint next = load_checkpoint(paths[i]);
    if (!(next.config == avg.config))
      throw std::invalid_argument("average_checkpoints: config mismatch in " +
                                  paths[i]);
    auto it = avg.params.begin();
    for (const auto& [name, t] : next.params) {
      if (it == avg.params.end() || it->first != name ||
          it->second.shape() != t.shape())
        throw std::invalid_argument(
            "average_checkpoints: parameter mismatch in " + paths[i] +
            " at \"" + name + "\"");
      auto& acc = it->second.data();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += t.data()[j];
      ++it;
    }
  }
  const double inv = 1.0 / static_cast<double>(paths.size());
  for (auto& [name, t] : avg.params)
    for (double& x : t.data()) x *= inv;
  return avg;
}

TrainResult train(Model& model, const std::vector<Utterance>& train_data,
                  const std::vector<Utterance>& valid_data,
                  const TrainConfig& tc, const SamplerSpec& sampler,
                  std::uint64_t seed, std::uint64_t config_hash,
                  const std::string& out_dir, std::ostream& log) {
  tc.validate();
  if (train_data.empty() || valid_data.empty())
    throw std::invalid_argument("train: empty train or valid split");
  fs::create_directories(out_dir);

  // independent deterministic streams for batching, schedule draws, dropout
  Rng batch_rng(Rng::mix(seed ^ 0x9E3779B97F4A7C15ull));
  Rng sched_rng(Rng::mix(seed ^ 0x2545F4914F6CDD1Dull));
  Rng drop_rng(Rng::mix(seed ^ 0xD6E8FEB86659FD93ull));

  Adam opt(model.params, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
  const LossWeights weights{tc.weight_stream, tc.weight_full,
                            tc.weight_distill};
  struct Kept {
    double valid;
    int step;
    std::string path;
  };
  std::vector<Kept> kept;
  TrainResult res;
  char line[256];

  std::snprintf(line, sizeof line, "config %016llx seed %llu sampler %s",
                static_cast<unsigned long long>(config_hash),
                static_cast<unsigned long long>(seed),
                format_sampler(sampler).c_str());
  log << line << "\n";

  for (int step = 0; step < tc.steps; ++step) {
    // one schedule draw covers the whole mini-batch
    const ContextSchedule sched =
        sample_schedule(sampler, model.config.layers_audio, sched_rng);

    double loss = 0, stream = 0, full = 0, distill = 0;
    for (int b = 0; b < tc.batch_size; ++b) {
      const Utterance& utt = train_data[batch_rng.uniform_int(
          0, static_cast<int>(train_data.size()) - 1)];
      Tape tape;
      Tape::Scope scope(tape);
      ForwardOpts opts{&drop_rng, tc.attn_dropout};
      LossBundle bundle = mode_loss_terms(model, utt.features, utt.tokens,
                                          sched, weights, tc.distill_shift,
                                          opts);
      backward(scale(bundle.total, 1.0 / tc.batch_size));
      loss += bundle.total.value() / tc.batch_size;
      stream += bundle.stream / tc.batch_size;
      full += bundle.full / tc.batch_size;
      distill += bundle.distill / tc.batch_size;
    }

    if (!std::isfinite(loss) || loss > tc.divergence_threshold) {
      for (auto& [name, t] : model.params) t.zero_grad();
      std::snprintf(line, sizeof line,
                    "training diverged at step %d (batch loss %g)", step + 1,
                    loss);
      log << line << "\n";
      throw std::runtime_error(line);
    }

    if (tc.grad_clip > 0) {
      const double norm = global_grad_norm(model.params);
      if (norm > tc.grad_clip)
        scale_grads(model.params, tc.grad_clip / norm);
    }
    opt.step(lr_at(tc, step));
    for (auto& [name, t] : model.params) t.zero_grad();

    std::snprintf(line, sizeof line,
                  "step %d lr %.8f loss %.6f stream %.6f full %.6f "
                  "distill %.6f sched %s",
                  step + 1, lr_at(tc, step), loss, stream, full, distill,
                  sched.str().c_str());
    log << line << "\n";

    if ((step + 1) % tc.eval_every == 0 || step + 1 == tc.steps) {
      const double valid = mean_valid_loss(model, valid_data);
      res.valid_history.emplace_back(step + 1, valid);
      std::snprintf(line, sizeof line, "eval step %d valid %.6f", step + 1,
                    valid);
      log << line << "\n";

      const std::string path =
          (fs::path(out_dir) / ("ckpt_step" + std::to_string(step + 1) +
                                ".ckpt"))
              .string();
      // skip re-saving when the final step coincides with an eval step
      if (kept.empty() || kept.back().step != step + 1) {
        save_checkpoint(path, model.config, model.params, config_hash, seed);
        kept.push_back({valid, step + 1, path});
        std::sort(kept.begin(), kept.end(), [](const Kept& a, const Kept& b) {
          return a.valid != b.valid ? a.valid < b.valid : a.step < b.step;
        });
        while (static_cast<int>(kept.size()) > tc.keep_best_k) {
          fs::remove(kept.back().path);
          kept.pop_back();
        }
      }
    }
  }

  std::vector<std::string> best_paths;
  {
    // average in step order so the summation order is reproducible
    std::vector<Kept> by_step = kept;
    std::sort(by_step.begin(), by_step.end(),
              [](const Kept& a, const Kept& b) { return a.step < b.step; });
    for (const Kept& k : by_step) best_paths.push_back(k.path);
  }
  Checkpoint avg = average_checkpoints(best_paths);
  const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
  save_checkpoint(final_path, avg.config, avg.params, config_hash, seed);
  std::snprintf(line, sizeof line, "averaged %zu checkpoints into final.ckpt",
                best_paths.size());
  log << line << "\n";

  res.best_valid = kept.front().valid;
  res.steps_run = tc.steps;
  res.final_path = final_path;
  return res;
}

}  // namespace mmt
