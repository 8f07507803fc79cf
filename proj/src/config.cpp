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

#include "mmt/config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

#include "mmt/masking.hpp"

namespace mmt {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  task.validate();
  train.validate();
  if (model.vocab != task.vocab)
    throw std::invalid_argument(
        "RunConfig: model.vocab " + std::to_string(model.vocab) +
        " != task.vocab " + std::to_string(task.vocab));
  if (model.features != task.features)
    throw std::invalid_argument(
        "RunConfig: model.features " + std::to_string(model.features) +
        " != task.features " + std::to_string(task.features));
  if (frame_ms <= 0)
    throw std::invalid_argument("RunConfig: frame_ms must be positive");
  if (frontend_frames < 0)
    throw std::invalid_argument("RunConfig: frontend_frames must be >= 0");
  if (train_utts < 0 || valid_utts < 0 || test_utts < 0)
    throw std::invalid_argument("RunConfig: split sizes must be >= 0");
  (void)parse_sampler(sampler);  // throws with the offending token
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json config_to_json(const RunConfig& c) {
  return json{
      {"model",
       {{"layers_audio", c.model.layers_audio},
        {"layers_label", c.model.layers_label},
        {"dim", c.model.dim},
        {"dim_ff", c.model.dim_ff},
        {"heads", c.model.heads},
        {"dim_joint", c.model.dim_joint},
        {"vocab", c.model.vocab},
        {"features", c.model.features},
        {"downsample", c.model.downsample}}},
      {"task",
       {{"features", c.task.features},
        {"vocab", c.task.vocab},
        {"lookahead_k", c.task.lookahead_k},
        {"frames_per_token", c.task.frames_per_token},
        {"noise_sigma", c.task.noise_sigma},
        {"min_tokens", c.task.min_tokens},
        {"max_tokens", c.task.max_tokens},
        {"ambiguous_fraction", c.task.ambiguous_fraction}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"peak_lr", c.train.peak_lr},
        {"warmup_steps", c.train.warmup_steps},
        {"hold_steps", c.train.hold_steps},
        {"decay_rate", c.train.decay_rate},
        {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2},
        {"adam_eps", c.train.adam_eps},
        {"grad_clip", c.train.grad_clip},
        {"attn_dropout", c.train.attn_dropout},
        {"eval_every", c.train.eval_every},
        {"keep_best_k", c.train.keep_best_k},
        {"distill_shift", c.train.distill_shift},
        {"weight_stream", c.train.weight_stream},
        {"weight_full", c.train.weight_full},
        {"weight_distill", c.train.weight_distill},
        {"divergence_threshold", c.train.divergence_threshold}}},
      {"seed", c.seed},
      {"sampler", c.sampler},
      {"frame_ms", c.frame_ms},
      {"frontend_frames", c.frontend_frames},
      {"splits",
       {{"train", c.train_utts}, {"valid", c.valid_utts},
        {"test", c.test_utts}}}};
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object())
    throw std::invalid_argument("config: \"" + where + "\" must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok)
      throw std::invalid_argument("config: unknown key \"" + where + "." +
                                  key + "\"");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: bad value for \"" + where + "." +
                                key + "\"");
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig c;  // defaults
  check_keys(j,
             {"model", "task", "train", "seed", "sampler", "frame_ms",
              "frontend_frames", "splits"},
             "");
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"layers_audio", "layers_label", "dim", "dim_ff", "heads",
                "dim_joint", "vocab", "features", "downsample"},
               "model");
    read(m, "layers_audio", c.model.layers_audio, "model");
    read(m, "layers_label", c.model.layers_label, "model");
    read(m, "dim", c.model.dim, "model");
    read(m, "dim_ff", c.model.dim_ff, "model");
    read(m, "heads", c.model.heads, "model");
    read(m, "dim_joint", c.model.dim_joint, "model");
    read(m, "vocab", c.model.vocab, "model");
    read(m, "features", c.model.features, "model");
    read(m, "downsample", c.model.downsample, "model");
  }
  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t,
               {"features", "vocab", "lookahead_k", "frames_per_token",
                "noise_sigma", "min_tokens", "max_tokens",
                "ambiguous_fraction"},
               "task");
    read(t, "features", c.task.features, "task");
    read(t, "vocab", c.task.vocab, "task");
    read(t, "lookahead_k", c.task.lookahead_k, "task");
    read(t, "frames_per_token", c.task.frames_per_token, "task");
    read(t, "noise_sigma", c.task.noise_sigma, "task");
    read(t, "min_tokens", c.task.min_tokens, "task");
    read(t, "max_tokens", c.task.max_tokens, "task");
    read(t, "ambiguous_fraction", c.task.ambiguous_fraction, "task");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"steps", "batch_size", "peak_lr", "warmup_steps",
                "hold_steps", "decay_rate", "adam_beta1", "adam_beta2",
                "adam_eps", "grad_clip", "attn_dropout", "eval_every",
                "keep_best_k", "distill_shift", "weight_stream",
                "weight_full", "weight_distill", "divergence_threshold"},
               "train");
    read(t, "steps", c.train.steps, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "peak_lr", c.train.peak_lr, "train");
    read(t, "warmup_steps", c.train.warmup_steps, "train");
    read(t, "hold_steps", c.train.hold_steps, "train");
    read(t, "decay_rate", c.train.decay_rate, "train");
    read(t, "adam_beta1", c.train.adam_beta1, "train");
    read(t, "adam_beta2", c.train.adam_beta2, "train");
    read(t, "adam_eps", c.train.adam_eps, "train");
    read(t, "grad_clip", c.train.grad_clip, "train");
    read(t, "attn_dropout", c.train.attn_dropout, "train");
    read(t, "eval_every", c.train.eval_every, "train");
    read(t, "keep_best_k", c.train.keep_best_k, "train");
    read(t, "distill_shift", c.train.distill_shift, "train");
    read(t, "weight_stream", c.train.weight_stream, "train");
    read(t, "weight_full", c.train.weight_full, "train");
    read(t, "weight_distill", c.train.weight_distill, "train");
    read(t, "divergence_threshold", c.train.divergence_threshold, "train");
  }
  read(j, "seed", c.seed, "");
  read(j, "sampler", c.sampler, "");
  read(j, "frame_ms", c.frame_ms, "");
  read(j, "frontend_frames", c.frontend_frames, "");
  if (j.contains("splits")) {
    const json& s = j.at("splits");
    check_keys(s, {"train", "valid", "test"}, "splits");
    read(s, "train", c.train_utts, "splits");
    read(s, "valid", c.valid_utts, "splits");
    read(s, "test", c.test_utts, "splits");
  }
  c.validate();
  return c;
}

std::string dump_config(const RunConfig& cfg) {
  // nlohmann objects already iterate in sorted key order
  return config_to_json(cfg).dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(dump_config(cfg));
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for read");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void save_config_file(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for write");
  out << dump_config(cfg);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace mmt
