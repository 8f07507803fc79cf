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
// Transformer transducer: a frame-stacking frontend feeding an audio encoder
// whose per-layer future context is set by a ContextSchedule, a causal label
// encoder, and an additive joint network producing a [T, U+1, V] lattice of
// log posteriors.

#ifndef MMT_MODEL_HPP_
#define MMT_MODEL_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmt/masking.hpp"
#include "mmt/rng.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

// Token id 0 is reserved for blank everywhere.
inline constexpr int kBlankId = 0;

struct ModelConfig {
  int layers_audio = 4;
  int layers_label = 1;
  int dim = 64;
  int dim_ff = 128;
  int heads = 4;
  int dim_joint = 32;
  int vocab = 8;      // includes blank at id 0
  int features = 8;   // raw feature dimension per input frame
  int downsample = 4; // frames stacked by the frontend

  // Throws std::invalid_argument on an unusable combination.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Named parameter tensors in a fixed registration order.  Iteration order is
// the registration order, which the checkpoint format and the optimizer both
// rely on being deterministic.
class ParamSet {
 public:
  void add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const;

  std::vector<std::pair<std::string, Tensor>>::iterator begin() {
    return items_.begin();
  }
  std::vector<std::pair<std::string, Tensor>>::iterator end() {
    return items_.end();
  }
  std::vector<std::pair<std::string, Tensor>>::const_iterator begin() const {
    return items_.begin();
  }
  std::vector<std::pair<std::string, Tensor>>::const_iterator end() const {
    return items_.end();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Log posteriors over the output lattice.  Node (t, u) holds the
// distribution over the next symbol after consuming t+1 audio frames and u
// reference labels; row index u runs over 0..U inclusive.
struct PosteriorLattice {
  int frames = 0;  // T
  int rows = 0;    // U + 1
  int vocab = 0;   // V
  Tensor log_probs;  // [frames * rows, vocab]

  int node(int t, int u) const { return t * rows + u; }
  double log_prob(int t, int u, int k) const {
    return log_probs.at({node(t, u), k});
  }
};

// Optional stochastic pieces of a forward pass.  Leaving dropout_rng null (or
// the rate at zero) gives the deterministic inference-time computation.
struct ForwardOpts {
  Rng* dropout_rng = nullptr;
  double attn_dropout = 0.0;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  // Glorot-style random initialisation; draws from `rng` in a fixed order.
  static Model init(const ModelConfig& cfg, Rng& rng);

  ModelConfig config;
  ParamSet params;

  // [N, features] raw frames -> [T, dim] with T = N / downsample (floor).
  // The frontend is causal: output frame t sees raw frames
  // [t * downsample, (t+1) * downsample) only.
  Tensor encode_audio(const Tensor& features, const ContextSchedule& schedule,
                      const ForwardOpts& opts = {}) const;

  // Label ids (1..vocab-1 each) -> [U+1, dim]; position u summarises the
  // sequence-start marker plus the first u labels.
  Tensor encode_labels(const std::vector<int>& tokens,
                       const ForwardOpts& opts = {}) const;

  // Combine encoder outputs into the full lattice of log posteriors.
  PosteriorLattice joint(const Tensor& audio_out,
                         const Tensor& label_out) const;

  // encode_audio + encode_labels + joint.
  PosteriorLattice forward(const Tensor& features,
                           const std::vector<int>& tokens,
                           const ContextSchedule& schedule,
                           const ForwardOpts& opts = {}) const;
};

// Number of frontend output frames for a raw frame count.
int downsampled_frames(int raw_frames, int downsample);

}  // namespace mmt

#endif  // MMT_MODEL_HPP_
