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
// Synthetic streaming-recognition task.  Labels come in two kinds:
// "ambiguous" labels form pairs that share a prototype and are told apart
// only by an evidence pulse that arrives `lookahead_k` frames *after* the
// label's own frames, and singleton labels that the prototype alone
// identifies.  A strictly causal recogniser therefore guesses at pair
// members, while one with enough future context resolves them -- giving the
// task a controllable accuracy/latency trade-off with known oracles.
//
// Feature layout (disjoint subspaces):
//   dims [0, G)            prototype pulses, one dim per label group, where
//                          G = (vocab-1) - pair_count
//   dims [F-pairs, F)      evidence pulses, one dim per pair, signed by
//                          pair member
// An utterance with U tokens spans N = U * frames_per_token + lookahead_k
// raw frames; token u occupies frames [u*fpt, (u+1)*fpt) and its evidence
// (if any) frames [(u+1)*fpt, (u+1)*fpt + k).  Gaussian noise of width
// noise_sigma is added everywhere, and features are quantised to float32 so
// serialisation is lossless.

#ifndef MMT_DATA_HPP_
#define MMT_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mmt/rng.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

// Prototype and evidence pulse heights.  Chosen so that at the default
// noise level the prototype is reliably readable from one token's frames
// while the evidence pulse still dominates its own dimension.
inline constexpr double kPrototypeAmp = 0.35;
inline constexpr double kEvidenceAmp = 0.5;

struct TaskSpec {
  int features = 8;
  int vocab = 8;  // includes blank id 0
  int lookahead_k = 4;
  int frames_per_token = 8;
  float noise_sigma = 0.3f;
  int min_tokens = 4;
  int max_tokens = 12;
  float ambiguous_fraction = 0.5f;

  void validate() const;  // throws std::invalid_argument

  // Number of ambiguous label pairs: one pair per four non-blank labels,
  // rounded to nearest.
  int pair_count() const;
  // Distinct prototype groups: each pair shares one, singletons get one.
  int group_count() const;
  // Group index of a non-blank label; pairs occupy groups [0, pair_count).
  int label_group(int label) const;
  // True if the label belongs to a pair.
  bool is_ambiguous(int label) const;

  bool operator==(const TaskSpec&) const = default;
};

struct Utterance {
  std::string id;
  std::vector<int> tokens;
  Tensor features;  // [N, features], float32-quantised values
};

// Deterministic synthesis: the same spec and seed always produce the same
// utterance, bit for bit.
Utterance gen_utterance(const TaskSpec& spec, std::uint64_t seed,
                        const std::string& id);

// `count` utterances with ids "<prefix>-<index>"; utterance i is seeded
// with mix(split_seed) ^ i, so a split is random-access reproducible.
std::vector<Utterance> gen_split(const TaskSpec& spec,
                                 std::uint64_t split_seed, int count,
                                 const std::string& prefix);

// Nearest-prototype reference decoders.  The causal one reads only each
// token's own frames and resolves pairs by always guessing the first
// member; the lookahead one also reads the evidence window.
std::vector<int> oracle_decode(const TaskSpec& spec, const Utterance& utt,
                               bool use_lookahead);

// Token error count between a hypothesis and the reference (edit-free:
// position-wise mismatches; lengths must match for synthetic oracles).
int mismatch_count(const std::vector<int>& hyp, const std::vector<int>& ref);

// Dataset file format (little-endian):
//   magic "MMDS", u32 version (1), u64 config_hash, u64 seed,
//   TaskSpec as i32 features, vocab, lookahead_k, frames_per_token,
//     f32 noise_sigma, i32 min_tokens, max_tokens, f32 ambiguous_fraction,
//   u32 utterance count, then per utterance:
//     u32 id length + bytes, u32 token count + u16 ids,
//     u32 frame count + f32 features (row-major).
struct Dataset {
  TaskSpec spec;
  std::vector<Utterance> utterances;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

void save_dataset(const std::string& path, const Dataset& ds);
// Throws std::runtime_error naming the byte offset of the first problem.
Dataset load_dataset(const std::string& path);

}  // namespace mmt

#endif  // MMT_DATA_HPP_
