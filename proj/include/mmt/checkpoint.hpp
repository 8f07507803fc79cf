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
// Model checkpoint file format (little-endian throughout):
//   bytes 0..3   magic "MMT1"
//   u32          format version (currently 1)
//   i32 x 9      layers_audio, layers_label, dim, dim_ff, heads, dim_joint,
//                vocab, features, downsample
//   then until EOF, one record per tensor:
//     u32 name length, name bytes,
//     u32 rank, u32 dims[rank],
//     f64 data[product(dims)]
// Two bookkeeping records named "__meta__.config_hash" and "__meta__.seed"
// carry a u64 each (bit pattern stored in the f64 payload) and are surfaced
// as fields rather than parameters on load.

#ifndef MMT_CHECKPOINT_HPP_
#define MMT_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "mmt/model.hpp"

namespace mmt {

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

// Throws std::runtime_error if the file cannot be written.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamSet& params, std::uint64_t config_hash,
                     std::uint64_t seed);

// Throws std::runtime_error naming the byte offset of the first problem.
Checkpoint load_checkpoint(const std::string& path);

// Builds a Model with the checkpoint's architecture and copies every
// parameter in; throws std::invalid_argument if the parameter sets differ.
Model model_from_checkpoint(const Checkpoint& ck);

}  // namespace mmt

#endif  // MMT_CHECKPOINT_HPP_
