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
// One JSON document describes a whole run: model shape, task parameters,
// training settings, seed, sampler, and split sizes.  Missing keys take the
// defaults below; unknown keys are rejected so typos fail loudly.  The
// config hash -- FNV-1a over the canonical dump -- is embedded in every
// artifact a run produces so artifacts can be traced to their settings.

#ifndef MMT_CONFIG_HPP_
#define MMT_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mmt/data.hpp"
#include "mmt/model.hpp"
#include "mmt/train.hpp"

namespace mmt {

struct RunConfig {
  ModelConfig model;
  TaskSpec task;
  TrainConfig train;
  std::uint64_t seed = 1;
  std::string sampler = "tied-uniform:0:2";
  double frame_ms = 10.0;      // raw feature frame shift
  int frontend_frames = 0;     // frontend lookahead, in raw frames
  int train_utts = 2000;
  int valid_utts = 200;
  int test_utts = 200;

  // Validates nested configs, consistency between model and task (vocab,
  // feature width), the sampler text, and the split sizes.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

std::uint64_t fnv1a64(std::string_view s);

nlohmann::json config_to_json(const RunConfig& cfg);
// Defaults overridden by the present keys; throws std::invalid_argument on
// unknown keys or ill-typed values.
RunConfig config_from_json(const nlohmann::json& j);

// Canonical dump: sorted keys, two-space indent, trailing newline.
std::string dump_config(const RunConfig& cfg);
// FNV-1a of the canonical dump.
std::uint64_t config_hash(const RunConfig& cfg);

RunConfig load_config_file(const std::string& path);
void save_config_file(const RunConfig& cfg, const std::string& path);

}  // namespace mmt

#endif  // MMT_CONFIG_HPP_
