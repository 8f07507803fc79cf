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

#ifndef MMT_EVAL_HPP_
#define MMT_EVAL_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmt/data.hpp"
#include "mmt/masking.hpp"
#include "mmt/model.hpp"

namespace mmt {

struct EditCounts {
  int distance = 0;
  int subs = 0;
  int ins = 0;
  int dels = 0;
};

// Levenshtein alignment of hypothesis against reference.  When several
// alignments share the minimum cost, the backtrace prefers substitutions
// over insertions over deletions, so the per-kind counts are deterministic.
EditCounts edit_distance(const std::vector<int>& hyp,
                         const std::vector<int>& ref);

// Frame-synchronous greedy decoding rule, factored out so tests can drive it
// with a synthetic distribution: at each frame, emit the argmax symbol and
// advance the label state while it is a non-blank, up to
// max_symbols_per_frame emissions, then move to the next frame on blank or
// when the cap is hit.  `next_log_probs(t, prefix)` returns the V-way
// distribution at frame t given the labels emitted so far.
std::vector<int> greedy_decode_core(
    int frames,
    const std::function<std::vector<double>(int, const std::vector<int>&)>&
        next_log_probs,
    int max_symbols_per_frame = 4);

// Greedy decoding of one utterance under a context schedule.  The audio is
// encoded once; the label state is re-encoded after each emission.
std::vector<int> greedy_decode(const Model& model, const Tensor& features,
                               const ContextSchedule& schedule,
                               int max_symbols_per_frame = 4);

struct SweepRow {
  std::string schedule;
  bool latency_unbounded = false;
  double latency_ms = 0.0;  // meaningless when latency_unbounded
  double token_error_rate = 0.0;
  double avg_loss = 0.0;  // mean transducer loss under this schedule
  EditCounts edits;
  int ref_tokens = 0;
};

struct EvalReport {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;
};

// Decodes and scores the whole set under one schedule.
SweepRow evaluate_schedule(const Model& model,
                           const std::vector<Utterance>& data,
                           const ContextSchedule& schedule, double frame_ms,
                           int frontend_frames,
                           int max_symbols_per_frame = 4);

// One row per schedule, in the given order.
EvalReport context_sweep(const Model& model,
                         const std::vector<Utterance>& data,
                         const std::vector<ContextSchedule>& schedules,
                         double frame_ms, int frontend_frames,
                         std::uint64_t config_hash, std::uint64_t seed = 0);

// Human-readable table / machine-readable CSV.  Both embed the config hash
// and seed in their header line.
void write_report_txt(const EvalReport& report, const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace mmt

#endif  // MMT_EVAL_HPP_
