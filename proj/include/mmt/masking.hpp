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

#ifndef MMT_MASKING_HPP_
#define MMT_MASKING_HPP_

// Future-context control for the streaming encoder: per-layer lookahead
// schedules, the stochastic samplers that draw them, the attention masks they
// induce, and the latency arithmetic derived from them.
//
// A schedule assigns every encoder layer a lookahead c >= 0: layer attention
// at frame t may read frames j <= t + c (and the entire past). Lookahead
// composes across layers, so a schedule's total is the encoder's receptive
// reach into the future, in encoder frames.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mmt/tensor.hpp"

namespace mmt {

class Rng;

// ---------------------------------------------------------------------------
// Sampler specifications.
//
// Canonical text encodings (parse/format round-trip exactly):
//   tied-uniform:lo:hi      one c ~ U{lo..hi} shared by all layers
//   tied-normal:mu:sigma    one c = floor(|N(mu, sigma)|) shared by all layers
//   untied-uniform:lo:hi    independent per-layer draws
//   untied-normal:mu:sigma  independent per-layer draws
//   constrained:C:d         budgeted per-layer draws, total <= C
//   fixed:c                 deterministic [c, c, ..., c]
//   full                    unbounded context (no masking)
// ---------------------------------------------------------------------------

struct TiedUniformSampler { int lo = 0, hi = 0; };
struct TiedNormalSampler { double mu = 0.0, sigma = 1.0; };
struct UntiedUniformSampler { int lo = 0, hi = 0; };
struct UntiedNormalSampler { double mu = 0.0, sigma = 1.0; };
struct ConstrainedSampler { int c_max = 0; int divisor = 2; };
struct FixedSampler { int c = 0; };
struct FullContextSampler {};

using SamplerSpec =
    std::variant<TiedUniformSampler, TiedNormalSampler, UntiedUniformSampler,
                 UntiedNormalSampler, ConstrainedSampler, FixedSampler,
                 FullContextSampler>;

// Throws std::invalid_argument naming the offending token on malformed input.
SamplerSpec parse_sampler(const std::string& text);
std::string format_sampler(const SamplerSpec& spec);

// ---------------------------------------------------------------------------
// Schedules.
// ---------------------------------------------------------------------------

struct ContextSchedule {
  bool full_context = false;
  std::vector<int> per_layer;  // one lookahead per layer; empty iff full
  std::string source;          // canonical text of the producing sampler

  int layers() const { return static_cast<int>(per_layer.size()); }
  // Total future reach in encoder frames; contract: !full_context.
  int total() const;
  // "full" or dash-joined per-layer values, e.g. "1-0-2".
  std::string str() const;

  bool operator==(const ContextSchedule& o) const {
    return full_context == o.full_context && per_layer == o.per_layer;
  }
};

ContextSchedule fixed_schedule(int c, int layers);
ContextSchedule full_schedule();
ContextSchedule schedule_from(std::vector<int> per_layer);

// Parses an inference-schedule token: "full", "fixed:c", or explicit
// per-layer values "c1-c2-...-cL" (which must list exactly `layers` values).
ContextSchedule parse_schedule(const std::string& text, int layers);

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

// A distribution over single non-negative lookahead values.
struct DrawDist {
  enum class Kind { kUniform, kNormal };
  Kind kind = Kind::kUniform;
  double a = 0.0;  // lo (uniform) or mu (normal)
  double b = 0.0;  // hi (uniform) or sigma (normal)

  // Uniform: integer in [lo, hi]. Normal: floor(|gaussian(mu, sigma)|).
  int draw(Rng& rng) const;
};

// One draw shared by all layers.
ContextSchedule tied_sample(const DrawDist& dist, int layers, Rng& rng);
// Independent draw per layer.
ContextSchedule untied_sample(const DrawDist& dist, int layers, Rng& rng);
// Budgeted draws, bottom layer first: each layer takes uniform_int(0,
// floor(R / divisor)) out of the remaining budget R (R starts at c_max), so
// the schedule total never exceeds c_max.
ContextSchedule constrained_sample(int c_max, int layers, int divisor,
                                   Rng& rng);

// Dispatches on the spec. Fixed and full-context specs consume no randomness.
ContextSchedule sample_schedule(const SamplerSpec& spec, int layers, Rng& rng);

// Whether a deterministic inference schedule lies inside the support of the
// training sampler (the "matched" column of sweep reports). The always-on
// full-context training branch makes the full schedule matched for every
// sampler.
bool sampler_supports(const SamplerSpec& spec, const ContextSchedule& sched);

// ---------------------------------------------------------------------------
// Attention masks.
// ---------------------------------------------------------------------------

struct AttentionMask {
  int frames = 0;                 // T
  std::optional<int> lookahead;   // c; nullopt = unbounded (full context)

  // Full past plus c future frames: j <= t + c (always true when unbounded).
  bool allowed(int t, int j) const;
  // T x T additive logit offsets: 0 where allowed, -inf where not. Constant
  // (never requires grad).
  Tensor additive_logits() const;
};

// c < 0 is a contract violation; frames == 0 yields a valid empty mask.
AttentionMask build_mask(int frames, int lookahead);
AttentionMask build_full_mask(int frames);

// ---------------------------------------------------------------------------
// Derived quantities.
// ---------------------------------------------------------------------------

// Total future reach of a schedule in encoder frames; nullopt = unbounded.
std::optional<int> receptive_future(const ContextSchedule& sched);

// User-facing algorithmic latency in milliseconds:
//   (total * downsample + frontend_lookahead_frames) * frame_shift_ms
// nullopt = unbounded (full-context schedule).
std::optional<double> latency_ms(const ContextSchedule& sched,
                                 double frame_shift_ms, int downsample,
                                 int frontend_lookahead_frames);

}  // namespace mmt

#endif  // MMT_MASKING_HPP_
