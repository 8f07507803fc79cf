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

#include "mmt/masking.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mmt/rng.hpp"

namespace mmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void parse_fail(const std::string& text, const std::string& why) {
  throw std::invalid_argument("sampler spec \"" + text + "\": " + why);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

int parse_int(const std::string& text, const std::string& token) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(token, &used);
  } catch (const std::exception&) {
    parse_fail(text, "token \"" + token + "\" is not an integer");
  }
  if (used != token.size())
    parse_fail(text, "token \"" + token + "\" is not an integer");
  return v;
}

double parse_double(const std::string& text, const std::string& token) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    parse_fail(text, "token \"" + token + "\" is not a number");
  }
  if (used != token.size())
    parse_fail(text, "token \"" + token + "\" is not a number");
  return v;
}

std::string format_double(double v) {
  // Shortest representation that round-trips through parse (drops the
  // trailing zeros "8.5000" would carry).
  std::ostringstream os;
  os << v;
  return os.str();
}

void require_layers(int layers) {
  if (layers <= 0)
    throw std::invalid_argument("schedule: layer count must be positive, got " +
                                std::to_string(layers));
}

}  // namespace

// ---------------------------------------------------------------------------
// SamplerSpec text encoding
// ---------------------------------------------------------------------------

SamplerSpec parse_sampler(const std::string& text) {
  const std::vector<std::string> parts = split(text, ':');
  const std::string& kind = parts[0];
  const std::size_t argc = parts.size() - 1;

  auto want = [&](std::size_t n) {
    if (argc != n)
      parse_fail(text, "kind \"" + kind + "\" takes " + std::to_string(n) +
                           " argument(s), got " + std::to_string(argc));
  };

  if (kind == "full") {
    want(0);
    return FullContextSampler{};
  }
  if (kind == "fixed") {
    want(1);
    const int c = parse_int(text, parts[1]);
    if (c < 0) parse_fail(text, "lookahead must be >= 0");
    return FixedSampler{c};
  }
  if (kind == "tied-uniform" || kind == "untied-uniform") {
    want(2);
    const int lo = parse_int(text, parts[1]);
    const int hi = parse_int(text, parts[2]);
    if (lo < 0) parse_fail(text, "lo must be >= 0");
    if (lo > hi) parse_fail(text, "lo exceeds hi");
    if (kind == "tied-uniform") return TiedUniformSampler{lo, hi};
    return UntiedUniformSampler{lo, hi};
  }
  if (kind == "tied-normal" || kind == "untied-normal") {
    want(2);
    const double mu = parse_double(text, parts[1]);
    const double sigma = parse_double(text, parts[2]);
    if (sigma < 0) parse_fail(text, "sigma must be >= 0");
    if (kind == "tied-normal") return TiedNormalSampler{mu, sigma};
    return UntiedNormalSampler{mu, sigma};
  }
  if (kind == "constrained") {
    if (argc != 1 && argc != 2)
      parse_fail(text, "kind \"constrained\" takes C and optional divisor");
    const int c_max = parse_int(text, parts[1]);
    if (c_max < 0) parse_fail(text, "budget must be >= 0");
    int divisor = 2;
    if (argc == 2) {
      divisor = parse_int(text, parts[2]);
      if (divisor < 1) parse_fail(text, "divisor must be >= 1");
    }
    return ConstrainedSampler{c_max, divisor};
  }
  parse_fail(text, "unknown kind \"" + kind + "\"");
}

std::string format_sampler(const SamplerSpec& spec) {
  struct Visitor {
    std::string operator()(const TiedUniformSampler& s) const {
      return "tied-uniform:" + std::to_string(s.lo) + ":" +
             std::to_string(s.hi);
    }
    std::string operator()(const TiedNormalSampler& s) const {
      return "tied-normal:" + format_double(s.mu) + ":" +
             format_double(s.sigma);
    }
    std::string operator()(const UntiedUniformSampler& s) const {
      return "untied-uniform:" + std::to_string(s.lo) + ":" +
             std::to_string(s.hi);
    }
    std::string operator()(const UntiedNormalSampler& s) const {
      return "untied-normal:" + format_double(s.mu) + ":" +
             format_double(s.sigma);
    }
    std::string operator()(const ConstrainedSampler& s) const {
      return "constrained:" + std::to_string(s.c_max) + ":" +
             std::to_string(s.divisor);
    }
    std::string operator()(const FixedSampler& s) const {
      return "fixed:" + std::to_string(s.c);
    }
    std::string operator()(const FullContextSampler&) const { return "full"; }
  };
  return std::visit(Visitor{}, spec);
}

// ---------------------------------------------------------------------------
// ContextSchedule
// ---------------------------------------------------------------------------

int ContextSchedule::total() const {
  if (full_context)
    throw std::logic_error("ContextSchedule::total: unbounded schedule");
  int sum = 0;
  for (int c : per_layer) sum += c;
  return sum;
}

std::string ContextSchedule::str() const {
  if (full_context) return "full";
  std::string out;
  for (std::size_t i = 0; i < per_layer.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(per_layer[i]);
  }
  return out;
}

ContextSchedule fixed_schedule(int c, int layers) {
  require_layers(layers);
  if (c < 0)
    throw std::invalid_argument("fixed_schedule: lookahead must be >= 0");
  ContextSchedule s;
  s.per_layer.assign(static_cast<std::size_t>(layers), c);
  s.source = "fixed:" + std::to_string(c);
  return s;
}

ContextSchedule full_schedule() {
  ContextSchedule s;
  s.full_context = true;
  s.source = "full";
  return s;
}

ContextSchedule schedule_from(std::vector<int> per_layer) {
  require_layers(static_cast<int>(per_layer.size()));
  for (int c : per_layer)
    if (c < 0)
      throw std::invalid_argument("schedule_from: lookahead must be >= 0");
  ContextSchedule s;
  s.per_layer = std::move(per_layer);
  s.source = s.str();
  return s;
}

ContextSchedule parse_schedule(const std::string& text, int layers) {
  require_layers(layers);
  if (text == "full") return full_schedule();
  if (text.rfind("fixed:", 0) == 0) {
    const SamplerSpec spec = parse_sampler(text);
    return fixed_schedule(std::get<FixedSampler>(spec).c, layers);
  }
  // explicit per-layer form "c1-c2-...-cL"
  std::vector<int> values;
  for (const std::string& tok : split(text, '-')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != tok.size() || v < 0)
      throw std::invalid_argument("schedule \"" + text +
                                  "\": bad lookahead token \"" + tok + "\"");
    values.push_back(v);
  }
  if (static_cast<int>(values.size()) != layers)
    throw std::invalid_argument(
        "schedule \"" + text + "\": expected " + std::to_string(layers) +
        " per-layer values, got " + std::to_string(values.size()));
  return schedule_from(std::move(values));
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

int DrawDist::draw(Rng& rng) const {
  switch (kind) {
    case Kind::kUniform:
      return rng.uniform_int(static_cast<int>(a), static_cast<int>(b));
    case Kind::kNormal:
      return static_cast<int>(std::floor(std::abs(rng.gaussian(a, b))));
  }
  throw std::logic_error("DrawDist: bad kind");
}

ContextSchedule tied_sample(const DrawDist& dist, int layers, Rng& rng) {
  require_layers(layers);
  const int c = dist.draw(rng);
  ContextSchedule s;
  s.per_layer.assign(static_cast<std::size_t>(layers), c);
  return s;
}

ContextSchedule untied_sample(const DrawDist& dist, int layers, Rng& rng) {
  require_layers(layers);
  ContextSchedule s;
  s.per_layer.reserve(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) s.per_layer.push_back(dist.draw(rng));
  return s;
}

ContextSchedule constrained_sample(int c_max, int layers, int divisor,
                                   Rng& rng) {
  require_layers(layers);
  if (c_max < 0)
    throw std::invalid_argument("constrained_sample: budget must be >= 0");
  if (divisor < 1)
    throw std::invalid_argument("constrained_sample: divisor must be >= 1");
  ContextSchedule s;
  s.per_layer.reserve(static_cast<std::size_t>(layers));
  int remaining = c_max;
  for (int l = 0; l < layers; ++l) {
    const int c = rng.uniform_int(0, remaining / divisor);
    s.per_layer.push_back(c);
    remaining -= c;
  }
  return s;
}

ContextSchedule sample_schedule(const SamplerSpec& spec, int layers,
                                Rng& rng) {
  require_layers(layers);
  struct Visitor {
    int layers;
    Rng& rng;
    ContextSchedule operator()(const TiedUniformSampler& s) const {
      return tied_sample({DrawDist::Kind::kUniform, double(s.lo), double(s.hi)},
                         layers, rng);
    }
    ContextSchedule operator()(const TiedNormalSampler& s) const {
      return tied_sample({DrawDist::Kind::kNormal, s.mu, s.sigma}, layers,
                         rng);
    }
    ContextSchedule operator()(const UntiedUniformSampler& s) const {
      return untied_sample(
          {DrawDist::Kind::kUniform, double(s.lo), double(s.hi)}, layers, rng);
    }
    ContextSchedule operator()(const UntiedNormalSampler& s) const {
      return untied_sample({DrawDist::Kind::kNormal, s.mu, s.sigma}, layers,
                           rng);
    }
    ContextSchedule operator()(const ConstrainedSampler& s) const {
      return constrained_sample(s.c_max, layers, s.divisor, rng);
    }
    ContextSchedule operator()(const FixedSampler& s) const {
      return fixed_schedule(s.c, layers);  // no randomness consumed
    }
    ContextSchedule operator()(const FullContextSampler&) const {
      return full_schedule();  // no randomness consumed
    }
  };
  ContextSchedule sched = std::visit(Visitor{layers, rng}, spec);
  sched.source = format_sampler(spec);
  return sched;
}

bool sampler_supports(const SamplerSpec& spec, const ContextSchedule& sched) {
  // Every training regime optimises the full-context branch explicitly.
  if (sched.full_context) return true;

  const auto tied_value = [&]() -> std::optional<int> {
    if (sched.per_layer.empty()) return std::nullopt;
    const int c = sched.per_layer[0];
    for (int v : sched.per_layer)
      if (v != c) return std::nullopt;
    return c;
  };

  struct Visitor {
    const ContextSchedule& sched;
    const std::function<std::optional<int>()>& tied_value;
    bool operator()(const TiedUniformSampler& s) const {
      const auto c = tied_value();
      return c.has_value() && *c >= s.lo && *c <= s.hi;
    }
    bool operator()(const TiedNormalSampler&) const {
      return tied_value().has_value();  // unbounded support over tied values
    }
    bool operator()(const UntiedUniformSampler& s) const {
      for (int c : sched.per_layer)
        if (c < s.lo || c > s.hi) return false;
      return true;
    }
    bool operator()(const UntiedNormalSampler&) const { return true; }
    bool operator()(const ConstrainedSampler& s) const {
      // Replay the budget recursion: feasible iff every layer's draw fits.
      int remaining = s.c_max;
      for (int c : sched.per_layer) {
        if (c > remaining / s.divisor) return false;
        remaining -= c;
      }
      return true;
    }
    bool operator()(const FixedSampler& s) const {
      const auto c = tied_value();
      return c.has_value() && *c == s.c;
    }
    bool operator()(const FullContextSampler&) const { return false; }
  };
  const std::function<std::optional<int>()> tied_fn = tied_value;
  return std::visit(Visitor{sched, tied_fn}, spec);
}

// ---------------------------------------------------------------------------
// Attention masks
// ---------------------------------------------------------------------------

bool AttentionMask::allowed(int t, int j) const {
  if (t < 0 || t >= frames || j < 0 || j >= frames) return false;
  if (!lookahead.has_value()) return true;
  return j <= t + *lookahead;
}

Tensor AttentionMask::additive_logits() const {
  Tensor out = Tensor::zeros({frames, frames});
  if (!lookahead.has_value()) return out;
  auto& d = out.data();
  for (int t = 0; t < frames; ++t)
    for (int j = t + *lookahead + 1; j < frames; ++j)
      d[static_cast<std::size_t>(t) * frames + j] = kNegInf;
  return out;
}

AttentionMask build_mask(int frames, int lookahead) {
  if (frames < 0)
    throw std::invalid_argument("build_mask: negative frame count");
  if (lookahead < 0)
    throw std::invalid_argument("build_mask: negative lookahead");
  return AttentionMask{frames, lookahead};
}

AttentionMask build_full_mask(int frames) {
  if (frames < 0)
    throw std::invalid_argument("build_full_mask: negative frame count");
  return AttentionMask{frames, std::nullopt};
}

// ---------------------------------------------------------------------------
// Derived quantities
// ---------------------------------------------------------------------------

std::optional<int> receptive_future(const ContextSchedule& sched) {
  if (sched.full_context) return std::nullopt;
  return sched.total();
}

std::optional<double> latency_ms(const ContextSchedule& sched,
                                 double frame_shift_ms, int downsample,
                                 int frontend_lookahead_frames) {
  if (frame_shift_ms <= 0)
    throw std::invalid_argument("latency_ms: frame shift must be positive");
  if (downsample < 1)
    throw std::invalid_argument("latency_ms: downsample must be >= 1");
  if (frontend_lookahead_frames < 0)
    throw std::invalid_argument("latency_ms: negative frontend lookahead");
  const std::optional<int> total = receptive_future(sched);
  if (!total.has_value()) return std::nullopt;
  return (static_cast<double>(*total) * downsample +
          frontend_lookahead_frames) *
         frame_shift_ms;
}

}  // namespace mmt
