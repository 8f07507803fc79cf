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

#include "mmt/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mmt {

void TaskSpec::validate() const {
  if (features < 1 || vocab < 2)
    throw std::invalid_argument("TaskSpec: need features >= 1 and vocab >= 2");
  if (vocab - 1 > features)
    throw std::invalid_argument(
        "TaskSpec: " + std::to_string(vocab - 1) + " labels need at least " +
        std::to_string(vocab - 1) + " feature dims, got " +
        std::to_string(features));
  if (lookahead_k < 0)
    throw std::invalid_argument("TaskSpec: lookahead_k must be >= 0");
  if (frames_per_token < 1)
    throw std::invalid_argument("TaskSpec: frames_per_token must be >= 1");
  if (lookahead_k > frames_per_token)
    throw std::invalid_argument(
        "TaskSpec: lookahead_k must not exceed frames_per_token, or "
        "neighbouring evidence windows would overlap");
  if (noise_sigma < 0)
    throw std::invalid_argument("TaskSpec: noise_sigma must be >= 0");
  if (min_tokens < 1 || max_tokens < min_tokens)
    throw std::invalid_argument("TaskSpec: need 1 <= min_tokens <= max_tokens");
  if (ambiguous_fraction < 0 || ambiguous_fraction > 1)
    throw std::invalid_argument("TaskSpec: ambiguous_fraction outside [0, 1]");
  if (ambiguous_fraction > 0 && pair_count() == 0)
    throw std::invalid_argument(
        "TaskSpec: ambiguous_fraction > 0 but the vocabulary is too small to "
        "form a pair");
}

int TaskSpec::pair_count() const {
  return static_cast<int>(std::lround((vocab - 1) / 4.0));
}

int TaskSpec::group_count() const { return (vocab - 1) - pair_count(); }

int TaskSpec::label_group(int label) const {
  if (label < 1 || label >= vocab)
    throw std::out_of_range("label_group: label " + std::to_string(label) +
                            " outside [1, " + std::to_string(vocab) + ")");
  const int zero_based = label - 1;
  const int paired = 2 * pair_count();
  return zero_based < paired ? zero_based / 2
                             : pair_count() + (zero_based - paired);
}

bool TaskSpec::is_ambiguous(int label) const {
  return label_group(label) < pair_count();
}

namespace {

// evidence sign: +1 for the first member of a pair, -1 for the second
double evidence_sign(int label) { return (label - 1) % 2 == 0 ? 1.0 : -1.0; }

double quantise(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Utterance gen_utterance(const TaskSpec& spec, std::uint64_t seed,
                        const std::string& id) {
  spec.validate();
  Rng rng(seed);
  const int pairs = spec.pair_count();
  const int singles = (spec.vocab - 1) - 2 * pairs;
  const int fpt = spec.frames_per_token;

  const int n_tokens = rng.uniform_int(spec.min_tokens, spec.max_tokens);
  std::vector<int> tokens(n_tokens);
  for (int& tok : tokens) {
    const bool ambiguous =
        pairs > 0 &&
        (singles == 0 || rng.uniform01() < spec.ambiguous_fraction);
    if (ambiguous)
      tok = 1 + 2 * rng.uniform_int(0, pairs - 1) + rng.uniform_int(0, 1);
    else
      tok = 1 + 2 * pairs + rng.uniform_int(0, singles - 1);
  }

  const int frames = n_tokens * fpt + spec.lookahead_k;
  Tensor feats = Tensor::zeros({frames, spec.features});
  auto& v = feats.data();
  auto cell = [&](int t, int d) -> double& {
    return v[static_cast<std::size_t>(t) * spec.features + d];
  };
  for (int u = 0; u < n_tokens; ++u) {
    const int group_dim = spec.label_group(tokens[u]);
    for (int t = u * fpt; t < (u + 1) * fpt; ++t)
      cell(t, group_dim) += kPrototypeAmp;
    if (spec.is_ambiguous(tokens[u])) {
      const int ev_dim = spec.features - pairs + spec.label_group(tokens[u]);
      for (int t = (u + 1) * fpt; t < (u + 1) * fpt + spec.lookahead_k; ++t)
        cell(t, ev_dim) += evidence_sign(tokens[u]) * kEvidenceAmp;
    }
  }
  for (double& x : v) x = quantise(x + rng.gaussian(0.0, spec.noise_sigma));

  return Utterance{id, std::move(tokens), std::move(feats)};
}

std::vector<Utterance> gen_split(const TaskSpec& spec,
                                 std::uint64_t split_seed, int count,
                                 const std::string& prefix) {
  if (count < 0) throw std::invalid_argument("gen_split: negative count");
  const std::uint64_t base = Rng::mix(split_seed);
  std::vector<Utterance> utts;
  utts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    utts.push_back(gen_utterance(spec, base ^ static_cast<std::uint64_t>(i),
                                 prefix + "-" + std::to_string(i)));
  return utts;
}

std::vector<int> oracle_decode(const TaskSpec& spec, const Utterance& utt,
                               bool use_lookahead) {
  const int fpt = spec.frames_per_token;
  const int n_tokens =
      (utt.features.dim(0) - spec.lookahead_k) / fpt;
  const int pairs = spec.pair_count();
  const auto& v = utt.features.data();
  auto cell = [&](int t, int d) {
    return v[static_cast<std::size_t>(t) * spec.features + d];
  };

  std::vector<int> hyp(n_tokens);
  for (int u = 0; u < n_tokens; ++u) {
    // nearest prototype: the group dimension with the largest mean response
    // over the token's own frames
    int best_group = 0;
    double best_mean = -1e300;
    for (int g = 0; g < spec.group_count(); ++g) {
      double mean = 0;
      for (int t = u * fpt; t < (u + 1) * fpt; ++t) mean += cell(t, g);
      mean /= fpt;
      if (mean > best_mean) {
        best_mean = mean;
        best_group = g;
      }
    }
    if (best_group >= pairs) {
      hyp[u] = 1 + 2 * pairs + (best_group - pairs);  // singleton
      continue;
    }
    int member = 0;  // causal guess: first member
    if (use_lookahead && spec.lookahead_k > 0) {
      double mean = 0;
      const int ev_dim = spec.features - pairs + best_group;
      for (int t = (u + 1) * fpt; t < (u + 1) * fpt + spec.lookahead_k; ++t)
        mean += cell(t, ev_dim);
      member = mean >= 0 ? 0 : 1;
    }
    hyp[u] = 1 + 2 * best_group + member;
  }
  return hyp;
}

int mismatch_count(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (hyp.size() != ref.size())
    throw std::invalid_argument("mismatch_count: length mismatch");
  int n = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) n += hyp[i] != ref[i];
  return n;
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for write");
  auto put = [&](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  auto put_u32 = [&](std::uint32_t x) { put(&x, sizeof x); };
  auto put_i32 = [&](std::int32_t x) { put(&x, sizeof x); };
  auto put_f32 = [&](float x) { put(&x, sizeof x); };
  auto put_u64 = [&](std::uint64_t x) { put(&x, sizeof x); };

  put(kMagic, sizeof kMagic);
  put_u32(kVersion);
  put_u64(ds.config_hash);
  put_u64(ds.seed);
  put_i32(ds.spec.features);
  put_i32(ds.spec.vocab);
  put_i32(ds.spec.lookahead_k);
  put_i32(ds.spec.frames_per_token);
  put_f32(ds.spec.noise_sigma);
  put_i32(ds.spec.min_tokens);
  put_i32(ds.spec.max_tokens);
  put_f32(ds.spec.ambiguous_fraction);
  put_u32(static_cast<std::uint32_t>(ds.utterances.size()));
  for (const Utterance& u : ds.utterances) {
    put_u32(static_cast<std::uint32_t>(u.id.size()));
    put(u.id.data(), u.id.size());
    put_u32(static_cast<std::uint32_t>(u.tokens.size()));
    for (int tok : u.tokens) {
      const std::uint16_t w = static_cast<std::uint16_t>(tok);
      put(&w, sizeof w);
    }
    put_u32(static_cast<std::uint32_t>(u.features.dim(0)));
    for (double x : u.features.data()) put_f32(static_cast<float>(x));
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for read");
  std::size_t offset = 0;
  auto get = [&](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw std::runtime_error(path + ": dataset truncated at byte " +
                               std::to_string(offset + in.gcount()));
    offset += n;
  };
  auto get_u32 = [&] { std::uint32_t x; get(&x, sizeof x); return x; };
  auto get_i32 = [&] { std::int32_t x; get(&x, sizeof x); return x; };
  auto get_f32 = [&] { float x; get(&x, sizeof x); return x; };
  auto get_u64 = [&] { std::uint64_t x; get(&x, sizeof x); return x; };

  char magic[4];
  get(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path + ": bad magic at byte 0");
  const std::uint32_t version = get_u32();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported dataset version " +
                             std::to_string(version) + " at byte 4");
  Dataset ds;
  ds.config_hash = get_u64();
  ds.seed = get_u64();
  ds.spec.features = get_i32();
  ds.spec.vocab = get_i32();
  ds.spec.lookahead_k = get_i32();
  ds.spec.frames_per_token = get_i32();
  ds.spec.noise_sigma = get_f32();
  ds.spec.min_tokens = get_i32();
  ds.spec.max_tokens = get_i32();
  ds.spec.ambiguous_fraction = get_f32();
  ds.spec.validate();

  const std::uint32_t count = get_u32();
  ds.utterances.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Utterance u;
    const std::uint32_t id_len = get_u32();
    if (id_len > 4096)
      throw std::runtime_error(path + ": implausible id length " +
                               std::to_string(id_len) + " at byte " +
                               std::to_string(offset - 4));
    u.id.resize(id_len);
    get(u.id.data(), id_len);
    const std::uint32_t n_tok = get_u32();
    u.tokens.resize(n_tok);
    for (std::uint32_t j = 0; j < n_tok; ++j) {
      std::uint16_t w;
      get(&w, sizeof w);
      u.tokens[j] = w;
    }
    const std::uint32_t frames = get_u32();
    u.features = Tensor::zeros({static_cast<int>(frames), ds.spec.features});
    for (double& x : u.features.data()) x = static_cast<double>(get_f32());
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

}  // namespace mmt
