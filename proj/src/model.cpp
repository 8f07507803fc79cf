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

#include "mmt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mmt {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0)
      throw std::invalid_argument(std::string("ModelConfig: ") + name +
                                  " must be positive, got " +
                                  std::to_string(v));
  };
  positive(layers_audio, "layers_audio");
  positive(layers_label, "layers_label");
  positive(dim, "dim");
  positive(dim_ff, "dim_ff");
  positive(heads, "heads");
  positive(dim_joint, "dim_joint");
  positive(features, "features");
  positive(downsample, "downsample");
  if (vocab < 2)
    throw std::invalid_argument(
        "ModelConfig: vocab must be at least 2 (blank plus one label), got " +
        std::to_string(vocab));
  if (dim % heads != 0)
    throw std::invalid_argument("ModelConfig: dim " + std::to_string(dim) +
                                " not divisible by heads " +
                                std::to_string(heads));
}

void ParamSet::add(const std::string& name, Tensor t) {
  if (index_.count(name) != 0)
    throw std::logic_error("ParamSet: duplicate parameter \"" + name + "\"");
  index_.emplace(name, items_.size());
  items_.emplace_back(name, std::move(t));
}

bool ParamSet::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::out_of_range("ParamSet: no parameter \"" + name + "\"");
  return items_[it->second].second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::out_of_range("ParamSet: no parameter \"" + name + "\"");
  return items_[it->second].second;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

int downsampled_frames(int raw_frames, int downsample) {
  if (raw_frames < 0 || downsample < 1)
    throw std::invalid_argument("downsampled_frames: bad arguments");
  return raw_frames / downsample;
}

namespace {

void register_block(ParamSet& p, const std::string& prefix,
                    const ModelConfig& cfg) {
  const int d = cfg.dim;
  p.add(prefix + ".attn.ln.gain", Tensor::zeros({d}));
  p.add(prefix + ".attn.ln.bias", Tensor::zeros({d}));
  p.add(prefix + ".attn.wq", Tensor::zeros({d, d}));
  p.add(prefix + ".attn.bq", Tensor::zeros({d}));
  p.add(prefix + ".attn.wk", Tensor::zeros({d, d}));
  p.add(prefix + ".attn.bk", Tensor::zeros({d}));
  p.add(prefix + ".attn.wv", Tensor::zeros({d, d}));
  p.add(prefix + ".attn.bv", Tensor::zeros({d}));
  p.add(prefix + ".attn.wo", Tensor::zeros({d, d}));
  p.add(prefix + ".attn.bo", Tensor::zeros({d}));
  p.add(prefix + ".ffn.ln.gain", Tensor::zeros({d}));
  p.add(prefix + ".ffn.ln.bias", Tensor::zeros({d}));
  p.add(prefix + ".ffn.w1", Tensor::zeros({d, cfg.dim_ff}));
  p.add(prefix + ".ffn.b1", Tensor::zeros({cfg.dim_ff}));
  p.add(prefix + ".ffn.w2", Tensor::zeros({cfg.dim_ff, d}));
  p.add(prefix + ".ffn.b2", Tensor::zeros({d}));
}

// Fixed sinusoidal position code, added after the input projection.
Tensor position_code(int frames, int dim) {
  Tensor pe = Tensor::zeros({frames, dim});
  auto& v = pe.data();
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < dim; i += 2) {
      const double angle = t * std::exp(-std::log(10000.0) * i / dim);
      v[static_cast<std::size_t>(t) * dim + i] = std::sin(angle);
      if (i + 1 < dim)
        v[static_cast<std::size_t>(t) * dim + i + 1] = std::cos(angle);
    }
  return pe;
}

}  // namespace

Model::Model(const ModelConfig& cfg) : config(cfg) {
  config.validate();
  const int d = cfg.dim;
  params.add("frontend.proj.weight",
             Tensor::zeros({cfg.features * cfg.downsample, d}));
  params.add("frontend.proj.bias", Tensor::zeros({d}));
  for (int i = 0; i < cfg.layers_audio; ++i)
    register_block(params, "audio.layer" + std::to_string(i), cfg);
  params.add("audio.final_ln.gain", Tensor::zeros({d}));
  params.add("audio.final_ln.bias", Tensor::zeros({d}));
  // Row `vocab` is the sequence-start marker; row 0 (blank) is never looked
  // up but keeps label ids usable as row indices directly.
  params.add("label.embed", Tensor::zeros({cfg.vocab + 1, d}));
  for (int i = 0; i < cfg.layers_label; ++i)
    register_block(params, "label.layer" + std::to_string(i), cfg);
  params.add("label.final_ln.gain", Tensor::zeros({d}));
  params.add("label.final_ln.bias", Tensor::zeros({d}));
  params.add("joint.wa", Tensor::zeros({d, cfg.dim_joint}));
  params.add("joint.wl", Tensor::zeros({d, cfg.dim_joint}));
  params.add("joint.b", Tensor::zeros({cfg.dim_joint}));
  params.add("joint.wo", Tensor::zeros({cfg.dim_joint, cfg.vocab}));
  params.add("joint.bo", Tensor::zeros({cfg.vocab}));
  for (auto& [name, t] : params) t.set_requires_grad(true);
}

Model Model::init(const ModelConfig& cfg, Rng& rng) {
  Model m(cfg);
  for (auto& [name, t] : m.params) {
    auto& v = t.data();
    if (t.rank() == 2) {
      const double std_dev = std::sqrt(2.0 / (t.dim(0) + t.dim(1)));
      for (double& x : v) x = rng.gaussian(0.0, std_dev);
    } else if (name.size() >= 5 &&
               name.compare(name.size() - 5, 5, ".gain") == 0) {
      for (double& x : v) x = 1.0;
    }
    // remaining 1-D tensors are biases and stay zero
  }
  return m;
}

namespace {

// Pre-norm self-attention with an additive mask, followed by the residual.
Tensor attention_block(const ParamSet& p, const std::string& prefix,
                       const Tensor& x, const Tensor& mask_logits, int heads,
                       const ForwardOpts& opts) {
  const int d = x.dim(1);
  const int dh = d / heads;
  Tensor h = layer_norm(x, p.at(prefix + ".attn.ln.gain"),
                        p.at(prefix + ".attn.ln.bias"));
  Tensor q = add_rowwise(matmul(h, p.at(prefix + ".attn.wq")),
                         p.at(prefix + ".attn.bq"));
  Tensor k = add_rowwise(matmul(h, p.at(prefix + ".attn.wk")),
                         p.at(prefix + ".attn.bk"));
  Tensor v = add_rowwise(matmul(h, p.at(prefix + ".attn.wv")),
                         p.at(prefix + ".attn.bv"));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (int hd = 0; hd < heads; ++hd) {
    Tensor qh = slice_cols(q, hd * dh, dh);
    Tensor kh = slice_cols(k, hd * dh, dh);
    Tensor vh = slice_cols(v, hd * dh, dh);
    Tensor scores =
        add(scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh))),
            mask_logits);
    Tensor probs = exp(log_softmax(scores));
    if (opts.dropout_rng != nullptr && opts.attn_dropout > 0.0)
      probs = dropout(probs, opts.attn_dropout, *opts.dropout_rng);
    head_out.push_back(matmul(probs, vh));
  }
  Tensor merged = add_rowwise(matmul(concat_cols(head_out),
                                     p.at(prefix + ".attn.wo")),
                              p.at(prefix + ".attn.bo"));
  return add(x, merged);
}

Tensor ffn_block(const ParamSet& p, const std::string& prefix,
                 const Tensor& x) {
  Tensor h = layer_norm(x, p.at(prefix + ".ffn.ln.gain"),
                        p.at(prefix + ".ffn.ln.bias"));
  Tensor f = gelu(add_rowwise(matmul(h, p.at(prefix + ".ffn.w1")),
                              p.at(prefix + ".ffn.b1")));
  Tensor out = add_rowwise(matmul(f, p.at(prefix + ".ffn.w2")),
                           p.at(prefix + ".ffn.b2"));
  return add(x, out);
}

}  // namespace

Tensor Model::encode_audio(const Tensor& features,
                           const ContextSchedule& schedule,
                           const ForwardOpts& opts) const {
  if (features.rank() != 2 || features.dim(1) != config.features)
    throw std::invalid_argument(
        "encode_audio: expected [N, " + std::to_string(config.features) +
        "] features");
  if (!schedule.full_context &&
      static_cast<int>(schedule.per_layer.size()) != config.layers_audio)
    throw std::invalid_argument(
        "encode_audio: schedule has " +
        std::to_string(schedule.per_layer.size()) + " layers, model has " +
        std::to_string(config.layers_audio));
  const int raw = features.dim(0);
  const int frames = downsampled_frames(raw, config.downsample);
  if (frames == 0)
    throw std::invalid_argument(
        "encode_audio: need at least " + std::to_string(config.downsample) +
        " raw frames, got " + std::to_string(raw));

  // Stack each group of `downsample` consecutive raw frames into one row.
  std::vector<Tensor> columns;
  columns.reserve(config.downsample);
  for (int k = 0; k < config.downsample; ++k) {
    std::vector<int> ids(frames);
    for (int t = 0; t < frames; ++t) ids[t] = t * config.downsample + k;
    columns.push_back(embedding_rows(features, ids));
  }
  Tensor x = add_rowwise(
      matmul(concat_cols(columns), params.at("frontend.proj.weight")),
      params.at("frontend.proj.bias"));
  x = add(x, position_code(frames, config.dim));

  for (int i = 0; i < config.layers_audio; ++i) {
    const AttentionMask mask = schedule.full_context
                                   ? build_full_mask(frames)
                                   : build_mask(frames, schedule.per_layer[i]);
    const std::string prefix = "audio.layer" + std::to_string(i);
    x = attention_block(params, prefix, x, mask.additive_logits(),
                        config.heads, opts);
    x = ffn_block(params, prefix, x);
  }
  return layer_norm(x, params.at("audio.final_ln.gain"),
                    params.at("audio.final_ln.bias"));
}

Tensor Model::encode_labels(const std::vector<int>& tokens,
                            const ForwardOpts& opts) const {
  for (int id : tokens)
    if (id <= kBlankId || id >= config.vocab)
      throw std::out_of_range("encode_labels: token id " + std::to_string(id) +
                              " outside [1, " + std::to_string(config.vocab) +
                              ")");
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  ids.push_back(config.vocab);  // sequence-start marker row
  ids.insert(ids.end(), tokens.begin(), tokens.end());

  Tensor x = embedding_rows(params.at("label.embed"), ids);
  const int rows = static_cast<int>(ids.size());
  x = add(x, position_code(rows, config.dim));
  const Tensor causal = build_mask(rows, 0).additive_logits();
  for (int i = 0; i < config.layers_label; ++i) {
    const std::string prefix = "label.layer" + std::to_string(i);
    x = attention_block(params, prefix, x, causal, config.heads, opts);
    x = ffn_block(params, prefix, x);
  }
  return layer_norm(x, params.at("label.final_ln.gain"),
                    params.at("label.final_ln.bias"));
}

PosteriorLattice Model::joint(const Tensor& audio_out,
                              const Tensor& label_out) const {
  if (audio_out.rank() != 2 || audio_out.dim(1) != config.dim ||
      label_out.rank() != 2 || label_out.dim(1) != config.dim)
    throw std::invalid_argument("joint: encoder outputs must be [*, dim]");
  Tensor pa = matmul(audio_out, params.at("joint.wa"));
  Tensor pl = matmul(label_out, params.at("joint.wl"));
  Tensor grid = tanh(add_rowwise(pairwise_sum(pa, pl), params.at("joint.b")));
  Tensor logits =
      add_rowwise(matmul(grid, params.at("joint.wo")), params.at("joint.bo"));
  PosteriorLattice lat;
  lat.frames = audio_out.dim(0);
  lat.rows = label_out.dim(0);
  lat.vocab = config.vocab;
  lat.log_probs = log_softmax(logits);
  return lat;
}

PosteriorLattice Model::forward(const Tensor& features,
                                const std::vector<int>& tokens,
                                const ContextSchedule& schedule,
                                const ForwardOpts& opts) const {
  return joint(encode_audio(features, schedule, opts),
               encode_labels(tokens, opts));
}

}  // namespace mmt
