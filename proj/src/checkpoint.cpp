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

#include "mmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mmt {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

double bits_to_double(std::uint64_t bits) {
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

std::uint64_t double_to_bits(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  return bits;
}

class Writer {
 public:
  explicit Writer(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for write");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void record(const std::string& name, const std::vector<int>& shape,
              const std::vector<double>& data) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) u32(static_cast<std::uint32_t>(d));
    bytes(data.data(), data.size() * sizeof(double));
  }
  void close() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + path_);
    out_.close();
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path + " for read");
  }
  std::size_t offset() const { return offset_; }
  bool at_eof() {
    in_.peek();
    return in_.eof();
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw std::runtime_error(path_ + ": checkpoint truncated at byte " +
                               std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamSet& params, std::uint64_t config_hash,
                     std::uint64_t seed) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.i32(config.layers_audio);
  w.i32(config.layers_label);
  w.i32(config.dim);
  w.i32(config.dim_ff);
  w.i32(config.heads);
  w.i32(config.dim_joint);
  w.i32(config.vocab);
  w.i32(config.features);
  w.i32(config.downsample);
  w.record("__meta__.config_hash", {1}, {bits_to_double(config_hash)});
  w.record("__meta__.seed", {1}, {bits_to_double(seed)});
  for (const auto& [name, t] : params) {
    std::vector<int> shape(t.shape().begin(), t.shape().end());
    w.record(name, shape, t.data());
  }
  w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path + ": bad magic at byte 0");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version) + " at byte 4");

  Checkpoint ck;
  ck.config.layers_audio = r.i32();
  ck.config.layers_label = r.i32();
  ck.config.dim = r.i32();
  ck.config.dim_ff = r.i32();
  ck.config.heads = r.i32();
  ck.config.dim_joint = r.i32();
  ck.config.vocab = r.i32();
  ck.config.features = r.i32();
  ck.config.downsample = r.i32();
  ck.config.validate();

  while (!r.at_eof()) {
    const std::size_t record_start = r.offset();
    const std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096)
      throw std::runtime_error(path + ": implausible name length " +
                               std::to_string(name_len) + " at byte " +
                               std::to_string(record_start));
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8)
      throw std::runtime_error(path + ": implausible rank " +
                               std::to_string(rank) + " in record \"" + name +
                               "\" at byte " + std::to_string(record_start));
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(r.u32());
      numel *= static_cast<std::size_t>(shape[i]);
    }
    std::vector<double> data(numel);
    if (numel > 0) r.bytes(data.data(), numel * sizeof(double));

    if (name == "__meta__.config_hash") {
      ck.config_hash = double_to_bits(data.at(0));
    } else if (name == "__meta__.seed") {
      ck.seed = double_to_bits(data.at(0));
    } else {
      Tensor t = Tensor::zeros(shape);
      t.data() = std::move(data);
      ck.params.add(name, std::move(t));
    }
  }
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  Rng scratch(1);  // overwritten below; init only allocates the layout
  Model model = Model::init(ck.config, scratch);
  if (model.params.size() != ck.params.size())
    throw std::invalid_argument(
        "checkpoint parameter count " + std::to_string(ck.params.size()) +
        " does not match architecture (" + std::to_string(model.params.size()) +
        ")");
  for (auto& [name, tensor] : model.params) {
    if (!ck.params.contains(name))
      throw std::invalid_argument("checkpoint is missing parameter \"" + name +
                                  "\"");
    const Tensor& src = ck.params.at(name);
    if (src.shape() != tensor.shape())
      throw std::invalid_argument("checkpoint parameter \"" + name +
                                  "\" has a different shape");
    tensor.data() = src.data();
  }
  return model;
}

}  // namespace mmt
