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

#include "mmt/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mmt/rng.hpp"

namespace mmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " +
                                shape_str(t.shape()));
  }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Shared body of the unary elementwise ops: `fwd` maps x to y, `dydx` maps
// (x, y) to the local derivative.
template <typename Fwd, typename Dydx>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Dydx dydx) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& x = a.data();
  auto& y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {name,
         {ai},
         oi,
         [ai, oi, dydx](Tape::Adjoints& adj) {
           const std::vector<double>* og = adj.find(oi.get());
           if (og == nullptr) return;
           std::vector<double>& da = adj.acc(ai.get());
           for (std::size_t i = 0; i < da.size(); ++i)
             da[i] += (*og)[i] * dydx(ai->data[i], oi->data[i]);
         }});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  const std::size_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(n, 0.0);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

double Tensor::value() const {
  if (numel() != 1)
    throw std::invalid_argument("Tensor::value: tensor is not scalar, shape " +
                                shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(const std::vector<int>& index) const {
  if (static_cast<int>(index.size()) != rank())
    throw std::invalid_argument("Tensor::at: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= impl_->shape[i])
      throw std::out_of_range("Tensor::at: index out of range");
    flat = flat * static_cast<std::size_t>(impl_->shape[i]) +
           static_cast<std::size_t>(index[i]);
  }
  return impl_->data[flat];
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty())
    throw std::logic_error("Tensor::grad: no gradient accumulated yet");
  return impl_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
  if (impl_->grad.empty())
    throw std::logic_error("Tensor::mutable_grad: no gradient accumulated yet");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor::from(impl_->shape, impl_->data, impl_->requires_grad);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::current() { return g_active_tape; }

std::vector<double>& Tape::Adjoints::acc(const TensorImpl* t) {
  auto it = table_.find(t);
  if (it == table_.end())
    it = table_.emplace(t, std::vector<double>(t->numel(), 0.0)).first;
  return it->second;
}

const std::vector<double>* Tape::Adjoints::find(const TensorImpl* t) const {
  auto it = table_.find(t);
  return it == table_.end() ? nullptr : &it->second;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("Tape::backward: loss must be a scalar");
  Adjoints adj;
  adj.acc(loss.impl())[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->pull(adj);
  for (const auto& [impl, contribution] : adj.all()) {
    if (!impl->requires_grad) continue;
    auto* mut = const_cast<TensorImpl*>(impl);
    mut->ensure_grad();
    for (std::size_t i = 0; i < contribution.size(); ++i)
      mut->grad[i] += contribution[i];
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::current();
  if (tape == nullptr)
    throw std::logic_error("backward: no active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const auto& x = a.data();
  const auto& y = b.data();
  auto& z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto oi = out.impl_ptr();
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record(
        {"add",
         {ai, bi},
         oi,
         [ai, bi, oi, ga, gb](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           if (ga) {
             auto& da = adj.acc(ai.get());
             for (std::size_t i = 0; i < da.size(); ++i) da[i] += (*og)[i];
           }
           if (gb) {
             auto& db = adj.acc(bi.get());
             for (std::size_t i = 0; i < db.size(); ++i) db[i] += (*og)[i];
           }
         }});
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const auto& x = a.data();
  const auto& y = b.data();
  auto& z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto oi = out.impl_ptr();
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record(
        {"mul",
         {ai, bi},
         oi,
         [ai, bi, oi, ga, gb](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           if (ga) {
             auto& da = adj.acc(ai.get());
             for (std::size_t i = 0; i < da.size(); ++i)
               da[i] += (*og)[i] * bi->data[i];
           }
           if (gb) {
             auto& db = adj.acc(bi.get());
             for (std::size_t i = 0; i < db.size(); ++i)
               db[i] += (*og)[i] * ai->data[i];
           }
         }});
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return unary_op("scale", a,
                  [s](double x) { return x * s; },
                  [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) {
  return unary_op("neg", a,
                  [](double x) { return -x; },
                  [](double, double) { return -1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary_op("tanh", a,
                  [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
  // Exact Gaussian form: y = x * Phi(x) with Phi the standard normal CDF.
  auto cdf = [](double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); };
  auto pdf = [](double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  };
  return unary_op("gelu", a,
                  [cdf](double x) { return x * cdf(x); },
                  [cdf, pdf](double x, double) { return cdf(x) + x * pdf(x); });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a,
                  [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data())
    if (!(x > 0.0))
      throw std::domain_error("log: non-positive input " + std::to_string(x));
  return unary_op("log", a,
                  [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  require_rank("add_rowwise", a, 2);
  require_rank("add_rowwise", bias, 1);
  const int rows = a.dim(0), cols = a.dim(1);
  if (bias.dim(0) != cols)
    throw std::invalid_argument("add_rowwise: bias length " +
                                std::to_string(bias.dim(0)) +
                                " does not match columns " +
                                std::to_string(cols));
  Tensor out = Tensor::zeros(a.shape());
  const auto& x = a.data();
  const auto& b = bias.data();
  auto& y = out.data();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      y[static_cast<std::size_t>(i) * cols + j] =
          x[static_cast<std::size_t>(i) * cols + j] + b[j];
  if (should_record({&a, &bias})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto bi = bias.impl_ptr();
    auto oi = out.impl_ptr();
    const bool ga = a.requires_grad(), gb = bias.requires_grad();
    Tape::current()->record(
        {"add_rowwise",
         {ai, bi},
         oi,
         [ai, bi, oi, ga, gb, rows, cols](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           if (ga) {
             auto& da = adj.acc(ai.get());
             for (std::size_t i = 0; i < da.size(); ++i) da[i] += (*og)[i];
           }
           if (gb) {
             auto& db = adj.acc(bi.get());
             for (int i = 0; i < rows; ++i)
               for (int j = 0; j < cols; ++j)
                 db[j] += (*og)[static_cast<std::size_t>(i) * cols + j];
           }
         }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimensions " +
                                std::to_string(k) + " vs " +
                                std::to_string(k2));
  Tensor out = Tensor::zeros({m, n});
  {
    ConstMap A(a.data().data(), m, k);
    ConstMap B(b.data().data(), k, n);
    MutMap C(out.data().data(), m, n);
    C.noalias() = A * B;
  }
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto oi = out.impl_ptr();
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record(
        {"matmul",
         {ai, bi},
         oi,
         [ai, bi, oi, ga, gb, m, k, n](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           ConstMap G(og->data(), m, n);
           if (ga) {
             auto& da = adj.acc(ai.get());
             MutMap dA(da.data(), m, k);
             ConstMap B(bi->data.data(), k, n);
             dA.noalias() += G * B.transpose();
           }
           if (gb) {
             auto& db = adj.acc(bi.get());
             MutMap dB(db.data(), k, n);
             ConstMap A(ai->data.data(), m, k);
             dB.noalias() += A.transpose() * G;
           }
         }});
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  const auto& x = a.data();
  auto& y = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      y[static_cast<std::size_t>(j) * m + i] =
          x[static_cast<std::size_t>(i) * n + j];
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"transpose",
         {ai},
         oi,
         [ai, oi, m, n](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& da = adj.acc(ai.get());
           for (int i = 0; i < m; ++i)
             for (int j = 0; j < n; ++j)
               da[static_cast<std::size_t>(i) * n + j] +=
                   (*og)[static_cast<std::size_t>(j) * m + i];
         }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

Tensor log_softmax(const Tensor& a) {
  if (a.rank() < 1)
    throw std::invalid_argument("log_softmax: rank must be >= 1");
  const int width = a.dim(a.rank() - 1);
  if (width == 0)
    throw std::invalid_argument("log_softmax: empty last axis");
  const std::size_t rows = a.numel() / static_cast<std::size_t>(width);
  Tensor out = Tensor::zeros(a.shape());
  const auto& x = a.data();
  auto& y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * width;
    double m = kNegInf;
    for (int j = 0; j < width; ++j) m = std::max(m, row[j]);
    if (!std::isfinite(m))
      throw std::invalid_argument(
          "log_softmax: row without a finite entry (all -inf or NaN)");
    double acc = 0.0;
    for (int j = 0; j < width; ++j) acc += std::exp(row[j] - m);
    const double lse = m + std::log(acc);
    for (int j = 0; j < width; ++j) y[r * width + j] = row[j] - lse;
  }
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"log_softmax",
         {ai},
         oi,
         [ai, oi, rows, width](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& da = adj.acc(ai.get());
           for (std::size_t r = 0; r < rows; ++r) {
             const std::size_t base = r * width;
             double gsum = 0.0;
             for (int j = 0; j < width; ++j) gsum += (*og)[base + j];
             for (int j = 0; j < width; ++j)
               da[base + j] +=
                   (*og)[base + j] - std::exp(oi->data[base + j]) * gsum;
           }
         }});
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.data()) total += x;
  Tensor out = Tensor::scalar(total);
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"sum",
         {ai},
         oi,
         [ai, oi](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& da = adj.acc(ai.get());
           for (std::size_t i = 0; i < da.size(); ++i) da[i] += (*og)[0];
         }});
  }
  return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: new shape " + shape_str(shape) +
                                " does not preserve element count");
  Tensor out = Tensor::from(std::move(shape), a.data());
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"reshape",
         {ai},
         oi,
         [ai, oi](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& da = adj.acc(ai.get());
           for (std::size_t i = 0; i < da.size(); ++i) da[i] += (*og)[i];
         }});
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_cols: no parts");
  const int rows = parts[0].dim(0);
  int total_cols = 0;
  for (const Tensor& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != rows)
      throw std::invalid_argument("concat_cols: row count mismatch");
    total_cols += p.dim(1);
  }
  Tensor out = Tensor::zeros({rows, total_cols});
  auto& y = out.data();
  int col0 = 0;
  for (const Tensor& p : parts) {
    const int cols = p.dim(1);
    const auto& x = p.data();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        y[static_cast<std::size_t>(i) * total_cols + col0 + j] =
            x[static_cast<std::size_t>(i) * cols + j];
    col0 += cols;
  }
  bool any_grad = false;
  for (const Tensor& p : parts) any_grad |= p.requires_grad();
  if (Tape::current() != nullptr && any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<bool> grads;
    std::vector<int> offsets;
    int off = 0;
    for (const Tensor& p : parts) {
      impls.push_back(p.impl_ptr());
      grads.push_back(p.requires_grad());
      offsets.push_back(off);
      off += p.dim(1);
    }
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"concat_cols",
         impls,
         oi,
         [impls, grads, offsets, oi, rows, total_cols](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           for (std::size_t p = 0; p < impls.size(); ++p) {
             if (!grads[p]) continue;
             const int cols = impls[p]->shape[1];
             auto& da = adj.acc(impls[p].get());
             for (int i = 0; i < rows; ++i)
               for (int j = 0; j < cols; ++j)
                 da[static_cast<std::size_t>(i) * cols + j] +=
                     (*og)[static_cast<std::size_t>(i) * total_cols +
                           offsets[p] + j];
           }
         }});
  }
  return out;
}

Tensor slice_cols(const Tensor& a, int start, int width) {
  require_rank("slice_cols", a, 2);
  const int rows = a.dim(0), cols = a.dim(1);
  if (start < 0 || width < 0 || start + width > cols)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) +
                                ", " + std::to_string(start + width) +
                                ") outside " + std::to_string(cols) +
                                " columns");
  Tensor out = Tensor::zeros({rows, width});
  const auto& x = a.data();
  auto& y = out.data();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < width; ++j)
      y[static_cast<std::size_t>(i) * width + j] =
          x[static_cast<std::size_t>(i) * cols + start + j];
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"slice_cols",
         {ai},
         oi,
         [ai, oi, rows, cols, start, width](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& da = adj.acc(ai.get());
           for (int i = 0; i < rows; ++i)
             for (int j = 0; j < width; ++j)
               da[static_cast<std::size_t>(i) * cols + start + j] +=
                   (*og)[static_cast<std::size_t>(i) * width + j];
         }});
  }
  return out;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank("embedding_rows", table, 2);
  const int rows = table.dim(0), width = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= rows)
      throw std::out_of_range("embedding_rows: id " + std::to_string(id) +
                              " outside table of " + std::to_string(rows) +
                              " rows");
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), width});
  const auto& x = table.data();
  auto& y = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < width; ++j)
      y[i * width + j] = x[static_cast<std::size_t>(ids[i]) * width + j];
  if (should_record({&table})) {
    out.set_requires_grad(true);
    auto ti = table.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"embedding_rows",
         {ti},
         oi,
         [ti, oi, ids, width](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& dt = adj.acc(ti.get());
           for (std::size_t i = 0; i < ids.size(); ++i)
             for (int j = 0; j < width; ++j)
               dt[static_cast<std::size_t>(ids[i]) * width + j] +=
                   (*og)[i * width + j];
         }});
  }
  return out;
}

Tensor pairwise_sum(const Tensor& a, const Tensor& b) {
  require_rank("pairwise_sum", a, 2);
  require_rank("pairwise_sum", b, 2);
  if (a.dim(1) != b.dim(1))
    throw std::invalid_argument("pairwise_sum: column mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int ra = a.dim(0), rb = b.dim(0), width = a.dim(1);
  Tensor out = Tensor::zeros({ra * rb, width});
  const auto& x = a.data();
  const auto& yb = b.data();
  auto& z = out.data();
  for (int i = 0; i < ra; ++i)
    for (int j = 0; j < rb; ++j) {
      const std::size_t base =
          (static_cast<std::size_t>(i) * rb + j) * width;
      for (int c = 0; c < width; ++c)
        z[base + c] = x[static_cast<std::size_t>(i) * width + c] +
                      yb[static_cast<std::size_t>(j) * width + c];
    }
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto oi = out.impl_ptr();
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record(
        {"pairwise_sum",
         {ai, bi},
         oi,
         [ai, bi, oi, ga, gb, ra, rb, width](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           if (ga) {
             auto& da = adj.acc(ai.get());
             for (int i = 0; i < ra; ++i)
               for (int j = 0; j < rb; ++j) {
                 const std::size_t base =
                     (static_cast<std::size_t>(i) * rb + j) * width;
                 for (int c = 0; c < width; ++c)
                   da[static_cast<std::size_t>(i) * width + c] +=
                       (*og)[base + c];
               }
           }
           if (gb) {
             auto& db = adj.acc(bi.get());
             for (int i = 0; i < ra; ++i)
               for (int j = 0; j < rb; ++j) {
                 const std::size_t base =
                     (static_cast<std::size_t>(i) * rb + j) * width;
                 for (int c = 0; c < width; ++c)
                   db[static_cast<std::size_t>(j) * width + c] +=
                       (*og)[base + c];
               }
           }
         }});
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.numel());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform01() >= rate ? keep_scale : 0.0;
  Tensor out = Tensor::zeros(a.shape());
  const auto& x = a.data();
  auto& y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * mask[i];
  if (should_record({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"dropout",
         {ai},
         oi,
         [ai, oi, mask = std::move(mask)](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           auto& da = adj.acc(ai.get());
           for (std::size_t i = 0; i < da.size(); ++i)
             da[i] += (*og)[i] * mask[i];
         }});
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank must be >= 1");
  const int width = x.dim(x.rank() - 1);
  require_rank("layer_norm", gain, 1);
  require_rank("layer_norm", bias, 1);
  if (gain.dim(0) != width || bias.dim(0) != width)
    throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  const std::size_t rows = x.numel() / static_cast<std::size_t>(width);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const auto& xd = x.data();
  const auto& g = gain.data();
  const auto& b = bias.data();
  auto& y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * width;
    double mean = 0.0;
    for (int j = 0; j < width; ++j) mean += xd[base + j];
    mean /= width;
    double var = 0.0;
    for (int j = 0; j < width; ++j) {
      const double d = xd[base + j] - mean;
      var += d * d;
    }
    var /= width;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int j = 0; j < width; ++j) {
      xhat[base + j] = (xd[base + j] - mean) * is;
      y[base + j] = xhat[base + j] * g[j] + b[j];
    }
  }
  if (should_record({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto gi = gain.impl_ptr();
    auto bi = bias.impl_ptr();
    auto oi = out.impl_ptr();
    const bool gx = x.requires_grad(), gg = gain.requires_grad(),
               gb = bias.requires_grad();
    Tape::current()->record(
        {"layer_norm",
         {xi, gi, bi},
         oi,
         [xi, gi, bi, oi, gx, gg, gb, rows, width, xhat = std::move(xhat),
          inv_std = std::move(inv_std)](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           if (gg) {
             auto& dg = adj.acc(gi.get());
             for (std::size_t r = 0; r < rows; ++r)
               for (int j = 0; j < width; ++j)
                 dg[j] += (*og)[r * width + j] * xhat[r * width + j];
           }
           if (gb) {
             auto& db = adj.acc(bi.get());
             for (std::size_t r = 0; r < rows; ++r)
               for (int j = 0; j < width; ++j) db[j] += (*og)[r * width + j];
           }
           if (gx) {
             auto& dx = adj.acc(xi.get());
             const auto& g = gi->data;
             for (std::size_t r = 0; r < rows; ++r) {
               const std::size_t base = r * width;
               double mean_gg = 0.0, mean_ggx = 0.0;
               for (int j = 0; j < width; ++j) {
                 const double v = (*og)[base + j] * g[j];
                 mean_gg += v;
                 mean_ggx += v * xhat[base + j];
               }
               mean_gg /= width;
               mean_ggx /= width;
               for (int j = 0; j < width; ++j) {
                 const double v = (*og)[base + j] * g[j];
                 dx[base + j] +=
                     inv_std[r] * (v - mean_gg - xhat[base + j] * mean_ggx);
               }
             }
           }
         }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

double logsumexp(const double* x, std::size_t n) {
  if (n == 0) throw std::invalid_argument("logsumexp: empty input");
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (m == kNegInf) return kNegInf;  // every term is exactly -inf
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(x[i] - m);
  return m + std::log(acc);
}

double logsumexp(const std::vector<double>& x) {
  return logsumexp(x.data(), x.size());
}

double logsumexp2(double a, double b) {
  const double m = std::max(a, b);
  if (m == kNegInf) return kNegInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool all_finite(const Tensor& t) {
  for (double x : t.data())
    if (!std::isfinite(x)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

FdReport finite_difference_check(const std::function<Tensor()>& make_loss,
                                 const std::vector<Tensor*>& params,
                                 double h, std::size_t max_coords, Rng& rng) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h <= 0");

  // Analytic gradients on an isolated tape, saving/restoring .grad state so
  // the check is side-effect free for the caller.
  std::vector<std::vector<double>> saved_grads;
  saved_grads.reserve(params.size());
  for (Tensor* p : params) {
    saved_grads.push_back(p->impl()->grad);
    p->impl()->grad.clear();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = make_loss();
    tape.backward(loss);
    for (Tensor* p : params) {
      p->impl()->ensure_grad();
      analytic.push_back(p->impl()->grad);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->impl()->grad = saved_grads[i];

  // Flat coordinate space over all parameters.
  std::vector<std::size_t> starts(params.size() + 1, 0);
  for (std::size_t i = 0; i < params.size(); ++i)
    starts[i + 1] = starts[i] + params[i]->numel();
  const std::size_t total = starts.back();
  if (total == 0)
    throw std::invalid_argument("finite_difference_check: no parameters");

  std::vector<std::size_t> coords;
  if (total <= max_coords) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    // Sample max_coords distinct flat coordinates.
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < max_coords; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_int(
                  0, static_cast<int>(total - i - 1)));
      std::swap(pool[i], pool[j]);
      coords.push_back(pool[i]);
    }
  }

  FdReport report;
  for (std::size_t flat : coords) {
    std::size_t pi = 0;
    while (starts[pi + 1] <= flat) ++pi;
    const std::size_t ci = flat - starts[pi];
    double& x = params[pi]->data()[ci];
    const double original = x;
    x = original + h;
    const double f_plus = make_loss().value();
    x = original - h;
    const double f_minus = make_loss().value();
    x = original;
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic[pi][ci];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
    const double rel = std::abs(a - fd) / denom;
    ++report.coords_checked;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      std::ostringstream os;
      os << "param " << pi << "[" << ci << "]: analytic=" << a
         << ", fd=" << fd;
      report.worst = os.str();
    }
  }
  return report;
}

}  // namespace mmt
