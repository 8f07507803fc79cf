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

#ifndef MMT_TENSOR_HPP_
#define MMT_TENSOR_HPP_

// Dense row-major tensors of 64-bit floats with taped reverse-mode autodiff.
//
// Usage pattern:
//
//   Tape tape;
//   {
//     Tape::Scope rec(tape);          // ops executed here are recorded
//     Tensor loss = ...;              // build the computation
//     tape.backward(loss);            // accumulate d(loss)/d(tensor) grads
//   }
//
// Ops run eagerly; when a tape is active and an input requires gradients, the
// op appends one entry (op id, input refs, output ref, saved values) to the
// tape, which is therefore topologically ordered by construction. With no
// active tape every op is a plain forward computation. Gradients accumulate
// across backward() calls until explicitly zeroed; the training loop owns the
// reset.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmt {

class Rng;

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> data;   // row-major, size == product(shape)
  std::vector<double> grad;   // empty until first accumulation
  bool requires_grad = false;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value-semantic handle onto shared storage. Copying a Tensor aliases the
// underlying buffer (like a smart pointer); use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return impl_->numel(); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  // Scalar access; requires numel() == 1.
  double value() const;

  // Element access by multi-index (rank-checked).
  double at(const std::vector<int>& index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& mutable_grad();
  void zero_grad();

  // Deep copy of values (never of gradients); the copy is a fresh leaf.
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of primitive applications. Entries are appended in execution
// order, so inputs of every entry are produced by strictly earlier entries or
// are leaves — the invariant backward() relies on.
class Tape {
 public:
  // Per-backward-pass adjoint buffers, keyed by tensor identity. Kept apart
  // from TensorImpl::grad so that repeated backward() calls accumulate exact
  // multiples of the gradient instead of compounding.
  class Adjoints {
   public:
    // Adjoint of `t` for accumulation; zero-initialised on first access.
    std::vector<double>& acc(const TensorImpl* t);
    // Adjoint of `t` if any contribution reached it, else nullptr.
    const std::vector<double>* find(const TensorImpl* t) const;
    const std::unordered_map<const TensorImpl*, std::vector<double>>& all()
        const { return table_; }

   private:
    std::unordered_map<const TensorImpl*, std::vector<double>> table_;
  };

  struct Entry {
    const char* op;                                     // primitive id
    std::vector<std::shared_ptr<TensorImpl>> inputs;    // op arguments
    std::shared_ptr<TensorImpl> output;
    // Pulls the output adjoint and accumulates into the input adjoints.
    // Saved forward values live in the closure captures.
    std::function<void(Adjoints&)> pull;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation; nesting restores the previous tape on destruction.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // The tape ops currently record onto, or nullptr outside any Scope.
  static Tape* current();

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1, replays entries in reverse, then adds the
  // resulting adjoints onto the .grad of every requires_grad tensor reached.
  // `loss` must be a scalar produced while this tape was active.
  void backward(const Tensor& loss);

 private:
  std::vector<Entry> entries_;
};

// Convenience: backward through the innermost active tape.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitive operations. All are eager; all record onto the active tape when
// differentiation is needed (see file comment).
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);                        // exact x * Phi(x)
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);                         // domain error on x <= 0

// out[i, j] = a[i, j] + bias[j]; `a` is 2-D, `bias` matches its last dim.
Tensor add_rowwise(const Tensor& a, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);     // 2-D only
Tensor transpose(const Tensor& a);                   // 2-D only

// Log-softmax along the last axis; stable under large magnitudes and -inf
// entries (used for additive attention masks). A row with no finite entry is
// a contract violation.
Tensor log_softmax(const Tensor& a);

Tensor sum(const Tensor& a);                         // -> shape {1}
Tensor reshape(const Tensor& a, std::vector<int> shape);

// Column-wise concatenation of 2-D tensors with a common row count.
Tensor concat_cols(const std::vector<Tensor>& parts);

// [R, C] -> [R, width] copy of columns [start, start + width).
Tensor slice_cols(const Tensor& a, int start, int width);

// out.row(i) = table.row(ids[i]); gradients scatter-add into the table.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// out.row(i * b.rows + j) = a.row(i) + b.row(j); the broadcasted outer sum
// the joint network applies over (audio frame, label position) pairs.
Tensor pairwise_sum(const Tensor& a, const Tensor& b);

// Inverted dropout: keeps an entry with probability 1-rate and scales it by
// 1/(1-rate); rate == 0 is an exact identity. Mask draws come from `rng`
// row-major, one uniform per element.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// y = gain * (x - mean) / sqrt(var + eps) + bias over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// ---------------------------------------------------------------------------
// Scalar helpers.
// ---------------------------------------------------------------------------

// log(sum(exp(x))) with max-shift; empty input is a contract violation; an
// all -inf input returns -inf.
double logsumexp(const double* x, std::size_t n);
double logsumexp(const std::vector<double>& x);
double logsumexp2(double a, double b);

bool all_finite(const Tensor& t);

// ---------------------------------------------------------------------------
// Gradient checking.
// ---------------------------------------------------------------------------

struct FdReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "name[i]: analytic=..., fd=..." for the worst coord

  bool within(double tol) const { return max_rel_err < tol; }
};

// Compares analytic gradients of `make_loss` (a scalar-valued computation
// over `params`) against central finite differences with step `h`. When the
// parameter count exceeds `max_coords`, a random subset of that size is
// checked. Relative error uses max(|analytic|, |fd|, 1e-6) as denominator.
// Leaves params and their grads exactly as found.
FdReport finite_difference_check(const std::function<Tensor()>& make_loss,
                                 const std::vector<Tensor*>& params,
                                 double h, std::size_t max_coords, Rng& rng);

}  // namespace mmt

#endif  // MMT_TENSOR_HPP_
