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

#include "mmt/losses.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace mmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbFloor = 1e-12;

void check_lattice_tokens(const char* where, const PosteriorLattice& lat,
                          const std::vector<int>& tokens) {
  const int U = static_cast<int>(tokens.size());
  if (lat.frames < 1)
    throw std::invalid_argument(std::string(where) + ": empty lattice");
  if (lat.rows != U + 1)
    throw std::invalid_argument(std::string(where) + ": lattice has " +
                                std::to_string(lat.rows) + " rows, need " +
                                std::to_string(U + 1) + " for " +
                                std::to_string(U) + " tokens");
  if (lat.log_probs.rank() != 2 ||
      lat.log_probs.dim(0) != lat.frames * lat.rows ||
      lat.log_probs.dim(1) != lat.vocab)
    throw std::invalid_argument(std::string(where) +
                                ": lattice tensor shape mismatch");
  for (int id : tokens)
    if (id <= kBlankId || id >= lat.vocab)
      throw std::out_of_range(std::string(where) + ": token id " +
                              std::to_string(id) + " outside [1, " +
                              std::to_string(lat.vocab) + ")");
}

// Contiguous read access into [T * U1, V] lattice values.
struct View {
  const std::vector<double>& v;
  int U1, V;
  double operator()(int t, int u, int k) const {
    return v[(static_cast<std::size_t>(t) * U1 + u) * V + k];
  }
  std::size_t idx(int t, int u, int k) const {
    return (static_cast<std::size_t>(t) * U1 + u) * V + k;
  }
};

// Log probability of reaching each node from (0, 0).
std::vector<double> forward_scores(const View& lp, int T, int U,
                                   const std::vector<int>& tokens) {
  const int U1 = U + 1;
  std::vector<double> alpha(static_cast<std::size_t>(T) * U1, kNegInf);
  alpha[0] = 0.0;
  for (int t = 0; t < T; ++t)
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      const double via_blank =
          t > 0 ? alpha[static_cast<std::size_t>(t - 1) * U1 + u] +
                      lp(t - 1, u, kBlankId)
                : kNegInf;
      const double via_label =
          u > 0 ? alpha[static_cast<std::size_t>(t) * U1 + u - 1] +
                      lp(t, u - 1, tokens[u - 1])
                : kNegInf;
      alpha[static_cast<std::size_t>(t) * U1 + u] =
          logsumexp2(via_blank, via_label);
    }
  return alpha;
}

// Log probability of finishing from each node, including the closing blank
// at (T-1, U).
std::vector<double> backward_scores(const View& lp, int T, int U,
                                    const std::vector<int>& tokens) {
  const int U1 = U + 1;
  std::vector<double> beta(static_cast<std::size_t>(T) * U1, kNegInf);
  beta[static_cast<std::size_t>(T - 1) * U1 + U] = lp(T - 1, U, kBlankId);
  for (int t = T - 1; t >= 0; --t)
    for (int u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) continue;
      const double via_blank =
          t < T - 1 ? lp(t, u, kBlankId) +
                          beta[static_cast<std::size_t>(t + 1) * U1 + u]
                    : kNegInf;
      const double via_label =
          u < U ? lp(t, u, tokens[u]) +
                      beta[static_cast<std::size_t>(t) * U1 + u + 1]
                : kNegInf;
      beta[static_cast<std::size_t>(t) * U1 + u] =
          logsumexp2(via_blank, via_label);
    }
  return beta;
}

}  // namespace

Tensor transducer_loss(const PosteriorLattice& lat,
                       const std::vector<int>& tokens) {
  check_lattice_tokens("transducer_loss", lat, tokens);
  const int T = lat.frames;
  const int U = static_cast<int>(tokens.size());
  const int U1 = U + 1;
  const int V = lat.vocab;
  const View lp{lat.log_probs.data(), U1, V};

  const std::vector<double> alpha = forward_scores(lp, T, U, tokens);
  const double log_p =
      alpha[static_cast<std::size_t>(T - 1) * U1 + U] + lp(T - 1, U, kBlankId);
  Tensor out = Tensor::scalar(-log_p);

  if (Tape::current() != nullptr && lat.log_probs.requires_grad()) {
    out.set_requires_grad(true);
    auto li = lat.log_probs.impl_ptr();
    auto oi = out.impl_ptr();
    Tape::current()->record(
        {"transducer_loss",
         {li},
         oi,
         [li, oi, tokens, alpha, log_p, T, U, U1, V](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           const double upstream = (*og)[0];
           const View lp{li->data, U1, V};
           const std::vector<double> beta = backward_scores(lp, T, U, tokens);
           auto& dl = adj.acc(li.get());
           for (int t = 0; t < T; ++t)
             for (int u = 0; u <= U; ++u) {
               const double a = alpha[static_cast<std::size_t>(t) * U1 + u];
               // occupancy of the blank transition out of (t, u); the last
               // frame closes the lattice instead of advancing time
               double beta_next;
               if (t < T - 1)
                 beta_next = beta[static_cast<std::size_t>(t + 1) * U1 + u];
               else
                 beta_next = (u == U) ? 0.0 : kNegInf;
               dl[lp.idx(t, u, kBlankId)] -=
                   upstream *
                   std::exp(a + lp(t, u, kBlankId) + beta_next - log_p);
               if (u < U)
                 dl[lp.idx(t, u, tokens[u])] -=
                     upstream *
                     std::exp(a + lp(t, u, tokens[u]) +
                              beta[static_cast<std::size_t>(t) * U1 + u + 1] -
                              log_p);
             }
         }});
  }
  return out;
}

double brute_force_transducer_loss(const PosteriorLattice& lat,
                                   const std::vector<int>& tokens,
                                   double max_paths) {
  check_lattice_tokens("brute_force_transducer_loss", lat, tokens);
  const int T = lat.frames;
  const int U = static_cast<int>(tokens.size());
  const View lp{lat.log_probs.data(), U + 1, lat.vocab};

  // C(T-1+U, U) monotone paths from (0,0) to (T-1,U)
  double count = 1.0;
  for (int i = 1; i <= U; ++i) count = count * (T - 1 + i) / i;
  if (count > max_paths)
    throw std::runtime_error(
        "brute_force_transducer_loss: T=" + std::to_string(T) +
        ", U=" + std::to_string(U) + " would enumerate " +
        std::to_string(count) + " paths, above the cap of " +
        std::to_string(max_paths));

  std::vector<double> path_scores;
  path_scores.reserve(static_cast<std::size_t>(count));
  // walk every interleaving of T-1 time steps and U label emissions
  std::function<void(int, int, double)> walk = [&](int t, int u, double acc) {
    if (t == T - 1 && u == U) {
      path_scores.push_back(acc + lp(t, u, kBlankId));
      return;
    }
    if (t < T - 1) walk(t + 1, u, acc + lp(t, u, kBlankId));
    if (u < U) walk(t, u + 1, acc + lp(t, u, tokens[u]));
  };
  walk(0, 0, 0.0);
  return -logsumexp(path_scores);
}

Tensor merge_posteriors(const PosteriorLattice& lat,
                        const std::vector<int>& tokens) {
  check_lattice_tokens("merge_posteriors", lat, tokens);
  const int T = lat.frames;
  const int U = static_cast<int>(tokens.size());
  const View lp{lat.log_probs.data(), U + 1, lat.vocab};
  Tensor out = Tensor::zeros({T * (U + 1), 3});
  auto& v = out.data();
  for (int t = 0; t < T; ++t)
    for (int u = 0; u <= U; ++u) {
      const double q0 = std::exp(lp(t, u, kBlankId));
      const double q1 = u < U ? std::exp(lp(t, u, tokens[u])) : 0.0;
      const std::size_t row = static_cast<std::size_t>(t) * (U + 1) + u;
      v[row * 3 + 0] = q0;
      v[row * 3 + 1] = q1;
      v[row * 3 + 2] = std::max(1.0 - q0 - q1, 0.0);
    }
  return out;
}

Tensor distill_kl(const PosteriorLattice& student,
                  const PosteriorLattice& teacher,
                  const std::vector<int>& tokens, int shift) {
  check_lattice_tokens("distill_kl", student, tokens);
  check_lattice_tokens("distill_kl", teacher, tokens);
  if (student.frames != teacher.frames || student.vocab != teacher.vocab)
    throw std::invalid_argument(
        "distill_kl: student and teacher lattices disagree in shape");
  const int T = student.frames;
  if (shift < 0 || shift >= T)
    throw std::invalid_argument("distill_kl: shift " + std::to_string(shift) +
                                " outside [0, " + std::to_string(T) + ")");
  const int U = static_cast<int>(tokens.size());
  const int U1 = U + 1;
  const View slp{student.log_probs.data(), U1, student.vocab};
  const View tlp{teacher.log_probs.data(), U1, teacher.vocab};

  // 3-way probabilities at one node
  auto merged = [&](const View& lp, int t, int u, double q[3]) {
    q[0] = std::exp(lp(t, u, kBlankId));
    q[1] = u < U ? std::exp(lp(t, u, tokens[u])) : 0.0;
    q[2] = std::max(1.0 - q[0] - q[1], 0.0);
  };
  auto safe_log = [](double p) { return std::log(std::max(p, kProbFloor)); };

  const double node_count = static_cast<double>(T - shift) * U1;
  double total = 0.0;
  for (int t = shift; t < T; ++t)
    for (int u = 0; u <= U; ++u) {
      double q[3], p[3];
      merged(slp, t, u, q);
      merged(tlp, t - shift, u, p);
      for (int k = 0; k < 3; ++k)
        total += q[k] * (safe_log(q[k]) - safe_log(p[k]));
    }
  Tensor out = Tensor::scalar(total / node_count);

  if (Tape::current() != nullptr && student.log_probs.requires_grad()) {
    out.set_requires_grad(true);
    auto si = student.log_probs.impl_ptr();
    // teacher values are copied so the pull stays correct even if the
    // teacher tensor is later mutated; gradients never flow into it
    std::vector<double> teacher_vals = teacher.log_probs.data();
    auto oi = out.impl_ptr();
    const int V = student.vocab;
    Tape::current()->record(
        {"distill_kl",
         {si},
         oi,
         [si, oi, teacher_vals, tokens, T, U, U1, V, shift,
          node_count](Tape::Adjoints& adj) {
           const auto* og = adj.find(oi.get());
           if (og == nullptr) return;
           const double w = (*og)[0] / node_count;
           const View slp{si->data, U1, V};
           const View tlp{teacher_vals, U1, V};
           auto safe_log = [](double p) {
             return std::log(std::max(p, kProbFloor));
           };
           auto& ds = adj.acc(si.get());
           for (int t = shift; t < T; ++t)
             for (int u = 0; u <= U; ++u) {
               double q[3], p[3];
               q[0] = std::exp(slp(t, u, kBlankId));
               q[1] = u < U ? std::exp(slp(t, u, tokens[u])) : 0.0;
               q[2] = std::max(1.0 - q[0] - q[1], 0.0);
               p[0] = std::exp(tlp(t - shift, u, kBlankId));
               p[1] = u < U ? std::exp(tlp(t - shift, u, tokens[u])) : 0.0;
               p[2] = std::max(1.0 - p[0] - p[1], 0.0);
               double term[3];
               for (int k = 0; k < 3; ++k)
                 term[k] = safe_log(q[k]) - safe_log(p[k]);
               ds[slp.idx(t, u, kBlankId)] += w * q[0] * (term[0] - term[2]);
               if (u < U)
                 ds[slp.idx(t, u, tokens[u])] +=
                     w * q[1] * (term[1] - term[2]);
             }
         }});
  }
  return out;
}

LossBundle mode_loss_terms(const Model& model, const Tensor& features,
                           const std::vector<int>& tokens,
                           const ContextSchedule& schedule,
                           const LossWeights& weights, int distill_shift,
                           const ForwardOpts& opts) {
  PosteriorLattice stream = model.forward(features, tokens, schedule, opts);
  PosteriorLattice full =
      model.forward(features, tokens, full_schedule(), opts);
  Tensor l_stream = transducer_loss(stream, tokens);
  Tensor l_full = transducer_loss(full, tokens);
  Tensor kl = distill_kl(stream, full, tokens, distill_shift);
  LossBundle bundle;
  bundle.total = add(add(scale(l_stream, weights.transducer_stream),
                         scale(l_full, weights.transducer_full)),
                     scale(kl, weights.distill));
  bundle.stream = l_stream.value();
  bundle.full = l_full.value();
  bundle.distill = kl.value();
  return bundle;
}

}  // namespace mmt
