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
// Training objectives over the [T, U+1, V] posterior lattice: the
// alignment-marginalising transducer loss (forward-backward in log space),
// a path-enumeration oracle for it, and a posterior-matching distillation
// term between two lattices.

#ifndef MMT_LOSSES_HPP_
#define MMT_LOSSES_HPP_

#include <cstddef>
#include <vector>

#include "mmt/masking.hpp"
#include "mmt/model.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

// Negative log probability of `tokens` under the lattice, marginalised over
// all blank/label alignments.  Differentiable through lat.log_probs; the
// backward pass is the standard forward-backward occupancy computation.
Tensor transducer_loss(const PosteriorLattice& lat,
                       const std::vector<int>& tokens);

// Same value by explicit enumeration of all C(T-1+U, U) alignment paths.
// Exists as an independent oracle for tests; throws std::runtime_error with
// the path count if it exceeds `max_paths`.
double brute_force_transducer_loss(const PosteriorLattice& lat,
                                   const std::vector<int>& tokens,
                                   double max_paths = 1e6);

// Per-node 3-way summary of the lattice in probability space:
// column 0 = P(blank), column 1 = P(next reference label), column 2 = rest.
// The bottom row (u = U) has no next label, so column 1 is zero there.
// Plain values, not differentiable; used for reporting and tests.
Tensor merge_posteriors(const PosteriorLattice& lat,
                        const std::vector<int>& tokens);

// Mean KL divergence from the student's merged 3-way posterior to the
// teacher's, with the student delayed by `shift` frames: student node (t, u)
// is matched to teacher node (t - shift, u) for t in [shift, T).  Gradients
// flow into the student lattice only; the teacher is treated as constant.
// Probabilities are clamped to 1e-12 inside the logs.
Tensor distill_kl(const PosteriorLattice& student,
                  const PosteriorLattice& teacher,
                  const std::vector<int>& tokens, int shift = 0);

struct LossWeights {
  double transducer_stream = 1.0;
  double transducer_full = 1.0;
  double distill = 1.0;
};

// One utterance's combined objective plus the detached per-term values for
// logging.
struct LossBundle {
  Tensor total;           // scalar, differentiable
  double stream = 0.0;    // transducer loss under the sampled schedule
  double full = 0.0;      // transducer loss under full context
  double distill = 0.0;   // posterior-matching term
};

// Runs the model twice on one utterance -- once under `schedule`, once with
// full context -- and combines:
//   total = w_s * L_trans(stream) + w_f * L_trans(full) + w_d * KL
// The full-context lattice doubles as the (gradient-stopped) teacher for the
// KL term.  Every training mode routes through here; a full-context
// `schedule` degenerates to two identical passes and a zero KL.
LossBundle mode_loss_terms(const Model& model, const Tensor& features,
                           const std::vector<int>& tokens,
                           const ContextSchedule& schedule,
                           const LossWeights& weights = {},
                           int distill_shift = 0,
                           const ForwardOpts& opts = {});

}  // namespace mmt

#endif  // MMT_LOSSES_HPP_
