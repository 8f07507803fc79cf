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
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mmt/rng.hpp"

using namespace mmt;

namespace {

PosteriorLattice lattice_of(int T, int U1, int V, Tensor log_probs) {
  PosteriorLattice lat;
  lat.frames = T;
  lat.rows = U1;
  lat.vocab = V;
  lat.log_probs = std::move(log_probs);
  return lat;
}

PosteriorLattice random_lattice(int T, int U1, int V, Rng& rng) {
  Tensor logits = Tensor::zeros({T * U1, V});
  for (double& x : logits.data()) x = rng.gaussian(0.0, 1.5);
  return lattice_of(T, U1, V, log_softmax(logits));
}

std::vector<int> random_tokens(int U, int V, Rng& rng) {
  std::vector<int> toks(U);
  for (int& t : toks) t = rng.uniform_int(1, V - 1);
  return toks;
}

}  // namespace

TEST_CASE("two-frame one-label loss matches the two-path hand computation") {
  // rows in node order (0,0), (0,1), (1,0), (1,1); vocab {blank, 1}
  Tensor lp = Tensor::from({4, 2}, {std::log(0.6), std::log(0.4),   //
                                    std::log(0.7), std::log(0.3),   //
                                    std::log(0.5), std::log(0.5),   //
                                    std::log(0.8), std::log(0.2)});
  PosteriorLattice lat = lattice_of(2, 2, 2, lp);
  // blank-label path: 0.6 * 0.5 * 0.8; label-blank path: 0.4 * 0.7 * 0.8
  const double expect = -std::log(0.6 * 0.5 * 0.8 + 0.4 * 0.7 * 0.8);
  CHECK(transducer_loss(lat, {1}).value() ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(brute_force_transducer_loss(lat, {1}) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dynamic program agrees with path enumeration on random lattices") {
  Rng rng(313);
  for (int i = 0; i < 200; ++i) {
    const int T = rng.uniform_int(1, 6);
    const int U = rng.uniform_int(0, 4);
    const int V = rng.uniform_int(2, 5);
    PosteriorLattice lat = random_lattice(T, U + 1, V, rng);
    const std::vector<int> toks = random_tokens(U, V, rng);
    const double dp = transducer_loss(lat, toks).value();
    const double brute = brute_force_transducer_loss(lat, toks);
    CHECK(std::abs(dp - brute) <= 1e-9);
  }
}

TEST_CASE("path enumeration refuses oversized lattices with a size report") {
  Rng rng(5);
  PosteriorLattice lat = random_lattice(40, 31, 3, rng);
  CHECK_THROWS_WITH_AS(
      brute_force_transducer_loss(lat, random_tokens(30, 3, rng)),
      doctest::Contains("paths, above the cap"), std::runtime_error);
}

TEST_CASE("alignment occupancies sum to the path length") {
  // every alignment makes exactly T + U moves, so the occupancy-based
  // gradient must sum to -(T + U) times the upstream weight
  Rng rng(99);
  const int T = 5, U = 3, V = 4;
  Tensor logits = Tensor::zeros({T * (U + 1), V}, true);
  for (double& x : logits.data()) x = rng.gaussian(0.0, 1.0);
  const std::vector<int> toks = random_tokens(U, V, rng);

  Tape tape;
  Tape::Scope scope(tape);
  PosteriorLattice lat = lattice_of(T, U + 1, V, log_softmax(logits));
  // detach: check the custom op's own gradient, not log_softmax's
  Tensor lp_plain = Tensor::from({T * (U + 1), V}, lat.log_probs.data());
  lp_plain.set_requires_grad(true);
  PosteriorLattice lat2 = lattice_of(T, U + 1, V, lp_plain);
  backward(scale(transducer_loss(lat2, toks), 2.5));
  double total = 0.0;
  for (double g : lp_plain.grad()) total += g;
  CHECK(total == doctest::Approx(-2.5 * (T + U)).epsilon(1e-9));
}

TEST_CASE("transducer loss gradient matches finite differences") {
  Rng rng(17);
  const int T = 3, U = 2, V = 3;
  Tensor logits = Tensor::zeros({T * (U + 1), V}, true);
  for (double& x : logits.data()) x = rng.gaussian(0.0, 1.0);
  const std::vector<int> toks{2, 1};

  auto make_loss = [&] {
    return transducer_loss(lattice_of(T, U + 1, V, log_softmax(logits)), toks);
  };
  Rng pick(3);
  FdReport rep = finite_difference_check(make_loss, {&logits}, 1e-6, 27, pick);
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("merged posteriors expose blank, next label, and remainder") {
  // single frame, one reference token (id 1), vocab 3
  Tensor lp = Tensor::from(
      {2, 3}, {std::log(0.5), std::log(0.3), std::log(0.2),   // node (0,0)
               std::log(0.6), std::log(0.1), std::log(0.3)}); // node (0,1)
  Tensor m = merge_posteriors(lattice_of(1, 2, 3, lp), {1});
  CHECK(m.at({0, 0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.at({0, 1}) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m.at({0, 2}) == doctest::Approx(0.2).epsilon(1e-12));
  // bottom row: no next label, its slot is empty and mass moves to the rest
  CHECK(m.at({1, 0}) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.at({1, 1}) == 0.0);
  CHECK(m.at({1, 2}) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("distillation value on a hand-built pair of nodes") {
  // student puts all mass on blank at both nodes; teacher splits
  // (0.5, 0.25, 0.25) at (0,0) and all-blank at (0,1)
  Tensor slp = Tensor::from({2, 2}, {0.0, -1e9,   //
                                     0.0, -1e9});
  Tensor tlp = Tensor::from({2, 2}, {std::log(0.5), std::log(0.25),   //
                                     0.0, -1e9});
  PosteriorLattice s = lattice_of(1, 2, 2, slp);
  PosteriorLattice t = lattice_of(1, 2, 2, tlp);
  // node (0,0) contributes ln 2, node (0,1) contributes 0; mean over 2 nodes
  CHECK(distill_kl(s, t, {1}).value() ==
        doctest::Approx(std::log(2.0) / 2).epsilon(1e-12));
}

TEST_CASE("distillation of a lattice against itself is exactly zero") {
  Rng rng(23);
  PosteriorLattice lat = random_lattice(4, 3, 4, rng);
  CHECK(distill_kl(lat, lat, {2, 3}).value() == 0.0);
}

TEST_CASE("a student whose lattice is the teacher delayed by s has zero loss") {
  Rng rng(29);
  const int T = 5, U1 = 3, V = 4;
  PosteriorLattice teacher = random_lattice(T, U1, V, rng);
  Tensor slp = Tensor::zeros({T * U1, V});
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U1; ++u)
      for (int k = 0; k < V; ++k)
        slp.data()[(static_cast<std::size_t>(t) * U1 + u) * V + k] =
            teacher.log_probs.at({(t >= 2 ? t - 2 : 0) * U1 + u, k});
  PosteriorLattice student = lattice_of(T, U1, V, slp);
  CHECK(distill_kl(student, teacher, {1, 3}, 2).value() == 0.0);
}

TEST_CASE("distillation gradient matches finite differences, student only") {
  Rng rng(31);
  const int T = 4, U = 2, V = 4;
  Tensor s_logits = Tensor::zeros({T * (U + 1), V}, true);
  Tensor t_logits = Tensor::zeros({T * (U + 1), V}, true);
  for (double& x : s_logits.data()) x = rng.gaussian(0.0, 1.0);
  for (double& x : t_logits.data()) x = rng.gaussian(0.0, 1.0);
  const std::vector<int> toks{1, 2};

  for (int shift : {0, 1}) {
    CAPTURE(shift);
    auto make_loss = [&] {
      PosteriorLattice s = lattice_of(T, U + 1, V, log_softmax(s_logits));
      PosteriorLattice t = lattice_of(T, U + 1, V, log_softmax(t_logits));
      return distill_kl(s, t, toks, shift);
    };
    Rng pick(7);
    FdReport rep =
        finite_difference_check(make_loss, {&s_logits}, 1e-6, 48, pick);
    CAPTURE(rep.worst);
    CHECK(rep.max_rel_err < 1e-5);
  }

  // the teacher is a constant: its logits collect exactly zero gradient
  Tape tape;
  Tape::Scope scope(tape);
  PosteriorLattice s = lattice_of(T, U + 1, V, log_softmax(s_logits));
  PosteriorLattice t = lattice_of(T, U + 1, V, log_softmax(t_logits));
  backward(distill_kl(s, t, toks, 0));
  bool student_has_grad = false;
  for (double g : s_logits.grad()) student_has_grad |= (g != 0.0);
  CHECK(student_has_grad);
  // the teacher never even gets a gradient buffer
  CHECK_FALSE(t_logits.has_grad());
}

TEST_CASE("a full-context draw degenerates to two identical passes") {
  ModelConfig cfg;
  cfg.layers_audio = 2;
  cfg.layers_label = 1;
  cfg.dim = 8;
  cfg.dim_ff = 12;
  cfg.heads = 2;
  cfg.dim_joint = 6;
  cfg.vocab = 4;
  cfg.features = 3;
  cfg.downsample = 2;
  Rng rng(41);
  Model m = Model::init(cfg, rng);
  Tensor feats = Tensor::zeros({8, 3});
  for (double& x : feats.data()) x = rng.gaussian(0.0, 1.0);

  LossBundle b = mode_loss_terms(m, feats, {1, 2}, full_schedule());
  CHECK(b.stream == b.full);  // bitwise: the same deterministic computation
  CHECK(b.distill == 0.0);
  CHECK(b.total.value() == doctest::Approx(b.stream + b.full).epsilon(1e-15));
}

TEST_CASE("loss weights scale each term") {
  ModelConfig cfg;
  cfg.layers_audio = 1;
  cfg.layers_label = 1;
  cfg.dim = 8;
  cfg.dim_ff = 12;
  cfg.heads = 2;
  cfg.dim_joint = 6;
  cfg.vocab = 4;
  cfg.features = 3;
  cfg.downsample = 2;
  Rng rng(43);
  Model m = Model::init(cfg, rng);
  Tensor feats = Tensor::zeros({8, 3});
  for (double& x : feats.data()) x = rng.gaussian(0.0, 1.0);

  LossWeights w{0.5, 2.0, 3.0};
  LossBundle b = mode_loss_terms(m, feats, {3}, fixed_schedule(0, 1), w);
  CHECK(b.total.value() ==
        doctest::Approx(0.5 * b.stream + 2.0 * b.full + 3.0 * b.distill)
            .epsilon(1e-12));
  CHECK(b.distill > 0.0);  // streaming lattice differs from full context
  CHECK(b.stream != b.full);

  // and gradients reach the parameters
  Tape tape;
  Tape::Scope scope(tape);
  LossBundle taped = mode_loss_terms(m, feats, {3}, fixed_schedule(0, 1), w);
  backward(taped.total);
  double frontend_grad = 0.0;
  for (double g : m.params.at("frontend.proj.weight").grad())
    frontend_grad += std::abs(g);
  CHECK(frontend_grad > 0.0);
  for (auto& [name, t] : m.params) t.zero_grad();
}

TEST_CASE("loss input validation") {
  Rng rng(3);
  PosteriorLattice lat = random_lattice(3, 2, 3, rng);
  CHECK_THROWS_AS(transducer_loss(lat, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(transducer_loss(lat, {0}), std::out_of_range);
  CHECK_THROWS_AS(transducer_loss(lat, {3}), std::out_of_range);

  PosteriorLattice other = random_lattice(4, 2, 3, rng);
  CHECK_THROWS_AS(distill_kl(lat, other, {1}), std::invalid_argument);
  CHECK_THROWS_AS(distill_kl(lat, lat, {1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(distill_kl(lat, lat, {1}, -1), std::invalid_argument);
}
