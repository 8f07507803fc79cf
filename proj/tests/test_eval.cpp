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

#include "mmt/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mmt/rng.hpp"

using namespace mmt;

TEST_CASE("edit distance with typed counts") {
  CHECK(edit_distance({1, 2, 3}, {1, 2, 3}).distance == 0);

  EditCounts sub = edit_distance({1, 9, 3}, {1, 2, 3});
  CHECK(sub.distance == 1);
  CHECK(sub.subs == 1);
  CHECK(sub.ins == 0);
  CHECK(sub.dels == 0);

  EditCounts ins = edit_distance({1, 2, 3}, {1, 3});  // extra hyp token
  CHECK(ins.distance == 1);
  CHECK(ins.ins == 1);
  CHECK(ins.subs == 0);

  EditCounts del = edit_distance({1, 3}, {1, 2, 3});  // missing ref token
  CHECK(del.distance == 1);
  CHECK(del.dels == 1);

  CHECK(edit_distance({}, {1, 2}).dels == 2);
  CHECK(edit_distance({1, 2}, {}).ins == 2);
  CHECK(edit_distance({}, {}).distance == 0);

  // equal-cost alignments resolve deterministically, substitution first
  EditCounts tie = edit_distance({1, 2}, {3});
  CHECK(tie.distance == 2);
  CHECK(tie.subs == 1);
  CHECK(tie.ins == 1);
  CHECK(tie.dels == 0);
}

TEST_CASE("greedy rule emits until blank wins, bounded per frame") {
  // frame 0 wants to emit label 2 once, then blank; frame 1 is all blank
  auto once = [](int t, const std::vector<int>& prefix) {
    if (t == 0 && prefix.empty()) return std::vector<double>{-3.0, -1.0, -0.1};
    return std::vector<double>{-0.1, -2.0, -3.0};
  };
  CHECK(greedy_decode_core(2, once) == std::vector<int>{2});

  // a distribution that always prefers a label hits the per-frame cap
  auto always = [](int, const std::vector<int>&) {
    return std::vector<double>{-2.0, -0.1};
  };
  CHECK(greedy_decode_core(3, always, 4) ==
        std::vector<int>(12, 1));  // 3 frames x 4 emissions

  // prefix-dependent: emit 1 then 2 on the first frame
  auto two = [](int t, const std::vector<int>& prefix) {
    if (t == 0 && prefix.empty()) return std::vector<double>{-2.0, -0.1, -3.0};
    if (t == 0 && prefix.size() == 1)
      return std::vector<double>{-2.0, -3.0, -0.1};
    return std::vector<double>{-0.1, -2.0, -3.0};
  };
  CHECK(greedy_decode_core(2, two) == std::vector<int>{1, 2});

  CHECK(greedy_decode_core(0, always).empty());
  CHECK_THROWS_AS(greedy_decode_core(1, always, 0), std::invalid_argument);
}

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.layers_audio = 2;
  cfg.layers_label = 1;
  cfg.dim = 8;
  cfg.dim_ff = 12;
  cfg.heads = 2;
  cfg.dim_joint = 6;
  cfg.vocab = 4;
  cfg.features = 4;
  cfg.downsample = 2;
  return cfg;
}

TaskSpec tiny_task() {
  TaskSpec spec;
  spec.features = 4;
  spec.vocab = 4;
  spec.lookahead_k = 2;
  spec.frames_per_token = 4;
  spec.min_tokens = 2;
  spec.max_tokens = 3;
  return spec;
}

}  // namespace

TEST_CASE("an untrained all-zero model decodes to silence") {
  ModelConfig cfg = tiny_model();
  Model m(cfg);  // all parameters zero: blank ties and wins at every frame
  Rng rng(1);
  Tensor feats = Tensor::zeros({8, 4});
  for (double& x : feats.data()) x = rng.gaussian(0.0, 1.0);
  CHECK(greedy_decode(m, feats, full_schedule()).empty());
}

TEST_CASE("decoding leaves the parameters untouched") {
  Rng rng(11);
  Model m = Model::init(tiny_model(), rng);
  std::vector<double> before;
  for (const auto& [name, t] : m.params)
    before.insert(before.end(), t.data().begin(), t.data().end());

  Utterance u = gen_utterance(tiny_task(), 4, "u");
  (void)greedy_decode(m, u.features, fixed_schedule(1, 2));

  std::vector<double> after;
  for (const auto& [name, t] : m.params)
    after.insert(after.end(), t.data().begin(), t.data().end());
  CHECK(before == after);
}

TEST_CASE("context sweep reports one row per schedule with latency") {
  Rng rng(21);
  Model m = Model::init(tiny_model(), rng);
  std::vector<Utterance> data = gen_split(tiny_task(), 31, 3, "ev");

  std::vector<ContextSchedule> schedules{
      fixed_schedule(0, 2), fixed_schedule(2, 2), full_schedule()};
  EvalReport rep = context_sweep(m, data, schedules, 10.0, 0, 0x1234);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.config_hash == 0x1234);

  CHECK(rep.rows[0].schedule == "0-0");
  CHECK_FALSE(rep.rows[0].latency_unbounded);
  CHECK(rep.rows[0].latency_ms == 0.0);
  CHECK(rep.rows[1].latency_ms == 80.0);  // 4 frames * 2x * 10 ms
  CHECK(rep.rows[2].latency_unbounded);

  int total_ref = 0;
  for (const Utterance& u : data) total_ref += int(u.tokens.size());
  for (const SweepRow& r : rep.rows) {
    CHECK(r.ref_tokens == total_ref);
    CHECK(r.token_error_rate >= 0.0);
    CHECK(std::isfinite(r.avg_loss));
  }
}

TEST_CASE("report writers embed the config hash") {
  Rng rng(22);
  Model m = Model::init(tiny_model(), rng);
  std::vector<Utterance> data = gen_split(tiny_task(), 32, 2, "rp");
  EvalReport rep = context_sweep(m, data, {fixed_schedule(1, 2)}, 10.0, 0,
                                 0xDEADBEEFull);

  write_report_txt(rep, "rep_test.txt");
  write_report_csv(rep, "rep_test.csv");
  std::ifstream txt("rep_test.txt");
  std::stringstream txt_body;
  txt_body << txt.rdbuf();
  CHECK(txt_body.str().find("00000000deadbeef") != std::string::npos);
  CHECK(txt_body.str().find("1-1") != std::string::npos);

  std::ifstream csv("rep_test.csv");
  std::string header_comment, header;
  std::getline(csv, header_comment);
  std::getline(csv, header);
  CHECK(header_comment.find("00000000deadbeef") != std::string::npos);
  CHECK(header ==
        "schedule,latency_ms,token_error_rate,avg_loss,subs,ins,dels,"
        "ref_tokens");
  std::string row;
  std::getline(csv, row);
  CHECK(row.find("1-1,40.0,") == 0);  // 2 future frames x 2x downsample
  std::remove("rep_test.txt");
  std::remove("rep_test.csv");
}
