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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mmt/losses.hpp"

namespace mmt {

EditCounts edit_distance(const std::vector<int>& hyp,
                         const std::vector<int>& ref) {
  const int n = static_cast<int>(hyp.size());
  const int m = static_cast<int>(ref.size());
  // d[i][j]: cost of aligning the first i hypothesis tokens with the first
  // j reference tokens; moves are encoded for the backtrace
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  enum Move : char { kMatch, kSub, kIns, kDel, kStart };
  std::vector<std::vector<char>> mv(n + 1, std::vector<char>(m + 1, kStart));
  for (int i = 1; i <= n; ++i) {
    d[i][0] = i;
    mv[i][0] = kIns;
  }
  for (int j = 1; j <= m; ++j) {
    d[0][j] = j;
    mv[0][j] = kDel;
  }
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      const bool match = hyp[i - 1] == ref[j - 1];
      const int diag = d[i - 1][j - 1] + (match ? 0 : 1);
      const int ins = d[i - 1][j] + 1;
      const int del = d[i][j - 1] + 1;
      // tie order: substitution (or match) beats insertion beats deletion
      int best = diag;
      char move = match ? kMatch : kSub;
      if (ins < best) {
        best = ins;
        move = kIns;
      }
      if (del < best) {
        best = del;
        move = kDel;
      }
      d[i][j] = best;
      mv[i][j] = move;
    }

  EditCounts out;
  out.distance = d[n][m];
  int i = n, j = m;
  while (i > 0 || j > 0) {
    switch (mv[i][j]) {
      case kMatch:
        --i;
        --j;
        break;
      case kSub:
        ++out.subs;
        --i;
        --j;
        break;
      case kIns:
        ++out.ins;
        --i;
        break;
      case kDel:
        ++out.dels;
        --j;
        break;
      default:
        throw std::logic_error("edit_distance: broken backtrace");
    }
  }
  return out;
}

std::vector<int> greedy_decode_core(
    int frames,
    const std::function<std::vector<double>(int, const std::vector<int>&)>&
        next_log_probs,
    int max_symbols_per_frame) {
  if (frames < 0 || max_symbols_per_frame < 1)
    throw std::invalid_argument("greedy_decode_core: bad arguments");
  std::vector<int> emitted;
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < max_symbols_per_frame; ++s) {
      const std::vector<double> lp = next_log_probs(t, emitted);
      const int best = static_cast<int>(
          std::max_element(lp.begin(), lp.end()) - lp.begin());
      if (best == kBlankId) break;
      emitted.push_back(best);
    }
  }
  return emitted;
}

std::vector<int> greedy_decode(const Model& model, const Tensor& features,
                               const ContextSchedule& schedule,
                               int max_symbols_per_frame) {
  const Tensor audio = model.encode_audio(features, schedule);
  // label state cache: re-encoded only when an emission extends the prefix
  Tensor label_out = model.encode_labels({});
  std::size_t encoded_len = 0;
  auto next = [&](int t, const std::vector<int>& prefix) {
    if (prefix.size() != encoded_len) {
      label_out = model.encode_labels(prefix);
      encoded_len = prefix.size();
    }
    const Tensor audio_row = embedding_rows(audio, {t});
    const Tensor label_row =
        embedding_rows(label_out, {static_cast<int>(encoded_len)});
    const PosteriorLattice lat = model.joint(audio_row, label_row);
    std::vector<double> lp(lat.vocab);
    for (int k = 0; k < lat.vocab; ++k) lp[k] = lat.log_prob(0, 0, k);
    return lp;
  };
  return greedy_decode_core(audio.dim(0), next, max_symbols_per_frame);
}

SweepRow evaluate_schedule(const Model& model,
                           const std::vector<Utterance>& data,
                           const ContextSchedule& schedule, double frame_ms,
                           int frontend_frames, int max_symbols_per_frame) {
  if (data.empty())
    throw std::invalid_argument("evaluate_schedule: empty data");
  SweepRow row;
  row.schedule = schedule.str();
  const auto ms = latency_ms(schedule, frame_ms, model.config.downsample,
                             frontend_frames);
  row.latency_unbounded = !ms.has_value();
  row.latency_ms = ms.value_or(0.0);

  double loss = 0.0;
  for (const Utterance& utt : data) {
    const std::vector<int> hyp =
        greedy_decode(model, utt.features, schedule, max_symbols_per_frame);
    const EditCounts e = edit_distance(hyp, utt.tokens);
    row.edits.distance += e.distance;
    row.edits.subs += e.subs;
    row.edits.ins += e.ins;
    row.edits.dels += e.dels;
    row.ref_tokens += static_cast<int>(utt.tokens.size());
    loss += transducer_loss(model.forward(utt.features, utt.tokens, schedule),
                            utt.tokens)
                .value();
  }
  row.avg_loss = loss / static_cast<double>(data.size());
  row.token_error_rate =
      row.ref_tokens > 0
          ? row.edits.distance / static_cast<double>(row.ref_tokens)
          : 0.0;
  return row;
}

EvalReport context_sweep(const Model& model,
                         const std::vector<Utterance>& data,
                         const std::vector<ContextSchedule>& schedules,
                         double frame_ms, int frontend_frames,
                         std::uint64_t config_hash, std::uint64_t seed) {
  EvalReport report;
  report.config_hash = config_hash;
  report.seed = seed;
  for (const ContextSchedule& s : schedules)
    report.rows.push_back(
        evaluate_schedule(model, data, s, frame_ms, frontend_frames));
  return report;
}

namespace {

std::string latency_text(const SweepRow& row) {
  if (row.latency_unbounded) return "unbounded";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", row.latency_ms);
  return buf;
}

}  // namespace

void write_report_txt(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for write");
  char line[256];
  std::snprintf(line, sizeof line, "config %016llx seed %llu",
                static_cast<unsigned long long>(report.config_hash),
                static_cast<unsigned long long>(report.seed));
  out << line << "\n";
  std::snprintf(line, sizeof line, "%-20s %12s %10s %10s %5s %5s %5s %7s",
                "schedule", "latency_ms", "token_err", "avg_loss", "sub",
                "ins", "del", "tokens");
  out << line << "\n";
  for (const SweepRow& r : report.rows) {
    std::snprintf(line, sizeof line,
                  "%-20s %12s %10.4f %10.4f %5d %5d %5d %7d",
                  r.schedule.c_str(), latency_text(r).c_str(),
                  r.token_error_rate, r.avg_loss, r.edits.subs, r.edits.ins,
                  r.edits.dels, r.ref_tokens);
    out << line << "\n";
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for write");
  char line[256];
  std::snprintf(line, sizeof line, "# config %016llx seed %llu",
                static_cast<unsigned long long>(report.config_hash),
                static_cast<unsigned long long>(report.seed));
  out << line << "\n";
  out << "schedule,latency_ms,token_error_rate,avg_loss,subs,ins,dels,"
         "ref_tokens\n";
  for (const SweepRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%s,%s,%.6f,%.6f,%d,%d,%d,%d",
                  r.schedule.c_str(), latency_text(r).c_str(),
                  r.token_error_rate, r.avg_loss, r.edits.subs, r.edits.ins,
                  r.edits.dels, r.ref_tokens);
    out << line << "\n";
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace mmt
