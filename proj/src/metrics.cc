// src/metrics.cc

// Copyright 2026  STS toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "sts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "sts/error.hpp"

namespace sts {

AlignmentCounts Levenshtein(const std::vector<int> &ref,
                            const std::vector<int> &hyp) {
  const int m = static_cast<int>(ref.size());
  const int n = static_cast<int>(hyp.size());
  std::vector<int> dp(static_cast<size_t>(m + 1) * (n + 1), 0);
  auto at = [&](int i, int j) -> int & { return dp[i * (n + 1) + j]; };

  for (int i = 0; i <= m; ++i) at(i, 0) = i;
  for (int j = 0; j <= n; ++j) at(0, j) = j;
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= n; ++j) {
      int sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int ins = at(i, j - 1) + 1;
      int del = at(i - 1, j) + 1;
      at(i, j) = std::min({sub, ins, del});
    }
  }

  AlignmentCounts counts;
  counts.ref_len = m;
  // Backtrace; ties prefer substitution, then insertion, then deletion.
  int i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++counts.insertions;
      --j;
    } else {
      ++counts.deletions;
      --i;
    }
  }
  return counts;
}

namespace {

std::vector<int> Concat(const std::vector<std::vector<int>> &ref_turns,
                        uint32_t mask, int channel) {
  std::vector<int> out;
  for (size_t k = 0; k < ref_turns.size(); ++k) {
    if (static_cast<int>((mask >> k) & 1u) == channel) {
      out.insert(out.end(), ref_turns[k].begin(), ref_turns[k].end());
    }
  }
  return out;
}

// Seeded edit-distance row: given seed[i] = cost of any alignment consuming
// hyp[0:i], returns cost[i'] = min_i seed[i] + editdist(segment, hyp[i:i']),
// with origin[i'] = the argmin split point i.
void SeededRow(const std::vector<int> &segment, const std::vector<int> &hyp,
               const std::vector<int> &seed, std::vector<int> *cost,
               std::vector<int> *origin) {
  const int n = static_cast<int>(hyp.size());
  std::vector<int> cur = seed, org(n + 1), nxt(n + 1), norg(n + 1);
  for (int i = 0; i <= n; ++i) org[i] = i;
  for (int tok : segment) {
    nxt[0] = cur[0] + 1;  // delete tok against the empty segment
    norg[0] = org[0];
    for (int i = 1; i <= n; ++i) {
      int best = cur[i - 1] + (tok == hyp[i - 1] ? 0 : 1);  // sub/match
      int borg = org[i - 1];
      if (cur[i] + 1 < best) {  // deletion of tok
        best = cur[i] + 1;
        borg = org[i];
      }
      if (nxt[i - 1] + 1 < best) {  // insertion of hyp[i-1]
        best = nxt[i - 1] + 1;
        borg = norg[i - 1];
      }
      nxt[i] = best;
      norg[i] = borg;
    }
    cur.swap(nxt);
    org.swap(norg);
  }
  *cost = cur;
  *origin = org;
}

AlignmentCounts CountsForAssignment(
    const std::vector<std::vector<int>> &ref_turns,
    const std::vector<int> &assignment, const std::vector<int> &hyp1,
    const std::vector<int> &hyp2) {
  std::vector<int> ref1, ref2;
  for (size_t k = 0; k < ref_turns.size(); ++k) {
    auto &dst = (assignment[k] == 0) ? ref1 : ref2;
    dst.insert(dst.end(), ref_turns[k].begin(), ref_turns[k].end());
  }
  AlignmentCounts counts = Levenshtein(ref1, hyp1);
  counts.Add(Levenshtein(ref2, hyp2));
  return counts;
}

}  // namespace

OrcResult OrcExhaustive(const std::vector<std::vector<int>> &ref_turns,
                        const std::vector<int> &hyp1,
                        const std::vector<int> &hyp2) {
  const size_t K = ref_turns.size();
  Require(K <= 20, ErrorCode::kValue,
          "exhaustive reference combination capped at 20 turns");
  long long best = -1;
  uint32_t best_mask = 0;
  for (uint32_t mask = 0; mask < (1u << K); ++mask) {
    AlignmentCounts c = Levenshtein(Concat(ref_turns, mask, 0), hyp1);
    c.Add(Levenshtein(Concat(ref_turns, mask, 1), hyp2));
    if (best < 0 || c.Errors() < best) {
      best = c.Errors();
      best_mask = mask;
    }
  }
  OrcResult res;
  res.assignment.resize(K);
  for (size_t k = 0; k < K; ++k) res.assignment[k] = (best_mask >> k) & 1u;
  res.counts = CountsForAssignment(ref_turns, res.assignment, hyp1, hyp2);
  return res;
}

OrcResult OrcDynamic(const std::vector<std::vector<int>> &ref_turns,
                     const std::vector<int> &hyp1,
                     const std::vector<int> &hyp2) {
  const int K = static_cast<int>(ref_turns.size());
  const int n1 = static_cast<int>(hyp1.size());
  const int n2 = static_cast<int>(hyp2.size());
  const size_t cells = static_cast<size_t>(n1 + 1) * (n2 + 1);
  auto cell = [&](int i, int j) { return static_cast<size_t>(i) * (n2 + 1) + j; };

  // table[k](i,j): min cost of routing the first k turns while consuming
  // hyp1[0:i] and hyp2[0:j]; leftover hyp prefixes count as insertions.
  std::vector<std::vector<int>> table(K + 1, std::vector<int>(cells));
  std::vector<std::vector<int8_t>> choice(K, std::vector<int8_t>(cells));
  std::vector<std::vector<int>> from(K, std::vector<int>(cells));

  for (int i = 0; i <= n1; ++i) {
    for (int j = 0; j <= n2; ++j) table[0][cell(i, j)] = i + j;
  }

  std::vector<int> seed, cost, origin;
  for (int k = 0; k < K; ++k) {
    const std::vector<int> &seg = ref_turns[k];
    std::vector<int> &out = table[k + 1];
    std::fill(out.begin(), out.end(), -1);

    // Route turn k to channel 1: seeded rows along i for each fixed j.
    seed.resize(n1 + 1);
    for (int j = 0; j <= n2; ++j) {
      for (int i = 0; i <= n1; ++i) seed[i] = table[k][cell(i, j)];
      SeededRow(seg, hyp1, seed, &cost, &origin);
      for (int i = 0; i <= n1; ++i) {
        size_t c = cell(i, j);
        if (out[c] < 0 || cost[i] < out[c]) {
          out[c] = cost[i];
          choice[k][c] = 0;
          from[k][c] = origin[i];
        }
      }
    }
    // Route turn k to channel 2: seeded rows along j for each fixed i.
    seed.resize(n2 + 1);
    for (int i = 0; i <= n1; ++i) {
      for (int j = 0; j <= n2; ++j) seed[j] = table[k][cell(i, j)];
      SeededRow(seg, hyp2, seed, &cost, &origin);
      for (int j = 0; j <= n2; ++j) {
        size_t c = cell(i, j);
        if (cost[j] < out[c]) {
          out[c] = cost[j];
          choice[k][c] = 1;
          from[k][c] = origin[j];
        }
      }
    }
  }

  OrcResult res;
  res.assignment.assign(K, 0);
  int i = n1, j = n2;
  for (int k = K - 1; k >= 0; --k) {
    size_t c = cell(i, j);
    res.assignment[k] = choice[k][c];
    if (choice[k][c] == 0) {
      i = from[k][c];
    } else {
      j = from[k][c];
    }
  }
  res.counts = CountsForAssignment(ref_turns, res.assignment, hyp1, hyp2);
  Require(res.counts.Errors() == table[K][cell(n1, n2)], ErrorCode::kNumeric,
          "reference-combination DP backtrace is inconsistent");
  return res;
}

OrcResult OrcBestAlignment(const std::vector<std::vector<int>> &ref_turns,
                           const std::vector<int> &hyp1,
                           const std::vector<int> &hyp2) {
  Require(ref_turns.size() <= 30, ErrorCode::kValue,
          "reference combination capped at 30 turns per example");
  if (ref_turns.size() <= 20) return OrcExhaustive(ref_turns, hyp1, hyp2);
  return OrcDynamic(ref_turns, hyp1, hyp2);
}

const char *LatencyKindName(LatencyKind kind) {
  switch (kind) {
    case LatencyKind::kEp: return "EP";
    case LatencyKind::kLs: return "LS";
    case LatencyKind::kSp: return "SP";
    case LatencyKind::kFs: return "FS";
  }
  return "?";
}

std::vector<TurnHypothesis> MergeTurnHypotheses(
    const std::vector<SplitResult> &splits) {
  std::vector<TurnHypothesis> merged;
  for (const SplitResult &s : splits) {
    for (const TurnHypothesis &t : s.turns) {
      if (!t.Empty()) merged.push_back(t);
    }
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const TurnHypothesis &a, const TurnHypothesis &b) {
                     return a.OpeningFrame().value() < b.OpeningFrame().value();
                   });
  return merged;
}

LatencyScore ScoreLatency(const std::vector<TurnRef> &ref_order,
                          const std::vector<TurnHypothesis> &hyp_turns,
                          double frame_ms) {
  Require(frame_ms > 0.0, ErrorCode::kValue, "frame_ms must be positive");
  LatencyScore score;
  const int K = static_cast<int>(ref_order.size());
  if (K <= 2) {
    score.skip_reason = "needs more than two reference turns";
    return score;
  }
  if (static_cast<int>(hyp_turns.size()) != K) {
    score.skip_reason = "turn count mismatch";
    return score;
  }

  score.scored = true;
  for (int k = 0; k < K; ++k) {
    const TurnRef &ref = ref_order[k];
    const TurnHypothesis &hyp = hyp_turns[k];
    if (k + 1 < K) {  // the last turn never carries an <eot>
      if (hyp.eot_frame) {
        score.samples.push_back(
            {LatencyKind::kEp, (*hyp.eot_frame - ref.enc_end) * frame_ms});
      }
      if (hyp.last_token_frame) {
        score.samples.push_back(
            {LatencyKind::kLs,
             (*hyp.last_token_frame - ref.enc_end) * frame_ms});
      }
    }
    if (k > 0) {  // the first turn never carries a <sot>
      if (hyp.sot_frame) {
        score.samples.push_back(
            {LatencyKind::kSp, (*hyp.sot_frame - ref.enc_start) * frame_ms});
      }
      if (hyp.first_token_frame) {
        score.samples.push_back(
            {LatencyKind::kFs,
             (*hyp.first_token_frame - ref.enc_start) * frame_ms});
      }
    }
  }
  return score;
}

double NearestRankPercentile(const std::vector<double> &sorted, double p) {
  Require(!sorted.empty(), ErrorCode::kValue,
          "percentile of an empty sample set is undefined");
  Require(p > 0.0 && p <= 100.0, ErrorCode::kValue,
          "percentile must be in (0, 100]");
  size_t rank = static_cast<size_t>(
      std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  if (rank == 0) rank = 1;
  return sorted[rank - 1];
}

std::vector<LatencyRow> PercentileTable(const std::vector<LatencySample> &samples,
                                        const std::vector<int> &percentiles) {
  std::vector<LatencyRow> rows;
  for (LatencyKind kind : {LatencyKind::kEp, LatencyKind::kLs, LatencyKind::kSp,
                           LatencyKind::kFs}) {
    LatencyRow row;
    row.kind = kind;
    std::vector<double> values;
    for (const LatencySample &s : samples) {
      if (s.kind == kind) values.push_back(s.ms);
    }
    row.count = static_cast<long long>(values.size());
    if (!values.empty()) {
      row.defined = true;
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean = sum / static_cast<double>(values.size());
      std::sort(values.begin(), values.end());
      for (int p : percentiles) {
        row.percentiles.push_back(NearestRankPercentile(values, p));
      }
    } else {
      row.percentiles.assign(percentiles.size(), 0.0);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace sts
