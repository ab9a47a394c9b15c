// include/sts/metrics.hpp

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

// Scoring: edit-distance word error rate with optimal reference combination
// over two output channels (ORC), turn-counting accuracy, and boundary-token
// emission latency percentiles.

#ifndef STS_METRICS_HPP_
#define STS_METRICS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "sts/segmenter.hpp"
#include "sts/types.hpp"

namespace sts {

struct AlignmentCounts {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;
  long long ref_len = 0;

  long long Errors() const { return substitutions + deletions + insertions; }
  double Wer() const {
    if (ref_len == 0) return Errors() == 0 ? 0.0 : 1.0;
    return static_cast<double>(Errors()) / static_cast<double>(ref_len);
  }
  void Add(const AlignmentCounts &o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_len += o.ref_len;
  }
};

// Unit-cost edit distance with a deterministic backtrace: ties prefer
// substitution over insertion over deletion.
AlignmentCounts Levenshtein(const std::vector<int> &ref,
                            const std::vector<int> &hyp);

// Optimal reference combination: every reference turn is routed to one of the
// two hypothesis channels; the assignment minimizing the summed edit distance
// against the per-channel concatenations wins.
struct OrcResult {
  AlignmentCounts counts;       // under the best assignment
  std::vector<int> assignment;  // channel per reference turn
};

// Exhaustive search over all 2^K assignments (first-found strict minimum).
OrcResult OrcExhaustive(const std::vector<std::vector<int>> &ref_turns,
                        const std::vector<int> &hyp1,
                        const std::vector<int> &hyp2);

// Polynomial DP over (turns consumed, hyp1 prefix, hyp2 prefix).
OrcResult OrcDynamic(const std::vector<std::vector<int>> &ref_turns,
                     const std::vector<int> &hyp1,
                     const std::vector<int> &hyp2);

// Dispatch: exhaustive up to 20 turns, DP up to the hard cap of 30 turns,
// error beyond.
OrcResult OrcBestAlignment(const std::vector<std::vector<int>> &ref_turns,
                           const std::vector<int> &hyp1,
                           const std::vector<int> &hyp2);

// Turn-counting accuracy accumulator; the >2-turn slice is reported
// separately and is undefined (nullopt) when no such example exists.
struct TurnCountStats {
  long long total = 0;
  long long correct = 0;
  long long total_gt2 = 0;
  long long correct_gt2 = 0;

  void Add(int ref_turns, int hyp_turns) {
    ++total;
    if (ref_turns == hyp_turns) ++correct;
    if (ref_turns > 2) {
      ++total_gt2;
      if (ref_turns == hyp_turns) ++correct_gt2;
    }
  }
  double Accuracy() const {
    return total == 0 ? 0.0
                      : static_cast<double>(correct) / static_cast<double>(total);
  }
  std::optional<double> AccuracyGt2() const {
    if (total_gt2 == 0) return std::nullopt;
    return static_cast<double>(correct_gt2) / static_cast<double>(total_gt2);
  }
};

// Latency sample kinds:
//   EP: <eot> emission frame minus reference turn end (non-last turns)
//   LS: last subword emission frame minus reference turn end (non-last turns)
//   SP: <sot> emission frame minus reference turn start (non-first turns)
//   FS: first subword emission frame minus reference turn start (non-first)
enum class LatencyKind { kEp, kLs, kSp, kFs };

const char *LatencyKindName(LatencyKind kind);

struct LatencySample {
  LatencyKind kind;
  double ms;
};

// Flattens per-channel splits into one list of non-empty turns ordered by
// opening frame (its <sot> frame, else first token frame).
std::vector<TurnHypothesis> MergeTurnHypotheses(
    const std::vector<SplitResult> &splits);

struct LatencyScore {
  bool scored = false;
  std::string skip_reason;  // set when not scored
  std::vector<LatencySample> samples;
};

// Scores one example. Only examples with more than two reference turns and a
// correctly estimated turn count qualify; turns pair 1:1 in temporal order.
// Frames convert to milliseconds at frame_ms per encoder frame.
LatencyScore ScoreLatency(const std::vector<TurnRef> &ref_order,
                          const std::vector<TurnHypothesis> &hyp_turns,
                          double frame_ms);

// Nearest-rank percentile on a sorted ascending sample vector: the element at
// index ceil(p/100 * n) - 1. p must be in (0, 100].
double NearestRankPercentile(const std::vector<double> &sorted, double p);

struct LatencyRow {
  LatencyKind kind;
  long long count = 0;
  bool defined = false;  // false when no samples of this kind exist
  double mean = 0.0;
  std::vector<double> percentiles;  // aligned with the requested p list
};

// One row per latency kind (EP, LS, SP, FS in that order).
std::vector<LatencyRow> PercentileTable(const std::vector<LatencySample> &samples,
                                        const std::vector<int> &percentiles);

}  // namespace sts

#endif  // STS_METRICS_HPP_
