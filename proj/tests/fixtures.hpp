// tests/fixtures.hpp

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

// Shared test fixtures: random turn geometries with at most two simultaneous
// speakers, and "oracle decodes" that emit target tokens at ground-truth
// encoder frames.

#ifndef STS_TESTS_FIXTURES_HPP_
#define STS_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "sts/rng.hpp"
#include "sts/segmenter.hpp"
#include "sts/types.hpp"

namespace sts::fixture {

// Random turn layout: sequential gaps and pairwise overlaps, never three
// turns active at once.
inline std::vector<Turn> RandomGeometry(Rng *rng, const Vocab &vocab,
                                        int max_turns = 6) {
  int n = static_cast<int>(rng->UniformInt(1, max_turns));
  std::vector<Turn> turns;
  int free_end = 0;  // earlier of the two channel busy-ends
  int busy_end = 0;  // later of the two
  int prev_start = 0;
  for (int k = 0; k < n; ++k) {
    int len = static_cast<int>(rng->UniformInt(6, 60));
    int start;
    if (k == 0) {
      start = static_cast<int>(rng->UniformInt(0, 5));
    } else if (rng->Uniform() < 0.5 &&
               std::max(free_end, prev_start + 1) < busy_end) {
      // Overlap the currently running turn; the other channel must be free.
      start = static_cast<int>(
          rng->UniformInt(std::max(free_end, prev_start + 1), busy_end - 1));
    } else {
      start = busy_end + static_cast<int>(rng->UniformInt(0, 10));
    }
    Turn t;
    t.speaker = (k % 2 == 0) ? "spkA" : "spkB";
    t.start_frame = start;
    t.end_frame = start + len;
    int m = static_cast<int>(rng->UniformInt(1, 5));
    for (int j = 0; j < m; ++j) {
      t.tokens.push_back(
          static_cast<int>(rng->UniformInt(Vocab::kFirstContent, vocab.size - 1)));
    }
    turns.push_back(t);
    free_end = std::min(busy_end, t.end_frame);
    busy_end = std::max(busy_end, t.end_frame);
    prev_start = start;
  }
  return turns;
}

// Emits every channel's target tokens at their ground-truth encoder frames:
// <sot> at the turn's first frame, content spread inside the turn, <eot> at
// the recorded end frame. A perfect decoder would produce exactly this.
inline std::vector<ChannelHypothesis> OracleHypotheses(
    const std::vector<Turn> &turns, const ChannelTargets &targets) {
  std::vector<ChannelHypothesis> hyps(targets.targets.size());
  for (size_t c = 0; c < hyps.size(); ++c) hyps[c].channel = static_cast<int>(c);
  if (targets.order.empty()) return hyps;

  // Same first/last rule as the target builder: first = earliest temporal
  // position; last = latest end, ties toward the later temporal position.
  int first = targets.order.front().turn_index;
  int last = first;
  for (const TurnRef &ref : targets.order) {
    if (turns[ref.turn_index].end_frame >= turns[last].end_frame) {
      last = ref.turn_index;
    }
  }

  for (const TurnRef &ref : targets.order) {
    const Turn &turn = turns[ref.turn_index];
    ChannelHypothesis &hyp = hyps[ref.channel];
    if (ref.turn_index != first) hyp.emissions.push_back({Vocab::kSot, ref.enc_start});
    for (size_t j = 0; j < turn.tokens.size(); ++j) {
      int frame = std::min(ref.enc_start + static_cast<int>(j), ref.enc_end);
      hyp.emissions.push_back({turn.tokens[j], frame});
    }
    if (ref.turn_index != last) hyp.emissions.push_back({Vocab::kEot, ref.enc_end});
  }
  return hyps;
}

// Oracle decode with random nondecreasing lateness added to every emission
// frame; boundary ordering within each stream is preserved, so the
// latency-bound invariants must keep holding.
inline std::vector<ChannelHypothesis> JitteredHypotheses(
    const std::vector<Turn> &turns, const ChannelTargets &targets, Rng *rng,
    int max_jitter = 5) {
  std::vector<ChannelHypothesis> hyps = OracleHypotheses(turns, targets);
  for (ChannelHypothesis &hyp : hyps) {
    int prev = 0;
    for (Emission &e : hyp.emissions) {
      int jitter = static_cast<int>(rng->UniformInt(0, max_jitter));
      e.frame = std::max(prev, e.frame + jitter);
      prev = e.frame;
    }
  }
  return hyps;
}

}  // namespace sts::fixture

#endif  // STS_TESTS_FIXTURES_HPP_
