// tests/test_segmenter.cc

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

#include "sts/segmenter.hpp"

#include "doctest.h"
#include "fixtures.hpp"
#include "sts/rng.hpp"

using namespace sts;

namespace {

Turn MakeTurn(const std::string &spk, int start, int end,
              std::vector<int> tokens) {
  Turn t;
  t.speaker = spk;
  t.start_frame = start;
  t.end_frame = end;
  t.tokens = std::move(tokens);
  return t;
}

const Vocab kVocab{16};

}  // namespace

TEST_CASE("disjoint turns all land on channel 1") {
  std::vector<Turn> turns = {MakeTurn("a", 0, 10, {3}),
                             MakeTurn("b", 12, 20, {4}),
                             MakeTurn("a", 25, 40, {5})};
  CHECK(AssignChannels(turns) == std::vector<int>{0, 0, 0});
}

TEST_CASE("overlapping pair splits across channels") {
  std::vector<Turn> turns = {MakeTurn("a", 0, 100, {3}),
                             MakeTurn("b", 50, 150, {4})};
  CHECK(AssignChannels(turns) == std::vector<int>{0, 1});
}

TEST_CASE("five-turn zigzag reuses the lowest free channel") {
  // A(0-100) B(50-150) C(160-200) D(180-220) E(230-260):
  // A,C,E on channel 1; B,D on channel 2.
  std::vector<Turn> turns = {
      MakeTurn("a", 0, 100, {3}), MakeTurn("b", 50, 150, {4}),
      MakeTurn("a", 160, 200, {5}), MakeTurn("b", 180, 220, {6}),
      MakeTurn("a", 230, 260, {7})};
  CHECK(AssignChannels(turns) == std::vector<int>{0, 1, 0, 1, 0});
}

TEST_CASE("three simultaneous turns are rejected") {
  std::vector<Turn> turns = {MakeTurn("a", 0, 100, {3}),
                             MakeTurn("b", 10, 90, {4}),
                             MakeTurn("c", 20, 80, {5})};
  CHECK_THROWS_AS(AssignChannels(turns), Error);
}

TEST_CASE("unsorted input gets assigned in temporal order") {
  std::vector<Turn> turns = {MakeTurn("b", 50, 150, {4}),
                             MakeTurn("a", 0, 100, {3})};
  CHECK(AssignChannels(turns) == std::vector<int>{1, 0});
}

TEST_CASE("single turn builds bare content targets") {
  std::vector<Turn> turns = {MakeTurn("a", 0, 10, {5, 6, 7})};
  ChannelTargets ct = BuildTargets(turns, kVocab);

  CHECK(ct.targets[0].tokens == std::vector<int>{5, 6, 7});
  CHECK(ct.targets[0].eot_marks.empty());
  CHECK(ct.targets[1].tokens.empty());
  CHECK(ct.num_encoder_frames == 4);  // ceil(10/3)
  // Active on encoder frames 0..3.
  for (int f = 0; f < 4; ++f) CHECK(ct.masks[0][f]);
  for (int f = 0; f < 4; ++f) CHECK(!ct.masks[1][f]);
}

TEST_CASE("two sequential turns share channel 1 with one boundary pair") {
  std::vector<Turn> turns = {MakeTurn("a", 0, 10, {5, 6}),
                             MakeTurn("b", 12, 24, {7})};
  ChannelTargets ct = BuildTargets(turns, kVocab);

  // [c c <eot>] then [<sot> c]; first turn omits <sot>, last omits <eot>.
  CHECK(ct.targets[0].tokens ==
        std::vector<int>{5, 6, Vocab::kEot, Vocab::kSot, 7});
  REQUIRE(ct.targets[0].eot_marks.size() == 1);
  CHECK(ct.targets[0].eot_marks[0].position == 2);
  // Turn ends at raw frame 10 -> encoder frame ceil(10/3)-1 = 3.
  CHECK(ct.targets[0].eot_marks[0].end_frame == 3);
  CHECK(ct.targets[1].tokens.empty());
}

TEST_CASE("overlapping turns produce per-channel boundary tokens") {
  std::vector<Turn> turns = {MakeTurn("a", 0, 30, {5, 6}),
                             MakeTurn("b", 15, 60, {7, 8}),
                             MakeTurn("a", 66, 90, {9})};
  ChannelTargets ct = BuildTargets(turns, kVocab);

  // Channel 1: turn A (global first, gets <eot>), then turn C (global last).
  CHECK(ct.targets[0].tokens ==
        std::vector<int>{5, 6, Vocab::kEot, Vocab::kSot, 9});
  // Channel 2: turn B alone, with both boundaries.
  CHECK(ct.targets[1].tokens ==
        std::vector<int>{Vocab::kSot, 7, 8, Vocab::kEot});
  REQUIRE(ct.targets[1].eot_marks.size() == 1);
  CHECK(ct.targets[1].eot_marks[0].position == 3);
  CHECK(ct.targets[1].eot_marks[0].end_frame == 19);  // ceil(60/3)-1

  // Masks: channel 1 active on enc frames of A and C, channel 2 on B.
  CHECK(ct.masks[0][0]);
  CHECK(ct.masks[0][9]);    // raw 29 -> enc 9
  CHECK(!ct.masks[0][10]);  // gap between A and C on channel 1
  CHECK(ct.masks[1][5]);    // raw 15 -> enc 5
  CHECK(!ct.masks[1][4]);
}

TEST_CASE("target builder validates inputs") {
  CHECK_THROWS_AS(BuildTargets({MakeTurn("a", 0, 10, {})}, kVocab), Error);
  CHECK_THROWS_AS(BuildTargets({MakeTurn("a", 0, 10, {Vocab::kEot})}, kVocab),
                  Error);
  CHECK_THROWS_AS(BuildTargets({MakeTurn("a", 0, 10, {99})}, kVocab), Error);
  CHECK_THROWS_AS(BuildTargets({MakeTurn("a", 10, 10, {5})}, kVocab), Error);
  CHECK_THROWS_AS(BuildTargets({MakeTurn("a", 0, 10, {5})}, kVocab, 5), Error);
  Vocab tiny;
  tiny.size = 3;  // no room for content ids
  CHECK_THROWS_AS(BuildTargets({MakeTurn("a", 0, 10, {5})}, tiny), Error);
}

TEST_CASE("split recovers turns from a canonical stream") {
  ChannelHypothesis hyp;
  hyp.channel = 0;
  hyp.emissions = {{5, 0}, {6, 1}, {Vocab::kEot, 2}, {Vocab::kSot, 3}, {7, 4}};
  SplitResult res = SplitHypothesis(hyp, kVocab);

  CHECK(res.anomalies == 0);
  REQUIRE(res.turns.size() == 2);
  CHECK(res.turns[0].tokens == std::vector<int>{5, 6});
  CHECK(!res.turns[0].sot_frame.has_value());
  CHECK(res.turns[0].eot_frame == 2);
  CHECK(res.turns[0].first_token_frame == 0);
  CHECK(res.turns[0].last_token_frame == 1);
  CHECK(res.turns[1].tokens == std::vector<int>{7});
  CHECK(res.turns[1].sot_frame == 3);
  CHECK(!res.turns[1].eot_frame.has_value());
}

TEST_CASE("bare content stream forms one implicit turn") {
  ChannelHypothesis hyp;
  hyp.emissions = {{5, 0}, {6, 3}};
  SplitResult res = SplitHypothesis(hyp, kVocab);
  CHECK(res.anomalies == 0);
  REQUIRE(res.turns.size() == 1);
  CHECK(res.turns[0].tokens == std::vector<int>{5, 6});
}

TEST_CASE("sot while open counts an anomaly and splits") {
  ChannelHypothesis hyp;
  hyp.emissions = {{Vocab::kSot, 0}, {5, 1}, {Vocab::kSot, 2}, {6, 3}};
  SplitResult res = SplitHypothesis(hyp, kVocab);
  CHECK(res.anomalies == 1);
  REQUIRE(res.turns.size() == 2);
  CHECK(res.turns[0].tokens == std::vector<int>{5});
  CHECK(res.turns[1].tokens == std::vector<int>{6});
}

TEST_CASE("eot with no open turn yields an anomalous empty turn") {
  ChannelHypothesis hyp;
  hyp.emissions = {{Vocab::kEot, 4}};
  SplitResult res = SplitHypothesis(hyp, kVocab);
  CHECK(res.anomalies == 1);
  REQUIRE(res.turns.size() == 1);
  CHECK(res.turns[0].Empty());
  CHECK(res.turns[0].eot_frame == 4);
  CHECK(CountTurns({hyp}, kVocab) == 0);  // empty turns are not counted
}

TEST_CASE("consecutive boundary pairs preserve empty turns") {
  ChannelHypothesis hyp;
  hyp.emissions = {{5, 0}, {Vocab::kEot, 1}, {Vocab::kSot, 2},
                   {Vocab::kEot, 3}, {Vocab::kSot, 4}, {6, 5}};
  SplitResult res = SplitHypothesis(hyp, kVocab);
  CHECK(res.anomalies == 0);
  REQUIRE(res.turns.size() == 3);
  CHECK(res.turns[1].Empty());
  CHECK(res.turns[1].sot_frame == 2);
  CHECK(res.turns[1].eot_frame == 3);
  CHECK(CountTurns({hyp}, kVocab) == 2);
}

TEST_CASE("split rejects blank ids and decreasing frames") {
  ChannelHypothesis blank;
  blank.emissions = {{Vocab::kBlank, 0}};
  CHECK_THROWS_AS(SplitHypothesis(blank, kVocab), Error);

  ChannelHypothesis decreasing;
  decreasing.emissions = {{5, 3}, {6, 1}};
  CHECK_THROWS_AS(SplitHypothesis(decreasing, kVocab), Error);

  ChannelHypothesis oov;
  oov.emissions = {{42, 0}};
  CHECK_THROWS_AS(SplitHypothesis(oov, kVocab), Error);
}

TEST_CASE("segmentation round trip is exact on random geometries") {
  Rng rng(20260815);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Turn> turns = fixture::RandomGeometry(&rng, kVocab);
    ChannelTargets ct = BuildTargets(turns, kVocab);
    std::vector<ChannelHypothesis> hyps = fixture::OracleHypotheses(turns, ct);

    // Recovered turn count matches the reference.
    CHECK(CountTurns(hyps, kVocab) == static_cast<int>(turns.size()));

    // Per channel, recovered token sequences match the assigned turns.
    std::vector<int> channel = AssignChannels(turns);
    for (int c = 0; c < 2; ++c) {
      SplitResult res = SplitHypothesis(hyps[c], kVocab);
      CHECK(res.anomalies == 0);
      std::vector<std::vector<int>> want;
      for (const TurnRef &ref : ct.order) {
        if (ref.channel == c) want.push_back(turns[ref.turn_index].tokens);
      }
      REQUIRE(res.turns.size() == want.size());
      for (size_t i = 0; i < want.size(); ++i) {
        CHECK(res.turns[i].tokens == want[i]);
      }
    }
    (void)channel;
  }
}

TEST_CASE("channel layout invariants hold on random geometries") {
  Rng rng(555);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Turn> turns = fixture::RandomGeometry(&rng, kVocab);
    ChannelTargets ct = BuildTargets(turns, kVocab);

    // Channel 1 owns the earliest-starting turn.
    CHECK(ct.order.front().channel == 0);

    // No two turns on one channel overlap in raw frames.
    std::vector<int> channel = AssignChannels(turns);
    for (size_t i = 0; i < turns.size(); ++i) {
      for (size_t j = i + 1; j < turns.size(); ++j) {
        if (channel[i] != channel[j]) continue;
        bool disjoint = turns[i].end_frame <= turns[j].start_frame ||
                        turns[j].end_frame <= turns[i].start_frame;
        CHECK(disjoint);
      }
    }

    // Masks equal the brute-force union of per-channel turn spans.
    for (int c = 0; c < 2; ++c) {
      for (int f = 0; f < ct.num_encoder_frames; ++f) {
        bool covered = false;
        for (size_t i = 0; i < turns.size(); ++i) {
          if (channel[i] != c) continue;
          int lo = RawStartToEncoderFrame(turns[i].start_frame);
          int hi = RawEndToEncoderFrame(turns[i].end_frame);
          if (f >= lo && f <= hi) covered = true;
        }
        CHECK(ct.masks[c][f] == covered);
      }
    }

    // Token conservation: stripping boundaries re-yields every content token.
    size_t total = 0;
    for (const TargetSequence &seq : ct.targets) {
      for (int id : seq.tokens) {
        if (kVocab.IsContent(id)) ++total;
      }
    }
    size_t want = 0;
    for (const Turn &t : turns) want += t.tokens.size();
    CHECK(total == want);
  }
}
