// src/segmenter.cc

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

#include <algorithm>
#include <numeric>

namespace sts {

namespace {

// Temporal processing order: by start, then end, then input index.
std::vector<int> TemporalOrder(const std::vector<Turn> &turns) {
  std::vector<int> order(turns.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (turns[a].start_frame != turns[b].start_frame)
      return turns[a].start_frame < turns[b].start_frame;
    if (turns[a].end_frame != turns[b].end_frame)
      return turns[a].end_frame < turns[b].end_frame;
    return a < b;
  });
  return order;
}

void ValidateTurns(const std::vector<Turn> &turns) {
  for (const Turn &t : turns) {
    Require(t.start_frame >= 0, ErrorCode::kValue,
            "turn start frame must be >= 0");
    Require(t.start_frame < t.end_frame, ErrorCode::kValue,
            "turn must have positive duration");
  }
}

}  // namespace

std::vector<int> AssignChannels(const std::vector<Turn> &turns,
                                int num_channels) {
  Require(num_channels >= 1, ErrorCode::kValue, "need at least one channel");
  ValidateTurns(turns);

  std::vector<int> channel(turns.size(), -1);
  std::vector<int> busy_until(num_channels, 0);  // raw frame each channel frees
  for (int k : TemporalOrder(turns)) {
    int picked = -1;
    for (int c = 0; c < num_channels; ++c) {
      if (busy_until[c] <= turns[k].start_frame) {
        picked = c;
        break;
      }
    }
    Require(picked >= 0, ErrorCode::kValue,
            "more than " + std::to_string(num_channels) +
                " turns overlap at raw frame " +
                std::to_string(turns[k].start_frame));
    channel[k] = picked;
    busy_until[picked] = turns[k].end_frame;
  }
  return channel;
}

ChannelTargets BuildTargets(const std::vector<Turn> &turns, const Vocab &vocab,
                            int total_raw_frames) {
  vocab.Validate();
  ValidateTurns(turns);
  for (const Turn &t : turns) {
    Require(!t.tokens.empty(), ErrorCode::kValue,
            "turn token sequence must be non-empty");
    for (int id : t.tokens) {
      Require(vocab.IsContent(id), ErrorCode::kValue,
              "turn tokens must be content ids (got " + std::to_string(id) +
                  ")");
    }
  }

  int max_end = 0;
  for (const Turn &t : turns) max_end = std::max(max_end, t.end_frame);
  if (total_raw_frames < 0) total_raw_frames = max_end;
  Require(total_raw_frames >= max_end, ErrorCode::kDimension,
          "total_raw_frames shorter than the last turn end");

  constexpr int kNumChannels = 2;
  std::vector<int> channel = AssignChannels(turns, kNumChannels);
  std::vector<int> order = TemporalOrder(turns);

  ChannelTargets out;
  out.num_encoder_frames = RawToEncoderFrameCount(total_raw_frames);
  out.targets.resize(kNumChannels);
  out.masks.assign(kNumChannels, ActivityMask(out.num_encoder_frames, false));
  for (auto &t : out.targets) t.eot_id = Vocab::kEot;
  if (turns.empty()) return out;

  // Globally first turn: earliest in temporal order. Globally last turn: the
  // latest end (ties broken toward the later temporal position).
  int first = order.front();
  int last = order.front();
  for (int k : order) {
    if (turns[k].end_frame >= turns[last].end_frame) last = k;
  }

  for (int k : order) {
    const Turn &turn = turns[k];
    int ch = channel[k];
    TargetSequence &seq = out.targets[ch];

    TurnRef ref;
    ref.turn_index = k;
    ref.channel = ch;
    ref.enc_start = RawStartToEncoderFrame(turn.start_frame);
    ref.enc_end =
        std::max(RawEndToEncoderFrame(turn.end_frame), ref.enc_start);
    out.order.push_back(ref);

    if (k != first) seq.tokens.push_back(Vocab::kSot);
    for (int id : turn.tokens) seq.tokens.push_back(id);
    if (k != last) {
      seq.eot_marks.push_back(
          {static_cast<int>(seq.tokens.size()), ref.enc_end});
      seq.tokens.push_back(Vocab::kEot);
    }

    for (int f = ref.enc_start; f <= ref.enc_end; ++f) out.masks[ch][f] = true;
  }
  return out;
}

SplitResult SplitHypothesis(const ChannelHypothesis &hyp, const Vocab &vocab) {
  vocab.Validate();
  SplitResult out;
  std::optional<TurnHypothesis> cur;
  auto close = [&]() {
    if (cur) {
      out.turns.push_back(*cur);
      cur.reset();
    }
  };
  auto open = [&]() {
    cur = TurnHypothesis{};
    cur->channel = hyp.channel;
  };

  int prev_frame = -1;
  for (const Emission &e : hyp.emissions) {
    Require(e.token >= 0 && e.token < vocab.size, ErrorCode::kValue,
            "hypothesis token id out of vocabulary range");
    Require(e.token != Vocab::kBlank, ErrorCode::kValue,
            "hypothesis stream must not contain blank");
    Require(e.frame >= prev_frame, ErrorCode::kValue,
            "hypothesis emission frames must be nondecreasing");
    prev_frame = e.frame;

    if (e.token == Vocab::kSot) {
      if (cur) {
        ++out.anomalies;  // <sot> while a turn is open
        close();
      }
      open();
      cur->sot_frame = e.frame;
    } else if (e.token == Vocab::kEot) {
      if (!cur) {
        ++out.anomalies;  // <eot> with no open turn
        open();
      }
      cur->eot_frame = e.frame;
      close();
    } else {
      if (!cur) open();  // implicit first turn / dropped <sot>
      cur->tokens.push_back(e.token);
      if (!cur->first_token_frame) cur->first_token_frame = e.frame;
      cur->last_token_frame = e.frame;
    }
  }
  close();  // the globally last turn carries no <eot>
  return out;
}

int CountTurns(const std::vector<ChannelHypothesis> &hyps, const Vocab &vocab) {
  int count = 0;
  for (const ChannelHypothesis &hyp : hyps) {
    for (const TurnHypothesis &t : SplitHypothesis(hyp, vocab).turns) {
      if (!t.Empty()) ++count;
    }
  }
  return count;
}

}  // namespace sts
