// include/sts/segmenter.hpp

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

// Turn-taking segmentation: maps overlapping reference turns onto two
// non-overlapping output channels, builds per-channel transducer targets with
// <sot>/<eot> boundary tokens, and splits decoded token streams back into
// turn hypotheses.

#ifndef STS_SEGMENTER_HPP_
#define STS_SEGMENTER_HPP_

#include <optional>
#include <vector>

#include "sts/lattice.hpp"
#include "sts/types.hpp"

namespace sts {

// Assigns each turn to an output channel: turns are processed in temporal
// order (start, end, input index) and take the lowest-index channel that is
// free, i.e. whose previous turn has already ended. More than two
// simultaneously active turns is an error. Returns the channel per turn in
// input order.
std::vector<int> AssignChannels(const std::vector<Turn> &turns,
                                int num_channels = 2);

// One reference turn's place in the channel layout, in encoder frames.
struct TurnRef {
  int turn_index = 0;  // index into the input turns vector
  int channel = 0;
  int enc_start = 0;  // first encoder frame of the turn
  int enc_end = 0;    // last encoder frame of the turn (inclusive)
};

struct ChannelTargets {
  std::vector<TargetSequence> targets;  // one per channel
  std::vector<ActivityMask> masks;      // one per channel, encoder frames
  std::vector<TurnRef> order;           // all turns in temporal order
  int num_encoder_frames = 0;
};

// Builds per-channel target sequences. Each turn contributes
// [<sot>] content... [<eot>]; the globally first turn omits <sot> (the
// session starts with speech) and the globally last turn omits <eot> (the
// session simply ends). Every emitted <eot> carries its ground-truth end
// frame. total_raw_frames < 0 means "up to the last turn end".
ChannelTargets BuildTargets(const std::vector<Turn> &turns, const Vocab &vocab,
                            int total_raw_frames = -1);

// One decoded turn recovered from a channel's token stream.
struct TurnHypothesis {
  int channel = 0;
  std::vector<int> tokens;  // content ids only
  std::optional<int> sot_frame;
  std::optional<int> eot_frame;
  std::optional<int> first_token_frame;
  std::optional<int> last_token_frame;

  bool Empty() const { return tokens.empty(); }
  // Frame at which this turn first becomes visible in the stream.
  std::optional<int> OpeningFrame() const {
    if (sot_frame) return sot_frame;
    return first_token_frame;
  }
};

struct SplitResult {
  std::vector<TurnHypothesis> turns;
  int anomalies = 0;  // malformed boundary-token events (see SplitHypothesis)
};

// Splits a decoded stream at boundary tokens. Content with no open turn opens
// one implicitly (the channel's first turn, or a dropped <sot>); <sot> while a
// turn is open counts one anomaly, closes the turn and opens a new one; <eot>
// with no open turn counts one anomaly and yields an empty turn. Empty turns
// are preserved. Blank ids and decreasing emission frames are errors.
SplitResult SplitHypothesis(const ChannelHypothesis &hyp, const Vocab &vocab);

// Number of non-empty decoded turns across all channels.
int CountTurns(const std::vector<ChannelHypothesis> &hyps, const Vocab &vocab);

}  // namespace sts

#endif  // STS_SEGMENTER_HPP_
