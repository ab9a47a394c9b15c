// include/sts/types.hpp

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

#ifndef STS_TYPES_HPP_
#define STS_TYPES_HPP_

#include <string>
#include <vector>

#include "sts/error.hpp"

namespace sts {

// Frame-rate contract: raw feature frames are stacked x3 into encoder frames.
constexpr int kFrameStack = 3;

inline int RawToEncoderFrameCount(int raw_frames) {
  return (raw_frames + kFrameStack - 1) / kFrameStack;
}
// First encoder frame that observes raw frame r (used for span starts).
inline int RawStartToEncoderFrame(int raw_frame) { return raw_frame / kFrameStack; }
// Last encoder frame covered by a raw half-open span ending at raw_end.
inline int RawEndToEncoderFrame(int raw_end) {
  return (raw_end + kFrameStack - 1) / kFrameStack - 1;
}

// Fixed vocabulary layout: 0 = blank, 1 = <sot>, 2 = <eot>, 3.. = content
// subword ids.
struct Vocab {
  int size = 16;

  static constexpr int kBlank = 0;
  static constexpr int kSot = 1;
  static constexpr int kEot = 2;
  static constexpr int kFirstContent = 3;

  void Validate() const {
    Require(size >= kFirstContent + 1, ErrorCode::kValue,
            "vocab must hold blank, <sot>, <eot> and at least one content id");
  }
  int ContentCount() const { return size - kFirstContent; }
  bool IsContent(int id) const { return id >= kFirstContent && id < size; }
  bool IsControl(int id) const { return id == kSot || id == kEot; }
};

// A reference speaker turn, in raw feature frames ([start, end) half-open).
struct Turn {
  std::string speaker;
  int start_frame = 0;
  int end_frame = 0;
  std::vector<int> tokens;  // content ids only
};

// One decoded token with the encoder frame it was emitted at.
struct Emission {
  int token = 0;
  int frame = 0;
};

// Raw decoder output for one output channel: the flat token stream in
// emission order, frames nondecreasing.
struct ChannelHypothesis {
  int channel = 0;
  std::vector<Emission> emissions;
};

// Per-encoder-frame speaker activity (true = the channel is active).
using ActivityMask = std::vector<bool>;

}  // namespace sts

#endif  // STS_TYPES_HPP_
