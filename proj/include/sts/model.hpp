// include/sts/model.hpp

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

// Desk-scale streaming two-channel transducer: mixture encoder, per-channel
// separation encoders, shared recognition encoder, prediction network, and a
// feed-forward joint, with exact reverse-mode gradients, the non-active-frame
// masking loss, greedy decoding, checkpointing, and an SGD training loop.

#ifndef STS_MODEL_HPP_
#define STS_MODEL_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sts/lattice.hpp"
#include "sts/mat.hpp"
#include "sts/nnet.hpp"
#include "sts/types.hpp"

namespace sts {

struct ModelConfig {
  int feature_dim = 8;  // per raw frame; encoder input width is 3x this
  int mix_layers = 1;
  int sep_layers = 1;
  int rec_layers = 1;
  int pred_layers = 1;
  int hidden_dim = 16;
  int joint_dim = 16;
  int vocab_size = 16;
  int n_channels = 2;
  uint64_t seed = 1;

  void Validate() const;
  int InputDim() const { return kFrameStack * feature_dim; }
};

struct TrainConfig {
  double gamma = 0.0;            // masking-loss weight
  double fastemit_lambda = 0.0;  // label-occupancy boost
  std::optional<PenaltyConfig> penalty;
  double learning_rate = 0.05;
  int warmup_steps = 50;
  int hold_steps = 400;
  double decay_factor = 0.999;
  int max_steps = 1000;
  int batch_size = 1;
  double grad_clip = 5.0;  // global norm; <= 0 disables

  void Validate() const;
};

// One training sample: stacked features plus per-channel targets and
// encoder-frame activity masks.
struct TrainingExample {
  Mat features;  // T x (3 * feature_dim)
  std::vector<TargetSequence> targets;
  std::vector<ActivityMask> masks;
};

// Per-channel recognition-encoder outputs.
using EncoderOutputs = std::vector<Mat>;

struct LossBundle {
  double loss = 0.0;       // rnnt_loss + gamma * mask_loss
  double rnnt_loss = 0.0;  // summed over channels (penalized lattices)
  double mask_loss = 0.0;  // unweighted masking loss
  ParamSet grads;
  EncoderOutputs encoder_outputs;
};

// Sum over channels of squared L2 norm of h on non-active frames.
double MaskingLoss(const EncoderOutputs &h, const std::vector<ActivityMask> &masks);

struct NormRatioValue {
  double value = 0.0;
  bool defined = false;  // false when active or non-active frames are absent
  bool capped = false;   // true when the non-active mean norm is zero
};

// Mean per-frame L2 norm over active frames divided by the mean over
// non-active frames, frames pooled across channels.
NormRatioValue NormRatio(const EncoderOutputs &h,
                         const std::vector<ActivityMask> &masks);

class StsModel {
 public:
  explicit StsModel(const ModelConfig &config);

  const ModelConfig &config() const { return config_; }
  const ParamSet &params() const { return params_; }
  ParamSet &params() { return params_; }

  // h_n = RecEnc(SepEnc_n(MixEnc(x))), recognition encoder shared.
  EncoderOutputs Encode(const Mat &features) const;

  // Prediction network over the blank-prepended target prefix, then the
  // joint and a log-softmax: the channel's full transducer lattice.
  LogProbLattice JointLattice(const Mat &h, const std::vector<int> &tokens) const;

  // Combined objective and exact parameter gradients. channel_weights is a
  // diagnostic hook scaling each channel's loss terms (default all-ones).
  LossBundle TotalLoss(const TrainingExample &example, const TrainConfig &cfg,
                       const std::vector<double> *channel_weights = nullptr) const;

  // Frame-synchronous greedy search per channel; emission frames recorded.
  std::vector<ChannelHypothesis> GreedyDecode(const Mat &features,
                                              int max_symbols_per_frame) const;

  void Save(const std::string &path, int64_t step) const;
  static StsModel Load(const std::string &path, int64_t *step);

 private:
  struct Workspace;
  void BuildParams();
  ModelConfig config_;
  ParamSet params_;
};

// Deterministic per-step example provider; (step, item) fixes the sample.
using ExampleSource = std::function<TrainingExample(int64_t step, int item)>;

struct TrainLogEntry {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;       // batch mean
  double rnnt_loss = 0.0;  // batch mean
  double mask_loss = 0.0;  // batch mean, unweighted
  NormRatioValue norm_ratio;  // from the last batch item
};

struct TrainRunResult {
  int64_t final_step = 0;
  double initial_loss = 0.0;  // batch-mean loss at the first executed step
  double final_loss = 0.0;    // batch-mean loss at the last executed step
  std::vector<TrainLogEntry> log;
};

double LearningRateAt(const TrainConfig &cfg, int64_t step);

// Runs steps [start_step, cfg.max_steps). On a non-finite loss, writes a
// diagnostic JSON to nan_dump_path (if nonempty) and raises a numeric error.
TrainRunResult TrainLoop(StsModel *model, const TrainConfig &cfg,
                         const ExampleSource &source, int64_t start_step = 0,
                         const std::string &nan_dump_path = "");

}  // namespace sts

#endif  // STS_MODEL_HPP_
