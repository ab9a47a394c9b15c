// include/sts/simulator.hpp

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

// Synthetic overlapped-conversation simulator. Every content token owns a
// fixed feature embedding; turns are laid out sequentially or with pairwise
// overlap, energy-scaled relative to the first turn, and mixed into one
// feature stream with background noise on silence frames.

#ifndef STS_SIMULATOR_HPP_
#define STS_SIMULATOR_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sts/mat.hpp"
#include "sts/rng.hpp"
#include "sts/segmenter.hpp"
#include "sts/types.hpp"

namespace sts {

enum class OverlapStyle { kZeroS, kZeroL, kOv10, kOv20, kOv30, kOv40, kMixed };

const char *OverlapStyleName(OverlapStyle style);
OverlapStyle ParseOverlapStyle(const std::string &name);

struct SimConfig {
  uint64_t seed = 1;
  int feature_dim = 8;  // raw per-frame feature width
  int n_turns_min = 1;
  int n_turns_max = 5;
  int tokens_per_turn_min = 2;
  int tokens_per_turn_max = 5;
  int frames_per_token = 4;  // raw frames per content token
  double energy_db_min = -5.0;
  double energy_db_max = 5.0;
  double noise_std = 0.05;
  int max_duration_frames = 3000;  // raw-frame rejection bound
  OverlapStyle style = OverlapStyle::kMixed;
  Vocab vocab;
  bool smear = false;         // optional 3-tap causal channel filter
  double smear_decay = 0.4;

  void Validate() const;
};

struct MixtureExample {
  Mat features_raw;  // T_raw x feature_dim
  Mat features;      // stacked: ceil(T_raw/3) x 3*feature_dim, zero padded
  std::vector<Turn> turns;
  ChannelTargets targets;
  uint64_t seed = 0;
  std::string style;
  std::vector<double> turn_gains;  // realized amplitude scale per turn
  std::vector<double> turn_db;     // realized energy ratio vs first turn
};

// Fixed per-token embedding: a deterministic function of (token id, dim),
// independent of any RNG stream.
double TokenEmbedding(int token, int dim);

// One turn's feature block: every token occupies frames_per_token rows of its
// embedding plus per-frame Gaussian noise (noise_std == 0 -> exact embeddings).
Mat SynthUtterance(const std::vector<int> &tokens, int frames_per_token,
                   int feature_dim, double noise_std, Rng *rng);

// Start offsets for turn blocks of the given lengths. Sequential styles draw
// silence gaps (short: 1..10 raw frames, long: 50..150); overlap styles pull
// each turn forward by round(q * min(len_prev, len_cur)) with q uniform in
// [q0 - 0.05, q0 + 0.05], capped so a third turn never becomes active.
std::vector<int> PlaceTurns(const std::vector<int> &lengths, OverlapStyle style,
                            Rng *rng);

struct MixResult {
  Mat features;                // T_raw x feature_dim
  std::vector<double> gains;   // amplitude scale per turn (first is 1)
  std::vector<double> realized_db;
};

// Scales each block to the requested energy ratio against the first turn,
// adds blocks at their offsets, and fills uncovered frames with background
// noise.
MixResult MixTurns(const std::vector<Mat> &blocks, const std::vector<int> &starts,
                   const std::vector<double> &gains_db, double noise_std,
                   int feature_dim, Rng *rng);

// x3 frame stacking with zero padding on the tail.
Mat StackFrames(const Mat &raw);

// One fully assembled example; rejection-samples the geometry against
// max_duration_frames (error after 100 attempts).
MixtureExample SimulateExample(const SimConfig &cfg, uint64_t seed);

// A named partition of an evaluation set.
struct EvalPartitionSpec {
  std::string name;
  SimConfig config;
  int n_examples = 0;
};

struct ExampleMeta {
  std::string id;
  std::string partition;
  int session = 0;  // session index; session 0 is the dev split
  uint64_t seed = 0;
  int raw_frames = 0;
  int n_turns = 0;
};

struct EvalSet {
  std::vector<MixtureExample> examples;
  std::vector<ExampleMeta> meta;
  std::vector<EvalPartitionSpec> partitions;
  uint64_t base_seed = 0;
};

// Deterministically generates every partition (per-example seeds derived from
// base_seed, partition index, and example index). out_dir may be empty to
// skip writing; otherwise manifest.json, turns.jsonl and features.jsonl are
// produced there.
EvalSet MakeEvalSet(const std::vector<EvalPartitionSpec> &partitions,
                    uint64_t base_seed, const std::string &out_dir);

// Mean adjacent-pair overlap ratio (overlap duration over the shorter turn).
// Examples with fewer than two turns contribute nothing.
double MeanOverlapRatio(const std::vector<MixtureExample> &examples);

}  // namespace sts

#endif  // STS_SIMULATOR_HPP_
