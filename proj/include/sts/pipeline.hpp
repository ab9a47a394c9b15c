// include/sts/pipeline.hpp

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

// Experiment plumbing: structured run configs, dataset files, decoding runs,
// scoring reports, and the simulate/train/evaluate/analyze drivers shared by
// the command-line tool and the tests.

#ifndef STS_PIPELINE_HPP_
#define STS_PIPELINE_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sts/metrics.hpp"
#include "sts/model.hpp"
#include "sts/simulator.hpp"

namespace sts {

struct EvalSettings {
  double frame_ms = 30.0;  // 10 ms raw frames x3 stacking
  int max_symbols_per_frame = 8;
  bool extended_percentiles = false;  // adds p60/p70/p80 to text tables

  void Validate() const;
};

// One experiment: model + training recipe + on-the-fly training data + the
// evaluation partitions. Serialized as "sts.config.v1" JSON.
struct ExperimentConfig {
  std::string run_id = "run";
  std::string output_dir = "runs/run";
  ModelConfig model;
  TrainConfig train;
  SimConfig train_sim;
  uint64_t eval_seed = 9000;
  std::vector<EvalPartitionSpec> eval_partitions;
  EvalSettings eval;

  void Validate() const;
};

ExperimentConfig ParseExperimentConfig(const std::string &text);
ExperimentConfig LoadExperimentConfig(const std::string &path);

TrainingExample ToTrainingExample(const MixtureExample &example);

// Deterministic on-the-fly training stream: sample (step, item) is simulated
// from a seed derived from (cfg.seed, step, item).
ExampleSource SimulatorSource(const SimConfig &cfg);

// ---------------------------------------------------------------------------
// Dataset files (manifest.json + turns.jsonl + features.jsonl).

struct LoadedExample {
  std::string id;
  std::string partition;
  int session = 0;
  int total_raw_frames = 0;
  std::vector<Turn> turns;
  Mat features;  // stacked, model-ready
};

struct LoadedDataset {
  std::vector<LoadedExample> examples;
  int vocab_size = 0;
  int feature_dim = 0;  // raw per-frame width
  std::vector<std::string> partition_names;
};

LoadedDataset LoadDataset(const std::string &dir);

// ---------------------------------------------------------------------------
// Decoded hypotheses ("sts.hyps.v1" JSONL, one example per line).

struct HypRecord {
  std::string id;
  std::vector<ChannelHypothesis> channels;
};

void WriteHypotheses(const std::string &path, const std::vector<HypRecord> &hyps);
std::vector<HypRecord> ReadHypotheses(const std::string &path);

// Reference targets replayed as decoder output: each turn's tokens at its
// first encoder frame, boundary tokens exactly on the reference span edges.
// Scores perfectly by construction; useful as a scoring oracle.
std::vector<HypRecord> OracleHypotheses(const LoadedDataset &data);

// ---------------------------------------------------------------------------
// Scoring.

struct PartitionScore {
  std::string name;
  int n_examples = 0;
  AlignmentCounts counts;
  TurnCountStats turn_stats;
};

struct EvalReport {
  PartitionScore overall;
  std::vector<PartitionScore> partitions;
  double frame_ms = 30.0;
  std::vector<LatencySample> latency_samples;
  long long latency_scored_examples = 0;
  std::map<std::string, long long> latency_skips;  // reason -> count
};

// ORC-scores every example (control tokens stripped), accumulates turn
// counting accuracy, and collects latency samples from qualifying examples.
// Hypotheses must cover exactly the dataset's example ids.
EvalReport ScoreDataset(const LoadedDataset &data,
                        const std::vector<HypRecord> &hyps,
                        const EvalSettings &eval);

std::string ReportToJson(const EvalReport &report);   // "sts.report.v1"
std::string ReportToText(const EvalReport &report, bool extended_percentiles);
std::string LatencyToJson(const EvalReport &report);  // "sts.latency.v1"
std::string LatencyToText(const EvalReport &report, bool extended_percentiles);

// ---------------------------------------------------------------------------
// Drivers. All artifact paths returned are inside the given output directory.

struct PartitionSummary {
  std::string name;
  int n_examples = 0;
  double mean_overlap_ratio = 0.0;
};

struct SimulateOutputs {
  std::string dataset_dir;
  std::vector<PartitionSummary> partitions;
  int total_examples = 0;
};

// n_override >= 0 replaces every partition's example count; seed_override
// replaces the config's eval_seed.
SimulateOutputs RunSimulate(const ExperimentConfig &cfg,
                            const std::string &out_dir, int n_override,
                            std::optional<uint64_t> seed_override);

struct TrainOutputs {
  std::string checkpoint_path;
  std::string loss_log_path;  // "sts.loss.v1" JSONL
  TrainRunResult run;
};

// steps_override >= 0 replaces cfg.train.max_steps; resume_checkpoint (when
// nonempty) supplies the starting parameters and step counter.
TrainOutputs RunTraining(const ExperimentConfig &cfg, const std::string &out_dir,
                         int64_t steps_override,
                         const std::string &resume_checkpoint);

struct EvaluateOutputs {
  std::string hyps_path;  // empty when scoring externally supplied hypotheses
  std::string report_json_path;
  std::string report_text_path;
  EvalReport report;
};

// Decodes the dataset with the model, writes hypotheses, and scores them.
EvaluateOutputs RunEvaluation(const StsModel &model, const LoadedDataset &data,
                              const std::string &out_dir,
                              const EvalSettings &eval);
// Scores externally supplied hypotheses (e.g. an oracle decode).
EvaluateOutputs RunEvaluation(const LoadedDataset &data,
                              const std::vector<HypRecord> &hyps,
                              const std::string &out_dir,
                              const EvalSettings &eval);

struct LatencyOutputs {
  std::string json_path;
  std::string text_path;
  EvalReport report;
};

LatencyOutputs RunLatencyAnalysis(const LoadedDataset &data,
                                  const std::vector<HypRecord> &hyps,
                                  const std::string &out_dir,
                                  const EvalSettings &eval);

}  // namespace sts

#endif  // STS_PIPELINE_HPP_
