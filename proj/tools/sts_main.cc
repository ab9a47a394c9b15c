// tools/sts_main.cc

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

// Experiment driver. Subcommands: simulate, train, evaluate, oracle-hyps,
// analyze-latency. Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 numeric abort,
// 5 incompatible artifacts.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "sts/pipeline.hpp"

using namespace sts;

namespace {

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kDimension:
    case ErrorCode::kValue:
      return 2;
    case ErrorCode::kIo:
      return 3;
    case ErrorCode::kNumeric:
      return 4;
    case ErrorCode::kCompat:
      return 5;
  }
  return 2;
}

// Output directory resolution: an explicit flag wins, then the STS_OUTPUT_DIR
// environment variable, then the fallback (the config's output_dir, or ".").
std::string ResolveOutDir(const std::string &flag, const std::string &fallback,
                          const std::string &subdir) {
  if (!flag.empty()) return flag;
  const char *env = std::getenv("STS_OUTPUT_DIR");
  const std::string base = (env && *env) ? env : fallback;
  return base + "/" + subdir;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Streaming two-channel transducer experiment toolkit"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  int sim_n = -1;
  uint64_t sim_seed = 0;
  CLI::App *sim = app.add_subcommand(
      "simulate", "Generate an evaluation dataset from a config");
  sim->add_option("config", sim_config, "experiment config JSON")->required();
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--n", sim_n, "override every partition's example count");
  CLI::Option *sim_seed_opt =
      sim->add_option("--seed", sim_seed, "override the evaluation seed");

  std::string train_config, train_out, train_resume;
  int64_t train_steps = -1;
  CLI::App *train =
      app.add_subcommand("train", "Train a model on simulated conversations");
  train->add_option("config", train_config, "experiment config JSON")
      ->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--steps", train_steps, "override train.max_steps");
  train->add_option("--resume", train_resume, "checkpoint to continue from");

  std::string eval_model, eval_dataset, eval_report;
  bool eval_hyps = false, eval_extended = false;
  EvalSettings eval_settings;
  CLI::App *evaluate = app.add_subcommand(
      "evaluate", "Decode a dataset with a checkpoint and score it");
  evaluate
      ->add_option("checkpoint", eval_model,
                   "model checkpoint (or a hypotheses file with --hyps)")
      ->required();
  evaluate->add_option("dataset", eval_dataset, "dataset directory")
      ->required();
  evaluate->add_option("--report", eval_report, "report output directory");
  evaluate->add_flag("--hyps", eval_hyps,
                     "score the given hypotheses file instead of decoding");
  evaluate->add_option("--frame-ms", eval_settings.frame_ms,
                       "milliseconds per encoder frame");
  evaluate->add_option("--max-symbols", eval_settings.max_symbols_per_frame,
                       "decoder emission cap per frame");
  evaluate->add_flag("--extended", eval_extended,
                     "include p60/p70/p80 in text tables");

  std::string oracle_dataset, oracle_out;
  CLI::App *oracle = app.add_subcommand(
      "oracle-hyps", "Write reference targets as a hypotheses file");
  oracle->add_option("dataset", oracle_dataset, "dataset directory")
      ->required();
  oracle->add_option("--out", oracle_out, "output file")->required();

  std::string lat_hyps, lat_dataset, lat_out;
  bool lat_extended = false;
  EvalSettings lat_settings;
  CLI::App *latency = app.add_subcommand(
      "analyze-latency", "Boundary-emission latency tables for a decode");
  latency->add_option("hypotheses", lat_hyps, "hypotheses JSONL")->required();
  latency->add_option("dataset", lat_dataset, "reference dataset directory")
      ->required();
  latency->add_option("--out", lat_out, "output directory");
  latency->add_option("--frame-ms", lat_settings.frame_ms,
                      "milliseconds per encoder frame");
  latency->add_flag("--extended", lat_extended,
                    "include p60/p70/p80 in text tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(sim)) {
      ExperimentConfig cfg = LoadExperimentConfig(sim_config);
      std::optional<uint64_t> seed;
      if (sim_seed_opt->count() > 0) seed = sim_seed;
      SimulateOutputs out = RunSimulate(
          cfg, ResolveOutDir(sim_out, cfg.output_dir, "dataset"), sim_n, seed);
      for (const PartitionSummary &p : out.partitions)
        std::printf("partition %s: %d examples, mean overlap %.3f\n",
                    p.name.c_str(), p.n_examples, p.mean_overlap_ratio);
      std::printf("wrote %d examples to %s\n", out.total_examples,
                  out.dataset_dir.c_str());
    } else if (app.got_subcommand(train)) {
      ExperimentConfig cfg = LoadExperimentConfig(train_config);
      TrainOutputs out =
          RunTraining(cfg, ResolveOutDir(train_out, cfg.output_dir, "train"),
                      train_steps, train_resume);
      if (!out.run.log.empty())
        std::printf("trained to step %lld, loss %.6f -> %.6f\n",
                    static_cast<long long>(out.run.final_step),
                    out.run.initial_loss, out.run.final_loss);
      else
        std::printf("no steps to run; checkpoint at step %lld\n",
                    static_cast<long long>(out.run.final_step));
      std::printf("checkpoint: %s\nloss log: %s\n", out.checkpoint_path.c_str(),
                  out.loss_log_path.c_str());
    } else if (app.got_subcommand(evaluate)) {
      eval_settings.extended_percentiles = eval_extended;
      LoadedDataset data = LoadDataset(eval_dataset);
      const std::string out_dir = ResolveOutDir(eval_report, ".", "eval");
      EvaluateOutputs out;
      if (eval_hyps) {
        out = RunEvaluation(data, ReadHypotheses(eval_model), out_dir,
                            eval_settings);
      } else {
        int64_t step = 0;
        StsModel model = StsModel::Load(eval_model, &step);
        out = RunEvaluation(model, data, out_dir, eval_settings);
      }
      std::fputs(ReportToText(out.report, eval_extended).c_str(), stdout);
      if (!out.hyps_path.empty())
        std::printf("hypotheses: %s\n", out.hyps_path.c_str());
      std::printf("report: %s\n", out.report_json_path.c_str());
    } else if (app.got_subcommand(oracle)) {
      LoadedDataset data = LoadDataset(oracle_dataset);
      WriteHypotheses(oracle_out, OracleHypotheses(data));
      std::printf("wrote %zu oracle hypotheses to %s\n", data.examples.size(),
                  oracle_out.c_str());
    } else if (app.got_subcommand(latency)) {
      lat_settings.extended_percentiles = lat_extended;
      LoadedDataset data = LoadDataset(lat_dataset);
      LatencyOutputs out =
          RunLatencyAnalysis(data, ReadHypotheses(lat_hyps),
                             ResolveOutDir(lat_out, ".", "latency"),
                             lat_settings);
      std::fputs(LatencyToText(out.report, lat_extended).c_str(), stdout);
      std::printf("samples: %s\n", out.json_path.c_str());
    }
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return ExitCodeFor(e.code());
  }
  return 0;
}
