// src/pipeline.cc

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

#include "sts/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace sts {

using nlohmann::json;

void EvalSettings::Validate() const {
  Require(frame_ms > 0.0, ErrorCode::kConfig, "frame_ms must be positive");
  Require(max_symbols_per_frame >= 1, ErrorCode::kConfig,
          "max_symbols_per_frame must be >= 1");
}

void ExperimentConfig::Validate() const {
  Require(!run_id.empty(), ErrorCode::kConfig, "run_id must be nonempty");
  Require(!output_dir.empty(), ErrorCode::kConfig,
          "output_dir must be nonempty");
  model.Validate();
  train.Validate();
  train_sim.Validate();
  eval.Validate();
  Require(model.feature_dim == train_sim.feature_dim, ErrorCode::kConfig,
          "model feature_dim must match train_sim feature_dim");
  Require(model.vocab_size == train_sim.vocab.size, ErrorCode::kConfig,
          "model vocab_size must match train_sim vocab size");
  for (const EvalPartitionSpec &p : eval_partitions) {
    Require(!p.name.empty(), ErrorCode::kConfig, "partition needs a name");
    Require(p.n_examples >= 0, ErrorCode::kConfig,
            "partition example count must be >= 0");
    p.config.Validate();
  }
}

// ---------------------------------------------------------------------------
// Config parsing ("sts.config.v1"). Unknown keys are rejected so that typos
// fail loudly instead of silently falling back to defaults.

namespace {

void CheckKeys(const json &j, const std::vector<std::string> &allowed,
               const std::string &where) {
  Require(j.is_object(), ErrorCode::kConfig, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw Error(ErrorCode::kConfig,
                  "unknown key \"" + it.key() + "\" in " + where);
  }
}

ModelConfig ModelFromJson(const json &j) {
  CheckKeys(j,
            {"feature_dim", "mix_layers", "sep_layers", "rec_layers",
             "pred_layers", "hidden_dim", "joint_dim", "vocab_size",
             "n_channels", "seed"},
            "model");
  ModelConfig c;
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.mix_layers = j.value("mix_layers", c.mix_layers);
  c.sep_layers = j.value("sep_layers", c.sep_layers);
  c.rec_layers = j.value("rec_layers", c.rec_layers);
  c.pred_layers = j.value("pred_layers", c.pred_layers);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.joint_dim = j.value("joint_dim", c.joint_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.n_channels = j.value("n_channels", c.n_channels);
  c.seed = j.value("seed", c.seed);
  return c;
}

TrainConfig TrainFromJson(const json &j) {
  CheckKeys(j,
            {"gamma", "fastemit_lambda", "penalty", "learning_rate",
             "warmup_steps", "hold_steps", "decay_factor", "max_steps",
             "batch_size", "grad_clip"},
            "train");
  TrainConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.fastemit_lambda = j.value("fastemit_lambda", c.fastemit_lambda);
  if (j.contains("penalty") && !j.at("penalty").is_null()) {
    const json &p = j.at("penalty");
    CheckKeys(p, {"alpha", "tau"}, "train.penalty");
    PenaltyConfig pc;
    pc.alpha = p.value("alpha", 0.0);
    pc.tau = p.value("tau", 0);
    c.penalty = pc;
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.hold_steps = j.value("hold_steps", c.hold_steps);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  return c;
}

const std::vector<std::string> kSimKeys = {
    "seed",          "feature_dim",        "n_turns_min",
    "n_turns_max",   "tokens_per_turn_min", "tokens_per_turn_max",
    "frames_per_token", "energy_db_min",   "energy_db_max",
    "noise_std",     "max_duration_frames", "style",
    "vocab_size",    "smear",              "smear_decay"};

SimConfig SimFromJson(const json &j, const std::string &where) {
  CheckKeys(j, kSimKeys, where);
  SimConfig c;
  c.seed = j.value("seed", c.seed);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.n_turns_min = j.value("n_turns_min", c.n_turns_min);
  c.n_turns_max = j.value("n_turns_max", c.n_turns_max);
  c.tokens_per_turn_min = j.value("tokens_per_turn_min", c.tokens_per_turn_min);
  c.tokens_per_turn_max = j.value("tokens_per_turn_max", c.tokens_per_turn_max);
  c.frames_per_token = j.value("frames_per_token", c.frames_per_token);
  c.energy_db_min = j.value("energy_db_min", c.energy_db_min);
  c.energy_db_max = j.value("energy_db_max", c.energy_db_max);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.max_duration_frames = j.value("max_duration_frames", c.max_duration_frames);
  if (j.contains("style"))
    c.style = ParseOverlapStyle(j.at("style").get<std::string>());
  c.vocab.size = j.value("vocab_size", c.vocab.size);
  c.smear = j.value("smear", c.smear);
  c.smear_decay = j.value("smear_decay", c.smear_decay);
  return c;
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kConfig,
                std::string("config is not valid JSON: ") + e.what());
  }
  try {
    CheckKeys(j,
              {"schema", "run_id", "output_dir", "model", "train", "train_sim",
               "eval_seed", "eval_partitions", "eval"},
              "config");
    Require(j.value("schema", "") == "sts.config.v1", ErrorCode::kConfig,
            "config schema must be \"sts.config.v1\"");
    ExperimentConfig cfg;
    cfg.run_id = j.value("run_id", cfg.run_id);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("model")) cfg.model = ModelFromJson(j.at("model"));
    if (j.contains("train")) cfg.train = TrainFromJson(j.at("train"));
    if (j.contains("train_sim"))
      cfg.train_sim = SimFromJson(j.at("train_sim"), "train_sim");
    cfg.eval_seed = j.value("eval_seed", cfg.eval_seed);
    if (j.contains("eval_partitions")) {
      Require(j.at("eval_partitions").is_array(), ErrorCode::kConfig,
              "eval_partitions must be an array");
      for (const json &p : j.at("eval_partitions")) {
        Require(p.is_object() && p.contains("name"), ErrorCode::kConfig,
                "every eval partition needs a name");
        EvalPartitionSpec spec;
        spec.name = p.at("name").get<std::string>();
        spec.n_examples = p.value("n_examples", 0);
        json sim = p;
        sim.erase("name");
        sim.erase("n_examples");
        spec.config = SimFromJson(sim, "eval_partitions[" + spec.name + "]");
        cfg.eval_partitions.push_back(std::move(spec));
      }
    }
    if (j.contains("eval")) {
      const json &e = j.at("eval");
      CheckKeys(e, {"frame_ms", "max_symbols_per_frame", "extended_percentiles"},
                "eval");
      cfg.eval.frame_ms = e.value("frame_ms", cfg.eval.frame_ms);
      cfg.eval.max_symbols_per_frame =
          e.value("max_symbols_per_frame", cfg.eval.max_symbols_per_frame);
      cfg.eval.extended_percentiles =
          e.value("extended_percentiles", cfg.eval.extended_percentiles);
    }
    cfg.Validate();
    return cfg;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kConfig,
                std::string("malformed config value: ") + e.what());
  }
}

ExperimentConfig LoadExperimentConfig(const std::string &path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseExperimentConfig(ss.str());
}

TrainingExample ToTrainingExample(const MixtureExample &example) {
  TrainingExample ex;
  ex.features = example.features;
  ex.targets = example.targets.targets;
  ex.masks = example.targets.masks;
  return ex;
}

ExampleSource SimulatorSource(const SimConfig &cfg) {
  cfg.Validate();
  return [cfg](int64_t step, int item) {
    const uint64_t seed = DeriveSeed(cfg.seed, static_cast<uint64_t>(step),
                                     static_cast<uint64_t>(item));
    return ToTrainingExample(SimulateExample(cfg, seed));
  };
}

// ---------------------------------------------------------------------------
// Dataset loading.

LoadedDataset LoadDataset(const std::string &dir) {
  std::ifstream mf(dir + "/manifest.json");
  Require(mf.good(), ErrorCode::kIo, "cannot open manifest in " + dir);
  LoadedDataset data;
  try {
    json manifest;
    mf >> manifest;
    Require(manifest.value("schema", "") == "sts.manifest.v1",
            ErrorCode::kCompat, "unsupported manifest schema in " + dir);
    const json &parts = manifest.at("partitions");
    for (const json &p : parts) {
      data.partition_names.push_back(p.at("name").get<std::string>());
      const int vs = p.at("vocab_size").get<int>();
      const int fd = p.at("feature_dim").get<int>();
      if (data.vocab_size == 0) {
        data.vocab_size = vs;
        data.feature_dim = fd;
      } else {
        Require(data.vocab_size == vs && data.feature_dim == fd,
                ErrorCode::kCompat,
                "partitions disagree on vocab or feature dims");
      }
    }
    Require(data.vocab_size > 0, ErrorCode::kCompat,
            "manifest lists no partitions");

    std::unordered_map<std::string, std::vector<Turn>> turns_by_id;
    std::unordered_map<std::string, int> raw_frames_by_id;
    std::ifstream tf(dir + "/turns.jsonl");
    Require(tf.good(), ErrorCode::kIo, "cannot open turns.jsonl in " + dir);
    std::string line;
    while (std::getline(tf, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line);
      Require(rec.value("schema", "") == "sts.turns.v1", ErrorCode::kCompat,
              "unsupported turns schema in " + dir);
      const std::string id = rec.at("example_id").get<std::string>();
      raw_frames_by_id[id] = rec.at("total_raw_frames").get<int>();
      std::vector<Turn> turns;
      for (const json &t : rec.at("turns")) {
        Turn turn;
        turn.speaker = t.at("speaker").get<std::string>();
        turn.start_frame = t.at("start_frame").get<int>();
        turn.end_frame = t.at("end_frame").get<int>();
        turn.tokens = t.at("tokens").get<std::vector<int>>();
        turns.push_back(std::move(turn));
      }
      turns_by_id[id] = std::move(turns);
    }

    std::unordered_map<std::string, Mat> feats_by_id;
    std::ifstream ff(dir + "/features.jsonl");
    Require(ff.good(), ErrorCode::kIo, "cannot open features.jsonl in " + dir);
    while (std::getline(ff, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line);
      Require(rec.value("schema", "") == "sts.features.v1", ErrorCode::kCompat,
              "unsupported features schema in " + dir);
      const std::string id = rec.at("example_id").get<std::string>();
      Mat raw(rec.at("raw_frames").get<int>(), rec.at("dim").get<int>());
      std::vector<double> flat = rec.at("data").get<std::vector<double>>();
      Require(flat.size() == raw.v.size(), ErrorCode::kCompat,
              "feature payload size mismatch for " + id);
      raw.v = std::move(flat);
      feats_by_id[id] = std::move(raw);
    }

    for (const json &meta : manifest.at("examples")) {
      LoadedExample ex;
      ex.id = meta.at("id").get<std::string>();
      ex.partition = meta.at("partition").get<std::string>();
      ex.session = meta.at("session").get<int>();
      auto ti = turns_by_id.find(ex.id);
      auto fi = feats_by_id.find(ex.id);
      Require(ti != turns_by_id.end() && fi != feats_by_id.end(),
              ErrorCode::kCompat, "dataset files miss example " + ex.id);
      ex.turns = ti->second;
      ex.total_raw_frames = raw_frames_by_id[ex.id];
      Require(fi->second.cols == data.feature_dim, ErrorCode::kCompat,
              "feature width mismatch for " + ex.id);
      ex.features = StackFrames(fi->second);
      data.examples.push_back(std::move(ex));
    }
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kCompat,
                "corrupted dataset in " + dir + ": " + e.what());
  }
  return data;
}

// ---------------------------------------------------------------------------
// Hypotheses I/O.

void WriteHypotheses(const std::string &path,
                     const std::vector<HypRecord> &hyps) {
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kIo, "cannot write hypotheses: " + path);
  for (const HypRecord &rec : hyps) {
    json channels = json::array();
    for (const ChannelHypothesis &ch : rec.channels) {
      json emissions = json::array();
      for (const Emission &e : ch.emissions)
        emissions.push_back({{"token", e.token}, {"frame", e.frame}});
      channels.push_back({{"channel", ch.channel}, {"emissions", emissions}});
    }
    json line{{"schema", "sts.hyps.v1"},
              {"example_id", rec.id},
              {"channels", channels}};
    out << line.dump() << "\n";
  }
  out.close();
  Require(out.good(), ErrorCode::kIo, "failed writing hypotheses: " + path);
}

std::vector<HypRecord> ReadHypotheses(const std::string &path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot open hypotheses: " + path);
  std::vector<HypRecord> out;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line);
      Require(rec.value("schema", "") == "sts.hyps.v1", ErrorCode::kCompat,
              "unsupported hypotheses schema in " + path);
      HypRecord hyp;
      hyp.id = rec.at("example_id").get<std::string>();
      for (const json &ch : rec.at("channels")) {
        ChannelHypothesis channel;
        channel.channel = ch.at("channel").get<int>();
        for (const json &e : ch.at("emissions"))
          channel.emissions.push_back(
              Emission{e.at("token").get<int>(), e.at("frame").get<int>()});
        hyp.channels.push_back(std::move(channel));
      }
      out.push_back(std::move(hyp));
    }
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kCompat,
                "corrupted hypotheses in " + path + ": " + e.what());
  }
  return out;
}

std::vector<HypRecord> OracleHypotheses(const LoadedDataset &data) {
  Vocab vocab;
  vocab.size = data.vocab_size;
  std::vector<HypRecord> hyps;
  for (const LoadedExample &ex : data.examples) {
    ChannelTargets ref = BuildTargets(ex.turns, vocab, ex.total_raw_frames);
    HypRecord rec;
    rec.id = ex.id;
    rec.channels.resize(2);
    for (int c = 0; c < 2; ++c)
      rec.channels[static_cast<size_t>(c)].channel = c;
    for (size_t k = 0; k < ref.order.size(); ++k) {
      const TurnRef &r = ref.order[k];
      std::vector<Emission> &em =
          rec.channels[static_cast<size_t>(r.channel)].emissions;
      if (k != 0) em.push_back({Vocab::kSot, r.enc_start});
      for (int tok : ex.turns[static_cast<size_t>(r.turn_index)].tokens)
        em.push_back({tok, r.enc_start});
      if (k + 1 != ref.order.size()) em.push_back({Vocab::kEot, r.enc_end});
    }
    hyps.push_back(std::move(rec));
  }
  return hyps;
}

// ---------------------------------------------------------------------------
// Scoring.

namespace {

std::vector<int> StripControlTokens(const ChannelHypothesis &hyp,
                                    const Vocab &vocab) {
  std::vector<int> out;
  for (const Emission &e : hyp.emissions)
    if (vocab.IsContent(e.token)) out.push_back(e.token);
  return out;
}

PartitionScore &FindPartition(std::vector<PartitionScore> *parts,
                              const std::string &name) {
  for (PartitionScore &p : *parts)
    if (p.name == name) return p;
  parts->push_back(PartitionScore{name, 0, {}, {}});
  return parts->back();
}

}  // namespace

EvalReport ScoreDataset(const LoadedDataset &data,
                        const std::vector<HypRecord> &hyps,
                        const EvalSettings &eval) {
  eval.Validate();
  Require(data.vocab_size >= Vocab::kFirstContent + 1, ErrorCode::kCompat,
          "dataset vocab too small");
  std::unordered_map<std::string, const HypRecord *> by_id;
  for (const HypRecord &h : hyps) {
    Require(by_id.emplace(h.id, &h).second, ErrorCode::kValue,
            "duplicate hypothesis for example " + h.id);
  }
  Require(by_id.size() == data.examples.size(), ErrorCode::kValue,
          "hypothesis count does not match dataset");

  Vocab vocab;
  vocab.size = data.vocab_size;
  EvalReport report;
  report.overall.name = "overall";
  report.frame_ms = eval.frame_ms;
  for (const std::string &name : data.partition_names)
    FindPartition(&report.partitions, name);

  for (const LoadedExample &ex : data.examples) {
    auto it = by_id.find(ex.id);
    Require(it != by_id.end(), ErrorCode::kValue,
            "missing hypothesis for example " + ex.id);
    const HypRecord &hyp = *it->second;
    Require(hyp.channels.size() == 2, ErrorCode::kValue,
            "expected two hypothesis channels for " + ex.id);

    // Reference turns in temporal order, plus per-turn encoder-frame spans.
    ChannelTargets ref = BuildTargets(ex.turns, vocab, ex.total_raw_frames);
    std::vector<std::vector<int>> ref_turn_tokens;
    for (const TurnRef &r : ref.order)
      ref_turn_tokens.push_back(ex.turns[static_cast<size_t>(r.turn_index)].tokens);

    OrcResult orc = OrcBestAlignment(ref_turn_tokens,
                                     StripControlTokens(hyp.channels[0], vocab),
                                     StripControlTokens(hyp.channels[1], vocab));
    PartitionScore &part = FindPartition(&report.partitions, ex.partition);
    part.counts.Add(orc.counts);
    report.overall.counts.Add(orc.counts);
    ++part.n_examples;
    ++report.overall.n_examples;

    const int hyp_turns = CountTurns(hyp.channels, vocab);
    part.turn_stats.Add(static_cast<int>(ex.turns.size()), hyp_turns);
    report.overall.turn_stats.Add(static_cast<int>(ex.turns.size()), hyp_turns);

    std::vector<SplitResult> splits = {SplitHypothesis(hyp.channels[0], vocab),
                                       SplitHypothesis(hyp.channels[1], vocab)};
    LatencyScore latency =
        ScoreLatency(ref.order, MergeTurnHypotheses(splits), eval.frame_ms);
    if (latency.scored) {
      ++report.latency_scored_examples;
      report.latency_samples.insert(report.latency_samples.end(),
                                    latency.samples.begin(),
                                    latency.samples.end());
    } else {
      ++report.latency_skips[latency.skip_reason];
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering. All numbers are fixed-format so reports are byte-stable.

namespace {

const std::vector<int> kReportPercentiles = {50, 60, 70, 80, 90};

std::string Fmt(const char *format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

json PartitionToJson(const PartitionScore &p) {
  json j{{"name", p.name},
         {"n_examples", p.n_examples},
         {"wer", p.counts.Wer()},
         {"substitutions", p.counts.substitutions},
         {"deletions", p.counts.deletions},
         {"insertions", p.counts.insertions},
         {"reference_length", p.counts.ref_len},
         {"turn_count_accuracy", p.turn_stats.Accuracy()},
         {"n_examples_gt2", p.turn_stats.total_gt2}};
  std::optional<double> gt2 = p.turn_stats.AccuracyGt2();
  j["turn_count_accuracy_gt2"] = gt2.has_value() ? json(*gt2) : json(nullptr);
  return j;
}

json LatencyBlockJson(const EvalReport &report) {
  json rows = json::array();
  for (const LatencyRow &row :
       PercentileTable(report.latency_samples, kReportPercentiles)) {
    json r{{"kind", LatencyKindName(row.kind)},
           {"count", row.count},
           {"defined", row.defined},
           {"mean", row.defined ? json(row.mean) : json(nullptr)}};
    for (size_t i = 0; i < kReportPercentiles.size(); ++i)
      r["p" + std::to_string(kReportPercentiles[i])] =
          row.defined ? json(row.percentiles[i]) : json(nullptr);
    rows.push_back(std::move(r));
  }
  json skips = json::object();
  for (const auto &kv : report.latency_skips) skips[kv.first] = kv.second;
  return json{{"frame_ms", report.frame_ms},
              {"scored_examples", report.latency_scored_examples},
              {"skips", skips},
              {"rows", rows}};
}

void AppendLatencyText(const EvalReport &report, bool extended,
                       std::string *out) {
  std::vector<int> ps = extended ? kReportPercentiles : std::vector<int>{50, 90};
  std::vector<LatencyRow> rows =
      PercentileTable(report.latency_samples, kReportPercentiles);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %7s %9s", "metric", "count", "mean");
  *out += buf;
  for (int p : ps) {
    std::snprintf(buf, sizeof(buf), " %8s", ("p" + std::to_string(p)).c_str());
    *out += buf;
  }
  *out += "\n";
  for (const LatencyRow &row : rows) {
    if (!row.defined) {
      std::snprintf(buf, sizeof(buf), "%-8s %7lld %9s", LatencyKindName(row.kind),
                    row.count, "-");
      *out += buf;
      for (size_t i = 0; i < ps.size(); ++i) *out += "        -";
      *out += "\n";
      continue;
    }
    std::snprintf(buf, sizeof(buf), "%-8s %7lld %9.1f", LatencyKindName(row.kind),
                  row.count, row.mean);
    *out += buf;
    for (int p : ps) {
      const size_t idx = static_cast<size_t>(
          std::find(kReportPercentiles.begin(), kReportPercentiles.end(), p) -
          kReportPercentiles.begin());
      std::snprintf(buf, sizeof(buf), " %8.1f", row.percentiles[idx]);
      *out += buf;
    }
    *out += "\n";
  }
  std::snprintf(buf, sizeof(buf), "scored examples: %lld\n",
                report.latency_scored_examples);
  *out += buf;
  for (const auto &kv : report.latency_skips) {
    std::snprintf(buf, sizeof(buf), "skipped (%s): %lld\n", kv.first.c_str(),
                  kv.second);
    *out += buf;
  }
}

}  // namespace

std::string ReportToJson(const EvalReport &report) {
  json j{{"schema", "sts.report.v1"},
         {"overall", PartitionToJson(report.overall)},
         {"latency", LatencyBlockJson(report)}};
  json parts = json::array();
  for (const PartitionScore &p : report.partitions)
    parts.push_back(PartitionToJson(p));
  j["partitions"] = std::move(parts);
  return j.dump(2) + "\n";
}

std::string ReportToText(const EvalReport &report, bool extended_percentiles) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-12s %6s %8s %6s %6s %6s %8s %8s %9s\n",
                "partition", "n", "WER", "S", "D", "I", "refLen", "turnAcc",
                "turnAcc>2");
  out += buf;
  auto row = [&](const PartitionScore &p) {
    std::optional<double> gt2 = p.turn_stats.AccuracyGt2();
    std::snprintf(buf, sizeof(buf),
                  "%-12s %6d %8.4f %6lld %6lld %6lld %8lld %8.4f %9s\n",
                  p.name.c_str(), p.n_examples, p.counts.Wer(),
                  p.counts.substitutions, p.counts.deletions,
                  p.counts.insertions, p.counts.ref_len,
                  p.turn_stats.Accuracy(),
                  gt2.has_value() ? Fmt("%.4f", *gt2).c_str() : "-");
    out += buf;
  };
  for (const PartitionScore &p : report.partitions) row(p);
  row(report.overall);
  out += "\n";
  AppendLatencyText(report, extended_percentiles, &out);
  return out;
}

std::string LatencyToJson(const EvalReport &report) {
  json samples = json::array();
  for (const LatencySample &s : report.latency_samples)
    samples.push_back({{"kind", LatencyKindName(s.kind)}, {"ms", s.ms}});
  json j{{"schema", "sts.latency.v1"},
         {"latency", LatencyBlockJson(report)},
         {"samples", std::move(samples)}};
  return j.dump(2) + "\n";
}

std::string LatencyToText(const EvalReport &report, bool extended_percentiles) {
  std::string out;
  AppendLatencyText(report, extended_percentiles, &out);
  return out;
}

// ---------------------------------------------------------------------------
// Drivers.

namespace {

void EnsureDir(const std::string &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Require(!ec, ErrorCode::kIo, "cannot create directory: " + dir);
}

void WriteFileOrThrow(const std::string &path, const std::string &content) {
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kIo, "cannot write: " + path);
  out << content;
  out.close();
  Require(out.good(), ErrorCode::kIo, "failed writing: " + path);
}

}  // namespace

SimulateOutputs RunSimulate(const ExperimentConfig &cfg,
                            const std::string &out_dir, int n_override,
                            std::optional<uint64_t> seed_override) {
  std::vector<EvalPartitionSpec> partitions = cfg.eval_partitions;
  if (n_override >= 0)
    for (EvalPartitionSpec &p : partitions) p.n_examples = n_override;
  const uint64_t seed = seed_override.value_or(cfg.eval_seed);
  EnsureDir(out_dir);
  EvalSet set = MakeEvalSet(partitions, seed, out_dir);

  SimulateOutputs out;
  out.dataset_dir = out_dir;
  out.total_examples = static_cast<int>(set.examples.size());
  for (const EvalPartitionSpec &p : partitions) {
    std::vector<MixtureExample> slice;
    for (size_t i = 0; i < set.meta.size(); ++i)
      if (set.meta[i].partition == p.name) slice.push_back(set.examples[i]);
    out.partitions.push_back(
        PartitionSummary{p.name, p.n_examples, MeanOverlapRatio(slice)});
  }
  return out;
}

TrainOutputs RunTraining(const ExperimentConfig &cfg, const std::string &out_dir,
                         int64_t steps_override,
                         const std::string &resume_checkpoint) {
  EnsureDir(out_dir);
  TrainConfig train = cfg.train;
  if (steps_override >= 0) train.max_steps = static_cast<int>(steps_override);

  int64_t start_step = 0;
  StsModel model = [&]() {
    if (resume_checkpoint.empty()) return StsModel(cfg.model);
    StsModel loaded = StsModel::Load(resume_checkpoint, &start_step);
    Require(loaded.config().vocab_size == cfg.model.vocab_size &&
                loaded.config().feature_dim == cfg.model.feature_dim,
            ErrorCode::kCompat,
            "resume checkpoint does not match the configured model");
    return loaded;
  }();
  Require(start_step <= train.max_steps, ErrorCode::kValue,
          "resume step is beyond max_steps");

  TrainOutputs out;
  out.checkpoint_path = out_dir + "/model.ckpt";
  out.loss_log_path = out_dir + "/loss_log.jsonl";
  out.run = TrainLoop(&model, train, SimulatorSource(cfg.train_sim), start_step,
                      out_dir + "/nan_dump.json");
  model.Save(out.checkpoint_path, out.run.final_step);

  std::ofstream log(out.loss_log_path,
                    start_step > 0 ? std::ios::app : std::ios::out);
  Require(log.good(), ErrorCode::kIo, "cannot write " + out.loss_log_path);
  for (const TrainLogEntry &e : out.run.log) {
    json line{{"schema", "sts.loss.v1"},
              {"step", e.step},
              {"lr", e.lr},
              {"loss", e.loss},
              {"rnnt_loss", e.rnnt_loss},
              {"mask_loss", e.mask_loss},
              {"norm_ratio", e.norm_ratio.defined ? json(e.norm_ratio.value)
                                                  : json(nullptr)},
              {"norm_ratio_capped", e.norm_ratio.capped}};
    log << line.dump() << "\n";
  }
  log.close();
  Require(log.good(), ErrorCode::kIo, "failed writing " + out.loss_log_path);
  return out;
}

EvaluateOutputs RunEvaluation(const StsModel &model, const LoadedDataset &data,
                              const std::string &out_dir,
                              const EvalSettings &eval) {
  eval.Validate();
  Require(model.config().vocab_size == data.vocab_size, ErrorCode::kCompat,
          "checkpoint vocab does not match dataset vocab");
  Require(model.config().feature_dim == data.feature_dim, ErrorCode::kCompat,
          "checkpoint feature_dim does not match dataset");
  std::vector<HypRecord> hyps;
  for (const LoadedExample &ex : data.examples) {
    HypRecord rec;
    rec.id = ex.id;
    rec.channels = model.GreedyDecode(ex.features, eval.max_symbols_per_frame);
    hyps.push_back(std::move(rec));
  }
  EnsureDir(out_dir);
  const std::string hyps_path = out_dir + "/hyps.jsonl";
  WriteHypotheses(hyps_path, hyps);
  EvaluateOutputs out = RunEvaluation(data, hyps, out_dir, eval);
  out.hyps_path = hyps_path;
  return out;
}

EvaluateOutputs RunEvaluation(const LoadedDataset &data,
                              const std::vector<HypRecord> &hyps,
                              const std::string &out_dir,
                              const EvalSettings &eval) {
  EnsureDir(out_dir);
  EvaluateOutputs out;
  out.report = ScoreDataset(data, hyps, eval);
  out.report_json_path = out_dir + "/report.json";
  out.report_text_path = out_dir + "/report.txt";
  WriteFileOrThrow(out.report_json_path, ReportToJson(out.report));
  WriteFileOrThrow(out.report_text_path,
                   ReportToText(out.report, eval.extended_percentiles));
  return out;
}

LatencyOutputs RunLatencyAnalysis(const LoadedDataset &data,
                                  const std::vector<HypRecord> &hyps,
                                  const std::string &out_dir,
                                  const EvalSettings &eval) {
  EnsureDir(out_dir);
  LatencyOutputs out;
  out.report = ScoreDataset(data, hyps, eval);
  out.json_path = out_dir + "/latency.json";
  out.text_path = out_dir + "/latency.txt";
  WriteFileOrThrow(out.json_path, LatencyToJson(out.report));
  WriteFileOrThrow(out.text_path,
                   LatencyToText(out.report, eval.extended_percentiles));
  return out;
}

}  // namespace sts
