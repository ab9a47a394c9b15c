// src/simulator.cc

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

#include "sts/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace sts {

using nlohmann::json;

const char *OverlapStyleName(OverlapStyle style) {
  switch (style) {
    case OverlapStyle::kZeroS: return "0S";
    case OverlapStyle::kZeroL: return "0L";
    case OverlapStyle::kOv10: return "OV10";
    case OverlapStyle::kOv20: return "OV20";
    case OverlapStyle::kOv30: return "OV30";
    case OverlapStyle::kOv40: return "OV40";
    case OverlapStyle::kMixed: return "mixed";
  }
  return "?";
}

OverlapStyle ParseOverlapStyle(const std::string &name) {
  for (OverlapStyle s : {OverlapStyle::kZeroS, OverlapStyle::kZeroL,
                         OverlapStyle::kOv10, OverlapStyle::kOv20,
                         OverlapStyle::kOv30, OverlapStyle::kOv40,
                         OverlapStyle::kMixed}) {
    if (name == OverlapStyleName(s)) return s;
  }
  throw Error(ErrorCode::kConfig, "unknown overlap style: " + name);
}

void SimConfig::Validate() const {
  vocab.Validate();
  Require(feature_dim >= 1, ErrorCode::kConfig, "feature_dim must be >= 1");
  Require(n_turns_min >= 1 && n_turns_min <= n_turns_max, ErrorCode::kConfig,
          "invalid turn count range");
  Require(tokens_per_turn_min >= 1 &&
              tokens_per_turn_min <= tokens_per_turn_max,
          ErrorCode::kConfig, "invalid tokens-per-turn range");
  Require(frames_per_token >= 1, ErrorCode::kConfig,
          "frames_per_token must be >= 1");
  Require(energy_db_min <= energy_db_max, ErrorCode::kConfig,
          "invalid energy ratio range");
  Require(noise_std >= 0.0, ErrorCode::kConfig, "noise_std must be >= 0");
  Require(max_duration_frames >= frames_per_token, ErrorCode::kConfig,
          "max_duration_frames too small");
}

double TokenEmbedding(int token, int dim) {
  uint64_t h = SplitMix64((static_cast<uint64_t>(token) << 20) ^
                          static_cast<uint64_t>(dim) ^ 0x5157454dULL);
  double u = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
  return 2.0 * u - 1.0;
}

Mat SynthUtterance(const std::vector<int> &tokens, int frames_per_token,
                   int feature_dim, double noise_std, Rng *rng) {
  Require(!tokens.empty(), ErrorCode::kValue, "utterance needs tokens");
  Mat out(static_cast<int>(tokens.size()) * frames_per_token, feature_dim);
  int row = 0;
  for (int tok : tokens) {
    for (int f = 0; f < frames_per_token; ++f, ++row) {
      for (int d = 0; d < feature_dim; ++d) {
        double x = TokenEmbedding(tok, d);
        if (noise_std > 0.0) x += rng->Normal(0.0, noise_std);
        out(row, d) = x;
      }
    }
  }
  return out;
}

namespace {

// Per-gap style for placement; kMixed picks one of the six base styles.
OverlapStyle PickGapStyle(OverlapStyle style, Rng *rng) {
  if (style != OverlapStyle::kMixed) return style;
  static const OverlapStyle kBase[] = {OverlapStyle::kZeroS, OverlapStyle::kZeroL,
                                       OverlapStyle::kOv10, OverlapStyle::kOv20,
                                       OverlapStyle::kOv30, OverlapStyle::kOv40};
  return kBase[rng->UniformInt(0, 5)];
}

double OverlapTarget(OverlapStyle style) {
  switch (style) {
    case OverlapStyle::kOv10: return 0.10;
    case OverlapStyle::kOv20: return 0.20;
    case OverlapStyle::kOv30: return 0.30;
    case OverlapStyle::kOv40: return 0.40;
    default: return 0.0;
  }
}

}  // namespace

std::vector<int> PlaceTurns(const std::vector<int> &lengths, OverlapStyle style,
                            Rng *rng) {
  Require(!lengths.empty(), ErrorCode::kValue, "no turns to place");
  for (int len : lengths) {
    Require(len >= 1, ErrorCode::kValue, "turn length must be >= 1");
  }
  std::vector<int> starts(lengths.size(), 0);
  int prev_prev_end = 0;  // a third speaker must never become active
  for (size_t k = 1; k < lengths.size(); ++k) {
    int prev_start = starts[k - 1];
    int prev_end = prev_start + lengths[k - 1];
    OverlapStyle gap_style = PickGapStyle(style, rng);
    int start;
    if (gap_style == OverlapStyle::kZeroS) {
      start = prev_end + static_cast<int>(rng->UniformInt(1, 10));
    } else if (gap_style == OverlapStyle::kZeroL) {
      start = prev_end + static_cast<int>(rng->UniformInt(50, 150));
    } else {
      double q0 = OverlapTarget(gap_style);
      double q = rng->Uniform(q0 - 0.05, q0 + 0.05);
      int ov = static_cast<int>(std::lround(
          q * std::min(lengths[k - 1], lengths[k])));
      // Caps: stay inside the previous turn, after the turn before it, and
      // strictly after the previous start.
      ov = std::min(ov, prev_end - prev_prev_end);
      ov = std::min(ov, lengths[k - 1] - 1);
      ov = std::max(ov, 0);
      start = prev_end - ov;
    }
    starts[k] = start;
    prev_prev_end = prev_end;
  }
  return starts;
}

MixResult MixTurns(const std::vector<Mat> &blocks, const std::vector<int> &starts,
                   const std::vector<double> &gains_db, double noise_std,
                   int feature_dim, Rng *rng) {
  Require(!blocks.empty(), ErrorCode::kDimension, "no blocks to mix");
  Require(blocks.size() == starts.size() && blocks.size() == gains_db.size(),
          ErrorCode::kDimension, "blocks/starts/gains length mismatch");

  std::vector<double> energy(blocks.size(), 0.0);
  for (size_t k = 0; k < blocks.size(); ++k) {
    Require(blocks[k].cols == feature_dim, ErrorCode::kDimension,
            "block feature width mismatch");
    Require(blocks[k].rows > 0, ErrorCode::kDimension, "empty block");
    double e = 0.0;
    for (double x : blocks[k].v) e += x * x;
    energy[k] = e / static_cast<double>(blocks[k].v.size());
    Require(energy[k] > 0.0, ErrorCode::kNumeric, "block has zero energy");
  }

  MixResult out;
  out.gains.assign(blocks.size(), 1.0);
  out.realized_db.assign(blocks.size(), 0.0);
  for (size_t k = 1; k < blocks.size(); ++k) {
    // Match energy to the first turn, then apply the requested dB ratio.
    out.gains[k] = std::sqrt(energy[0] / energy[k]) *
                   std::pow(10.0, gains_db[k] / 20.0);
    out.realized_db[k] =
        10.0 * std::log10(energy[k] * out.gains[k] * out.gains[k] / energy[0]);
  }

  int total = 0;
  for (size_t k = 0; k < blocks.size(); ++k) {
    Require(starts[k] >= 0, ErrorCode::kValue, "negative block start");
    total = std::max(total, starts[k] + blocks[k].rows);
  }
  out.features = Mat(total, feature_dim, 0.0);
  std::vector<bool> covered(total, false);
  for (size_t k = 0; k < blocks.size(); ++k) {
    for (int r = 0; r < blocks[k].rows; ++r) {
      covered[starts[k] + r] = true;
      for (int d = 0; d < feature_dim; ++d) {
        out.features(starts[k] + r, d) += out.gains[k] * blocks[k](r, d);
      }
    }
  }
  // Background noise lives on silence frames only.
  if (noise_std > 0.0) {
    for (int r = 0; r < total; ++r) {
      if (covered[r]) continue;
      for (int d = 0; d < feature_dim; ++d) {
        out.features(r, d) = rng->Normal(0.0, noise_std);
      }
    }
  }
  return out;
}

Mat StackFrames(const Mat &raw) {
  Require(raw.rows > 0, ErrorCode::kDimension, "cannot stack zero frames");
  int t_enc = RawToEncoderFrameCount(raw.rows);
  Mat out(t_enc, raw.cols * kFrameStack, 0.0);
  for (int te = 0; te < t_enc; ++te) {
    for (int s = 0; s < kFrameStack; ++s) {
      int tr = te * kFrameStack + s;
      if (tr >= raw.rows) break;  // zero padding on the tail
      for (int d = 0; d < raw.cols; ++d) {
        out(te, s * raw.cols + d) = raw(tr, d);
      }
    }
  }
  return out;
}

MixtureExample SimulateExample(const SimConfig &cfg, uint64_t seed) {
  cfg.Validate();
  Rng rng(seed);

  for (int attempt = 0; attempt < 100; ++attempt) {
    int n = static_cast<int>(rng.UniformInt(cfg.n_turns_min, cfg.n_turns_max));
    std::vector<std::vector<int>> turn_tokens(n);
    std::vector<int> lengths(n);
    for (int k = 0; k < n; ++k) {
      int m = static_cast<int>(
          rng.UniformInt(cfg.tokens_per_turn_min, cfg.tokens_per_turn_max));
      for (int j = 0; j < m; ++j) {
        turn_tokens[k].push_back(static_cast<int>(
            rng.UniformInt(Vocab::kFirstContent, cfg.vocab.size - 1)));
      }
      lengths[k] = m * cfg.frames_per_token;
    }
    std::vector<int> starts = PlaceTurns(lengths, cfg.style, &rng);
    int t_raw = 0;
    for (int k = 0; k < n; ++k) t_raw = std::max(t_raw, starts[k] + lengths[k]);
    if (t_raw > cfg.max_duration_frames) continue;  // resample the geometry

    std::vector<double> gains_db(n, 0.0);
    for (int k = 1; k < n; ++k) {
      gains_db[k] = rng.Uniform(cfg.energy_db_min, cfg.energy_db_max);
    }
    std::vector<Mat> blocks;
    for (int k = 0; k < n; ++k) {
      blocks.push_back(SynthUtterance(turn_tokens[k], cfg.frames_per_token,
                                      cfg.feature_dim, cfg.noise_std, &rng));
    }
    MixResult mix = MixTurns(blocks, starts, gains_db, cfg.noise_std,
                             cfg.feature_dim, &rng);
    if (cfg.smear) {
      // Causal 3-tap decay filter across raw frames.
      Mat smeared = mix.features;
      double a = cfg.smear_decay;
      for (int r = 0; r < smeared.rows; ++r) {
        for (int d = 0; d < smeared.cols; ++d) {
          double x = mix.features(r, d);
          if (r >= 1) x += a * mix.features(r - 1, d);
          if (r >= 2) x += a * a * mix.features(r - 2, d);
          smeared(r, d) = x;
        }
      }
      mix.features = std::move(smeared);
    }

    MixtureExample ex;
    ex.seed = seed;
    ex.style = OverlapStyleName(cfg.style);
    ex.features_raw = std::move(mix.features);
    ex.features = StackFrames(ex.features_raw);
    ex.turn_gains = std::move(mix.gains);
    ex.turn_db = std::move(mix.realized_db);
    for (int k = 0; k < n; ++k) {
      Turn t;
      t.speaker = (k % 2 == 0) ? "spkA" : "spkB";
      t.start_frame = starts[k];
      t.end_frame = starts[k] + lengths[k];
      t.tokens = turn_tokens[k];
      ex.turns.push_back(std::move(t));
    }
    ex.targets = BuildTargets(ex.turns, cfg.vocab, t_raw);
    return ex;
  }
  throw Error(ErrorCode::kValue,
              "geometry rejected 100 times; max_duration_frames too tight");
}

double MeanOverlapRatio(const std::vector<MixtureExample> &examples) {
  double sum = 0.0;
  long long pairs = 0;
  for (const MixtureExample &ex : examples) {
    for (size_t k = 1; k < ex.turns.size(); ++k) {
      const Turn &a = ex.turns[k - 1];
      const Turn &b = ex.turns[k];
      int ov = std::max(0, a.end_frame - b.start_frame);
      int shorter = std::min(a.end_frame - a.start_frame,
                             b.end_frame - b.start_frame);
      sum += static_cast<double>(ov) / static_cast<double>(shorter);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

namespace {

json TurnToJson(const Turn &t) {
  return json{{"speaker", t.speaker},
              {"start_frame", t.start_frame},
              {"end_frame", t.end_frame},
              {"tokens", t.tokens}};
}

}  // namespace

EvalSet MakeEvalSet(const std::vector<EvalPartitionSpec> &partitions,
                    uint64_t base_seed, const std::string &out_dir) {
  EvalSet set;
  set.base_seed = base_seed;
  set.partitions = partitions;

  for (size_t p = 0; p < partitions.size(); ++p) {
    const EvalPartitionSpec &spec = partitions[p];
    Require(!spec.name.empty(), ErrorCode::kConfig, "partition needs a name");
    Require(spec.n_examples >= 0, ErrorCode::kConfig,
            "negative example count");
    for (int i = 0; i < spec.n_examples; ++i) {
      uint64_t seed = DeriveSeed(base_seed, p, static_cast<uint64_t>(i));
      MixtureExample ex = SimulateExample(spec.config, seed);
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%04d", spec.name.c_str(), i);
      ExampleMeta meta;
      meta.id = id;
      meta.partition = spec.name;
      meta.session = i % 10;
      meta.seed = seed;
      meta.raw_frames = ex.features_raw.rows;
      meta.n_turns = static_cast<int>(ex.turns.size());
      set.meta.push_back(std::move(meta));
      set.examples.push_back(std::move(ex));
    }
  }

  if (out_dir.empty()) return set;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  Require(!ec, ErrorCode::kIo, "cannot create output dir: " + out_dir);

  std::ofstream turns_out(out_dir + "/turns.jsonl");
  std::ofstream feats_out(out_dir + "/features.jsonl");
  Require(turns_out.good() && feats_out.good(), ErrorCode::kIo,
          "cannot write dataset files in " + out_dir);
  for (size_t i = 0; i < set.examples.size(); ++i) {
    const MixtureExample &ex = set.examples[i];
    const ExampleMeta &meta = set.meta[i];
    json turns = json::array();
    for (const Turn &t : ex.turns) turns.push_back(TurnToJson(t));
    json line{{"schema", "sts.turns.v1"},
              {"example_id", meta.id},
              {"partition", meta.partition},
              {"session", meta.session},
              {"total_raw_frames", meta.raw_frames},
              {"turns", turns}};
    turns_out << line.dump() << "\n";

    json feat{{"schema", "sts.features.v1"},
              {"example_id", meta.id},
              {"raw_frames", ex.features_raw.rows},
              {"dim", ex.features_raw.cols},
              {"data", ex.features_raw.v}};
    feats_out << feat.dump() << "\n";
  }
  turns_out.close();
  feats_out.close();
  Require(turns_out.good() && feats_out.good(), ErrorCode::kIo,
          "failed writing dataset files in " + out_dir);

  json manifest{{"schema", "sts.manifest.v1"},
                {"base_seed", base_seed},
                {"frame_stack", kFrameStack},
                {"files",
                 {{"turns", "turns.jsonl"}, {"features", "features.jsonl"}}}};
  manifest["partitions"] = json::array();
  for (size_t p = 0; p < partitions.size(); ++p) {
    std::vector<MixtureExample> slice;
    for (size_t i = 0; i < set.meta.size(); ++i) {
      if (set.meta[i].partition == partitions[p].name) {
        slice.push_back(set.examples[i]);
      }
    }
    manifest["partitions"].push_back(
        {{"name", partitions[p].name},
         {"style", OverlapStyleName(partitions[p].config.style)},
         {"n_examples", partitions[p].n_examples},
         {"vocab_size", partitions[p].config.vocab.size},
         {"feature_dim", partitions[p].config.feature_dim},
         {"mean_overlap_ratio", MeanOverlapRatio(slice)}});
  }
  manifest["examples"] = json::array();
  for (const ExampleMeta &meta : set.meta) {
    manifest["examples"].push_back({{"id", meta.id},
                                    {"partition", meta.partition},
                                    {"session", meta.session},
                                    {"seed", meta.seed},
                                    {"raw_frames", meta.raw_frames},
                                    {"n_turns", meta.n_turns}});
  }
  std::ofstream mf(out_dir + "/manifest.json");
  Require(mf.good(), ErrorCode::kIo, "cannot write manifest in " + out_dir);
  mf << manifest.dump(2) << "\n";
  mf.close();
  Require(mf.good(), ErrorCode::kIo, "failed writing manifest in " + out_dir);
  return set;
}

}  // namespace sts
