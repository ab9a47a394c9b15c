// tests/test_model.cc

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

#include "sts/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "sts/lattice.hpp"
#include "sts/rng.hpp"

#include "oracles.hpp"

namespace sts {
namespace {

ModelConfig MicroConfig(uint64_t seed) {
  ModelConfig c;
  c.feature_dim = 2;
  c.hidden_dim = 3;
  c.joint_dim = 3;
  c.vocab_size = 5;
  c.seed = seed;
  return c;
}

Mat RandomFeatures(int rows, int cols, uint64_t seed) {
  Mat m(rows, cols);
  Rng rng(seed);
  for (double &x : m.v) x = rng.Uniform(-1.0, 1.0);
  return m;
}

// T=4 encoder frames, U=2 and U=1 targets, mixed masks; channel 0 carries an
// <eot> (id 2) so penalty configs have a marked row to act on.
TrainingExample MicroExample(uint64_t seed) {
  TrainingExample ex;
  ex.features = RandomFeatures(4, 6, seed);
  TargetSequence t0;
  t0.tokens = {3, 2};
  t0.eot_id = 2;
  t0.eot_marks = {{1, 1}};
  TargetSequence t1;
  t1.tokens = {4};
  t1.eot_id = 2;
  ex.targets = {t0, t1};
  ex.masks = {{true, true, false, true}, {false, true, true, false}};
  return ex;
}

// Central finite differences over every model parameter.
std::vector<double> ModelFdGrad(StsModel *model, const TrainingExample &ex,
                                const TrainConfig &cfg, double step) {
  const int64_t n = model->params().TotalSize();
  std::vector<double> fd(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double keep = model->params().Flat(i);
    model->params().Flat(i) = keep + step;
    const double right = model->TotalLoss(ex, cfg).loss;
    model->params().Flat(i) = keep - step;
    const double left = model->TotalLoss(ex, cfg).loss;
    model->params().Flat(i) = keep;
    fd[static_cast<size_t>(i)] = (right - left) / (2.0 * step);
  }
  return fd;
}

std::vector<double> FlattenGrads(const ParamSet &grads) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(grads.TotalSize()));
  for (const auto &kv : grads.Items())
    out.insert(out.end(), kv.second.v.begin(), kv.second.v.end());
  return out;
}

TEST_CASE("encoder rejects degenerate inputs") {
  StsModel model(MicroConfig(3));
  CHECK_THROWS_AS(model.Encode(Mat(0, 6)), Error);
  CHECK_THROWS_AS(model.Encode(Mat(4, 5)), Error);
  CHECK_NOTHROW(model.Encode(Mat(1, 6)));
}

TEST_CASE("encoder is causal and channels are distinct") {
  StsModel model(MicroConfig(11));
  Mat x = RandomFeatures(6, 6, 41);
  EncoderOutputs base = model.Encode(x);
  REQUIRE(base.size() == 2);
  CHECK(base[0].rows == 6);
  CHECK(base[0].cols == 3);

  double channel_gap = 0.0;
  for (size_t i = 0; i < base[0].v.size(); ++i)
    channel_gap = std::max(channel_gap, std::fabs(base[0].v[i] - base[1].v[i]));
  CHECK(channel_gap > 1e-6);

  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const int t = static_cast<int>(rng.UniformInt(1, 5));
    Mat perturbed = x;
    for (int j = 0; j < perturbed.cols; ++j)
      perturbed(t, j) += rng.Uniform(-0.5, 0.5);
    EncoderOutputs out = model.Encode(perturbed);
    for (int c = 0; c < 2; ++c) {
      for (int row = 0; row < t; ++row)
        for (int j = 0; j < base[0].cols; ++j)
          CHECK(out[static_cast<size_t>(c)](row, j) ==
                base[static_cast<size_t>(c)](row, j));
      bool changed = false;
      for (int j = 0; j < base[0].cols; ++j)
        changed = changed ||
                  out[static_cast<size_t>(c)](t, j) != base[static_cast<size_t>(c)](t, j);
      CHECK(changed);
    }
  }
}

TEST_CASE("joint lattice slices are normalized and shaped") {
  StsModel model(MicroConfig(5));
  Mat x = RandomFeatures(4, 6, 13);
  EncoderOutputs h = model.Encode(x);

  LogProbLattice lat = model.JointLattice(h[0], {3, 4});
  CHECK(lat.num_frames == 4);
  CHECK(lat.num_tokens == 2);
  CHECK(lat.vocab_size == 5);
  for (int t = 0; t < lat.num_frames; ++t) {
    for (int u = 0; u <= lat.num_tokens; ++u) {
      double z = kLogZero;
      for (int v = 0; v < lat.vocab_size; ++v) z = LogAdd(z, lat.At(t, u, v));
      CHECK(std::fabs(z) < 1e-9);
    }
  }

  LogProbLattice empty = model.JointLattice(h[1], {});
  CHECK(empty.num_frames == 4);
  CHECK(empty.num_tokens == 0);

  CHECK_THROWS_AS(model.JointLattice(h[0], {99}), Error);
  CHECK_THROWS_AS(model.JointLattice(Mat(0, 3), {3}), Error);
}

// Fixture recipe: MicroConfig variant below, features from Rng(99), channel-0
// encoder output, tokens {3,5,4}. Regenerate by rerunning the same calls and
// saving DumpLatticeJson output verbatim.
TEST_CASE("seeded joint lattice matches the stored fixture") {
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.hidden_dim = 4;
  cfg.joint_dim = 3;
  cfg.vocab_size = 6;
  cfg.seed = 23;
  StsModel model(cfg);
  Mat x = RandomFeatures(3, 6, 99);
  LogProbLattice lat = model.JointLattice(model.Encode(x)[0], {3, 5, 4});

  std::ifstream in(std::string(STS_TEST_DIR) + "/fixtures/joint_lattice.json");
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  REQUIRE(j.at("schema").get<std::string>() == "sts.lattice.v1");
  REQUIRE(j.at("t").get<int>() == lat.num_frames);
  REQUIRE(j.at("u").get<int>() == lat.num_tokens);
  REQUIRE(j.at("v").get<int>() == lat.vocab_size);
  const auto &grid = j.at("log_probs");
  for (int t = 0; t < lat.num_frames; ++t)
    for (int u = 0; u <= lat.num_tokens; ++u)
      for (int v = 0; v < lat.vocab_size; ++v)
        CHECK(std::fabs(grid.at(t).at(u).at(v).get<double>() -
                        lat.At(t, u, v)) < 1e-10);
}

TEST_CASE("micro-model parameter gradients match finite differences") {
  TrainConfig plain;
  plain.gamma = 0.5;
  TrainConfig penalized;
  penalized.gamma = 0.25;
  penalized.penalty = PenaltyConfig{0.7, 1};

  for (uint64_t seed = 1; seed <= 20; ++seed) {
    StsModel model(MicroConfig(seed));
    TrainingExample ex = MicroExample(seed + 100);
    const TrainConfig &cfg = seed <= 12 ? plain : penalized;
    std::vector<double> analytic = FlattenGrads(model.TotalLoss(ex, cfg).grads);
    std::vector<double> fd = ModelFdGrad(&model, ex, cfg, 1e-4);
    CHECK(oracle::MaxRelError(analytic, fd) <= 1e-3);
  }
}

TEST_CASE("total loss reduces to the summed channel losses at gamma zero") {
  StsModel model(MicroConfig(9));
  TrainingExample ex = MicroExample(55);
  TrainConfig cfg;
  cfg.gamma = 0.0;
  cfg.fastemit_lambda = 0.1;
  cfg.penalty = PenaltyConfig{0.5, 1};
  LossBundle bundle = model.TotalLoss(ex, cfg);
  CHECK(bundle.loss == bundle.rnnt_loss);

  EncoderOutputs h = model.Encode(ex.features);
  std::vector<LogProbLattice> lattices = {
      model.JointLattice(h[0], ex.targets[0].tokens),
      model.JointLattice(h[1], ex.targets[1].tokens)};
  DatLossResult dat = ComputeDatLoss(lattices, ex.targets,
                                     cfg.fastemit_lambda, cfg.penalty);
  CHECK(bundle.rnnt_loss == doctest::Approx(dat.total_loss).epsilon(1e-12));
}

TEST_CASE("masking loss is linear in gamma") {
  StsModel model(MicroConfig(21));
  TrainingExample ex = MicroExample(77);
  TrainConfig g0;
  g0.gamma = 0.0;
  TrainConfig g10;
  g10.gamma = 10.0;
  LossBundle b0 = model.TotalLoss(ex, g0);
  LossBundle b10 = model.TotalLoss(ex, g10);
  const double direct = MaskingLoss(b0.encoder_outputs, ex.masks);
  CHECK(b0.mask_loss == doctest::Approx(direct).epsilon(1e-12));
  CHECK(b10.loss - b0.loss == doctest::Approx(10.0 * direct).epsilon(1e-12));
  CHECK(b10.rnnt_loss == doctest::Approx(b0.rnnt_loss).epsilon(1e-12));
}

TEST_CASE("masking loss hand values and brute force") {
  EncoderOutputs h = {Mat(3, 2, 1.0), Mat(3, 2, 1.0)};
  std::vector<ActivityMask> all_active = {{true, true, true},
                                          {true, true, true}};
  CHECK(MaskingLoss(h, all_active) == 0.0);

  std::vector<ActivityMask> one_off = {{true, false, true},
                                       {true, true, false}};
  CHECK(MaskingLoss(h, one_off) == 4.0);

  Rng rng(31);
  EncoderOutputs hr = {RandomFeatures(5, 3, 61), RandomFeatures(5, 3, 62)};
  std::vector<ActivityMask> masks(2);
  for (auto &m : masks) {
    m.resize(5);
    for (size_t i = 0; i < m.size(); ++i) m[i] = rng.Uniform() < 0.5;
  }
  double brute = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 5; ++t)
      for (int d = 0; d < 3; ++d)
        if (!masks[static_cast<size_t>(c)][static_cast<size_t>(t)])
          brute += hr[static_cast<size_t>(c)](t, d) * hr[static_cast<size_t>(c)](t, d);
  CHECK(MaskingLoss(hr, masks) == doctest::Approx(brute).epsilon(1e-9));

  std::vector<ActivityMask> bad = {{true}, {true, true, true, true, true}};
  CHECK_THROWS_AS(MaskingLoss(hr, bad), Error);
}

TEST_CASE("norm ratio definitions and sentinels") {
  EncoderOutputs h = {Mat(4, 2, 0.5), Mat(4, 2, 0.5)};
  std::vector<ActivityMask> mixed = {{true, false, true, false},
                                     {false, true, false, true}};
  NormRatioValue r = NormRatio(h, mixed);
  CHECK(r.defined);
  CHECK_FALSE(r.capped);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));

  EncoderOutputs hz = h;
  for (int t : {1, 3}) {
    hz[0](t, 0) = 0.0;
    hz[0](t, 1) = 0.0;
  }
  for (int t : {0, 2}) {
    hz[1](t, 0) = 0.0;
    hz[1](t, 1) = 0.0;
  }
  NormRatioValue capped = NormRatio(hz, mixed);
  CHECK(capped.defined);
  CHECK(capped.capped);
  CHECK(capped.value == 1e9);

  std::vector<ActivityMask> all_active = {{true, true, true, true},
                                          {true, true, true, true}};
  CHECK_FALSE(NormRatio(h, all_active).defined);
  std::vector<ActivityMask> none_active = {{false, false, false, false},
                                           {false, false, false, false}};
  CHECK_FALSE(NormRatio(h, none_active).defined);

  // Direct computation cross-check on a seeded case.
  EncoderOutputs hr = {RandomFeatures(6, 3, 71), RandomFeatures(6, 3, 72)};
  std::vector<ActivityMask> masks = {{true, false, true, true, false, true},
                                     {false, false, true, false, true, true}};
  double a_sum = 0.0, i_sum = 0.0;
  int a_n = 0, i_n = 0;
  for (int c = 0; c < 2; ++c) {
    for (int t = 0; t < 6; ++t) {
      double ss = 0.0;
      for (int d = 0; d < 3; ++d)
        ss += hr[static_cast<size_t>(c)](t, d) * hr[static_cast<size_t>(c)](t, d);
      if (masks[static_cast<size_t>(c)][static_cast<size_t>(t)]) {
        a_sum += std::sqrt(ss);
        ++a_n;
      } else {
        i_sum += std::sqrt(ss);
        ++i_n;
      }
    }
  }
  NormRatioValue seeded = NormRatio(hr, masks);
  CHECK(seeded.defined);
  CHECK(seeded.value ==
        doctest::Approx((a_sum / a_n) / (i_sum / i_n)).epsilon(1e-12));
}

TEST_CASE("channel gradients add up across shared modules") {
  StsModel model(MicroConfig(17));
  TrainingExample ex = MicroExample(91);
  TrainConfig cfg;
  cfg.gamma = 0.3;
  cfg.fastemit_lambda = 0.05;
  std::vector<double> w10 = {1.0, 0.0};
  std::vector<double> w01 = {0.0, 1.0};
  std::vector<double> w11 = {1.0, 1.0};
  LossBundle b10 = model.TotalLoss(ex, cfg, &w10);
  LossBundle b01 = model.TotalLoss(ex, cfg, &w01);
  LossBundle b11 = model.TotalLoss(ex, cfg, &w11);

  CHECK(b11.loss ==
        doctest::Approx(b10.loss + b01.loss).epsilon(1e-12));
  const auto &items11 = b11.grads.Items();
  const auto &items10 = b10.grads.Items();
  const auto &items01 = b01.grads.Items();
  for (size_t k = 0; k < items11.size(); ++k) {
    const std::string &name = items11[k].first;
    for (size_t i = 0; i < items11[k].second.v.size(); ++i) {
      const double sum = items10[k].second.v[i] + items01[k].second.v[i];
      const double got = items11[k].second.v[i];
      CHECK(std::fabs(got - sum) <=
            1e-9 * std::max({1.0, std::fabs(got), std::fabs(sum)}));
      // A weight-zero channel must contribute nothing to the other side's
      // separation encoder.
      if (name.rfind("sep.1.", 0) == 0) CHECK(items10[k].second.v[i] == 0.0);
      if (name.rfind("sep.0.", 0) == 0) CHECK(items01[k].second.v[i] == 0.0);
    }
  }
}

TEST_CASE("fastemit and penalty gradients match the lattice-level convention") {
  StsModel model(MicroConfig(29));
  TrainingExample ex = MicroExample(101);
  ex.masks = {{true, true, true, true}, {true, true, true, true}};

  // Unpenalized FastEmit: d(loss)/d(joint bias) equals the summed
  // softmax-coupled lattice gradient slices.
  TrainConfig cfg;
  cfg.gamma = 0.0;
  cfg.fastemit_lambda = 0.1;
  LossBundle bundle = model.TotalLoss(ex, cfg);
  EncoderOutputs h = model.Encode(ex.features);
  std::vector<LogProbLattice> lattices = {
      model.JointLattice(h[0], ex.targets[0].tokens),
      model.JointLattice(h[1], ex.targets[1].tokens)};
  DatLossResult dat =
      ComputeDatLoss(lattices, ex.targets, cfg.fastemit_lambda, std::nullopt);
  std::vector<double> expected(5, 0.0);
  for (int c = 0; c < 2; ++c)
    for (size_t i = 0; i < dat.per_channel[static_cast<size_t>(c)].grad.size(); ++i)
      expected[i % 5] += dat.per_channel[static_cast<size_t>(c)].grad[i];
  const Tensor &dbo = bundle.grads.Get("joint.bo");
  for (int v = 0; v < 5; ++v)
    CHECK(dbo.v[static_cast<size_t>(v)] ==
          doctest::Approx(expected[static_cast<size_t>(v)]).epsilon(1e-9));

  // Penalized objective: the coupling softmax stays the raw joint posterior
  // while the occupancies come from the penalized lattice.
  TrainConfig pen;
  pen.gamma = 0.0;
  pen.penalty = PenaltyConfig{0.9, 1};
  LossBundle pb = model.TotalLoss(ex, pen);
  std::vector<double> want(5, 0.0);
  for (int c = 0; c < 2; ++c) {
    const LogProbLattice &raw = lattices[static_cast<size_t>(c)];
    TransitionOccupancy occ = ComputeOccupancies(
        ApplyEotPenalty(raw, ex.targets[static_cast<size_t>(c)], *pen.penalty),
        ex.targets[static_cast<size_t>(c)]);
    const int u1 = raw.num_tokens + 1;
    for (int t = 0; t < raw.num_frames; ++t) {
      for (int u = 0; u < u1; ++u) {
        const size_t node = static_cast<size_t>(t) * u1 + u;
        const double node_occ = occ.blank[node] + occ.label[node];
        for (int v = 0; v < 5; ++v)
          want[static_cast<size_t>(v)] += std::exp(raw.At(t, u, v)) * node_occ;
        want[static_cast<size_t>(raw.blank_id)] -= occ.blank[node];
        if (u < raw.num_tokens)
          want[static_cast<size_t>(
              ex.targets[static_cast<size_t>(c)].tokens[static_cast<size_t>(u)])] -=
              occ.label[node];
      }
    }
  }
  const Tensor &pdbo = pb.grads.Get("joint.bo");
  for (int v = 0; v < 5; ++v)
    CHECK(pdbo.v[static_cast<size_t>(v)] ==
          doctest::Approx(want[static_cast<size_t>(v)]).epsilon(1e-9));
}

TEST_CASE("greedy decode respects blanks, caps, and frame order") {
  StsModel model(MicroConfig(33));
  Mat x = RandomFeatures(5, 6, 201);

  SUBCASE("blank-dominated joint yields empty hypotheses") {
    model.params().Get("joint.bo").v[0] = 50.0;
    auto hyps = model.GreedyDecode(x, 8);
    REQUIRE(hyps.size() == 2);
    CHECK(hyps[0].emissions.empty());
    CHECK(hyps[1].emissions.empty());
    CHECK(hyps[0].channel == 0);
    CHECK(hyps[1].channel == 1);
  }

  SUBCASE("label-dominated joint saturates the per-frame cap") {
    model.params().Get("joint.bo").v[3] = 50.0;
    auto hyps = model.GreedyDecode(x, 4);
    for (const auto &hyp : hyps) {
      CHECK(hyp.emissions.size() == 20);  // 5 frames x cap 4
      for (size_t i = 0; i < hyp.emissions.size(); ++i) {
        CHECK(hyp.emissions[i].token == 3);
        CHECK(hyp.emissions[i].frame == static_cast<int>(i / 4));
      }
    }
    auto one = model.GreedyDecode(x, 1);
    CHECK(one[0].emissions.size() <= 5);
  }

  SUBCASE("emission frames are nondecreasing and decode is deterministic") {
    auto a = model.GreedyDecode(x, 8);
    auto b = model.GreedyDecode(x, 8);
    for (int c = 0; c < 2; ++c) {
      REQUIRE(a[static_cast<size_t>(c)].emissions.size() ==
              b[static_cast<size_t>(c)].emissions.size());
      int prev = 0;
      for (size_t i = 0; i < a[static_cast<size_t>(c)].emissions.size(); ++i) {
        const Emission &ea = a[static_cast<size_t>(c)].emissions[i];
        const Emission &eb = b[static_cast<size_t>(c)].emissions[i];
        CHECK(ea.token == eb.token);
        CHECK(ea.frame == eb.frame);
        CHECK(ea.frame >= prev);
        prev = ea.frame;
      }
    }
    CHECK_THROWS_AS(model.GreedyDecode(x, 0), Error);
  }
}

TEST_CASE("checkpoints round-trip exactly and reject junk") {
  const std::string dir = "model_ckpt_test";
  std::filesystem::create_directories(dir);
  StsModel model(MicroConfig(47));
  model.params().Get("joint.bo").v[1] = 0.123456789012345678;
  const std::string path = dir + "/model.ckpt";
  model.Save(path, 321);

  int64_t step = 0;
  StsModel loaded = StsModel::Load(path, &step);
  CHECK(step == 321);
  CHECK(loaded.config().vocab_size == 5);
  CHECK(loaded.config().seed == 47);
  const auto &a = model.params().Items();
  const auto &b = loaded.params().Items();
  REQUIRE(a.size() == b.size());
  for (size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].first == b[k].first);
    REQUIRE(a[k].second.v.size() == b[k].second.v.size());
    for (size_t i = 0; i < a[k].second.v.size(); ++i)
      CHECK(a[k].second.v[i] == b[k].second.v[i]);
  }

  {
    std::ofstream junk(dir + "/junk.ckpt");
    junk << "this is not a checkpoint\n";
  }
  CHECK_THROWS_AS(StsModel::Load(dir + "/junk.ckpt", nullptr), Error);
  try {
    StsModel::Load(dir + "/junk.ckpt", nullptr);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kCompat);
  }

  {
    nlohmann::json j;
    std::ifstream in(path);
    in >> j;
    j["magic"] = "OTHER";
    std::ofstream out(dir + "/magic.ckpt");
    out << j.dump();
  }
  CHECK_THROWS_AS(StsModel::Load(dir + "/magic.ckpt", nullptr), Error);

  {
    nlohmann::json j;
    std::ifstream in(path);
    in >> j;
    j["params"][0]["shape"] = {1, 1};
    std::ofstream out(dir + "/shape.ckpt");
    out << j.dump();
  }
  CHECK_THROWS_AS(StsModel::Load(dir + "/shape.ckpt", nullptr), Error);

  CHECK_THROWS_AS(StsModel::Load(dir + "/absent.ckpt", nullptr), Error);
  try {
    StsModel::Load(dir + "/absent.ckpt", nullptr);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("learning rate schedule ramps, holds, then decays") {
  TrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.warmup_steps = 4;
  cfg.hold_steps = 3;
  cfg.decay_factor = 0.5;
  CHECK(LearningRateAt(cfg, 0) == doctest::Approx(0.05));
  CHECK(LearningRateAt(cfg, 1) == doctest::Approx(0.10));
  CHECK(LearningRateAt(cfg, 3) == doctest::Approx(0.20));
  CHECK(LearningRateAt(cfg, 4) == doctest::Approx(0.20));
  CHECK(LearningRateAt(cfg, 6) == doctest::Approx(0.20));
  CHECK(LearningRateAt(cfg, 7) == doctest::Approx(0.10));
  CHECK(LearningRateAt(cfg, 8) == doctest::Approx(0.05));
  CHECK_THROWS_AS(LearningRateAt(cfg, -1), Error);
}

ExampleSource FixedSource() {
  return [](int64_t step, int item) {
    return MicroExample(DeriveSeed(5000, static_cast<uint64_t>(step),
                                   static_cast<uint64_t>(item)));
  };
}

TEST_CASE("training is deterministic, resumable, and a null update is a no-op") {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.warmup_steps = 2;
  cfg.hold_steps = 2;
  cfg.decay_factor = 0.9;
  cfg.max_steps = 6;
  cfg.batch_size = 2;
  cfg.gamma = 0.1;

  StsModel a(MicroConfig(71));
  StsModel b(MicroConfig(71));
  TrainRunResult ra = TrainLoop(&a, cfg, FixedSource());
  TrainRunResult rb = TrainLoop(&b, cfg, FixedSource());
  CHECK(ra.final_step == 6);
  REQUIRE(ra.log.size() == 6);
  for (int64_t i = 0; i < a.params().TotalSize(); ++i)
    CHECK(a.params().Flat(i) == b.params().Flat(i));
  for (size_t i = 0; i < ra.log.size(); ++i)
    CHECK(ra.log[i].loss == rb.log[i].loss);

  // Resume at step 3 must land exactly where the straight run did.
  StsModel c(MicroConfig(71));
  TrainConfig half = cfg;
  half.max_steps = 3;
  TrainLoop(&c, half, FixedSource());
  const std::string path = "resume_test.ckpt";
  c.Save(path, 3);
  int64_t step = 0;
  StsModel d = StsModel::Load(path, &step);
  CHECK(step == 3);
  TrainLoop(&d, cfg, FixedSource(), step);
  for (int64_t i = 0; i < a.params().TotalSize(); ++i)
    CHECK(d.params().Flat(i) == a.params().Flat(i));
  std::remove(path.c_str());

  StsModel e(MicroConfig(71));
  std::vector<double> before;
  for (int64_t i = 0; i < e.params().TotalSize(); ++i)
    before.push_back(e.params().Flat(i));
  TrainConfig zero = cfg;
  zero.learning_rate = 0.0;
  TrainLoop(&e, zero, FixedSource());
  for (int64_t i = 0; i < e.params().TotalSize(); ++i)
    CHECK(e.params().Flat(i) == before[static_cast<size_t>(i)]);
}

TEST_CASE("training reduces the loss on a fixed example") {
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.warmup_steps = 5;
  cfg.hold_steps = 100;
  cfg.max_steps = 80;
  cfg.grad_clip = 5.0;
  StsModel model(MicroConfig(83));
  auto source = [](int64_t, int) { return MicroExample(4242); };
  TrainRunResult result = TrainLoop(&model, cfg, source);
  CHECK(result.final_loss < 0.5 * result.initial_loss);
}

TEST_CASE("non-finite losses abort with a diagnostic dump") {
  TrainConfig cfg;
  cfg.max_steps = 3;
  StsModel model(MicroConfig(91));
  model.params().Flat(0) = std::numeric_limits<double>::quiet_NaN();
  const std::string dump = "nan_dump_test.json";
  bool threw = false;
  try {
    TrainLoop(&model, cfg, FixedSource(), 0, dump);
  } catch (const Error &e) {
    threw = true;
    CHECK(e.code() == ErrorCode::kNumeric);
  }
  CHECK(threw);
  std::ifstream in(dump);
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  CHECK(j.at("schema").get<std::string>() == "sts.nan_dump.v1");
  CHECK(j.at("step").get<int>() == 0);
  in.close();
  std::remove(dump.c_str());
}

}  // namespace
}  // namespace sts
