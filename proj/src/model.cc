// src/model.cc

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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sts {

using nlohmann::json;

void ModelConfig::Validate() const {
  Require(feature_dim >= 1, ErrorCode::kConfig, "feature_dim must be >= 1");
  Require(mix_layers >= 1 && sep_layers >= 1 && rec_layers >= 1 &&
              pred_layers >= 1,
          ErrorCode::kConfig, "layer counts must be >= 1");
  Require(hidden_dim >= 1 && joint_dim >= 1, ErrorCode::kConfig,
          "hidden_dim and joint_dim must be >= 1");
  Require(vocab_size >= 4, ErrorCode::kConfig,
          "vocab_size must cover blank, sot, eot, and a content token");
  Require(n_channels == 2, ErrorCode::kConfig, "n_channels is fixed at 2");
}

void TrainConfig::Validate() const {
  Require(gamma >= 0.0, ErrorCode::kConfig, "gamma must be >= 0");
  Require(fastemit_lambda >= 0.0, ErrorCode::kConfig,
          "fastemit_lambda must be >= 0");
  Require(learning_rate >= 0.0, ErrorCode::kConfig,
          "learning_rate must be >= 0");
  Require(warmup_steps >= 0 && hold_steps >= 0, ErrorCode::kConfig,
          "schedule phases must be >= 0");
  Require(decay_factor > 0.0 && decay_factor <= 1.0, ErrorCode::kConfig,
          "decay_factor must be in (0, 1]");
  Require(max_steps >= 0, ErrorCode::kConfig, "max_steps must be >= 0");
  Require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
  if (penalty.has_value()) {
    Require(penalty->alpha >= 0.0 && penalty->tau >= 0, ErrorCode::kConfig,
            "penalty needs alpha >= 0 and tau >= 0");
  }
}

// ---------------------------------------------------------------------------
// Parameter layout. Registration order is the init RNG stream order and the
// flat layout; changing it invalidates checkpoints and golden fixtures.

namespace {

std::string LayerPrefix(const std::string &stack, int layer) {
  return stack + "." + std::to_string(layer);
}

void AddMguLayer(ParamSet *ps, const std::string &prefix, int in_dim, int hd) {
  ps->Add(prefix + ".wz", {hd, in_dim});
  ps->Add(prefix + ".uz", {hd, hd});
  ps->Add(prefix + ".bz", {hd});
  ps->Add(prefix + ".wc", {hd, in_dim});
  ps->Add(prefix + ".uc", {hd, hd});
  ps->Add(prefix + ".bc", {hd});
  ps->Add(prefix + ".ln_g", {hd});
  ps->Add(prefix + ".ln_b", {hd});
}

void AddStack(ParamSet *ps, const std::string &stack, int layers, int in_dim,
              int hd) {
  for (int l = 0; l < layers; ++l)
    AddMguLayer(ps, LayerPrefix(stack, l), l == 0 ? in_dim : hd, hd);
}

MguParams GetMgu(const ParamSet &ps, const std::string &prefix) {
  return MguParams{&ps.Get(prefix + ".wz"), &ps.Get(prefix + ".uz"),
                   &ps.Get(prefix + ".bz"), &ps.Get(prefix + ".wc"),
                   &ps.Get(prefix + ".uc"), &ps.Get(prefix + ".bc")};
}

MguGrads GetMguGrads(ParamSet *gs, const std::string &prefix) {
  return MguGrads{&gs->Get(prefix + ".wz"), &gs->Get(prefix + ".uz"),
                  &gs->Get(prefix + ".bz"), &gs->Get(prefix + ".wc"),
                  &gs->Get(prefix + ".uc"), &gs->Get(prefix + ".bc")};
}

struct StackCache {
  std::vector<std::vector<MguCache>> mgu;      // [layer][t]
  std::vector<std::vector<LayerNormCache>> ln;  // [layer][t]
};

// Unidirectional recurrent stack; recurrence runs on the raw cell state and
// layer normalization shapes the per-frame output fed onward.
Mat RunStack(const ParamSet &ps, const std::string &stack, int layers,
             const Mat &input, StackCache *cache) {
  const int num_frames = input.rows;
  const int hd = ps.Get(LayerPrefix(stack, 0) + ".wz").Dim(0);
  cache->mgu.assign(static_cast<size_t>(layers), {});
  cache->ln.assign(static_cast<size_t>(layers), {});
  Mat cur = input;
  for (int l = 0; l < layers; ++l) {
    const std::string prefix = LayerPrefix(stack, l);
    const MguParams mp = GetMgu(ps, prefix);
    const Tensor &ln_g = ps.Get(prefix + ".ln_g");
    const Tensor &ln_b = ps.Get(prefix + ".ln_b");
    cache->mgu[static_cast<size_t>(l)].resize(static_cast<size_t>(num_frames));
    cache->ln[static_cast<size_t>(l)].resize(static_cast<size_t>(num_frames));
    Mat out(num_frames, hd);
    std::vector<double> state(static_cast<size_t>(hd), 0.0);
    std::vector<double> next(static_cast<size_t>(hd));
    for (int t = 0; t < num_frames; ++t) {
      MguStep(mp, cur.Row(t), state.data(), next.data(),
              &cache->mgu[static_cast<size_t>(l)][static_cast<size_t>(t)]);
      state = next;
      LayerNorm(ln_g, ln_b, state.data(), hd, out.Row(t),
                &cache->ln[static_cast<size_t>(l)][static_cast<size_t>(t)]);
    }
    cur = std::move(out);
  }
  return cur;
}

// Accumulates parameter gradients and returns the gradient at the stack input.
Mat StackBackward(const ParamSet &ps, const std::string &stack, int layers,
                  const StackCache &cache, const Mat &dout, ParamSet *gs) {
  Mat dcur = dout;
  for (int l = layers - 1; l >= 0; --l) {
    const std::string prefix = LayerPrefix(stack, l);
    const MguParams mp = GetMgu(ps, prefix);
    const MguGrads mg = GetMguGrads(gs, prefix);
    const Tensor &ln_g = ps.Get(prefix + ".ln_g");
    Tensor &d_ln_g = gs->Get(prefix + ".ln_g");
    Tensor &d_ln_b = gs->Get(prefix + ".ln_b");
    const int num_frames = dcur.rows;
    const int hd = dcur.cols;
    const int in_dim =
        static_cast<int>(cache.mgu[static_cast<size_t>(l)][0].x.size());
    Mat dx(num_frames, in_dim);
    std::vector<double> carry(static_cast<size_t>(hd), 0.0);
    std::vector<double> dstate(static_cast<size_t>(hd));
    for (int t = num_frames - 1; t >= 0; --t) {
      std::fill(dstate.begin(), dstate.end(), 0.0);
      LayerNormBackward(
          ln_g, cache.ln[static_cast<size_t>(l)][static_cast<size_t>(t)],
          dcur.Row(t), &d_ln_g, &d_ln_b, dstate.data());
      for (int i = 0; i < hd; ++i) dstate[static_cast<size_t>(i)] += carry[static_cast<size_t>(i)];
      std::fill(carry.begin(), carry.end(), 0.0);
      MguStepBackward(mp,
                      cache.mgu[static_cast<size_t>(l)][static_cast<size_t>(t)],
                      dstate.data(), mg, dx.Row(t), carry.data());
    }
    dcur = std::move(dx);
  }
  return dcur;
}

struct EncoderCaches {
  StackCache mix;
  std::vector<StackCache> sep;
  std::vector<StackCache> rec;
  Mat mix_out;
};

struct JointCache {
  int num_frames = 0;
  int pred_states = 0;  // U + 1
  std::vector<double> a;  // [t][u][j] activations of the combination layer
  Mat enc_proj;           // T x J
  Mat pred_proj;          // (U+1) x J
};

double LogSumExp(const double *x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace

void StsModel::BuildParams() {
  const int hd = config_.hidden_dim;
  AddStack(&params_, "mix", config_.mix_layers, config_.InputDim(), hd);
  for (int c = 0; c < config_.n_channels; ++c)
    AddStack(&params_, "sep." + std::to_string(c), config_.sep_layers, hd, hd);
  AddStack(&params_, "rec", config_.rec_layers, hd, hd);
  params_.Add("pred.embed", {config_.vocab_size, hd});
  AddStack(&params_, "pred", config_.pred_layers, hd, hd);
  params_.Add("joint.we", {config_.joint_dim, hd});
  params_.Add("joint.wp", {config_.joint_dim, hd});
  params_.Add("joint.bj", {config_.joint_dim});
  params_.Add("joint.wo", {config_.vocab_size, config_.joint_dim});
  params_.Add("joint.bo", {config_.vocab_size});
}

StsModel::StsModel(const ModelConfig &config) : config_(config) {
  config_.Validate();
  BuildParams();
  Rng rng(config_.seed);
  params_.InitUniform(0.1, &rng);
  // Layer norms start as the identity transform.
  for (auto &kv : params_.MutableItems()) {
    const std::string &name = kv.first;
    if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".ln_g") == 0)
      std::fill(kv.second.v.begin(), kv.second.v.end(), 1.0);
    if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".ln_b") == 0)
      std::fill(kv.second.v.begin(), kv.second.v.end(), 0.0);
  }
}

namespace {

EncoderOutputs EncodeWithCaches(const ModelConfig &cfg, const ParamSet &ps,
                                const Mat &features, EncoderCaches *ec) {
  Require(features.rows >= 1, ErrorCode::kDimension,
          "encoder needs at least one frame");
  Require(features.cols == cfg.InputDim(), ErrorCode::kDimension,
          "feature width mismatch: got " + std::to_string(features.cols) +
              ", expected " + std::to_string(cfg.InputDim()));
  ec->mix_out = RunStack(ps, "mix", cfg.mix_layers, features, &ec->mix);
  ec->sep.assign(static_cast<size_t>(cfg.n_channels), {});
  ec->rec.assign(static_cast<size_t>(cfg.n_channels), {});
  EncoderOutputs h(static_cast<size_t>(cfg.n_channels));
  for (int c = 0; c < cfg.n_channels; ++c) {
    Mat sep_out = RunStack(ps, "sep." + std::to_string(c), cfg.sep_layers,
                           ec->mix_out, &ec->sep[static_cast<size_t>(c)]);
    h[static_cast<size_t>(c)] = RunStack(ps, "rec", cfg.rec_layers, sep_out,
                                         &ec->rec[static_cast<size_t>(c)]);
    // StackBackward re-derives layer inputs from the MGU caches, so sep_out
    // itself need not be retained.
  }
  return h;
}

void EncoderBackward(const ModelConfig &cfg, const ParamSet &ps,
                     const EncoderCaches &ec, const std::vector<Mat> &dh,
                     ParamSet *gs) {
  Mat dmix(ec.mix_out.rows, ec.mix_out.cols);
  for (int c = 0; c < cfg.n_channels; ++c) {
    Mat dsep = StackBackward(ps, "rec", cfg.rec_layers,
                             ec.rec[static_cast<size_t>(c)],
                             dh[static_cast<size_t>(c)], gs);
    Mat dmix_c = StackBackward(ps, "sep." + std::to_string(c), cfg.sep_layers,
                               ec.sep[static_cast<size_t>(c)], dsep, gs);
    for (size_t i = 0; i < dmix.v.size(); ++i) dmix.v[i] += dmix_c.v[i];
  }
  StackBackward(ps, "mix", cfg.mix_layers, ec.mix, dmix, gs);
}

// Embeds the blank-prepended prefix and runs the prediction stack.
Mat RunPrediction(const ModelConfig &cfg, const ParamSet &ps,
                  const std::vector<int> &tokens, StackCache *cache) {
  const Tensor &embed = ps.Get("pred.embed");
  const int hd = cfg.hidden_dim;
  Mat emb(static_cast<int>(tokens.size()) + 1, hd);
  for (int u = 0; u <= static_cast<int>(tokens.size()); ++u) {
    const int tok = u == 0 ? Vocab::kBlank : tokens[static_cast<size_t>(u - 1)];
    Require(tok >= 0 && tok < cfg.vocab_size, ErrorCode::kValue,
            "token id out of vocabulary: " + std::to_string(tok));
    const double *row = &embed.v[static_cast<size_t>(tok) * hd];
    std::copy(row, row + hd, emb.Row(u));
  }
  return RunStack(ps, "pred", cfg.pred_layers, emb, cache);
}

void PredictionBackward(const ModelConfig &cfg, const ParamSet &ps,
                        const std::vector<int> &tokens,
                        const StackCache &cache, const Mat &dpred,
                        ParamSet *gs) {
  Mat demb = StackBackward(ps, "pred", cfg.pred_layers, cache, dpred, gs);
  Tensor &dembed = gs->Get("pred.embed");
  const int hd = cfg.hidden_dim;
  for (int u = 0; u < demb.rows; ++u) {
    const int tok = u == 0 ? Vocab::kBlank : tokens[static_cast<size_t>(u - 1)];
    double *drow = &dembed.v[static_cast<size_t>(tok) * hd];
    const double *src = demb.Row(u);
    for (int i = 0; i < hd; ++i) drow[i] += src[i];
  }
}

LogProbLattice JointForward(const ModelConfig &cfg, const ParamSet &ps,
                            const Mat &h, const Mat &pred, JointCache *jc) {
  const Tensor &we = ps.Get("joint.we");
  const Tensor &wp = ps.Get("joint.wp");
  const Tensor &bj = ps.Get("joint.bj");
  const Tensor &wo = ps.Get("joint.wo");
  const Tensor &bo = ps.Get("joint.bo");
  const int num_frames = h.rows, u1 = pred.rows;
  const int jd = cfg.joint_dim, v = cfg.vocab_size;
  jc->num_frames = num_frames;
  jc->pred_states = u1;
  jc->enc_proj = Mat(num_frames, jd);
  jc->pred_proj = Mat(u1, jd);
  for (int t = 0; t < num_frames; ++t)
    Affine(we, bj, h.Row(t), jc->enc_proj.Row(t));
  const Tensor zero_bias{{jd}, std::vector<double>(static_cast<size_t>(jd), 0.0)};
  for (int u = 0; u < u1; ++u)
    Affine(wp, zero_bias, pred.Row(u), jc->pred_proj.Row(u));
  jc->a.assign(static_cast<size_t>(num_frames) * u1 * jd, 0.0);
  LogProbLattice lat;
  lat.Resize(num_frames, u1 - 1, v);
  lat.blank_id = Vocab::kBlank;
  std::vector<double> z(static_cast<size_t>(v));
  for (int t = 0; t < num_frames; ++t) {
    for (int u = 0; u < u1; ++u) {
      double *a = &jc->a[(static_cast<size_t>(t) * u1 + u) * jd];
      const double *e = jc->enc_proj.Row(t);
      const double *q = jc->pred_proj.Row(u);
      for (int j = 0; j < jd; ++j) a[j] = std::tanh(e[j] + q[j]);
      Affine(wo, bo, a, z.data());
      const double log_z = LogSumExp(z.data(), v);
      for (int k = 0; k < v; ++k) lat.At(t, u, k) = z[static_cast<size_t>(k)] - log_z;
    }
  }
  return lat;
}

// dz is the gradient at the pre-softmax joint output, lattice layout.
void JointBackward(const ModelConfig &cfg, const ParamSet &ps, const Mat &h,
                   const Mat &pred, const JointCache &jc,
                   const std::vector<double> &dz, ParamSet *gs, Mat *dh,
                   Mat *dpred) {
  const Tensor &we = ps.Get("joint.we");
  const Tensor &wp = ps.Get("joint.wp");
  const Tensor &wo = ps.Get("joint.wo");
  Tensor &dwe = gs->Get("joint.we");
  Tensor &dwp = gs->Get("joint.wp");
  Tensor &dbj = gs->Get("joint.bj");
  Tensor &dwo = gs->Get("joint.wo");
  Tensor &dbo = gs->Get("joint.bo");
  const int num_frames = jc.num_frames, u1 = jc.pred_states;
  const int jd = cfg.joint_dim, v = cfg.vocab_size;
  Mat de(num_frames, jd);
  Mat dq(u1, jd);
  std::vector<double> da(static_cast<size_t>(jd));
  for (int t = 0; t < num_frames; ++t) {
    for (int u = 0; u < u1; ++u) {
      const double *a = &jc.a[(static_cast<size_t>(t) * u1 + u) * jd];
      const double *g = &dz[(static_cast<size_t>(t) * u1 + u) * v];
      std::fill(da.begin(), da.end(), 0.0);
      for (int k = 0; k < v; ++k) {
        const double gv = g[k];
        if (gv == 0.0) continue;
        dbo.v[static_cast<size_t>(k)] += gv;
        double *dwo_row = &dwo.v[static_cast<size_t>(k) * jd];
        const double *wo_row = &wo.v[static_cast<size_t>(k) * jd];
        for (int j = 0; j < jd; ++j) {
          dwo_row[j] += gv * a[j];
          da[static_cast<size_t>(j)] += wo_row[j] * gv;
        }
      }
      double *de_row = de.Row(t);
      double *dq_row = dq.Row(u);
      for (int j = 0; j < jd; ++j) {
        const double d = da[static_cast<size_t>(j)] * (1.0 - a[j] * a[j]);
        de_row[j] += d;
        dq_row[j] += d;
      }
    }
  }
  for (int t = 0; t < num_frames; ++t)
    AffineBackward(we, h.Row(t), de.Row(t), &dwe, &dbj, dh->Row(t));
  for (int u = 0; u < u1; ++u)
    AffineBackward(wp, pred.Row(u), dq.Row(u), &dwp, nullptr, dpred->Row(u));
}

}  // namespace

EncoderOutputs StsModel::Encode(const Mat &features) const {
  EncoderCaches ec;
  return EncodeWithCaches(config_, params_, features, &ec);
}

LogProbLattice StsModel::JointLattice(const Mat &h,
                                      const std::vector<int> &tokens) const {
  Require(h.cols == config_.hidden_dim, ErrorCode::kDimension,
          "encoder output width mismatch");
  Require(h.rows >= 1, ErrorCode::kDimension, "empty encoder output");
  StackCache pc;
  Mat pred = RunPrediction(config_, params_, tokens, &pc);
  JointCache jc;
  return JointForward(config_, params_, h, pred, &jc);
}

double MaskingLoss(const EncoderOutputs &h,
                   const std::vector<ActivityMask> &masks) {
  Require(h.size() == masks.size(), ErrorCode::kDimension,
          "channel count mismatch between outputs and masks");
  double total = 0.0;
  for (size_t c = 0; c < h.size(); ++c) {
    Require(static_cast<int>(masks[c].size()) == h[c].rows,
            ErrorCode::kDimension, "mask length must equal frame count");
    for (int t = 0; t < h[c].rows; ++t) {
      if (masks[c][static_cast<size_t>(t)]) continue;
      const double *row = h[c].Row(t);
      for (int d = 0; d < h[c].cols; ++d) total += row[d] * row[d];
    }
  }
  return total;
}

NormRatioValue NormRatio(const EncoderOutputs &h,
                         const std::vector<ActivityMask> &masks) {
  Require(h.size() == masks.size(), ErrorCode::kDimension,
          "channel count mismatch between outputs and masks");
  double active_sum = 0.0, inactive_sum = 0.0;
  int64_t active_n = 0, inactive_n = 0;
  for (size_t c = 0; c < h.size(); ++c) {
    Require(static_cast<int>(masks[c].size()) == h[c].rows,
            ErrorCode::kDimension, "mask length must equal frame count");
    for (int t = 0; t < h[c].rows; ++t) {
      double ss = 0.0;
      const double *row = h[c].Row(t);
      for (int d = 0; d < h[c].cols; ++d) ss += row[d] * row[d];
      const double norm = std::sqrt(ss);
      if (masks[c][static_cast<size_t>(t)]) {
        active_sum += norm;
        ++active_n;
      } else {
        inactive_sum += norm;
        ++inactive_n;
      }
    }
  }
  NormRatioValue out;
  if (active_n == 0 || inactive_n == 0) return out;  // undefined
  out.defined = true;
  const double active_mean = active_sum / static_cast<double>(active_n);
  const double inactive_mean = inactive_sum / static_cast<double>(inactive_n);
  if (inactive_mean == 0.0) {
    out.value = 1e9;
    out.capped = true;
  } else {
    out.value = active_mean / inactive_mean;
  }
  return out;
}

LossBundle StsModel::TotalLoss(const TrainingExample &example,
                               const TrainConfig &cfg,
                               const std::vector<double> *channel_weights) const {
  cfg.Validate();
  const int nc = config_.n_channels;
  Require(static_cast<int>(example.targets.size()) == nc, ErrorCode::kDimension,
          "target channel count mismatch");
  Require(static_cast<int>(example.masks.size()) == nc, ErrorCode::kDimension,
          "mask channel count mismatch");
  std::vector<double> weights(static_cast<size_t>(nc), 1.0);
  if (channel_weights != nullptr) {
    Require(channel_weights->size() == weights.size(), ErrorCode::kDimension,
            "channel weight count mismatch");
    weights = *channel_weights;
  }

  LossBundle bundle;
  bundle.grads = params_.CloneShape();
  EncoderCaches ec;
  bundle.encoder_outputs = EncodeWithCaches(config_, params_, example.features, &ec);
  const int num_frames = bundle.encoder_outputs[0].rows;
  const int hd = config_.hidden_dim;
  const int v = config_.vocab_size;

  std::vector<Mat> dh(static_cast<size_t>(nc), Mat(num_frames, hd));
  const double lambda = cfg.fastemit_lambda;
  for (int c = 0; c < nc; ++c) {
    const double w = weights[static_cast<size_t>(c)];
    const TargetSequence &targets = example.targets[static_cast<size_t>(c)];
    const Mat &h = bundle.encoder_outputs[static_cast<size_t>(c)];
    Require(static_cast<int>(example.masks[static_cast<size_t>(c)].size()) ==
                num_frames,
            ErrorCode::kDimension, "mask length must equal frame count");

    StackCache pc;
    Mat pred = RunPrediction(config_, params_, targets.tokens, &pc);
    JointCache jc;
    LogProbLattice lat = JointForward(config_, params_, h, pred, &jc);
    TransitionOccupancy occ =
        cfg.penalty.has_value()
            ? ComputeOccupancies(ApplyEotPenalty(lat, targets, *cfg.penalty),
                                 targets)
            : ComputeOccupancies(lat, targets);
    bundle.rnnt_loss += w * occ.loss;

    // Gradient at the pre-softmax joint output. The occupancies come from the
    // (possibly penalized) lattice while the softmax coupling uses the raw
    // joint posteriors: the penalty is an additive constant w.r.t. the
    // parameters, so d(loss)/dz = p_z * node_occ - transition indicators.
    const int u1 = lat.num_tokens + 1;
    std::vector<double> dz(static_cast<size_t>(num_frames) * u1 * v, 0.0);
    for (int t = 0; t < num_frames; ++t) {
      for (int u = 0; u < u1; ++u) {
        const size_t node = static_cast<size_t>(t) * u1 + u;
        const double ob = occ.blank[node];
        const double ol = (1.0 + lambda) * occ.label[node];
        const double node_occ = ob + ol;
        double *slice = &dz[node * v];
        if (node_occ != 0.0) {
          for (int k = 0; k < v; ++k)
            slice[k] = w * std::exp(lat.At(t, u, k)) * node_occ;
        }
        slice[lat.blank_id] -= w * ob;
        if (u < lat.num_tokens)
          slice[targets.tokens[static_cast<size_t>(u)]] -= w * ol;
      }
    }
    Mat dpred(u1, hd);
    JointBackward(config_, params_, h, pred, jc, dz, &bundle.grads,
                  &dh[static_cast<size_t>(c)], &dpred);
    PredictionBackward(config_, params_, targets.tokens, pc, dpred,
                       &bundle.grads);

    // Masking loss on non-active frames, folded into the encoder gradient.
    double mask_c = 0.0;
    for (int t = 0; t < num_frames; ++t) {
      if (example.masks[static_cast<size_t>(c)][static_cast<size_t>(t)]) continue;
      const double *row = h.Row(t);
      double *drow = dh[static_cast<size_t>(c)].Row(t);
      for (int d = 0; d < hd; ++d) {
        mask_c += row[d] * row[d];
        drow[d] += w * cfg.gamma * 2.0 * row[d];
      }
    }
    bundle.mask_loss += w * mask_c;
  }
  EncoderBackward(config_, params_, ec, dh, &bundle.grads);
  bundle.loss = bundle.rnnt_loss + cfg.gamma * bundle.mask_loss;
  return bundle;
}

std::vector<ChannelHypothesis> StsModel::GreedyDecode(
    const Mat &features, int max_symbols_per_frame) const {
  Require(max_symbols_per_frame >= 1, ErrorCode::kValue,
          "max_symbols_per_frame must be >= 1");
  EncoderOutputs hs = Encode(features);
  const Tensor &embed = params_.Get("pred.embed");
  const Tensor &we = params_.Get("joint.we");
  const Tensor &wp = params_.Get("joint.wp");
  const Tensor &bj = params_.Get("joint.bj");
  const Tensor &wo = params_.Get("joint.wo");
  const Tensor &bo = params_.Get("joint.bo");
  const int hd = config_.hidden_dim, jd = config_.joint_dim;
  const int v = config_.vocab_size;
  const int blank = Vocab::kBlank;
  const Tensor zero_bias{{jd}, std::vector<double>(static_cast<size_t>(jd), 0.0)};

  std::vector<ChannelHypothesis> out;
  for (int c = 0; c < config_.n_channels; ++c) {
    const Mat &h = hs[static_cast<size_t>(c)];
    std::vector<std::vector<double>> state(
        static_cast<size_t>(config_.pred_layers),
        std::vector<double>(static_cast<size_t>(hd), 0.0));
    std::vector<double> pred_out(static_cast<size_t>(hd));
    auto advance = [&](int token) {
      std::vector<double> x(static_cast<size_t>(hd));
      const double *row = &embed.v[static_cast<size_t>(token) * hd];
      std::copy(row, row + hd, x.begin());
      for (int l = 0; l < config_.pred_layers; ++l) {
        const std::string prefix = LayerPrefix("pred", l);
        MguCache cache;
        std::vector<double> next(static_cast<size_t>(hd));
        MguStep(GetMgu(params_, prefix), x.data(),
                state[static_cast<size_t>(l)].data(), next.data(), &cache);
        state[static_cast<size_t>(l)] = next;
        LayerNormCache lc;
        LayerNorm(params_.Get(prefix + ".ln_g"), params_.Get(prefix + ".ln_b"),
                  next.data(), hd, x.data(), &lc);
      }
      pred_out = x;
    };
    advance(blank);

    ChannelHypothesis hyp;
    hyp.channel = c;
    std::vector<double> e(static_cast<size_t>(jd));
    std::vector<double> q(static_cast<size_t>(jd));
    std::vector<double> a(static_cast<size_t>(jd));
    std::vector<double> z(static_cast<size_t>(v));
    for (int t = 0; t < h.rows; ++t) {
      Affine(we, bj, h.Row(t), e.data());
      int emitted = 0;
      while (emitted < max_symbols_per_frame) {
        Affine(wp, zero_bias, pred_out.data(), q.data());
        for (int j = 0; j < jd; ++j)
          a[static_cast<size_t>(j)] =
              std::tanh(e[static_cast<size_t>(j)] + q[static_cast<size_t>(j)]);
        Affine(wo, bo, a.data(), z.data());
        int best = 0;
        for (int k = 1; k < v; ++k)
          if (z[static_cast<size_t>(k)] > z[static_cast<size_t>(best)]) best = k;
        if (best == blank) break;
        hyp.emissions.push_back(Emission{best, t});
        advance(best);
        ++emitted;
      }
    }
    out.push_back(std::move(hyp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON container, magic "STS_CKPT", version 1.

namespace {

json ConfigToJson(const ModelConfig &c) {
  return json{{"feature_dim", c.feature_dim}, {"mix_layers", c.mix_layers},
              {"sep_layers", c.sep_layers},   {"rec_layers", c.rec_layers},
              {"pred_layers", c.pred_layers}, {"hidden_dim", c.hidden_dim},
              {"joint_dim", c.joint_dim},     {"vocab_size", c.vocab_size},
              {"n_channels", c.n_channels},   {"seed", c.seed}};
}

ModelConfig ConfigFromJson(const json &j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.mix_layers = j.at("mix_layers").get<int>();
  c.sep_layers = j.at("sep_layers").get<int>();
  c.rec_layers = j.at("rec_layers").get<int>();
  c.pred_layers = j.at("pred_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.joint_dim = j.at("joint_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_channels = j.at("n_channels").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

void StsModel::Save(const std::string &path, int64_t step) const {
  json j;
  j["magic"] = "STS_CKPT";
  j["version"] = 1;
  j["config"] = ConfigToJson(config_);
  j["step"] = step;
  json params = json::array();
  for (const auto &kv : params_.Items()) {
    params.push_back(
        json{{"name", kv.first}, {"shape", kv.second.shape}, {"data", kv.second.v}});
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kIo, "cannot open checkpoint for write: " + path);
  out << j.dump() << "\n";
  Require(out.good(), ErrorCode::kIo, "checkpoint write failed: " + path);
}

StsModel StsModel::Load(const std::string &path, int64_t *step) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
    Require(j.at("magic").get<std::string>() == "STS_CKPT", ErrorCode::kCompat,
            "not a checkpoint file: " + path);
    Require(j.at("version").get<int>() == 1, ErrorCode::kCompat,
            "unsupported checkpoint version");
    ModelConfig config = ConfigFromJson(j.at("config"));
    StsModel model(config);
    const json &params = j.at("params");
    Require(params.is_array() &&
                params.size() == model.params_.Items().size(),
            ErrorCode::kCompat, "checkpoint parameter list mismatch");
    for (const auto &entry : params) {
      const std::string name = entry.at("name").get<std::string>();
      Require(model.params_.Has(name), ErrorCode::kCompat,
              "unknown checkpoint parameter: " + name);
      Tensor &t = model.params_.Get(name);
      Require(entry.at("shape").get<std::vector<int>>() == t.shape,
              ErrorCode::kCompat, "checkpoint shape mismatch at " + name);
      std::vector<double> data = entry.at("data").get<std::vector<double>>();
      Require(data.size() == t.v.size(), ErrorCode::kCompat,
              "checkpoint data size mismatch at " + name);
      t.v = std::move(data);
    }
    if (step != nullptr) *step = j.at("step").get<int64_t>();
    return model;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kCompat,
                std::string("corrupted checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training.

double LearningRateAt(const TrainConfig &cfg, int64_t step) {
  Require(step >= 0, ErrorCode::kValue, "negative step");
  if (step < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(step + 1) /
           static_cast<double>(cfg.warmup_steps);
  const int64_t past_hold = step - cfg.warmup_steps - cfg.hold_steps;
  if (past_hold < 0) return cfg.learning_rate;
  return cfg.learning_rate *
         std::pow(cfg.decay_factor, static_cast<double>(past_hold + 1));
}

TrainRunResult TrainLoop(StsModel *model, const TrainConfig &cfg,
                         const ExampleSource &source, int64_t start_step,
                         const std::string &nan_dump_path) {
  cfg.Validate();
  Require(start_step >= 0 && start_step <= cfg.max_steps, ErrorCode::kValue,
          "start_step out of range");
  TrainRunResult result;
  result.final_step = start_step;
  ParamSet grads = model->params().CloneShape();
  for (int64_t step = start_step; step < cfg.max_steps; ++step) {
    grads.SetZero();
    double loss_sum = 0.0, rnnt_sum = 0.0, mask_sum = 0.0;
    NormRatioValue ratio;
    for (int item = 0; item < cfg.batch_size; ++item) {
      TrainingExample ex = source(step, item);
      auto abort_numeric = [&](const std::string &reason, double loss_value,
                               double grad_norm) -> Error {
        if (!nan_dump_path.empty()) {
          json dump{{"schema", "sts.nan_dump.v1"},
                    {"step", step},
                    {"batch_item", item},
                    {"reason", reason},
                    {"loss", loss_value},  // non-finite serializes as null
                    {"grad_norm", grad_norm},
                    {"param_norm", model->params().GlobalNorm()},
                    {"num_feature_rows", ex.features.rows},
                    {"learning_rate", LearningRateAt(cfg, step)}};
          std::ofstream out(nan_dump_path);
          if (out.good()) out << dump.dump(2) << "\n";
        }
        return Error(ErrorCode::kNumeric,
                     "numeric abort at step " + std::to_string(step) + ": " +
                         reason +
                         (nan_dump_path.empty()
                              ? ""
                              : " (diagnostics: " + nan_dump_path + ")"));
      };
      LossBundle bundle;
      try {
        bundle = model->TotalLoss(ex, cfg);
      } catch (const Error &e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        throw abort_numeric(e.what(), 0.0, 0.0);
      }
      if (!std::isfinite(bundle.loss))
        throw abort_numeric("non-finite loss", bundle.loss,
                            bundle.grads.GlobalNorm());
      grads.AddScaled(bundle.grads, 1.0);
      loss_sum += bundle.loss;
      rnnt_sum += bundle.rnnt_loss;
      mask_sum += bundle.mask_loss;
      if (item == cfg.batch_size - 1)
        ratio = NormRatio(bundle.encoder_outputs, ex.masks);
    }
    grads.Scale(1.0 / cfg.batch_size);
    const double gnorm = grads.GlobalNorm();
    if (cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip)
      grads.Scale(cfg.grad_clip / gnorm);
    const double lr = LearningRateAt(cfg, step);
    model->params().AddScaled(grads, -lr);

    TrainLogEntry entry;
    entry.step = step;
    entry.lr = lr;
    entry.loss = loss_sum / cfg.batch_size;
    entry.rnnt_loss = rnnt_sum / cfg.batch_size;
    entry.mask_loss = mask_sum / cfg.batch_size;
    entry.norm_ratio = ratio;
    result.log.push_back(entry);
    if (step == start_step) result.initial_loss = entry.loss;
    result.final_loss = entry.loss;
    result.final_step = step + 1;
  }
  return result;
}

}  // namespace sts
