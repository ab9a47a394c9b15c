// src/lattice.cc

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

#include "sts/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sts {

void LogProbLattice::Validate() const {
  Require(num_frames > 0, ErrorCode::kDimension, "lattice needs T >= 1");
  Require(num_tokens >= 0, ErrorCode::kDimension, "lattice needs U >= 0");
  Require(vocab_size > 0, ErrorCode::kDimension, "lattice needs V >= 1");
  Require(blank_id >= 0 && blank_id < vocab_size, ErrorCode::kValue,
          "blank_id out of vocabulary range");
  size_t want = static_cast<size_t>(num_frames) * (num_tokens + 1) * vocab_size;
  Require(log_probs.size() == want, ErrorCode::kDimension,
          "lattice storage does not match T*(U+1)*V");
  for (double x : log_probs) {
    Require(std::isfinite(x), ErrorCode::kNumeric,
            "lattice contains NaN or Inf");
  }
}

namespace {

void ValidatePair(const LogProbLattice &lattice, const TargetSequence &targets) {
  lattice.Validate();
  Require(static_cast<int>(targets.tokens.size()) == lattice.num_tokens,
          ErrorCode::kDimension, "target length does not match lattice U");
  for (int y : targets.tokens) {
    Require(y >= 0 && y < lattice.vocab_size, ErrorCode::kValue,
            "target token id out of vocabulary range");
    Require(y != lattice.blank_id, ErrorCode::kValue,
            "target tokens must not contain blank");
  }
}

}  // namespace

ForwardBackward ForwardBackwardLoss(const LogProbLattice &lattice,
                                    const TargetSequence &targets) {
  ValidatePair(lattice, targets);
  const int T = lattice.num_frames;
  const int U = lattice.num_tokens;
  const int rows = U + 1;
  const int blank = lattice.blank_id;

  ForwardBackward fb;
  fb.alpha.assign(static_cast<size_t>(T) * rows, kLogZero);
  fb.beta.assign(static_cast<size_t>(T) * rows, kLogZero);
  auto a = [&](int t, int u) -> double & { return fb.alpha[t * rows + u]; };
  auto b = [&](int t, int u) -> double & { return fb.beta[t * rows + u]; };

  a(0, 0) = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double acc = kLogZero;
      if (t > 0) acc = LogAdd(acc, a(t - 1, u) + lattice.At(t - 1, u, blank));
      if (u > 0) {
        acc = LogAdd(acc,
                     a(t, u - 1) + lattice.At(t, u - 1, targets.tokens[u - 1]));
      }
      a(t, u) = acc;
    }
  }

  b(T - 1, U) = lattice.At(T - 1, U, blank);
  for (int t = T - 1; t >= 0; --t) {
    for (int u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) continue;
      double acc = kLogZero;
      if (t + 1 < T) acc = LogAdd(acc, lattice.At(t, u, blank) + b(t + 1, u));
      if (u < U) {
        acc = LogAdd(acc, lattice.At(t, u, targets.tokens[u]) + b(t, u + 1));
      }
      b(t, u) = acc;
    }
  }

  double log_p = b(0, 0);
  Require(std::isfinite(log_p) && log_p > kLogZero / 2, ErrorCode::kNumeric,
          "forward-backward produced zero total path mass");
  fb.loss = -log_p;
  return fb;
}

TransitionOccupancy ComputeOccupancies(const LogProbLattice &lattice,
                                       const TargetSequence &targets) {
  ForwardBackward fb = ForwardBackwardLoss(lattice, targets);
  const int T = lattice.num_frames;
  const int U = lattice.num_tokens;
  const int rows = U + 1;
  const int blank = lattice.blank_id;
  const double log_p = -fb.loss;

  TransitionOccupancy occ;
  occ.loss = fb.loss;
  occ.num_frames = T;
  occ.num_tokens = U;
  occ.blank.assign(static_cast<size_t>(T) * rows, 0.0);
  occ.label.assign(static_cast<size_t>(T) * rows, 0.0);

  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      double alpha = fb.alpha[t * rows + u];
      if (alpha <= kLogZero / 2) continue;
      if (t + 1 < T) {
        occ.blank[t * rows + u] = std::exp(
            alpha + lattice.At(t, u, blank) + fb.beta[(t + 1) * rows + u] -
            log_p);
      } else if (u == U) {
        // Terminal blank: the path ends here, no successor beta.
        occ.blank[t * rows + u] =
            std::exp(alpha + lattice.At(t, u, blank) - log_p);
      }
      if (u < U) {
        occ.label[t * rows + u] = std::exp(
            alpha + lattice.At(t, u, targets.tokens[u]) +
            fb.beta[t * rows + (u + 1)] - log_p);
      }
    }
  }
  return occ;
}

LossResult RnntGradients(const LogProbLattice &lattice,
                         const TargetSequence &targets) {
  TransitionOccupancy occ = ComputeOccupancies(lattice, targets);
  const int T = lattice.num_frames;
  const int U = lattice.num_tokens;
  const int rows = U + 1;
  const int V = lattice.vocab_size;
  const int blank = lattice.blank_id;

  LossResult res;
  res.loss = occ.loss;
  res.grad.assign(lattice.log_probs.size(), 0.0);

  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      double ob = occ.blank[t * rows + u];
      double ol = occ.label[t * rows + u];
      double node = ob + ol;
      // Slice log-normalizer; exactly 0 for log-softmax slices but kept
      // explicit so penalty-modified lattices stay differentiably consistent.
      double log_z = kLogZero;
      for (int v = 0; v < V; ++v) log_z = LogAdd(log_z, lattice.At(t, u, v));
      size_t base = lattice.Index(t, u, 0);
      for (int v = 0; v < V; ++v) {
        double p = std::exp(lattice.At(t, u, v) - log_z);
        res.grad[base + v] = p * node;
      }
      res.grad[base + blank] -= ob;
      if (u < U) res.grad[base + targets.tokens[u]] -= ol;
    }
  }
  return res;
}

LossResult ApplyFastEmit(const LossResult &result, const TargetSequence &targets,
                         const LogProbLattice &lattice, double lambda) {
  Require(lambda >= 0.0, ErrorCode::kValue, "fastemit lambda must be >= 0");
  Require(result.grad.size() == lattice.log_probs.size(), ErrorCode::kDimension,
          "gradient grid does not match lattice shape");
  if (lambda == 0.0) return result;

  TransitionOccupancy occ = ComputeOccupancies(lattice, targets);
  const int T = lattice.num_frames;
  const int U = lattice.num_tokens;
  const int rows = U + 1;
  const int V = lattice.vocab_size;

  LossResult out = result;  // loss unchanged: FastEmit only reshapes gradients
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < U; ++u) {
      double ol = occ.label[t * rows + u];
      if (ol == 0.0) continue;
      double log_z = kLogZero;
      for (int v = 0; v < V; ++v) log_z = LogAdd(log_z, lattice.At(t, u, v));
      size_t base = lattice.Index(t, u, 0);
      for (int v = 0; v < V; ++v) {
        double p = std::exp(lattice.At(t, u, v) - log_z);
        out.grad[base + v] += lambda * ol * p;
      }
      out.grad[base + targets.tokens[u]] -= lambda * ol;
    }
  }
  return out;
}

LogProbLattice ApplyEotPenalty(const LogProbLattice &lattice,
                               const TargetSequence &targets,
                               const PenaltyConfig &config) {
  ValidatePair(lattice, targets);
  Require(config.alpha >= 0.0, ErrorCode::kValue, "penalty alpha must be >= 0");
  Require(config.tau >= 0, ErrorCode::kValue, "penalty tau must be >= 0");

  // Every <eot> in the targets must carry a ground-truth end frame.
  if (targets.eot_id >= 0) {
    for (size_t i = 0; i < targets.tokens.size(); ++i) {
      if (targets.tokens[i] != targets.eot_id) continue;
      bool marked = false;
      for (const EotMark &m : targets.eot_marks) {
        if (m.position == static_cast<int>(i)) marked = true;
      }
      Require(marked, ErrorCode::kValue,
              "<eot> token without a ground-truth end frame");
    }
  }

  LogProbLattice out = lattice;
  if (config.alpha == 0.0) return out;

  for (const EotMark &m : targets.eot_marks) {
    Require(m.position >= 0 && m.position < lattice.num_tokens,
            ErrorCode::kDimension, "eot mark position out of target range");
    int eot = targets.tokens[m.position];
    Require(targets.eot_id < 0 || eot == targets.eot_id, ErrorCode::kValue,
            "eot mark does not point at an <eot> token");
    for (int t = 0; t < lattice.num_frames; ++t) {
      double late = static_cast<double>(t - config.tau - m.end_frame);
      double pen = config.alpha * late;
      if (pen > 0.0) out.At(t, m.position, eot) -= pen;
    }
  }
  return out;
}

DatLossResult ComputeDatLoss(const std::vector<LogProbLattice> &lattices,
                             const std::vector<TargetSequence> &targets,
                             double fastemit_lambda,
                             const std::optional<PenaltyConfig> &penalty) {
  Require(lattices.size() == targets.size(), ErrorCode::kDimension,
          "channel count mismatch between lattices and targets");
  Require(!lattices.empty(), ErrorCode::kDimension, "no channels given");

  DatLossResult res;
  for (size_t n = 0; n < lattices.size(); ++n) {
    const LogProbLattice *lat = &lattices[n];
    LogProbLattice modified;
    if (penalty.has_value()) {
      modified = ApplyEotPenalty(*lat, targets[n], *penalty);
      lat = &modified;
    }
    LossResult channel = RnntGradients(*lat, targets[n]);
    if (fastemit_lambda > 0.0) {
      channel = ApplyFastEmit(channel, targets[n], *lat, fastemit_lambda);
    }
    res.total_loss += channel.loss;
    res.per_channel.push_back(std::move(channel));
  }
  return res;
}

namespace {

void AppendDouble(std::string *out, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out->append(buf);
}

}  // namespace

std::string DumpGridJson(const std::vector<double> &grid, int num_frames,
                         int num_tokens, int vocab_size) {
  size_t want =
      static_cast<size_t>(num_frames) * (num_tokens + 1) * vocab_size;
  Require(grid.size() == want, ErrorCode::kDimension,
          "grid storage does not match T*(U+1)*V");
  std::string out;
  out.reserve(want * 12);
  out += "[";
  size_t i = 0;
  for (int t = 0; t < num_frames; ++t) {
    out += (t == 0) ? "[" : ",[";
    for (int u = 0; u <= num_tokens; ++u) {
      out += (u == 0) ? "[" : ",[";
      for (int v = 0; v < vocab_size; ++v) {
        if (v > 0) out += ",";
        AppendDouble(&out, grid[i++]);
      }
      out += "]";
    }
    out += "]";
  }
  out += "]";
  return out;
}

std::string DumpLatticeJson(const LogProbLattice &lattice) {
  lattice.Validate();
  std::ostringstream os;
  os << "{\"schema\":\"sts.lattice.v1\",\"t\":" << lattice.num_frames
     << ",\"u\":" << lattice.num_tokens << ",\"v\":" << lattice.vocab_size
     << ",\"blank_id\":" << lattice.blank_id << ",\"log_probs\":"
     << DumpGridJson(lattice.log_probs, lattice.num_frames, lattice.num_tokens,
                     lattice.vocab_size)
     << "}";
  return os.str();
}

}  // namespace sts
