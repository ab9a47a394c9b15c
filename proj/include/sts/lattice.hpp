// include/sts/lattice.hpp

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

// Transducer alignment lattice: log-domain forward-backward, analytic
// gradients, FastEmit gradient scaling, and the <eot> early-emission penalty.
//
// Lattice geometry: node (t, u) means "t frames consumed, u target tokens
// emitted"; t in [0, T), u in [0, U]. From (t, u) a blank transition moves to
// (t+1, u) with weight log_probs[t][u][blank] and a label transition moves to
// (t, u+1) with weight log_probs[t][u][tokens[u]]. Every complete path takes
// the final blank out of (T-1, U), so a lattice enumerates
// C(T-1+U, U) distinct alignments.

#ifndef STS_LATTICE_HPP_
#define STS_LATTICE_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sts/error.hpp"

namespace sts {

// -1e30 stands in for log(0); real log-probs never get near it.
constexpr double kLogZero = -1.0e30;

// Numerically guarded log(exp(a) + exp(b)).
inline double LogAdd(double a, double b) {
  if (a < b) {
    double t = a;
    a = b;
    b = t;
  }
  if (b <= kLogZero) return a;
  double d = b - a;          // <= 0
  if (d < -37.0) return a;   // exp underflows double epsilon
  return a + std::log1p(std::exp(d));
}

// Dense T x (U+1) x V grid of per-transition log-probabilities. Slices are
// log-softmax outputs when produced by the joint network, but the algorithms
// only assume finite entries (the <eot> penalty deliberately de-normalizes).
struct LogProbLattice {
  int num_frames = 0;  // T
  int num_tokens = 0;  // U
  int vocab_size = 0;  // V
  int blank_id = 0;
  std::vector<double> log_probs;  // [t][u][v] row-major, (U+1) u-rows

  void Resize(int t, int u, int v, double fill = kLogZero) {
    num_frames = t;
    num_tokens = u;
    vocab_size = v;
    log_probs.assign(static_cast<size_t>(t) * (u + 1) * v, fill);
  }
  size_t Index(int t, int u, int v) const {
    return (static_cast<size_t>(t) * (num_tokens + 1) + u) * vocab_size + v;
  }
  double At(int t, int u, int v) const { return log_probs[Index(t, u, v)]; }
  double &At(int t, int u, int v) { return log_probs[Index(t, u, v)]; }

  // Validates shape consistency, finite entries, and blank_id range.
  void Validate() const;
};

// Ground-truth end time for the <eot> token sitting at tokens[position];
// end_frame is in encoder frames.
struct EotMark {
  int position = 0;
  int end_frame = 0;
};

// Target token sequence for one channel. tokens never contain blank; every
// <eot> occurrence must carry an EotMark when the penalty is applied.
struct TargetSequence {
  std::vector<int> tokens;
  std::vector<EotMark> eot_marks;
  int eot_id = -1;  // vocabulary id of <eot>; -1 when not applicable
};

// Early-emission penalty (applied per <eot> position):
//   log_probs[t][u_eot][eot] -= max(0, alpha * (t - tau - t_end)).
struct PenaltyConfig {
  double alpha = 0.0;  // penalty scale per late frame
  int tau = 0;         // grace period in encoder frames
};

// Negative log-likelihood plus its gradient w.r.t. every lattice entry, in the
// softmax-coupled convention: for slice posteriors p = softmax(log_probs[t][u])
//   grad[t][u][v] = p[v] * occ(t,u) - occ_trans(t,u,v),
// where occ(t,u) is the node occupancy and occ_trans the blank/label
// transition occupancy. Every V-slice of grad therefore sums to zero.
struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as LogProbLattice::log_probs
};

// Alpha/beta grids are T x (U+1), flattened row-major.
struct ForwardBackward {
  double loss = 0.0;  // -log P(y|x); alpha/beta agree at every node
  std::vector<double> alpha;
  std::vector<double> beta;
};

// Path-mass bookkeeping in the probability domain, used by the gradient and
// by the model backward pass:
//   occ_blank(t,u) = P(paths through the blank arc out of (t,u)) / P(y|x)
//   occ_label(t,u) = P(paths through the label arc out of (t,u)) / P(y|x)
// occ_blank + occ_label equals the node occupancy exp(alpha+beta-logP).
struct TransitionOccupancy {
  double loss = 0.0;
  int num_frames = 0;
  int num_tokens = 0;
  std::vector<double> blank;  // T x (U+1)
  std::vector<double> label;  // T x (U+1); zero at u == U
};

// Log-domain forward-backward over the alignment lattice.
ForwardBackward ForwardBackwardLoss(const LogProbLattice &lattice,
                                    const TargetSequence &targets);

TransitionOccupancy ComputeOccupancies(const LogProbLattice &lattice,
                                       const TargetSequence &targets);

// Loss plus softmax-coupled analytic gradient.
LossResult RnntGradients(const LogProbLattice &lattice,
                         const TargetSequence &targets);

// FastEmit: adds lambda times the softmax-coupled label-transition gradient,
// i.e. grad'(t,u,v) = grad(t,u,v) + lambda * occ_label(t,u) * (p[v] - [v==y_u]).
// loss is reported unchanged; lambda == 0 returns a bit-identical copy.
LossResult ApplyFastEmit(const LossResult &result, const TargetSequence &targets,
                         const LogProbLattice &lattice, double lambda);

// Subtracts the Eq.-style lateness penalty from the <eot> entries. Pure
// arithmetic on the marked rows; no renormalization. alpha == 0 returns an
// unchanged copy.
LogProbLattice ApplyEotPenalty(const LogProbLattice &lattice,
                               const TargetSequence &targets,
                               const PenaltyConfig &config);

// Sum of independent per-channel transducer losses (optionally penalty- and
// FastEmit-modified). Channel counts must match.
struct DatLossResult {
  double total_loss = 0.0;
  std::vector<LossResult> per_channel;
};

DatLossResult ComputeDatLoss(const std::vector<LogProbLattice> &lattices,
                             const std::vector<TargetSequence> &targets,
                             double fastemit_lambda,
                             const std::optional<PenaltyConfig> &penalty);

// Numeric JSON dump of a lattice-shaped grid, nested [t][u][v], with values
// printed to 17 significant digits (round-trip exact).
std::string DumpGridJson(const std::vector<double> &grid, int num_frames,
                         int num_tokens, int vocab_size);
std::string DumpLatticeJson(const LogProbLattice &lattice);

}  // namespace sts

#endif  // STS_LATTICE_HPP_
