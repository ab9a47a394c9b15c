// include/sts/nnet.hpp

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

// Named parameter storage and the differentiable primitives used by the
// model: affine maps, a single-gate recurrent cell, layer normalization, and
// embeddings. Every op ships its exact manual backward.

#ifndef STS_NNET_HPP_
#define STS_NNET_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sts/error.hpp"
#include "sts/mat.hpp"
#include "sts/rng.hpp"

namespace sts {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  int64_t Size() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  int Dim(int i) const { return shape[i]; }
};

// Ordered, named parameter (or gradient) collection. Iteration order is the
// registration order, which fixes the init RNG stream and the flat layout.
class ParamSet {
 public:
  Tensor &Add(const std::string &name, const std::vector<int> &shape);
  Tensor &Get(const std::string &name);
  const Tensor &Get(const std::string &name) const;
  bool Has(const std::string &name) const;

  const std::vector<std::pair<std::string, Tensor>> &Items() const {
    return items_;
  }
  std::vector<std::pair<std::string, Tensor>> &MutableItems() { return items_; }

  int64_t TotalSize() const;
  // Flat view across all tensors in registration order.
  double &Flat(int64_t i);
  double Flat(int64_t i) const;

  // Same names and shapes, zero values.
  ParamSet CloneShape() const;
  void SetZero();
  void AddScaled(const ParamSet &other, double scale);
  void Scale(double s);
  double GlobalNorm() const;

  // Uniform [-bound, bound] over every tensor in registration order.
  void InitUniform(double bound, Rng *rng);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, size_t> index_;
};

// y = W x + b; W shape {out, in}, b shape {out}.
void Affine(const Tensor &w, const Tensor &b, const double *x, double *y);
// Accumulates dW, db (skipped when null, for bias-free applications), and
// (if dx != nullptr) dx += W^T dy.
void AffineBackward(const Tensor &w, const double *x, const double *dy,
                    Tensor *dw, Tensor *db, double *dx);

// Minimal-gate recurrent cell:
//   z = sigmoid(Wz x + Uz h_prev + bz)
//   c = tanh(Wc x + Uc h_prev + bc)
//   h = z * h_prev + (1 - z) * c
struct MguParams {
  const Tensor *wz, *uz, *bz, *wc, *uc, *bc;
};
struct MguGrads {
  Tensor *wz, *uz, *bz, *wc, *uc, *bc;
};
struct MguCache {
  std::vector<double> x, h_prev, z, c;
};

void MguStep(const MguParams &p, const double *x, const double *h_prev,
             double *h, MguCache *cache);
// dh is the incoming gradient at h; dx/dh_prev are accumulated.
void MguStepBackward(const MguParams &p, const MguCache &cache,
                     const double *dh, const MguGrads &g, double *dx,
                     double *dh_prev);

// Per-vector layer normalization with learned gain/bias, eps = 1e-5.
constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  std::vector<double> xhat;
  double inv_std = 0.0;
};

void LayerNorm(const Tensor &gain, const Tensor &bias, const double *x, int n,
               double *y, LayerNormCache *cache);
void LayerNormBackward(const Tensor &gain, const LayerNormCache &cache,
                       const double *dy, Tensor *dgain, Tensor *dbias,
                       double *dx);

}  // namespace sts

#endif  // STS_NNET_HPP_
