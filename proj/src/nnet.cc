// src/nnet.cc

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

#include "sts/nnet.hpp"

#include <cmath>

namespace sts {

Tensor &ParamSet::Add(const std::string &name, const std::vector<int> &shape) {
  Require(index_.find(name) == index_.end(), ErrorCode::kConfig,
          "duplicate parameter name: " + name);
  Require(!shape.empty(), ErrorCode::kDimension,
          "parameter needs a shape: " + name);
  Tensor t;
  t.shape = shape;
  t.v.assign(static_cast<size_t>(t.Size()), 0.0);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor &ParamSet::Get(const std::string &name) {
  auto it = index_.find(name);
  Require(it != index_.end(), ErrorCode::kConfig,
          "unknown parameter: " + name);
  return items_[it->second].second;
}

const Tensor &ParamSet::Get(const std::string &name) const {
  auto it = index_.find(name);
  Require(it != index_.end(), ErrorCode::kConfig,
          "unknown parameter: " + name);
  return items_[it->second].second;
}

bool ParamSet::Has(const std::string &name) const {
  return index_.find(name) != index_.end();
}

int64_t ParamSet::TotalSize() const {
  int64_t n = 0;
  for (const auto &kv : items_) n += kv.second.Size();
  return n;
}

double &ParamSet::Flat(int64_t i) {
  for (auto &kv : items_) {
    int64_t n = kv.second.Size();
    if (i < n) return kv.second.v[static_cast<size_t>(i)];
    i -= n;
  }
  throw Error(ErrorCode::kDimension, "flat parameter index out of range");
}

double ParamSet::Flat(int64_t i) const {
  return const_cast<ParamSet *>(this)->Flat(i);
}

ParamSet ParamSet::CloneShape() const {
  ParamSet out;
  for (const auto &kv : items_) out.Add(kv.first, kv.second.shape);
  return out;
}

void ParamSet::SetZero() {
  for (auto &kv : items_)
    std::fill(kv.second.v.begin(), kv.second.v.end(), 0.0);
}

void ParamSet::AddScaled(const ParamSet &other, double scale) {
  Require(items_.size() == other.items_.size(), ErrorCode::kDimension,
          "parameter set size mismatch");
  for (size_t k = 0; k < items_.size(); ++k) {
    Tensor &a = items_[k].second;
    const Tensor &b = other.items_[k].second;
    Require(items_[k].first == other.items_[k].first &&
                a.v.size() == b.v.size(),
            ErrorCode::kDimension,
            "parameter layout mismatch at " + items_[k].first);
    for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += scale * b.v[i];
  }
}

void ParamSet::Scale(double s) {
  for (auto &kv : items_)
    for (double &x : kv.second.v) x *= s;
}

double ParamSet::GlobalNorm() const {
  double ss = 0.0;
  for (const auto &kv : items_)
    for (double x : kv.second.v) ss += x * x;
  return std::sqrt(ss);
}

void ParamSet::InitUniform(double bound, Rng *rng) {
  for (auto &kv : items_)
    for (double &x : kv.second.v) x = rng->Uniform(-bound, bound);
}

void Affine(const Tensor &w, const Tensor &b, const double *x, double *y) {
  const int out = w.Dim(0), in = w.Dim(1);
  for (int i = 0; i < out; ++i) {
    double s = b.v[static_cast<size_t>(i)];
    const double *row = &w.v[static_cast<size_t>(i) * in];
    for (int j = 0; j < in; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void AffineBackward(const Tensor &w, const double *x, const double *dy,
                    Tensor *dw, Tensor *db, double *dx) {
  const int out = w.Dim(0), in = w.Dim(1);
  for (int i = 0; i < out; ++i) {
    const double g = dy[i];
    double *drow = &dw->v[static_cast<size_t>(i) * in];
    const double *row = &w.v[static_cast<size_t>(i) * in];
    if (db != nullptr) db->v[static_cast<size_t>(i)] += g;
    for (int j = 0; j < in; ++j) {
      drow[j] += g * x[j];
      if (dx != nullptr) dx[j] += row[j] * g;
    }
  }
}

static inline double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void MguStep(const MguParams &p, const double *x, const double *h_prev,
             double *h, MguCache *cache) {
  const int hd = p.wz->Dim(0), in = p.wz->Dim(1);
  cache->x.assign(x, x + in);
  cache->h_prev.assign(h_prev, h_prev + hd);
  cache->z.resize(static_cast<size_t>(hd));
  cache->c.resize(static_cast<size_t>(hd));
  std::vector<double> pre_z(static_cast<size_t>(hd));
  std::vector<double> pre_c(static_cast<size_t>(hd));
  Affine(*p.wz, *p.bz, x, pre_z.data());
  Affine(*p.wc, *p.bc, x, pre_c.data());
  for (int i = 0; i < hd; ++i) {
    const double *uz_row = &p.uz->v[static_cast<size_t>(i) * hd];
    const double *uc_row = &p.uc->v[static_cast<size_t>(i) * hd];
    double sz = pre_z[static_cast<size_t>(i)];
    double sc = pre_c[static_cast<size_t>(i)];
    for (int j = 0; j < hd; ++j) {
      sz += uz_row[j] * h_prev[j];
      sc += uc_row[j] * h_prev[j];
    }
    const double z = Sigmoid(sz);
    const double c = std::tanh(sc);
    cache->z[static_cast<size_t>(i)] = z;
    cache->c[static_cast<size_t>(i)] = c;
    h[i] = z * h_prev[i] + (1.0 - z) * c;
  }
}

void MguStepBackward(const MguParams &p, const MguCache &cache,
                     const double *dh, const MguGrads &g, double *dx,
                     double *dh_prev) {
  const int hd = p.wz->Dim(0);
  std::vector<double> dz_pre(static_cast<size_t>(hd));
  std::vector<double> dc_pre(static_cast<size_t>(hd));
  for (int i = 0; i < hd; ++i) {
    const double z = cache.z[static_cast<size_t>(i)];
    const double c = cache.c[static_cast<size_t>(i)];
    dz_pre[static_cast<size_t>(i)] =
        dh[i] * (cache.h_prev[static_cast<size_t>(i)] - c) * z * (1.0 - z);
    dc_pre[static_cast<size_t>(i)] = dh[i] * (1.0 - z) * (1.0 - c * c);
    dh_prev[i] += dh[i] * z;
  }
  AffineBackward(*p.wz, cache.x.data(), dz_pre.data(), g.wz, g.bz, dx);
  AffineBackward(*p.wc, cache.x.data(), dc_pre.data(), g.wc, g.bc, dx);
  // The biases enter the pre-activations once; the recurrent terms are
  // bias-free.
  AffineBackward(*p.uz, cache.h_prev.data(), dz_pre.data(), g.uz, nullptr,
                 dh_prev);
  AffineBackward(*p.uc, cache.h_prev.data(), dc_pre.data(), g.uc, nullptr,
                 dh_prev);
}

void LayerNorm(const Tensor &gain, const Tensor &bias, const double *x, int n,
               double *y, LayerNormCache *cache) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  cache->xhat.resize(static_cast<size_t>(n));
  cache->inv_std = inv_std;
  for (int i = 0; i < n; ++i) {
    const double xh = (x[i] - mean) * inv_std;
    cache->xhat[static_cast<size_t>(i)] = xh;
    y[i] = gain.v[static_cast<size_t>(i)] * xh + bias.v[static_cast<size_t>(i)];
  }
}

void LayerNormBackward(const Tensor &gain, const LayerNormCache &cache,
                       const double *dy, Tensor *dgain, Tensor *dbias,
                       double *dx) {
  const int n = static_cast<int>(cache.xhat.size());
  double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
  std::vector<double> dxhat(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double xh = cache.xhat[static_cast<size_t>(i)];
    dgain->v[static_cast<size_t>(i)] += dy[i] * xh;
    dbias->v[static_cast<size_t>(i)] += dy[i];
    const double d = dy[i] * gain.v[static_cast<size_t>(i)];
    dxhat[static_cast<size_t>(i)] = d;
    mean_dxhat += d;
    mean_dxhat_xhat += d * xh;
  }
  mean_dxhat /= n;
  mean_dxhat_xhat /= n;
  for (int i = 0; i < n; ++i) {
    const double xh = cache.xhat[static_cast<size_t>(i)];
    dx[i] += cache.inv_std *
             (dxhat[static_cast<size_t>(i)] - mean_dxhat - xh * mean_dxhat_xhat);
  }
}

}  // namespace sts
