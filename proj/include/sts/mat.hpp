// include/sts/mat.hpp

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

#ifndef STS_MAT_HPP_
#define STS_MAT_HPP_

#include <vector>

#include "sts/error.hpp"

namespace sts {

// Minimal dense row-major double matrix; all model math is double precision.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  double &operator()(int r, int c) {
    return v[static_cast<size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return v[static_cast<size_t>(r) * cols + c];
  }
  const double *Row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  double *Row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  size_t Size() const { return v.size(); }
};

}  // namespace sts

#endif  // STS_MAT_HPP_
