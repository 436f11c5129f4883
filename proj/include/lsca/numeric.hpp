// Copyright (c) 2026 lsca authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "lsca/common.hpp"

namespace lsca {

// Log-domain zero. A sentinel, never the result of an overflowing exp.
template <typename Scalar>
constexpr Scalar log_zero() {
  return -std::numeric_limits<Scalar>::infinity();
}

// log(exp(a) + exp(b)) with the larger argument factored out.
template <typename Scalar>
inline Scalar log_add(Scalar a, Scalar b) {
  if (a == log_zero<Scalar>()) return b;
  if (b == log_zero<Scalar>()) return a;
  return (a > b) ? a + std::log1p(std::exp(b - a))
                 : b + std::log1p(std::exp(a - b));
}

// Row-wise softmax with max subtraction.
template <typename Derived>
MatrixT<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out = x;
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Row-wise log-softmax: x - m - log(sum(exp(x - m))).
template <typename Derived>
MatrixT<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out = x;
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar m = out.row(r).maxCoeff();
    const Scalar lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

// Per-row argmax; ties break toward the lowest column index.
template <typename Derived>
Index argmax_row(const Eigen::MatrixBase<Derived>& x, Index row) {
  Index best = 0;
  for (Index c = 1; c < x.cols(); ++c) {
    if (x(row, c) > x(row, best)) best = c;
  }
  return best;
}

// Round half away from zero to `digits` decimals (display convention).
inline double round_half_up(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::floor(x * scale + 0.5) / scale;
}

// Output length of one kernel-3 / stride-2 / pad-1 convolution stage.
inline Index conv_subsampled_len(Index n) { return (n - 1) / 2 + 1; }

// Two CNN stages run before each encoder, so frames shrink to roughly 1/4.
inline Index subsampled_frames(Index t) {
  return conv_subsampled_len(conv_subsampled_len(t));
}

}  // namespace lsca
