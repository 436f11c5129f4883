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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lsca/common.hpp"

namespace lsca::autodiff {

class Tape;

// Handle to a node on a tape. Values are computed eagerly at node creation;
// gradients become available after Tape::backward.
struct Var {
  Tape* tape = nullptr;
  int index = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

// Reverse-mode tape. Creation order is the topological order; backward
// sweeps it once in reverse. One tape models one forward pass; tapes are
// single-owner and cheap to rebuild per step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), {}, nullptr, "constant", false, {}); }
  Var input(Matrix value) { return push(std::move(value), {}, nullptr, "input", false, {}); }
  Var param(Matrix value, std::string name) {
    return push(std::move(value), {}, nullptr, "param", true, std::move(name));
  }

  // Seeds the scalar loss with gradient 1 and accumulates gradients for
  // every node. Parameters off the loss path keep zero gradients.
  void backward(const Var& loss);

  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  // Parameter gradient harvest, in creation order.
  void for_each_param(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  // --- internals shared with the op builders ---
  // Backward closures receive the tape and their own node index; upstream
  // gradient is grad_at(self).
  using BackwardFn = std::function<void(Tape&, int)>;
  Var push(Matrix value, std::vector<int> parents, BackwardFn bw,
           const char* op, bool is_param = false, std::string name = {});
  const Matrix& value_at(int index) const;
  Matrix& grad_at(int index);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    const char* op;
    bool is_param;
    std::string name;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// --- primitive operations -------------------------------------------------

Var add(Var a, Var b);
Var mul(Var a, Var b);              // elementwise
Var scale(Var a, Real factor);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
Var sum(Var a);                     // 1x1 total
Var affine(Var x, Var weight, Var bias);   // x*W + bias (bias broadcast per row)
Var layer_norm(Var x, Var gain, Var bias, Real epsilon = 1e-5);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
Var slice_cols(Var x, Index start, Index count);
Var concat_cols(std::span<const Var> parts);
// Inverted dropout with an explicit stream; rate 0 is rejected (callers
// skip the node instead so evaluation stays draw-free).
Var dropout(Var x, Real rate, Rng& rng);
// Kernel-3 / stride-2 / pad-1 convolution over a channels-stacked matrix:
// x is (in_channels*T) x F, weight is out_channels x (in_channels*9),
// bias is 1 x out_channels; output is (out_channels*T') x F'.
Var conv2d_subsample(Var x, Var weight, Var bias, int in_channels, int out_channels);
// (channels*T) x F -> T x (channels*F), row t gathering all channels.
Var merge_channels(Var x, int channels);

// CTC loss as a graph node: takes row-normalized log posteriors, returns a
// 1x1 loss. The target must be feasible for the grid length.
Var ctc_loss_node(Var log_probs, std::span<const int> targets);

// --- composites -----------------------------------------------------------

Var multi_head_self_attention(Var x, Var wq, Var bq, Var wk, Var bk,
                              Var wv, Var bv, Var wo, Var bo, int num_heads);
Var feed_forward(Var x, Var w1, Var b1, Var w2, Var b2);

// Parameter-free sinusoidal position table (frames x dim).
Matrix sinusoidal_positional_encoding(Index frames, Index dim);

// Central-difference validation of an analytic gradient. `loss_at`
// re-evaluates the scalar loss at a perturbed copy of the parameter.
// Returns the maximum relative error over all entries, with denominator
// max(|analytic|, |numeric|, 1e-8).
Real finite_diff_check(const std::function<Real(const Matrix&)>& loss_at,
                       const Matrix& at, const Matrix& analytic_grad,
                       Real epsilon = 1e-5);

}  // namespace lsca::autodiff
