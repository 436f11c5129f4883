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

#include <span>
#include <vector>

#include "lsca/common.hpp"

namespace lsca {

// Blank lives at index 0 in every vocabulary.
struct CtcResult {
  Real loss = 0;        // -log P(y|x); +infinity when infeasible
  bool feasible = false;
  Matrix grad_logits;   // T' x V, equals softmax(logits) - gamma
  Matrix gamma;         // T' x V alignment posterior; zero when infeasible
};

// A target of length L with R adjacent equal pairs needs at least L + R
// frames (a blank must separate each repeat).
bool ctc_feasible(Index num_frames, std::span<const int> targets);

// Log-domain forward-backward over the blank-extended label sequence.
// `log_probs` must hold row-normalized log posteriors (T' x V). The
// returned gradient is taken with respect to the pre-softmax logits.
// Infeasible targets yield an infinite loss and zero gradients, never NaN.
CtcResult ctc_loss(const Matrix& log_probs, std::span<const int> targets);

// Test oracle: sum of path products over every frame labelling that
// collapses to `targets`. Rejects instances with V^T > 10^7.
Real ctc_brute_force(const Matrix& probs, std::span<const int> targets);

// Merge adjacent repeats, then delete blanks.
std::vector<int> collapse_alignment(std::span<const int> frame_labels);

// Per-frame argmax (ties break toward the lowest index), then collapse.
// Works on probabilities or on unnormalized score grids.
std::vector<int> greedy_decode(const Matrix& scores);

}  // namespace lsca
