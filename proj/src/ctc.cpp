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

#include "lsca/ctc.hpp"

#include <cmath>

#include "lsca/numeric.hpp"

namespace lsca {

namespace {

void check_targets(Index vocab_size, std::span<const int> targets) {
  for (const int y : targets) {
    if (y == kBlankId) throw Error("blank id in target sequence");
    if (y < 0 || y >= vocab_size) {
      throw Error("target id out of range: " + std::to_string(y));
    }
  }
}

// Blank-extended label sequence: [blank, y1, blank, y2, ..., blank].
std::vector<int> extend_with_blanks(std::span<const int> targets) {
  std::vector<int> ext(2 * targets.size() + 1, kBlankId);
  for (std::size_t i = 0; i < targets.size(); ++i) ext[2 * i + 1] = targets[i];
  return ext;
}

}  // namespace

bool ctc_feasible(Index num_frames, std::span<const int> targets) {
  Index needed = static_cast<Index>(targets.size());
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (targets[i] == targets[i - 1]) ++needed;
  }
  return num_frames >= needed;
}

CtcResult ctc_loss(const Matrix& log_probs, std::span<const int> targets) {
  const Index num_frames = log_probs.rows();
  const Index vocab = log_probs.cols();
  if (num_frames < 1 || vocab < 2) throw Error("ctc_loss: degenerate posterior grid");
  check_targets(vocab, targets);

  CtcResult res;
  if (!ctc_feasible(num_frames, targets)) {
    res.loss = std::numeric_limits<Real>::infinity();
    res.feasible = false;
    res.grad_logits = Matrix::Zero(num_frames, vocab);
    res.gamma = Matrix::Zero(num_frames, vocab);
    return res;
  }

  const std::vector<int> ext = extend_with_blanks(targets);
  const Index states = static_cast<Index>(ext.size());
  const Real kLogZero = log_zero<Real>();

  // Forward variables over (frame, extended state).
  Matrix la = Matrix::Constant(num_frames, states, kLogZero);
  la(0, 0) = log_probs(0, ext[0]);
  if (states > 1) la(0, 1) = log_probs(0, ext[1]);
  for (Index t = 1; t < num_frames; ++t) {
    for (Index s = 0; s < states; ++s) {
      Real acc = la(t - 1, s);
      if (s >= 1) acc = log_add(acc, la(t - 1, s - 1));
      // Skipping a blank is allowed unless the two labels are equal.
      if (s >= 2 && ext[s] != kBlankId && ext[s] != ext[s - 2]) {
        acc = log_add(acc, la(t - 1, s - 2));
      }
      la(t, s) = (acc == kLogZero) ? kLogZero : acc + log_probs(t, ext[s]);
    }
  }

  Real log_total = la(num_frames - 1, states - 1);
  if (states > 1) log_total = log_add(log_total, la(num_frames - 1, states - 2));

  if (log_total == kLogZero) {
    // Structurally feasible but zero-probability (hard zeros in the grid).
    res.loss = std::numeric_limits<Real>::infinity();
    res.feasible = false;
    res.grad_logits = Matrix::Zero(num_frames, vocab);
    res.gamma = Matrix::Zero(num_frames, vocab);
    return res;
  }

  // Backward variables.
  Matrix lb = Matrix::Constant(num_frames, states, kLogZero);
  lb(num_frames - 1, states - 1) = log_probs(num_frames - 1, ext[states - 1]);
  if (states > 1) {
    lb(num_frames - 1, states - 2) = log_probs(num_frames - 1, ext[states - 2]);
  }
  for (Index t = num_frames - 2; t >= 0; --t) {
    for (Index s = states - 1; s >= 0; --s) {
      Real acc = lb(t + 1, s);
      if (s + 1 < states) acc = log_add(acc, lb(t + 1, s + 1));
      if (s + 2 < states && ext[s + 2] != kBlankId && ext[s + 2] != ext[s]) {
        acc = log_add(acc, lb(t + 1, s + 2));
      }
      lb(t, s) = (acc == kLogZero) ? kLogZero : acc + log_probs(t, ext[s]);
    }
  }

  // State occupancy gamma_t(s) = alpha_t(s) * beta_t(s) / (P * p_t(ext[s]));
  // alpha and beta both include the frame emission, so divide once.
  res.gamma = Matrix::Zero(num_frames, vocab);
  for (Index t = 0; t < num_frames; ++t) {
    for (Index s = 0; s < states; ++s) {
      if (la(t, s) == kLogZero || lb(t, s) == kLogZero) continue;
      const Real lg = la(t, s) + lb(t, s) - log_probs(t, ext[s]) - log_total;
      res.gamma(t, ext[s]) += std::exp(lg);
    }
  }

  res.loss = -log_total;
  res.feasible = true;
  res.grad_logits = log_probs.array().exp().matrix() - res.gamma;
  return res;
}

Real ctc_brute_force(const Matrix& probs, std::span<const int> targets) {
  const Index num_frames = probs.rows();
  const Index vocab = probs.cols();
  check_targets(vocab, targets);
  const double instance = std::pow(static_cast<double>(vocab),
                                   static_cast<double>(num_frames));
  if (instance > 1e7) throw Error("ctc_brute_force: instance too large");

  std::vector<int> frames(static_cast<std::size_t>(num_frames), 0);
  const std::vector<int> want(targets.begin(), targets.end());
  Real total = 0;
  while (true) {
    if (collapse_alignment(frames) == want) {
      Real p = 1;
      for (Index t = 0; t < num_frames; ++t) p *= probs(t, frames[static_cast<std::size_t>(t)]);
      total += p;
    }
    // Odometer increment over the V^T label grid.
    Index pos = 0;
    while (pos < num_frames) {
      if (++frames[static_cast<std::size_t>(pos)] < vocab) break;
      frames[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == num_frames) break;
  }
  return total;
}

std::vector<int> collapse_alignment(std::span<const int> frame_labels) {
  std::vector<int> out;
  int prev = -1;
  for (const int label : frame_labels) {
    if (label != prev && label != kBlankId) out.push_back(label);
    prev = label;
  }
  return out;
}

std::vector<int> greedy_decode(const Matrix& scores) {
  if (scores.rows() < 1 || scores.cols() < 1) throw Error("greedy_decode: empty grid");
  std::vector<int> frames(static_cast<std::size_t>(scores.rows()));
  for (Index t = 0; t < scores.rows(); ++t) {
    frames[static_cast<std::size_t>(t)] = static_cast<int>(argmax_row(scores, t));
  }
  return collapse_alignment(frames);
}

}  // namespace lsca
