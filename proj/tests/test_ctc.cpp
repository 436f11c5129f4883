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

#include <doctest.h>

#include <cmath>

#include "lsca/autodiff.hpp"
#include "lsca/numeric.hpp"

using namespace lsca;

namespace {

Matrix random_posteriors(Rng& rng, Index frames, Index vocab) {
  Matrix logits(frames, vocab);
  for (Index r = 0; r < frames; ++r) {
    for (Index c = 0; c < vocab; ++c) logits(r, c) = rng.gaussian();
  }
  return softmax_rows(logits);
}

std::vector<int> random_targets(Rng& rng, Index vocab, int max_len) {
  std::vector<int> y(static_cast<std::size_t>(rng.uniform_int(0, max_len)));
  for (auto& id : y) id = static_cast<int>(rng.uniform_int(1, vocab - 1));
  return y;
}

}  // namespace

TEST_CASE("single-frame single-label alignment") {
  Matrix p(1, 2);
  p << 0.1, 0.9;  // blank, a
  const std::vector<int> y{1};
  const CtcResult res = ctc_loss(p.array().log(), y);
  CHECK(res.feasible);
  CHECK(res.loss == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("two frames, one label: three alignments") {
  Matrix p(2, 2);
  p << 0.4, 0.6,   // blank, a
       0.5, 0.5;
  const std::vector<int> y{1};
  const CtcResult res = ctc_loss(p.array().log(), y);
  // aa + a.blank + blank.a = 0.3 + 0.3 + 0.2
  CHECK(res.loss == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
  CHECK(ctc_brute_force(p, y) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("repeated label needs a separating blank frame") {
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  const std::vector<int> y{1, 1};
  CHECK_FALSE(ctc_feasible(2, y));
  const CtcResult res = ctc_loss(p.array().log(), y);
  CHECK_FALSE(res.feasible);
  CHECK(std::isinf(res.loss));
  CHECK(res.grad_logits.isZero());
}

TEST_CASE("empty target degenerates to the all-blank path") {
  Matrix p(3, 3);
  p << 0.5, 0.3, 0.2,
       0.6, 0.2, 0.2,
       0.7, 0.2, 0.1;
  const CtcResult res = ctc_loss(p.array().log(), std::vector<int>{});
  CHECK(res.loss == doctest::Approx(-std::log(0.5 * 0.6 * 0.7)).epsilon(1e-12));
  CHECK(ctc_brute_force(p, std::vector<int>{}) ==
        doctest::Approx(0.5 * 0.6 * 0.7).epsilon(1e-12));
}

TEST_CASE("brute force basics") {
  Matrix p(1, 2);
  p << 0.5, 0.5;
  CHECK(ctc_brute_force(p, std::vector<int>{1}) == doctest::Approx(0.5));

  Matrix q(2, 3);
  q << 0.3, 0.3, 0.4, 0.3, 0.3, 0.4;
  CHECK(ctc_brute_force(q, std::vector<int>{1, 2, 1}) == 0.0);  // longer than T'

  Matrix big = Matrix::Constant(30, 10, 0.1);
  CHECK_THROWS_AS(ctc_brute_force(big, std::vector<int>{1}), Error);
}

TEST_CASE("forward-backward equals alignment enumeration on random instances") {
  Rng rng(12345);
  int checked = 0;
  while (checked < 220) {
    const Index frames = rng.uniform_int(1, 6);
    const Index vocab = rng.uniform_int(2, 4);
    const Matrix p = random_posteriors(rng, frames, vocab);
    const std::vector<int> y = random_targets(rng, vocab, 3);
    const Real oracle = ctc_brute_force(p, y);
    const CtcResult res = ctc_loss(p.array().log(), y);
    if (!res.feasible) {
      CHECK(oracle == doctest::Approx(0.0).epsilon(1e-300));
      continue;
    }
    const Real via_dp = std::exp(-res.loss);
    CHECK(std::abs(via_dp - oracle) / oracle <= 1e-9);
    CHECK(via_dp >= 0.0);
    CHECK(via_dp <= 1.0 + 1e-12);
    ++checked;
  }
}

TEST_CASE("gradient matches central differences over logits") {
  Rng rng(999);
  for (int trial = 0; trial < 20; ++trial) {
    const Index frames = rng.uniform_int(2, 6);
    const Index vocab = rng.uniform_int(2, 5);
    Matrix logits(frames, vocab);
    for (Index r = 0; r < frames; ++r) {
      for (Index c = 0; c < vocab; ++c) logits(r, c) = rng.gaussian();
    }
    std::vector<int> y = random_targets(rng, vocab, 3);
    while (!ctc_feasible(frames, y)) y.pop_back();

    const CtcResult res = ctc_loss(log_softmax_rows(logits), y);
    const auto loss_at = [&](const Matrix& l) {
      return ctc_loss(log_softmax_rows(l), y).loss;
    };
    const Real err = autodiff::finite_diff_check(loss_at, logits, res.grad_logits, 1e-6);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("gamma rows are alignment posteriors summing to one") {
  Rng rng(31);
  const Matrix p = random_posteriors(rng, 5, 4);
  const std::vector<int> y{2, 1};
  const CtcResult res = ctc_loss(p.array().log(), y);
  for (Index t = 0; t < 5; ++t) {
    CHECK(res.gamma.row(t).sum() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("collapse_alignment rules") {
  CHECK(collapse_alignment(std::vector<int>{0, 1, 1, 0, 2}) == std::vector<int>{1, 2});
  CHECK(collapse_alignment(std::vector<int>{1, 0, 1}) == std::vector<int>{1, 1});
  CHECK(collapse_alignment(std::vector<int>{0, 0}) == std::vector<int>{});
  // idempotent on blank-free sequences without adjacent repeats
  const std::vector<int> clean{1, 2, 1, 3};
  CHECK(collapse_alignment(clean) == clean);
}

TEST_CASE("greedy_decode: argmax, lowest-index ties, collapse") {
  Matrix p(4, 3);
  p << 0.8, 0.1, 0.1,   // blank
       0.1, 0.8, 0.1,   // 1
       0.2, 0.6, 0.2,   // 1
       0.1, 0.2, 0.7;   // 2
  CHECK(greedy_decode(p) == std::vector<int>{1, 2});

  Matrix blanks = Matrix::Zero(3, 2);
  blanks.col(0).setConstant(0.9);
  blanks.col(1).setConstant(0.1);
  CHECK(greedy_decode(blanks).empty());

  Matrix tie(1, 6);
  tie << 0.1, 0.1, 0.3, 0.1, 0.1, 0.3;  // ids 2 and 5 tie
  CHECK(greedy_decode(tie) == std::vector<int>{2});
}

TEST_CASE("greedy_decode output never contains blank") {
  Rng rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const Matrix p = random_posteriors(rng, rng.uniform_int(1, 8), rng.uniform_int(2, 6));
    for (const int id : greedy_decode(p)) CHECK(id != kBlankId);
  }
}

TEST_CASE("target validation") {
  Matrix p(2, 3);
  p << 0.5, 0.25, 0.25, 0.5, 0.25, 0.25;
  CHECK_THROWS_AS(ctc_loss(p.array().log(), std::vector<int>{0}), Error);
  CHECK_THROWS_AS(ctc_loss(p.array().log(), std::vector<int>{3}), Error);
}
