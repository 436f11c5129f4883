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

#include "lsca/autodiff.hpp"

#include <doctest.h>

#include "gradcheck_support.hpp"
#include "lsca/numeric.hpp"

using namespace lsca;
namespace ad = lsca::autodiff;
using lsca::testing::max_gradient_error;
using lsca::testing::random_matrix;

TEST_CASE("softmax of a uniform row is uniform") {
  ad::Tape t;
  Matrix x(1, 2);
  x << 0.0, 0.0;
  const ad::Var y = ad::softmax_rows(t.input(x));
  CHECK(y.value()(0, 0) == doctest::Approx(0.5));
  CHECK(y.value()(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("softmax rows sum to one, log_softmax matches log(softmax)") {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 6, 9, -4, 4);
  ad::Tape t;
  const ad::Var v = t.input(x);
  const Matrix sm = ad::softmax_rows(v).value();
  const Matrix lsm = ad::log_softmax_rows(v).value();
  for (Index r = 0; r < x.rows(); ++r) {
    CHECK(std::abs(sm.row(r).sum() - 1.0) < 1e-12);
  }
  CHECK((lsm - sm.array().log().matrix()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("layer_norm of a zero-variance row returns the bias") {
  ad::Tape t;
  const ad::Var x = t.input(Matrix::Zero(1, 4));
  Matrix gain(1, 4), bias(1, 4);
  gain << 2, 2, 2, 2;
  bias << 0.5, -0.5, 1.0, 0.0;
  const ad::Var y = ad::layer_norm(x, t.param(gain, "g"), t.param(bias, "b"));
  CHECK((y.value() - bias).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("affine with identity weights and zero bias is the identity") {
  ad::Tape t;
  Rng rng(3);
  const Matrix x = random_matrix(rng, 5, 4);
  const ad::Var y =
      ad::affine(t.input(x), t.param(Matrix::Identity(4, 4), "w"),
                 t.param(Matrix::Zero(1, 4), "b"));
  CHECK((y.value() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss = sum(x) has all-ones gradient; unused parameters get zero") {
  ad::Tape t;
  const ad::Var x = t.param(Matrix::Constant(3, 2, 1.5), "x");
  const ad::Var unused = t.param(Matrix::Constant(2, 2, 7.0), "unused");
  t.backward(ad::sum(x));
  CHECK(x.grad() == Matrix::Constant(3, 2, 1.0));
  CHECK(unused.grad() == Matrix::Zero(2, 2));
}

TEST_CASE("loss = x*x at x=3 has gradient 6") {
  ad::Tape t;
  const ad::Var x = t.param(Matrix::Constant(1, 1, 3.0), "x");
  t.backward(ad::sum(ad::mul(x, x)));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("backward rejects misuse") {
  ad::Tape t;
  CHECK_THROWS_AS(t.backward(ad::Var{&t, 0}), Error);  // nothing evaluated yet

  const ad::Var x = t.param(Matrix::Constant(2, 2, 1.0), "x");
  CHECK_THROWS_AS(t.backward(x), Error);  // non-scalar loss
  const ad::Var loss = ad::sum(x);
  CHECK_THROWS_AS(x.grad(), Error);  // gradients before backward
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), Error);  // backward twice
}

TEST_CASE("forward is reproducible for fixed inputs and seed") {
  const auto run = [] {
    Rng rng(11);
    ad::Tape t;
    const ad::Var x = t.input(random_matrix(rng, 4, 6));
    Rng drop_rng(99);
    const ad::Var y = ad::dropout(ad::relu(x), 0.3, drop_rng);
    return Matrix(y.value());
  };
  CHECK(run() == run());
}

TEST_CASE("conv2d_subsample halves both axes with pad-1 stride-2 kernels") {
  // Oracle: enumerate window start positions over the padded axis.
  const auto brute_len = [](Index n) {
    Index count = 0;
    for (Index start = -1; start + 2 <= n; start += 2) ++count;
    return count;
  };
  for (const Index t : {4, 5, 8, 10, 16, 33}) {
    CHECK(conv_subsampled_len(t) == brute_len(t));
  }
  CHECK(subsampled_frames(16) == 4);
  CHECK(subsampled_frames(10) == 3);

  Rng rng(21);
  ad::Tape t;
  const int in_ch = 2, out_ch = 3;
  const Index frames = 10, feats = 8;
  const ad::Var x = t.input(random_matrix(rng, in_ch * frames, feats));
  const ad::Var w = t.param(random_matrix(rng, out_ch, in_ch * 9), "w");
  const ad::Var b = t.param(random_matrix(rng, 1, out_ch), "b");
  const ad::Var y = ad::conv2d_subsample(x, w, b, in_ch, out_ch);
  CHECK(y.rows() == out_ch * conv_subsampled_len(frames));
  CHECK(y.cols() == conv_subsampled_len(feats));
}

TEST_CASE("merge_channels gathers channels per frame") {
  ad::Tape t;
  Matrix x(4, 2);  // 2 channels x 2 frames
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  const ad::Var y = ad::merge_channels(t.input(x), 2);
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 4);
  CHECK(y.value()(0, 0) == 1);
  CHECK(y.value()(0, 2) == 5);  // channel 1, frame 0
  CHECK(y.value()(1, 1) == 4);
  CHECK(y.value()(1, 3) == 8);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(2024);
  const int kConfigs = 20;

  SUBCASE("linear map stays below 1e-6") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4),
                  n = rng.uniform_int(1, 4);
      const Real err = max_gradient_error(
          [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::matmul(v[0], v[1]); },
          {random_matrix(rng, m, k), random_matrix(rng, k, n)}, rng, 1e-6);
      CHECK(err < 1e-6);
    }
  }

  SUBCASE("add, mul, scale, transpose, sum") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index m = rng.uniform_int(1, 5), n = rng.uniform_int(1, 5);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::add(v[0], v[1]); },
                {random_matrix(rng, m, n), random_matrix(rng, m, n)}, rng) < 1e-4);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::mul(v[0], v[1]); },
                {random_matrix(rng, m, n), random_matrix(rng, m, n)}, rng) < 1e-4);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::scale(v[0], 1.7); },
                {random_matrix(rng, m, n)}, rng) < 1e-4);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::transpose(v[0]); },
                {random_matrix(rng, m, n)}, rng) < 1e-4);
      CHECK(max_gradient_error(
                [](ad::Tape& t, const std::vector<ad::Var>& v) {
                  // reduce then broadcast back so the output is matrix-shaped
                  return ad::sum(v[0]);
                },
                {random_matrix(rng, m, n)}, rng) < 1e-4);
    }
  }

  SUBCASE("relu away from the kink") {
    for (int i = 0; i < kConfigs; ++i) {
      Matrix x = random_matrix(rng, 3, 4, 0.05, 1.0);
      for (Index r = 0; r < x.rows(); ++r) {
        for (Index c = 0; c < x.cols(); ++c) {
          if (rng.uniform() < 0.5) x(r, c) = -x(r, c);
        }
      }
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::relu(v[0]); },
                {x}, rng) < 1e-4);
    }
  }

  SUBCASE("affine") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4),
                  n = rng.uniform_int(1, 4);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::affine(v[0], v[1], v[2]);
                },
                {random_matrix(rng, m, k), random_matrix(rng, k, n),
                 random_matrix(rng, 1, n)},
                rng) < 1e-4);
    }
  }

  SUBCASE("layer_norm") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index m = rng.uniform_int(1, 4), n = rng.uniform_int(2, 6);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::layer_norm(v[0], v[1], v[2]);
                },
                {random_matrix(rng, m, n, -2, 2), random_matrix(rng, 1, n, 0.5, 1.5),
                 random_matrix(rng, 1, n)},
                rng) < 1e-4);
    }
  }

  SUBCASE("softmax and log_softmax") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index m = rng.uniform_int(1, 4), n = rng.uniform_int(2, 6);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::softmax_rows(v[0]);
                },
                {random_matrix(rng, m, n, -2, 2)}, rng) < 1e-4);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::log_softmax_rows(v[0]);
                },
                {random_matrix(rng, m, n, -2, 2)}, rng) < 1e-4);
    }
  }

  SUBCASE("slice and concat") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index m = rng.uniform_int(1, 4);
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  std::vector<ad::Var> parts{ad::slice_cols(v[0], 2, 2),
                                             ad::slice_cols(v[0], 0, 2)};
                  return ad::concat_cols(parts);
                },
                {random_matrix(rng, m, 6)}, rng) < 1e-4);
    }
  }

  SUBCASE("dropout with a fixed mask") {
    for (int i = 0; i < kConfigs; ++i) {
      const std::uint64_t mask_seed = rng.next_u64();
      CHECK(max_gradient_error(
                [mask_seed](ad::Tape&, const std::vector<ad::Var>& v) {
                  Rng mask_rng(mask_seed);
                  return ad::dropout(v[0], 0.4, mask_rng);
                },
                {random_matrix(rng, 3, 5)}, rng) < 1e-4);
    }
  }

  SUBCASE("conv2d_subsample") {
    for (int i = 0; i < kConfigs; ++i) {
      const int in_ch = static_cast<int>(rng.uniform_int(1, 2));
      const int out_ch = static_cast<int>(rng.uniform_int(1, 3));
      const Index frames = rng.uniform_int(4, 7), feats = rng.uniform_int(4, 7);
      CHECK(max_gradient_error(
                [in_ch, out_ch](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::conv2d_subsample(v[0], v[1], v[2], in_ch, out_ch);
                },
                {random_matrix(rng, in_ch * frames, feats),
                 random_matrix(rng, out_ch, in_ch * 9), random_matrix(rng, 1, out_ch)},
                rng) < 1e-4);
    }
  }

  SUBCASE("merge_channels") {
    for (int i = 0; i < kConfigs; ++i) {
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::merge_channels(v[0], 3);
                },
                {random_matrix(rng, 9, 4)}, rng) < 1e-4);
    }
  }

  SUBCASE("multi-head self-attention composite") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index frames = rng.uniform_int(2, 5);
      const Index d = 4;
      std::vector<Matrix> inputs{random_matrix(rng, frames, d)};
      for (int p = 0; p < 4; ++p) {
        inputs.push_back(random_matrix(rng, d, d, -0.7, 0.7));
        inputs.push_back(random_matrix(rng, 1, d, -0.2, 0.2));
      }
      // epsilon 5e-4: the deep chain makes 1e-5 probes roundoff-limited
      // against the 1e-8 relative-error floor
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::multi_head_self_attention(v[0], v[1], v[2], v[3], v[4],
                                                       v[5], v[6], v[7], v[8], 2);
                },
                inputs, rng, 5e-4) < 1e-4);
    }
  }

  SUBCASE("feed-forward composite") {
    for (int i = 0; i < kConfigs; ++i) {
      const Index frames = rng.uniform_int(1, 4), d = 3, h = 5;
      CHECK(max_gradient_error(
                [](ad::Tape&, const std::vector<ad::Var>& v) {
                  return ad::feed_forward(v[0], v[1], v[2], v[3], v[4]);
                },
                {random_matrix(rng, frames, d), random_matrix(rng, d, h),
                 random_matrix(rng, 1, h), random_matrix(rng, h, d),
                 random_matrix(rng, 1, d)},
                rng) < 1e-4);
    }
  }
}

TEST_CASE("softmax + cross-entropy gradient matches finite differences") {
  Rng rng(404);
  for (int i = 0; i < 20; ++i) {
    const Index n = rng.uniform_int(2, 6);
    const Matrix logits = random_matrix(rng, 1, n, -2, 2);
    const Index target = rng.uniform_int(0, n - 1);

    ad::Tape t;
    const ad::Var x = t.param(logits, "logits");
    const ad::Var logp = ad::log_softmax_rows(x);
    const ad::Var loss = ad::scale(ad::sum(ad::slice_cols(logp, target, 1)), -1.0);
    t.backward(loss);

    const auto loss_at = [&](const Matrix& probe) {
      ad::Tape t2;
      const ad::Var l = ad::scale(
          ad::sum(ad::slice_cols(ad::log_softmax_rows(t2.param(probe, "p")), target, 1)),
          -1.0);
      return l.value()(0, 0);
    };
    CHECK(ad::finite_diff_check(loss_at, logits, x.grad(), 1e-6) < 1e-4);
  }
}

TEST_CASE("finite_diff_check rejects a zero-dimension parameter") {
  CHECK_THROWS_AS(ad::finite_diff_check([](const Matrix&) { return Real(0); },
                                        Matrix(), Matrix()),
                  Error);
}

TEST_CASE("positional encoding is bounded and frame-dependent") {
  const Matrix pe = ad::sinusoidal_positional_encoding(12, 8);
  CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(pe.row(0) != pe.row(1));
  CHECK(pe(0, 1) == doctest::Approx(1.0));  // cos(0)
}
