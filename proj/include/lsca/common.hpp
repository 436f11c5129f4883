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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsca {

// Dense storage is row-major throughout: a T x F feature block or a T' x V
// posterior grid is one row per frame.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

#ifdef LSCA_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Matrix = MatrixT<Real>;
using Vector = VectorT<Real>;
using Index = Eigen::Index;

// Reserved indices shared by the mixture vocabulary and both per-head
// vocabularies.
constexpr int kBlankId = 0;
constexpr int kUnkId = 1;

// Runtime failure (bad data, shape mismatch, I/O). Maps to CLI exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or arguments. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic random source. All sampling is derived from raw mt19937_64
// draws so that sequences are identical across platforms and standard
// libraries; std::uniform_*_distribution makes no such guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], both inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw Error("uniform_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(
                    static_cast<double>(span) * uniform());
  }

  // Box-Muller, uncached.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream for a named sub-task of this seed.
  Rng fork(std::uint64_t salt) {
    return Rng(next_u64() ^ (salt * 0x9E3779B97F4A7C15ull));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace lsca
