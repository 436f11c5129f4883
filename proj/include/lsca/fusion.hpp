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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsca/common.hpp"
#include "lsca/model.hpp"
#include "lsca/scoring.hpp"
#include "lsca/vocab.hpp"

namespace lsca {

struct FusionConfig {
  double alpha = 0.0;
  // Decode from the two language-specific heads alone (no mixture head);
  // behaves like alpha = 1 with the unk rule below.
  bool lsm_only = false;
  enum class LsmOnlyUnk { kAverage, kZero };
  LsmOnlyUnk lsm_only_unk = LsmOnlyUnk::kAverage;
};

// Per-frame fusion of the three posterior grids into a mixture-vocabulary
// score grid. Mandarin and english units interpolate the mixture row with
// the matching head entry, blank interpolates with the head average, unk
// keeps the mixture probability. Scores stay in [0,1] but rows are not
// renormalized; only the argmax is consumed downstream.
Matrix fuse_posteriors(const Matrix* p_mix, const Matrix& p_man, const Matrix& p_eng,
                       const FusionConfig& cfg, const VocabSet& vocab);

// Greedy argmax over fused scores followed by the usual collapse.
std::vector<int> decode_fused(const Matrix& scores);

struct DecodedUtterance {
  std::string utt_id;
  std::string hyp_text;
  std::vector<int> hyp_ids;  // mixture vocabulary
};

struct DecodeResult {
  std::vector<DecodedUtterance> utterances;
  MerReport report;
};

// Decode a manifest with one dual model at a fixed fusion weight.
DecodeResult decode_manifest(const ModelParams& dual, const std::string& manifest_path,
                             const VocabSet& vocab, const FusionConfig& cfg, int jobs = 1);

// Fused decoding straight from two monolingual checkpoints.
DecodeResult decode_pretrained_only(const ModelParams& man_mono, const ModelParams& eng_mono,
                                    const std::string& manifest_path, const VocabSet& vocab,
                                    FusionConfig::LsmOnlyUnk unk_rule =
                                        FusionConfig::LsmOnlyUnk::kAverage,
                                    int jobs = 1);

struct SweepModel {
  double lambda = 0;
  std::string checkpoint_path;
};

struct SweepCell {
  bool available = false;
  double mer_pct = 0;  // overall MER, full precision
};

struct SweepTable {
  std::vector<double> lambdas;
  std::vector<double> alphas;
  std::vector<std::vector<SweepCell>> cells;  // [lambda][alpha]
};

// One decode per (model, alpha) cell over the test manifest; posterior
// grids are computed once per model and reused across the alpha grid.
// Cells where the model has no mixture head and alpha < 1 are unavailable;
// such models decode lsm-only with the given unk rule.
SweepTable sweep(std::span<const SweepModel> models, const std::string& manifest_path,
                 const VocabSet& vocab, std::span<const double> alphas, int jobs = 1,
                 FusionConfig::LsmOnlyUnk unk_rule = FusionConfig::LsmOnlyUnk::kAverage);

// Table layout: header row of alpha values, one row per lambda, cells with
// 2-decimal MER and "-" where unavailable. Reference full-scale results are
// quoted in comment lines.
void write_sweep_csv(const std::string& path, const SweepTable& table);

}  // namespace lsca
