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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsca/data.hpp"
#include "lsca/fusion.hpp"
#include "lsca/model.hpp"
#include "lsca/train.hpp"

namespace lsca {

// Everything a run needs, resolved from profile defaults, an optional
// key=value config file, and per-flag overrides, in that order.
struct RunConfig {
  std::string profile = "toy";
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig cs_train;
  SynthConfig synth;
  FusionConfig::LsmOnlyUnk lsm_only_unk = FusionConfig::LsmOnlyUnk::kAverage;
  std::uint64_t seed = 1;

  // Sorted key=value rendering, written next to run outputs.
  std::string serialize() const;
};

// Built-in presets. "paper" mirrors the full-scale recipe (12x256 encoders,
// 250K/2500 warmup, 10K-frame batches); "toy" is the desk-scale profile the
// tests run.
RunConfig profile_defaults(const std::string& name);

// Flat "key = value" text, '#' comments, unknown keys rejected.
std::map<std::string, std::string> parse_key_value_file(const std::string& path);

// Applies file keys and then override pairs ("train.lambda=0.7") on top of
// the base config. Throws ConfigError for unknown keys or bad values.
RunConfig resolve_config(const std::string& profile,
                         const std::optional<std::string>& config_file,
                         const std::vector<std::string>& overrides);

// Uses LSCA_SEED when set and no explicit seed was given.
std::uint64_t resolve_seed(const RunConfig& cfg, std::optional<std::uint64_t> flag_seed);

}  // namespace lsca
