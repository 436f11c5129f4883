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

#include <string>
#include <vector>

#include "lsca/config.hpp"

namespace lsca {

// Full experiment recipe: pretrain both monolingual models, train one
// code-switching system per lambda, sweep the fusion weight on the test
// set, decode straight from the pretrained checkpoints, and dump probes
// before and after the language-specific training.
struct ExperimentPlan {
  RunConfig run;                  // profile, model and stage configs
  std::vector<double> lambdas{0.0, 0.7, 1.0};
  std::vector<double> alphas{0.0, 0.3, 0.5, 0.7, 1.0};
  std::string corpus_dir;         // synth layout: manifests + vocab/ + features/
  std::string out_root;
  double probe_lambda = 0.7;      // branch checkpoints used for the post probes
  int probe_utterances = 3;
  int jobs = 1;
};

struct ExperimentResult {
  std::string sweep_csv;
  std::string report_json;
  double baseline_mer_pct = 0;       // (lambda=0, alpha=0)
  double best_mer_pct = 0;
  double pretrained_only_mer_pct = 0;
  double probe_pre_confidence = 0;   // mean own-language top-1, pretrained
  double probe_post_confidence = 0;  // same after language-specific training
  SweepTable table;
  std::string man_pretrain_ckpt;
  std::string eng_pretrain_ckpt;
  std::vector<SweepModel> trained_models;
};

// Stages that already have a DONE marker under out_root are reused, so a
// crashed or repeated run only pays for what is missing.
ExperimentResult run_experiment(const ExperimentPlan& plan);

}  // namespace lsca
