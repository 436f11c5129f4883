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
#include <span>
#include <string>
#include <vector>

#include "lsca/common.hpp"
#include "lsca/data.hpp"
#include "lsca/model.hpp"
#include "lsca/vocab.hpp"

namespace lsca {

// Transformer warmup schedule: scale * d_model^-0.5 * min(step^-0.5,
// step * warmup^-1.5). Peaks at step == warmup.
double lr_at(long step, int d_model, long warmup_steps, double scale);

struct SpecAugmentConfig {
  int num_freq_masks = 2;
  int freq_mask_width = 10;  // F: widths drawn from [0, F]
  int num_time_masks = 3;
  int time_mask_width = 50;  // T: widths drawn from [0, T], clipped to length
};

// Zeroes random feature bands and time spans. Masks are clipped at the
// matrix boundary; width draws include 0.
Matrix spec_augment(const Matrix& feats, const SpecAugmentConfig& cfg, Rng& rng);

// One resolved training utterance: manifest record plus its frame count
// (read from the feature header, the file itself is loaded per batch).
struct UttEntry {
  std::string utt_id;
  std::string feature_path;
  std::string text;
  std::string category;
  Index frames = 0;
};

std::vector<UttEntry> load_entries(const std::string& manifest_path);

struct Batch {
  std::vector<int> entry_indices;
  Index total_frames = 0;
};

// Seeded shuffle, then greedy packing under the frame cap. Utterances
// larger than the cap are rejected by name.
std::vector<Batch> make_batches(std::span<const UttEntry> entries, Index max_frames,
                                std::uint64_t seed);

struct BatchItem {
  std::string utt_id;
  Matrix feats;
  LabelSequence target;  // original mixture-vocabulary ids
};

// Zero-padded view of a batch: features stacked as (B*max_len) x F with a
// per-utterance valid-frame count. Frames at and beyond lengths[i] are
// padding; downstream CTC only ever sees the valid prefix.
struct PaddedBatch {
  Matrix features;
  std::vector<Index> lengths;
  Index max_len = 0;
};
PaddedBatch pad_batch(std::span<const BatchItem> items);

struct LossBreakdown {
  double mix = 0;
  double man = 0;
  double eng = 0;
  double lambda = 0;
  int trained = 0;  // utterances contributing to the means
  int skipped = 0;  // utterances with an infeasible required target

  double ls() const { return (man + eng) / 2.0; }
  double total() const { return (1.0 - lambda) * mix + lambda * ls(); }
};

struct StepResult {
  LossBreakdown loss;
  // Complete over the model's tensors; parameters off the loss path carry
  // exact zeros.
  std::map<std::string, Matrix> grads;
};

// Multi-task objective over one batch: mixture CTC on original targets
// plus the two language-specific CTC losses on remapped targets, each a
// mean over the batch's feasible utterances. The branches an endpoint
// lambda does not use are never built, so their gradients are exact zeros.
StepResult combined_loss(const ModelParams& dual, std::span<const BatchItem> items,
                         double lambda, const VocabSet& vocab,
                         bool collapse_unk_runs = false, bool train_mode = false,
                         Rng* dropout_rng = nullptr);

// Plain CTC for one monolingual model (pretraining stages).
StepResult mono_ctc_loss(const ModelParams& mono, std::span<const BatchItem> items,
                         const VocabSet& vocab, bool train_mode = false,
                         Rng* dropout_rng = nullptr);

// Adam with the constants used throughout: beta1 0.9, beta2 0.98, eps 1e-9.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(double beta1, double beta2, double epsilon)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(ModelParams& params, const std::map<std::string, Matrix>& grads, double lr);
  long steps_taken() const { return t_; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.98;
  double epsilon_ = 1e-9;
  long t_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

struct TrainConfig {
  double lambda = 0.0;
  long warmup_steps = 200;
  double lr_scale = 1.0;
  int epochs = 10;
  Index max_frames_per_batch = 2000;
  SpecAugmentConfig spec_augment;
  bool use_spec_augment = true;
  std::uint64_t seed = 1;
  int average_last_n = 5;
  bool collapse_unk_runs = false;
  bool freeze_pretrained = false;

  void validate() const;
};

enum class TrainStage { kPretrainMan, kPretrainEng, kCsTrain };

struct TrainOutput {
  std::string final_checkpoint;
  std::vector<std::string> epoch_checkpoints;
  std::string metrics_path;
  long steps = 0;
  long trained_utterances = 0;
  long skipped_utterances = 0;
  double last_total_loss = 0;
  double first_total_loss = 0;
};

// Pretraining stages fit one encoder+head with plain CTC; the
// code-switching stage starts from the two pretrained checkpoints and
// optimizes the interpolated objective. Writes per-epoch checkpoints, the
// averaged final checkpoint and a JSONL metrics log into out_dir.
TrainOutput train_loop(TrainStage stage, const ModelConfig& mcfg, const TrainConfig& tcfg,
                       const VocabSet& vocab, const std::string& manifest_path,
                       const std::string& out_dir, const std::string& man_ckpt = "",
                       const std::string& eng_ckpt = "");

}  // namespace lsca
