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

#include "lsca/autodiff.hpp"
#include "lsca/common.hpp"
#include "lsca/vocab.hpp"

namespace lsca {

struct ModelConfig {
  int num_layers = 2;
  int d_model = 32;
  int d_ffn = 64;
  int num_heads = 2;
  int conv_channels = 16;
  int feat_dim = 16;
  double dropout = 0.0;
  bool with_mixture_head = true;
  int man_vocab_size = 0;  // per-head sizes, blank and unk included
  int eng_vocab_size = 0;

  int mixture_vocab_size() const { return man_vocab_size + eng_vocab_size - 2; }
  int head_vocab_size(Lang lang) const {
    return lang == Lang::kMandarin ? man_vocab_size : eng_vocab_size;
  }
  void validate() const;
  bool same_shape(const ModelConfig& other) const;
};

enum class ModelKind { kMono, kDual };

// All trainable tensors, addressed by hierarchical name. A monolingual
// model holds enc.* and head.*; the dual model holds man.*, eng.*,
// fusion.* and (optionally) mix_head.*.
struct ModelParams {
  ModelKind kind = ModelKind::kDual;
  Lang mono_lang = Lang::kMandarin;  // meaningful for kMono only
  ModelConfig cfg;
  std::map<std::string, Matrix> tensors;

  const Matrix& tensor(const std::string& name) const;
};

ModelParams init_mono_params(const ModelConfig& cfg, Lang lang, std::uint64_t seed);
ModelParams init_dual_params(const ModelConfig& cfg, std::uint64_t seed);

// Copies both pretrained encoder+head pairs into the dual model; the
// fusion layer and mixture head keep their fresh initialization.
void load_from_pretrained(ModelParams& dual, const ModelParams& man_mono,
                          const ModelParams& eng_mono);

// The man./eng. branch of a dual model as a standalone monolingual model.
ModelParams extract_mono(const ModelParams& dual, Lang lang);

// Element-wise arithmetic mean over identically shaped checkpoints.
ModelParams average_checkpoints(const std::vector<ModelParams>& ckpts);

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

namespace model {

// Lazily registers a parameter store's tensors on a tape, one node per
// distinct name.
class TapeBinding {
 public:
  TapeBinding(autodiff::Tape& tape, const ModelParams& params)
      : tape_(tape), params_(params) {}
  autodiff::Var operator()(const std::string& name);
  autodiff::Tape& tape() { return tape_; }

 private:
  autodiff::Tape& tape_;
  const ModelParams& params_;
  std::map<std::string, autodiff::Var> bound_;
};

struct ForwardOptions {
  bool train = false;
  Rng* dropout_rng = nullptr;  // required when train and dropout > 0
};

// Conv subsampling, positional encoding, then the encoder blocks.
// `prefix` selects the branch ("enc" for mono, "man.enc" / "eng.enc").
// Requires at least 4 frames and exactly cfg.feat_dim features.
autodiff::Var encode(TapeBinding& tb, const ModelConfig& cfg, const std::string& prefix,
                     const Matrix& features, const ForwardOptions& opt);

// LayerNorm(h_man + h_eng) followed by the learned affine map.
autodiff::Var fuse_hidden(TapeBinding& tb, autodiff::Var h_man, autodiff::Var h_eng);

// Projection head logits; pair with softmax/log_softmax as needed.
autodiff::Var head_logits(TapeBinding& tb, const std::string& head_prefix, autodiff::Var h);

// Evaluation-mode posterior grids (softmax rows) for decoding.
struct DualPosteriors {
  Matrix man;  // T' x man_vocab_size
  Matrix eng;  // T' x eng_vocab_size
  std::optional<Matrix> mix;  // T' x mixture size, absent without a mixture head
};
DualPosteriors dual_posteriors(const ModelParams& dual, const Matrix& features);
Matrix mono_posteriors(const ModelParams& mono, const Matrix& features);

}  // namespace model
}  // namespace lsca
