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

#include "lsca/common.hpp"
#include "lsca/vocab.hpp"

namespace lsca {

struct FeatureMatrix {
  std::string utt_id;
  Matrix frames;  // T x F
};

// Binary feature file: magic "LSCAFEAT", u32 version, u32 T, u32 F, then
// T*F little-endian 32-bit floats, row major. Round trips bit-exactly.
void write_features(const std::string& path, const Matrix& frames);
Matrix read_features(const std::string& path);

struct ManifestRecord {
  std::string utt_id;
  std::string feats;  // relative to the manifest's directory
  std::string text;
  std::string category;  // "man" | "eng" | "cs"
};

// JSON-lines manifest. Rejects malformed lines (with line number),
// duplicate utterance ids, unknown categories, and category tags that
// contradict the text's scripts.
std::vector<ManifestRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::string resolve_feature_path(const std::string& manifest_path,
                                 const ManifestRecord& record);

struct SynthConfig {
  int man_vocab_size = 30;
  int eng_final_pieces = 24;
  int eng_continuation_pieces = 12;
  int min_tokens = 3;
  int max_tokens = 7;
  int min_frames_per_token = 4;
  int max_frames_per_token = 8;
  double noise_sigma = 0.08;
  // Amplitude of a cross-language band bleed applied to every third token.
  // Shadowed tokens put energy in the other language's band region, so the
  // combined-vocabulary classifier faces cross-language competition that the
  // per-language heads never see. 0 keeps the bands fully separated.
  double cross_band_shadow = 0.0;
  double man_ratio = 0.27;
  double eng_ratio = 0.25;  // cs ratio is the remainder
  int feat_dim = 16;
  int pretrain_count = 2000;  // per language
  int train_count = 8000;
  int test_count = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthCorpus {
  std::string man_vocab_file;
  std::string eng_vocab_file;
  std::string pretrain_man_manifest;
  std::string pretrain_eng_manifest;
  std::string train_manifest;
  std::string test_manifest;
};

// Deterministic synthetic bilingual corpus. Every token owns a distinct
// spectral template; mandarin templates live in the lower feature bands and
// english in the upper bands, so the two languages are acoustically
// separable. Texts are rendered so that tokenize() recovers the generating
// token sequence exactly.
SynthCorpus synth_corpus(const SynthConfig& cfg, const std::string& out_dir);

// The template a token id would be synthesized with (test hook for the
// nearest-template classifier oracle).
Vector synth_token_template(const SynthConfig& cfg, const VocabSet& vocab, int mixture_id);

}  // namespace lsca
