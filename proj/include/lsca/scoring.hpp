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
#include <string_view>
#include <vector>

#include "lsca/common.hpp"
#include "lsca/vocab.hpp"

namespace lsca {

// Scoring units of the mixed error rate: one unit per CJK character, one
// per whitespace-delimited word otherwise. "@@ " subword joints are fused
// before unitization.
std::vector<std::string> to_scoring_tokens(std::string_view text);

struct EditCounts {
  long sub = 0;
  long del = 0;
  long ins = 0;
  long total() const { return sub + del + ins; }
};

// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
// prefers diagonal over up over left, so the (S,D,I) split is deterministic.
EditCounts edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

struct CategoryScore {
  long sub = 0;
  long del = 0;
  long ins = 0;
  long ref_tokens = 0;

  double mer_pct() const;  // full precision; display rounds half-up to 2dp
};

struct ScoredUtt {
  std::string utt_id;
  std::string ref_text;
  std::string hyp_text;
  std::string category;  // "man" | "eng" | "cs"
};

struct MerReport {
  std::map<std::string, CategoryScore> per_category;
  CategoryScore overall;
};

MerReport score_set(std::span<const ScoredUtt> utts);

double display_mer(const CategoryScore& score);  // rounded half-up, 2 decimals
std::string mer_report_json(const MerReport& report);
std::string mer_report_table(const MerReport& report);

// Per-frame top-1 probe over the two language-specific posterior grids.
// Frames where both top-1 tokens are blank are dropped; blank renders as
// "#" and unk as "*".
struct ProbeRow {
  Index frame = 0;
  std::string man_token;
  double man_prob = 0;
  bool man_is_unk = false;
  std::string eng_token;
  double eng_prob = 0;
  bool eng_is_unk = false;
};

std::vector<ProbeRow> probe_frames(const Matrix& p_man, const Matrix& p_eng,
                                   const VocabSet& vocab);
void write_probe_csv(const std::string& path, std::span<const ProbeRow> rows);
// Scatter of the two top-1 probability series; unk probabilities are left
// out of the plot (they stay in the CSV).
void write_probe_svg(const std::string& path, std::span<const ProbeRow> rows);

}  // namespace lsca
