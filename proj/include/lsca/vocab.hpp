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

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lsca/common.hpp"

namespace lsca {

enum class Lang { kMandarin, kEnglish };

enum class TokenClass { kBlank, kUnk, kMandarin, kEnglish };

// Which index space a label sequence lives in.
enum class VocabKind { kMixture, kManHead, kEngHead };

struct LabelSequence {
  VocabKind kind = VocabKind::kMixture;
  std::vector<int> ids;

  bool operator==(const LabelSequence&) const = default;
};

const char* to_string(Lang lang);
const char* to_string(TokenClass cls);

// The three vocabularies of the dual-encoder system. Mixture layout is
// [blank, unk, mandarin tokens..., english tokens...]; each head keeps
// [blank, unk, own tokens...]. English subwords use the "@@" continuation
// suffix convention. Immutable once built.
class VocabSet {
 public:
  static VocabSet from_files(const std::string& man_token_file,
                             const std::string& eng_token_file);
  static VocabSet from_tokens(std::vector<std::string> man_tokens,
                              std::vector<std::string> eng_tokens);

  int mixture_size() const { return 2 + static_cast<int>(man_.size() + eng_.size()); }
  int head_size(Lang lang) const {
    return 2 + static_cast<int>(lang == Lang::kMandarin ? man_.size() : eng_.size());
  }
  const std::vector<std::string>& tokens(Lang lang) const {
    return lang == Lang::kMandarin ? man_ : eng_;
  }

  TokenClass classify(int mixture_id) const;

  // Mixture index of a token string, or kUnkId when out of vocabulary.
  int mixture_index_of(std::string_view token) const;

  // Index translation between the mixture layout and a head layout. Blank
  // and unk map to themselves; other-language ids are rejected.
  int head_index(Lang lang, int mixture_id) const;
  int mixture_index(Lang lang, int head_id) const;

  std::string token_text(int mixture_id) const;
  std::string head_token_text(Lang lang, int head_id) const;

  // CJK codepoints become one token each; Latin runs are segmented by
  // greedy longest match against the English inventory; anything
  // unmatched becomes unk.
  LabelSequence tokenize(std::string_view text) const;

  // Inverse rendering: Mandarin tokens concatenate, English pieces join on
  // "@@", words are space separated.
  std::string detokenize(const LabelSequence& seq) const;

  // Language-specific target generation: tokens of the other language
  // become unk (one unk per token, or one per run with collapse_unk_runs).
  LabelSequence remap_targets(const LabelSequence& original, Lang lang,
                              bool collapse_unk_runs = false) const;

  // Mixture -> head index translation. The sequence must already be
  // remapped: only blank/unk/own-language tokens are accepted.
  LabelSequence project_label_ids(const LabelSequence& seq, Lang lang) const;

  // Head -> mixture index translation (inverse of project_label_ids).
  LabelSequence lift_label_ids(const LabelSequence& seq, Lang lang) const;

 private:
  VocabSet() = default;
  void build_index();

  std::vector<std::string> man_;
  std::vector<std::string> eng_;
  std::unordered_map<std::string, int> mixture_index_;
  // English matching tables keyed by the strip (marker removed).
  std::unordered_map<std::string, int> eng_continuation_;  // "DAY@@" -> id of DAY@@
  std::unordered_map<std::string, int> eng_final_;
  std::size_t eng_max_strip_len_ = 0;
};

// UTF-8 helpers shared with the scorer.
std::vector<std::string> utf8_codepoints(std::string_view text);
bool is_cjk_codepoint(std::string_view utf8_char);
bool is_latin_letter(std::string_view utf8_char);

}  // namespace lsca
