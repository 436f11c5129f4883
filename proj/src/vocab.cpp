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

#include "lsca/vocab.hpp"

#include <algorithm>
#include <fstream>

namespace lsca {

namespace {

constexpr std::string_view kContinuationMarker = "@@";

bool has_continuation_marker(std::string_view token) {
  return token.size() > kContinuationMarker.size() &&
         token.substr(token.size() - kContinuationMarker.size()) == kContinuationMarker;
}

std::string_view strip_marker(std::string_view token) {
  return has_continuation_marker(token)
             ? token.substr(0, token.size() - kContinuationMarker.size())
             : token;
}

std::uint32_t decode_codepoint(std::string_view utf8_char) {
  const auto* p = reinterpret_cast<const unsigned char*>(utf8_char.data());
  switch (utf8_char.size()) {
    case 1: return p[0];
    case 2: return ((p[0] & 0x1Fu) << 6) | (p[1] & 0x3Fu);
    case 3: return ((p[0] & 0x0Fu) << 12) | ((p[1] & 0x3Fu) << 6) | (p[2] & 0x3Fu);
    case 4:
      return ((p[0] & 0x07u) << 18) | ((p[1] & 0x3Fu) << 12) |
             ((p[2] & 0x3Fu) << 6) | (p[3] & 0x3Fu);
    default: return 0xFFFDu;
  }
}

bool is_space_char(std::string_view c) {
  return c == " " || c == "\t" || c == "\n" || c == "\r";
}

std::vector<std::string> read_token_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.find(' ') != std::string::npos || line.find('\t') != std::string::npos) {
      throw Error("vocabulary token contains whitespace: '" + line + "' in " + path);
    }
    tokens.push_back(line);
  }
  if (tokens.empty()) throw Error("empty vocabulary file: " + path);
  return tokens;
}

}  // namespace

const char* to_string(Lang lang) {
  return lang == Lang::kMandarin ? "man" : "eng";
}

const char* to_string(TokenClass cls) {
  switch (cls) {
    case TokenClass::kBlank: return "blank";
    case TokenClass::kUnk: return "unk";
    case TokenClass::kMandarin: return "mandarin";
    case TokenClass::kEnglish: return "english";
  }
  return "?";
}

std::vector<std::string> utf8_codepoints(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((lead & 0x80u) == 0x00u) len = 1;
    else if ((lead & 0xE0u) == 0xC0u) len = 2;
    else if ((lead & 0xF0u) == 0xE0u) len = 3;
    else if ((lead & 0xF8u) == 0xF0u) len = 4;
    len = std::min(len, text.size() - i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

bool is_cjk_codepoint(std::string_view utf8_char) {
  const std::uint32_t cp = decode_codepoint(utf8_char);
  return (cp >= 0x4E00u && cp <= 0x9FFFu) || (cp >= 0x3400u && cp <= 0x4DBFu);
}

bool is_latin_letter(std::string_view utf8_char) {
  if (utf8_char.size() != 1) return false;
  const char c = utf8_char[0];
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
}

VocabSet VocabSet::from_files(const std::string& man_token_file,
                              const std::string& eng_token_file) {
  return from_tokens(read_token_lines(man_token_file), read_token_lines(eng_token_file));
}

VocabSet VocabSet::from_tokens(std::vector<std::string> man_tokens,
                               std::vector<std::string> eng_tokens) {
  if (man_tokens.empty()) throw Error("empty mandarin token list");
  if (eng_tokens.empty()) throw Error("empty english token list");
  VocabSet v;
  v.man_ = std::move(man_tokens);
  v.eng_ = std::move(eng_tokens);
  v.build_index();
  return v;
}

void VocabSet::build_index() {
  int next = 2;
  for (const auto& t : man_) {
    if (!mixture_index_.emplace(t, next).second) {
      throw Error("duplicate token '" + t + "'");
    }
    ++next;
  }
  for (std::size_t i = 0; i < eng_.size(); ++i) {
    const auto& t = eng_[i];
    if (!mixture_index_.emplace(t, next).second) {
      throw Error("duplicate token '" + t + "'");
    }
    ++next;
    const std::string strip(strip_marker(t));
    if (strip.empty()) throw Error("english token is only a marker: '" + t + "'");
    auto& table = has_continuation_marker(t) ? eng_continuation_ : eng_final_;
    if (!table.emplace(strip, static_cast<int>(i)).second) {
      throw Error("duplicate token '" + t + "'");
    }
    eng_max_strip_len_ = std::max(eng_max_strip_len_, strip.size());
  }
}

TokenClass VocabSet::classify(int mixture_id) const {
  if (mixture_id < 0 || mixture_id >= mixture_size()) {
    throw Error("token id out of range: " + std::to_string(mixture_id));
  }
  if (mixture_id == kBlankId) return TokenClass::kBlank;
  if (mixture_id == kUnkId) return TokenClass::kUnk;
  return mixture_id < 2 + static_cast<int>(man_.size()) ? TokenClass::kMandarin
                                                        : TokenClass::kEnglish;
}

int VocabSet::mixture_index_of(std::string_view token) const {
  const auto it = mixture_index_.find(std::string(token));
  return it == mixture_index_.end() ? kUnkId : it->second;
}

int VocabSet::head_index(Lang lang, int mixture_id) const {
  const TokenClass cls = classify(mixture_id);
  if (cls == TokenClass::kBlank || cls == TokenClass::kUnk) return mixture_id;
  if (lang == Lang::kMandarin) {
    if (cls != TokenClass::kMandarin) {
      throw Error("token id " + std::to_string(mixture_id) + " is not mandarin");
    }
    return mixture_id;  // mandarin ids coincide in both layouts
  }
  if (cls != TokenClass::kEnglish) {
    throw Error("token id " + std::to_string(mixture_id) + " is not english");
  }
  return mixture_id - static_cast<int>(man_.size());
}

int VocabSet::mixture_index(Lang lang, int head_id) const {
  if (head_id < 0 || head_id >= head_size(lang)) {
    throw Error("head token id out of range: " + std::to_string(head_id));
  }
  if (head_id == kBlankId || head_id == kUnkId) return head_id;
  return lang == Lang::kMandarin ? head_id : head_id + static_cast<int>(man_.size());
}

std::string VocabSet::token_text(int mixture_id) const {
  switch (classify(mixture_id)) {
    case TokenClass::kBlank: return "<blank>";
    case TokenClass::kUnk: return "<unk>";
    case TokenClass::kMandarin: return man_[static_cast<std::size_t>(mixture_id - 2)];
    case TokenClass::kEnglish:
      return eng_[static_cast<std::size_t>(mixture_id - 2 - static_cast<int>(man_.size()))];
  }
  return "";
}

std::string VocabSet::head_token_text(Lang lang, int head_id) const {
  return token_text(mixture_index(lang, head_id));
}

LabelSequence VocabSet::tokenize(std::string_view text) const {
  LabelSequence out{VocabKind::kMixture, {}};
  std::string latin_run;

  const auto flush_latin = [&] {
    if (latin_run.empty()) return;
    // Greedy longest match. Continuation pieces may not end the word,
    // final pieces must. An unmatchable word becomes a single unk.
    std::vector<int> piece_ids;
    std::size_t pos = 0;
    bool ok = true;
    while (pos < latin_run.size()) {
      const std::size_t remaining = latin_run.size() - pos;
      std::size_t matched = 0;
      int eng_pos = -1;
      for (std::size_t len = std::min(eng_max_strip_len_, remaining); len >= 1; --len) {
        const std::string strip = latin_run.substr(pos, len);
        const auto& table = (len == remaining) ? eng_final_ : eng_continuation_;
        const auto it = table.find(strip);
        if (it != table.end()) {
          matched = len;
          eng_pos = it->second;
          break;
        }
      }
      if (matched == 0) {
        ok = false;
        break;
      }
      piece_ids.push_back(2 + static_cast<int>(man_.size()) + eng_pos);
      pos += matched;
    }
    if (ok) {
      out.ids.insert(out.ids.end(), piece_ids.begin(), piece_ids.end());
    } else {
      out.ids.push_back(kUnkId);
    }
    latin_run.clear();
  };

  for (const auto& c : utf8_codepoints(text)) {
    if (is_space_char(c)) {
      flush_latin();
    } else if (is_latin_letter(c)) {
      latin_run += c;
    } else {
      flush_latin();
      out.ids.push_back(mixture_index_of(c));
    }
  }
  flush_latin();
  return out;
}

std::string VocabSet::detokenize(const LabelSequence& seq) const {
  if (seq.kind != VocabKind::kMixture) {
    throw Error("detokenize expects a mixture-vocabulary sequence");
  }
  std::string out;
  bool mid_word = false;          // an English word is open (last piece had @@)
  bool space_before_word = false; // a completed word or unk precedes

  const auto begin_word_unit = [&](std::string_view piece) {
    if (!mid_word && space_before_word) out += ' ';
    out += piece;
  };

  for (const int id : seq.ids) {
    switch (classify(id)) {
      case TokenClass::kBlank:
        throw Error("blank in detokenize input");
      case TokenClass::kUnk:
        if (mid_word) mid_word = false;
        begin_word_unit("<unk>");
        space_before_word = true;
        break;
      case TokenClass::kMandarin:
        out += token_text(id);
        mid_word = false;
        space_before_word = false;
        break;
      case TokenClass::kEnglish: {
        const std::string t = token_text(id);
        begin_word_unit(strip_marker(t));
        const bool continues = has_continuation_marker(t);
        mid_word = continues;
        space_before_word = !continues;
        break;
      }
    }
  }
  return out;
}

LabelSequence VocabSet::remap_targets(const LabelSequence& original, Lang lang,
                                      bool collapse_unk_runs) const {
  if (original.kind != VocabKind::kMixture) {
    throw Error("remap_targets expects a mixture-vocabulary sequence");
  }
  LabelSequence out{VocabKind::kMixture, {}};
  out.ids.reserve(original.ids.size());
  for (const int id : original.ids) {
    const TokenClass cls = classify(id);
    if (cls == TokenClass::kBlank) throw Error("blank in target sequence");
    const bool own = (lang == Lang::kMandarin && cls == TokenClass::kMandarin) ||
                     (lang == Lang::kEnglish && cls == TokenClass::kEnglish);
    const int mapped = own ? id : kUnkId;
    if (collapse_unk_runs && mapped == kUnkId && !out.ids.empty() &&
        out.ids.back() == kUnkId) {
      continue;
    }
    out.ids.push_back(mapped);
  }
  return out;
}

LabelSequence VocabSet::project_label_ids(const LabelSequence& seq, Lang lang) const {
  if (seq.kind != VocabKind::kMixture) {
    throw Error("project_label_ids expects a mixture-vocabulary sequence");
  }
  LabelSequence out{lang == Lang::kMandarin ? VocabKind::kManHead : VocabKind::kEngHead, {}};
  out.ids.reserve(seq.ids.size());
  for (const int id : seq.ids) {
    const TokenClass cls = classify(id);
    if (cls == TokenClass::kMandarin && lang != Lang::kMandarin) {
      throw Error("sequence contains mandarin token '" + token_text(id) + "'; remap first");
    }
    if (cls == TokenClass::kEnglish && lang != Lang::kEnglish) {
      throw Error("sequence contains english token '" + token_text(id) + "'; remap first");
    }
    out.ids.push_back(head_index(lang, id));
  }
  return out;
}

LabelSequence VocabSet::lift_label_ids(const LabelSequence& seq, Lang lang) const {
  const VocabKind expected =
      lang == Lang::kMandarin ? VocabKind::kManHead : VocabKind::kEngHead;
  if (seq.kind != expected) {
    throw Error("lift_label_ids: sequence is not in the expected head vocabulary");
  }
  LabelSequence out{VocabKind::kMixture, {}};
  out.ids.reserve(seq.ids.size());
  for (const int id : seq.ids) out.ids.push_back(mixture_index(lang, id));
  return out;
}

}  // namespace lsca
