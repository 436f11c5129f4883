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

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace lsca;

namespace {

VocabSet demo_vocab() {
  return VocabSet::from_tokens({"播", "放", "的"}, {"DAY@@", "DREAM"});
}

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("mixture layout: blank, unk, mandarin, english") {
  const VocabSet v = demo_vocab();
  CHECK(v.mixture_size() == 7);
  CHECK(v.head_size(Lang::kMandarin) == 5);
  CHECK(v.head_size(Lang::kEnglish) == 4);
  CHECK(v.token_text(0) == "<blank>");
  CHECK(v.token_text(1) == "<unk>");
  CHECK(v.token_text(2) == "播");
  CHECK(v.token_text(5) == "DAY@@");
  CHECK(v.token_text(6) == "DREAM");
}

TEST_CASE("build_vocab from files and rejection cases") {
  const auto man = write_temp("lsca_vocab_man.txt", "播\n放\n的\n");
  const auto eng = write_temp("lsca_vocab_eng.txt", "DAY@@\nDREAM\n");
  const VocabSet v = VocabSet::from_files(man.string(), eng.string());
  CHECK(v.mixture_size() == 7);

  const auto dup = write_temp("lsca_vocab_dup.txt", "播\n播\n");
  CHECK_THROWS_WITH_AS(VocabSet::from_files(dup.string(), eng.string()),
                       doctest::Contains("duplicate token"), Error);

  const auto empty = write_temp("lsca_vocab_empty.txt", "");
  CHECK_THROWS_AS(VocabSet::from_files(man.string(), empty.string()), Error);

  // duplicates across the two files are also rejected
  const auto cross = write_temp("lsca_vocab_cross.txt", "DREAM\n播\n");
  CHECK_THROWS_AS(VocabSet::from_files(cross.string(), eng.string()), Error);
}

TEST_CASE("classify_token covers all four classes") {
  const VocabSet v = demo_vocab();
  CHECK(v.classify(0) == TokenClass::kBlank);
  CHECK(v.classify(1) == TokenClass::kUnk);
  CHECK(v.classify(2) == TokenClass::kMandarin);
  CHECK(v.classify(6) == TokenClass::kEnglish);
  CHECK_THROWS_AS(v.classify(7), Error);
  CHECK_THROWS_AS(v.classify(-1), Error);
}

TEST_CASE("tokenize: CJK per character, greedy BPE over latin runs") {
  const VocabSet v = demo_vocab();

  CHECK(v.tokenize("播放DAYDREAM").ids == std::vector<int>{2, 3, 5, 6});
  CHECK(v.tokenize("播X放").ids == std::vector<int>{2, 1, 3});
  CHECK(v.tokenize("DREAM DREAM").ids == std::vector<int>{6, 6});
  // out-of-vocabulary CJK character
  CHECK(v.tokenize("播哦放").ids == std::vector<int>{2, 1, 3});
  // a latin word that fails mid-segmentation collapses to one unk
  CHECK(v.tokenize("DAYX").ids == std::vector<int>{1});
  CHECK(v.tokenize("").ids.empty());
}

TEST_CASE("detokenize round trips in-vocabulary text") {
  const VocabSet v = demo_vocab();
  for (const std::string text :
       {"播放DAYDREAM", "DREAM DREAM", "播放的", "DREAM播DAYDREAM"}) {
    CHECK(v.detokenize(v.tokenize(text)) == text);
  }
}

TEST_CASE("remap_targets maps the other language to unk, one per token") {
  const VocabSet v = demo_vocab();
  const LabelSequence orig{VocabKind::kMixture, {2, 3, 5, 6, 4}};

  CHECK(v.remap_targets(orig, Lang::kMandarin).ids == std::vector<int>{2, 3, 1, 1, 4});
  CHECK(v.remap_targets(orig, Lang::kEnglish).ids == std::vector<int>{1, 1, 5, 6, 1});

  const LabelSequence mono{VocabKind::kMixture, {2, 3, 4}};
  CHECK(v.remap_targets(mono, Lang::kMandarin).ids == mono.ids);

  const LabelSequence with_blank{VocabKind::kMixture, {2, 0, 3}};
  CHECK_THROWS_AS(v.remap_targets(with_blank, Lang::kMandarin), Error);
}

TEST_CASE("remap_targets with collapse_unk_runs merges foreign spans") {
  const VocabSet v = demo_vocab();
  const LabelSequence orig{VocabKind::kMixture, {2, 5, 6, 3}};
  CHECK(v.remap_targets(orig, Lang::kMandarin, true).ids == std::vector<int>{2, 1, 3});
}

TEST_CASE("remap_targets is idempotent and length preserving") {
  const VocabSet v = demo_vocab();
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    LabelSequence s{VocabKind::kMixture, {}};
    const auto len = rng.uniform_int(0, 12);
    for (int i = 0; i < len; ++i) {
      s.ids.push_back(static_cast<int>(rng.uniform_int(1, v.mixture_size() - 1)));
    }
    for (const Lang lang : {Lang::kMandarin, Lang::kEnglish}) {
      const LabelSequence once = v.remap_targets(s, lang);
      CHECK(once.ids.size() == s.ids.size());
      CHECK(v.remap_targets(once, lang).ids == once.ids);
    }
  }
}

TEST_CASE("project_label_ids translates to the head layout") {
  const VocabSet v = demo_vocab();
  const LabelSequence remapped{VocabKind::kMixture, {2, 3, 1, 1, 4}};
  const LabelSequence head = v.project_label_ids(remapped, Lang::kMandarin);
  CHECK(head.kind == VocabKind::kManHead);
  CHECK(head.ids == std::vector<int>{2, 3, 1, 1, 4});

  const LabelSequence eng_side{VocabKind::kMixture, {1, 5, 6}};
  CHECK(v.project_label_ids(eng_side, Lang::kEnglish).ids == std::vector<int>{1, 2, 3});

  CHECK(v.project_label_ids(LabelSequence{VocabKind::kMixture, {1}}, Lang::kMandarin).ids ==
        std::vector<int>{1});

  const LabelSequence mixed{VocabKind::kMixture, {2, 6}};
  CHECK_THROWS_WITH_AS(v.project_label_ids(mixed, Lang::kMandarin),
                       doctest::Contains("remap first"), Error);
}

TEST_CASE("project then lift is the identity on valid sequences") {
  const VocabSet v = demo_vocab();
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    for (const Lang lang : {Lang::kMandarin, Lang::kEnglish}) {
      LabelSequence s{VocabKind::kMixture, {}};
      const auto len = rng.uniform_int(0, 10);
      for (int i = 0; i < len; ++i) {
        s.ids.push_back(static_cast<int>(rng.uniform_int(1, v.mixture_size() - 1)));
      }
      const LabelSequence remapped = v.remap_targets(s, lang);
      const LabelSequence projected = v.project_label_ids(remapped, lang);
      CHECK(v.lift_label_ids(projected, lang).ids == remapped.ids);
    }
  }
}
