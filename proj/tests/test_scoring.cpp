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

#include "lsca/scoring.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace lsca;

namespace {

std::vector<std::string> units(std::initializer_list<const char*> xs) {
  return {xs.begin(), xs.end()};
}

ScoredUtt utt(const char* id, const char* ref, const char* hyp, const char* cat) {
  return ScoredUtt{id, ref, hyp, cat};
}

}  // namespace

TEST_CASE("to_scoring_tokens: characters, words, subword joins") {
  CHECK(to_scoring_tokens("你好hello world") == units({"你", "好", "hello", "world"}));
  CHECK(to_scoring_tokens("DAY@@ DREAM") == units({"DAYDREAM"}));
  CHECK(to_scoring_tokens("").empty());
  CHECK(to_scoring_tokens("播放DAYDREAM的") == units({"播", "放", "DAYDREAM", "的"}));
  // trailing continuation marker is dropped
  CHECK(to_scoring_tokens("DAY@@") == units({"DAY"}));
}

TEST_CASE("edit_distance hand examples") {
  const auto ref = units({"你", "好", "hello", "world"});
  const auto hyp = units({"你", "hello", "world"});
  const EditCounts c = edit_distance(ref, hyp);
  CHECK(c.sub == 0);
  CHECK(c.del == 1);
  CHECK(c.ins == 0);

  const EditCounts same = edit_distance(ref, ref);
  CHECK(same.total() == 0);

  const EditCounts insertions = edit_distance({}, units({"a", "b"}));
  CHECK(insertions.sub == 0);
  CHECK(insertions.del == 0);
  CHECK(insertions.ins == 2);

  // minimal alignments prefer substitution over insert+delete
  const EditCounts sub = edit_distance(units({"a"}), units({"b"}));
  CHECK(sub.sub == 1);
  CHECK(sub.total() == 1);
}

TEST_CASE("edit distance properties: identity, symmetry, triangle inequality") {
  Rng rng(88);
  const auto random_units = [&rng] {
    std::vector<std::string> out;
    const auto len = rng.uniform_int(0, 8);
    for (int i = 0; i < len; ++i) {
      out.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 3))));
    }
    return out;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_units(), b = random_units(), c = random_units();
    CHECK(edit_distance(a, a).total() == 0);
    CHECK(edit_distance(a, b).total() == edit_distance(b, a).total());
    CHECK(edit_distance(a, c).total() <=
          edit_distance(a, b).total() + edit_distance(b, c).total());
  }
}

TEST_CASE("score_set accumulates per category and rounds for display") {
  const std::vector<ScoredUtt> utts{
      utt("u1", "你好hello world", "你hello world", "cs"),
  };
  const MerReport report = score_set(utts);
  CHECK(report.overall.ref_tokens == 4);
  CHECK(report.overall.del == 1);
  CHECK(display_mer(report.overall) == doctest::Approx(25.00));
  CHECK(display_mer(report.per_category.at("cs")) == doctest::Approx(25.00));

  const std::vector<ScoredUtt> perfect{
      utt("u1", "你好", "你好", "man"),
      utt("u2", "HELLO", "HELLO", "eng"),
  };
  const MerReport zero = score_set(perfect);
  CHECK(zero.overall.mer_pct() == 0.0);
  CHECK(display_mer(zero.per_category.at("man")) == 0.0);

  CHECK_THROWS_AS(score_set(std::vector<ScoredUtt>{}), Error);
  CHECK_THROWS_WITH_AS(score_set(std::vector<ScoredUtt>{utt("u", "你", "你", "")}),
                       doctest::Contains("category"), Error);
}

TEST_CASE("score_set is order independent and counts add up") {
  std::vector<ScoredUtt> utts{
      utt("u1", "你好hello", "你hello", "cs"),
      utt("u2", "播放", "播的", "man"),
      utt("u3", "DAYDREAM HELLO", "DAYDREAM", "eng"),
  };
  const MerReport a = score_set(utts);
  std::swap(utts[0], utts[2]);
  std::swap(utts[1], utts[2]);
  const MerReport b = score_set(utts);
  CHECK(a.overall.sub == b.overall.sub);
  CHECK(a.overall.del == b.overall.del);
  CHECK(a.overall.ins == b.overall.ins);
  CHECK(a.overall.ref_tokens == b.overall.ref_tokens);

  long sum_ref = 0;
  for (const auto& [cat, score] : a.per_category) sum_ref += score.ref_tokens;
  CHECK(sum_ref == a.overall.ref_tokens);
}

TEST_CASE("mer json and table carry all categories") {
  const std::vector<ScoredUtt> utts{
      utt("u1", "你好", "你", "man"),
      utt("u2", "HELLO", "HELLO", "eng"),
      utt("u3", "你HELLO", "你HELLO", "cs"),
  };
  const MerReport report = score_set(utts);
  const std::string json = mer_report_json(report);
  CHECK(json.find("\"man\"") != std::string::npos);
  CHECK(json.find("\"overall\"") != std::string::npos);
  CHECK(json.find("mer_pct") != std::string::npos);
  const std::string table = mer_report_table(report);
  CHECK(table.find("overall") != std::string::npos);
}

TEST_CASE("probe drops both-blank frames and renders * and #") {
  const VocabSet vocab = VocabSet::from_tokens({"播"}, {"DREAM"});
  // head grids: man = [blank, unk, 播], eng = [blank, unk, DREAM]
  Matrix p_man(4, 3), p_eng(4, 3);
  //            blank unk tok
  p_man.row(0) << 0.9, 0.05, 0.05;  // blank
  p_eng.row(0) << 0.8, 0.1, 0.1;    // blank -> frame dropped
  p_man.row(1) << 0.2, 0.1, 0.7;    // token
  p_eng.row(1) << 0.6, 0.2, 0.2;    // blank -> frame kept
  p_man.row(2) << 0.1, 0.8, 0.1;    // unk -> "*"
  p_eng.row(2) << 0.2, 0.1, 0.7;    // token
  p_man.row(3) << 0.9, 0.05, 0.05;  // blank -> "#"
  p_eng.row(3) << 0.1, 0.2, 0.7;    // token -> frame kept

  const auto rows = probe_frames(p_man, p_eng, vocab);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].frame == 1);
  CHECK(rows[0].man_token == "播");
  CHECK(rows[0].eng_token == "#");
  CHECK(rows[1].man_token == "*");
  CHECK(rows[1].man_is_unk);
  CHECK(rows[1].man_prob == doctest::Approx(0.8));
  CHECK(rows[2].man_token == "#");
  CHECK(rows[2].eng_token == "DREAM");

  Matrix mismatched(2, 3);
  CHECK_THROWS_AS(probe_frames(mismatched, p_eng, vocab), Error);

  namespace fs = std::filesystem;
  const std::string csv = (fs::temp_directory_path() / "lsca_probe.csv").string();
  const std::string svg = (fs::temp_directory_path() / "lsca_probe.svg").string();
  write_probe_csv(csv, rows);
  write_probe_svg(svg, rows);
  std::ifstream csv_in(csv);
  std::string line;
  std::getline(csv_in, line);
  CHECK(line == "frame,man_token,man_prob,eng_token,eng_prob");
  int csv_rows = 0;
  while (std::getline(csv_in, line)) {
    ++csv_rows;
    if (csv_rows == 2) CHECK(line.find("*") != std::string::npos);  // unk prob retained
  }
  CHECK(csv_rows == 3);
  std::ifstream svg_in(svg);
  const std::string svg_text((std::istreambuf_iterator<char>(svg_in)),
                             std::istreambuf_iterator<char>());
  CHECK(svg_text.find("<svg") != std::string::npos);
  // the unk point is not plotted
  CHECK(svg_text.find(">*<") == std::string::npos);
}

TEST_CASE("display rounding is half-up at two decimals") {
  CategoryScore s;
  s.ref_tokens = 3;
  s.sub = 1;  // 33.333...
  CHECK(display_mer(s) == doctest::Approx(33.33));
  s.ref_tokens = 3;
  s.sub = 2;  // 66.666...
  CHECK(display_mer(s) == doctest::Approx(66.67));
  s.ref_tokens = 0;
  s.sub = 0;
  CHECK(display_mer(s) == 0.0);
}
