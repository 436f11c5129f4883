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

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "lsca/numeric.hpp"

namespace lsca {

namespace {

// Fuse "X@@ Y" into "XY"; a trailing marker is dropped.
std::string join_subwords(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '@' && i + 1 < text.size() && text[i + 1] == '@') {
      std::size_t j = i + 2;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
      if (j == i + 2 && j < text.size()) {
        // "@@" glued to the next character already; keep it literal
        out += "@@";
        i = j;
      } else {
        i = j;  // marker and following whitespace vanish
      }
    } else {
      out += text[i];
      ++i;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> to_scoring_tokens(std::string_view text) {
  const std::string joined = join_subwords(text);
  std::vector<std::string> units;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) {
      units.push_back(word);
      word.clear();
    }
  };
  for (const auto& c : utf8_codepoints(joined)) {
    if (c == " " || c == "\t" || c == "\n" || c == "\r") {
      flush();
    } else if (is_cjk_codepoint(c)) {
      flush();
      units.push_back(c);
    } else {
      word += c;
    }
  }
  flush();
  return units;
}

EditCounts edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<std::vector<int>> d(m + 1, std::vector<int>(n + 1, 0));
  for (std::size_t i = 0; i <= m; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= n; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const int sub_cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j - 1] + sub_cost, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }

  EditCounts counts;
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.sub;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++counts.del;
      --i;
    } else {
      ++counts.ins;
      --j;
    }
  }
  return counts;
}

double CategoryScore::mer_pct() const {
  const long errors = sub + del + ins;
  if (ref_tokens == 0) {
    return errors == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return 100.0 * static_cast<double>(errors) / static_cast<double>(ref_tokens);
}

double display_mer(const CategoryScore& score) { return round_half_up(score.mer_pct(), 2); }

MerReport score_set(std::span<const ScoredUtt> utts) {
  if (utts.empty()) throw Error("score_set: empty test set");
  MerReport report;
  for (const ScoredUtt& u : utts) {
    if (u.category != "man" && u.category != "eng" && u.category != "cs") {
      throw Error("utterance " + u.utt_id + ": missing or unknown category '" +
                  u.category + "'");
    }
    const auto ref = to_scoring_tokens(u.ref_text);
    const auto hyp = to_scoring_tokens(u.hyp_text);
    const EditCounts c = edit_distance(ref, hyp);
    CategoryScore& cat = report.per_category[u.category];
    for (CategoryScore* s : {&cat, &report.overall}) {
      s->sub += c.sub;
      s->del += c.del;
      s->ins += c.ins;
      s->ref_tokens += static_cast<long>(ref.size());
    }
  }
  return report;
}

namespace {

nlohmann::ordered_json score_to_json(const CategoryScore& s) {
  nlohmann::ordered_json j;
  j["sub"] = s.sub;
  j["del"] = s.del;
  j["ins"] = s.ins;
  j["ref_tokens"] = s.ref_tokens;
  j["mer_pct"] = display_mer(s);
  return j;
}

}  // namespace

std::string mer_report_json(const MerReport& report) {
  nlohmann::ordered_json j;
  for (const auto& [cat, score] : report.per_category) j[cat] = score_to_json(score);
  j["overall"] = score_to_json(report.overall);
  return j.dump(2);
}

std::string mer_report_table(const MerReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %8s %8s %8s %10s %8s\n", "set", "sub", "del",
                "ins", "ref", "MER%");
  out << line;
  const auto emit = [&](const std::string& name, const CategoryScore& s) {
    std::snprintf(line, sizeof(line), "%-8s %8ld %8ld %8ld %10ld %8.2f\n", name.c_str(),
                  s.sub, s.del, s.ins, s.ref_tokens, display_mer(s));
    out << line;
  };
  for (const auto& [cat, score] : report.per_category) emit(cat, score);
  emit("overall", report.overall);
  return out.str();
}

std::vector<ProbeRow> probe_frames(const Matrix& p_man, const Matrix& p_eng,
                                   const VocabSet& vocab) {
  if (p_man.rows() != p_eng.rows()) {
    throw Error("probe_frames: grids disagree on frame count (" +
                std::to_string(p_man.rows()) + " vs " + std::to_string(p_eng.rows()) + ")");
  }
  if (p_man.cols() != vocab.head_size(Lang::kMandarin) ||
      p_eng.cols() != vocab.head_size(Lang::kEnglish)) {
    throw Error("probe_frames: grid width does not match head vocabulary");
  }

  const auto render = [&vocab](Lang lang, int id) -> std::string {
    if (id == kBlankId) return "#";
    if (id == kUnkId) return "*";
    return vocab.head_token_text(lang, id);
  };

  std::vector<ProbeRow> rows;
  for (Index t = 0; t < p_man.rows(); ++t) {
    const int man_top = static_cast<int>(argmax_row(p_man, t));
    const int eng_top = static_cast<int>(argmax_row(p_eng, t));
    if (man_top == kBlankId && eng_top == kBlankId) continue;
    ProbeRow row;
    row.frame = t;
    row.man_token = render(Lang::kMandarin, man_top);
    row.man_prob = p_man(t, man_top);
    row.man_is_unk = man_top == kUnkId;
    row.eng_token = render(Lang::kEnglish, eng_top);
    row.eng_prob = p_eng(t, eng_top);
    row.eng_is_unk = eng_top == kUnkId;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_probe_csv(const std::string& path, std::span<const ProbeRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open probe csv for writing: " + path);
  out << "frame,man_token,man_prob,eng_token,eng_prob\n";
  char buf[64];
  for (const ProbeRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.man_prob);
    out << r.frame << "," << r.man_token << "," << buf;
    std::snprintf(buf, sizeof(buf), "%.6f", r.eng_prob);
    out << "," << r.eng_token << "," << buf << "\n";
  }
}

void write_probe_svg(const std::string& path, std::span<const ProbeRow> rows) {
  constexpr int kWidth = 860, kHeight = 300, kMarginX = 50, kMarginY = 30;
  const double span_x = static_cast<double>(kWidth - 2 * kMarginX);
  const double span_y = static_cast<double>(kHeight - 2 * kMarginY);
  Index max_frame = 1;
  for (const ProbeRow& r : rows) max_frame = std::max(max_frame, r.frame);

  const auto x_of = [&](Index frame) {
    return kMarginX + span_x * static_cast<double>(frame) / static_cast<double>(max_frame);
  };
  const auto y_of = [&](double prob) { return kHeight - kMarginY - span_y * prob; };

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open probe svg for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  out << "<line x1=\"" << kMarginX << "\" y1=\"" << y_of(0.0) << "\" x2=\""
      << kWidth - kMarginX << "\" y2=\"" << y_of(0.0) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMarginX << "\" y1=\"" << y_of(0.0) << "\" x2=\"" << kMarginX
      << "\" y2=\"" << y_of(1.0) << "\" stroke=\"black\"/>\n";
  char buf[256];
  for (const ProbeRow& r : rows) {
    if (!r.man_is_unk) {
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"crimson\"/>\n",
                    x_of(r.frame), y_of(r.man_prob));
      out << buf;
      std::snprintf(buf, sizeof(buf),
                    "<text x=\"%.1f\" y=\"%.1f\" font-size=\"8\" fill=\"crimson\">",
                    x_of(r.frame) - 3.0, y_of(r.man_prob) - 5.0);
      out << buf << r.man_token << "</text>\n";
    }
    if (!r.eng_is_unk) {
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.1f\" y=\"%.1f\" width=\"5\" height=\"5\" fill=\"navy\"/>\n",
                    x_of(r.frame) - 2.5, y_of(r.eng_prob) - 2.5);
      out << buf;
      std::snprintf(buf, sizeof(buf),
                    "<text x=\"%.1f\" y=\"%.1f\" font-size=\"8\" fill=\"navy\">",
                    x_of(r.frame) - 3.0, y_of(r.eng_prob) + 12.0);
      out << buf << r.eng_token << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace lsca
