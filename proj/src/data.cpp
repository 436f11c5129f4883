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

#include "lsca/data.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace lsca {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kFeatureMagic[8] = {'L', 'S', 'C', 'A', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  put_u32(out, bits);
}

std::uint32_t get_u32(const std::string& data, std::size_t& pos, const std::string& path) {
  if (pos + 4 > data.size()) {
    throw Error("feature file truncated at offset " + std::to_string(pos) + ": " + path);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
  }
  pos += 4;
  return v;
}

bool text_has_latin(const std::string& text) {
  for (const auto& c : utf8_codepoints(text)) {
    if (is_latin_letter(c)) return true;
  }
  return false;
}

bool text_has_cjk(const std::string& text) {
  for (const auto& c : utf8_codepoints(text)) {
    if (is_cjk_codepoint(c)) return true;
  }
  return false;
}

void check_category(const ManifestRecord& rec) {
  if (rec.category == "man") {
    if (text_has_latin(rec.text)) {
      throw Error("utterance " + rec.utt_id + ": category man but text has latin script");
    }
  } else if (rec.category == "eng") {
    if (text_has_cjk(rec.text)) {
      throw Error("utterance " + rec.utt_id + ": category eng but text has cjk script");
    }
  } else if (rec.category == "cs") {
    if (!text_has_latin(rec.text) || !text_has_cjk(rec.text)) {
      throw Error("utterance " + rec.utt_id + ": category cs needs both scripts");
    }
  } else {
    throw Error("utterance " + rec.utt_id + ": unknown category '" + rec.category + "'");
  }
}

std::string utf8_from_codepoint(std::uint32_t cp) {
  std::string s;
  if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return s;
}

std::string three_letter_strip(int index) {
  std::string s(3, 'A');
  s[0] = static_cast<char>('A' + (index / 676) % 26);
  s[1] = static_cast<char>('A' + (index / 26) % 26);
  s[2] = static_cast<char>('A' + index % 26);
  return s;
}

}  // namespace

void write_features(const std::string& path, const Matrix& frames) {
  if (frames.rows() < 1 || frames.cols() < 1) {
    throw Error("write_features: empty feature matrix for " + path);
  }
  std::string buf;
  buf.append(kFeatureMagic, sizeof(kFeatureMagic));
  put_u32(buf, kFeatureVersion);
  put_u32(buf, static_cast<std::uint32_t>(frames.rows()));
  put_u32(buf, static_cast<std::uint32_t>(frames.cols()));
  for (Index r = 0; r < frames.rows(); ++r) {
    for (Index c = 0; c < frames.cols(); ++c) put_f32(buf, static_cast<float>(frames(r, c)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open feature file for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("feature write failed: " + path);
}

Matrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (data.size() < sizeof(kFeatureMagic) ||
      data.compare(0, sizeof(kFeatureMagic), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
    throw Error("bad feature magic at offset 0: " + path);
  }
  pos = sizeof(kFeatureMagic);
  const std::uint32_t version = get_u32(data, pos, path);
  if (version != kFeatureVersion) {
    throw Error("unsupported feature version " + std::to_string(version) + ": " + path);
  }
  const std::uint32_t rows = get_u32(data, pos, path);
  const std::uint32_t cols = get_u32(data, pos, path);
  if (rows < 1 || cols < 1) throw Error("degenerate feature shape in " + path);
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      m(r, c) = static_cast<Real>(std::bit_cast<float>(get_u32(data, pos, path)));
    }
  }
  if (pos != data.size()) {
    throw Error("trailing bytes at offset " + std::to_string(pos) + ": " + path);
  }
  return m;
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path);
  std::vector<ManifestRecord> records;
  std::unordered_map<std::string, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw Error("manifest " + path + " line " + std::to_string(line_no) +
                  ": malformed json");
    }
    ManifestRecord rec;
    for (const char* field : {"utt_id", "feats", "text", "category"}) {
      if (!j.contains(field) || !j[field].is_string()) {
        throw Error("manifest " + path + " line " + std::to_string(line_no) +
                    ": missing field '" + field + "'");
      }
    }
    rec.utt_id = j["utt_id"].get<std::string>();
    rec.feats = j["feats"].get<std::string>();
    rec.text = j["text"].get<std::string>();
    rec.category = j["category"].get<std::string>();
    if (!seen.emplace(rec.utt_id, line_no).second) {
      throw Error("manifest " + path + " line " + std::to_string(line_no) +
                  ": duplicate utt_id " + rec.utt_id);
    }
    check_category(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open manifest for writing: " + path);
  for (const auto& rec : records) {
    ordered_json j;
    j["utt_id"] = rec.utt_id;
    j["feats"] = rec.feats;
    j["text"] = rec.text;
    j["category"] = rec.category;
    out << j.dump() << "\n";
  }
  if (!out) throw Error("manifest write failed: " + path);
}

std::string resolve_feature_path(const std::string& manifest_path,
                                 const ManifestRecord& record) {
  const fs::path p(record.feats);
  if (p.is_absolute()) return record.feats;
  return (fs::path(manifest_path).parent_path() / p).string();
}

void SynthConfig::validate() const {
  if (man_vocab_size < 1 || eng_final_pieces < 1 || eng_continuation_pieces < 0) {
    throw ConfigError("synth: inventory sizes must be positive");
  }
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw ConfigError("synth: bad tokens-per-utterance range");
  }
  if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token) {
    throw ConfigError("synth: bad frames-per-token range");
  }
  if (noise_sigma < 0) throw ConfigError("synth: noise sigma must be >= 0");
  if (cross_band_shadow < 0 || cross_band_shadow >= 1.0) {
    throw ConfigError("synth: cross_band_shadow must lie in [0, 1)");
  }
  if (man_ratio < 0 || eng_ratio < 0 || man_ratio + eng_ratio > 1.0) {
    throw ConfigError("synth: category ratios must be nonnegative and sum to <= 1");
  }
  if (feat_dim < 4 || feat_dim % 2 != 0) {
    throw ConfigError("synth: feat_dim must be even and >= 4");
  }
  const int bands = feat_dim / 2;
  const int max_templates = 3 * bands * bands;
  if (man_vocab_size > max_templates ||
      eng_final_pieces + eng_continuation_pieces > max_templates) {
    throw ConfigError("synth: inventory too large for distinct templates at this feat_dim");
  }
  if (pretrain_count < 1 || train_count < 1 || test_count < 1) {
    throw ConfigError("synth: split counts must be positive");
  }
}

namespace {

// Distinct per-token spectral template: up to two energized bands plus an
// amplitude level, all derived from the token's position in its inventory.
// Every third token may carry a cross-band shadow into the other language's
// region, which makes some cross-language pairs compete in the combined
// vocabulary while each head's own inventory stays cleanly separated.
Vector token_template(int position, int feat_dim, bool upper_half, double shadow) {
  const int bands = feat_dim / 2;
  const int base = upper_half ? bands : 0;
  const int b1 = position % bands;
  const int b2 = (position / bands) % bands;
  const double amp = 0.7 + 0.15 * ((position / (bands * bands)) % 3);
  Vector v = Vector::Zero(feat_dim);
  v(base + b1) += static_cast<Real>(amp);
  v(base + b2) += static_cast<Real>(0.5);
  if (shadow > 0.0 && position % 3 == 0) {
    const int other_base = upper_half ? 0 : bands;
    v(other_base + b1) += static_cast<Real>(shadow * amp);
    v(other_base + b2) += static_cast<Real>(shadow * 0.5);
  }
  return v;
}

struct SynthInventories {
  std::vector<std::string> man_tokens;
  std::vector<std::string> eng_tokens;  // continuation pieces first
};

SynthInventories make_inventories(const SynthConfig& cfg) {
  SynthInventories inv;
  for (int i = 0; i < cfg.man_vocab_size; ++i) {
    inv.man_tokens.push_back(utf8_from_codepoint(0x4E00u + static_cast<std::uint32_t>(i)));
  }
  for (int i = 0; i < cfg.eng_continuation_pieces; ++i) {
    inv.eng_tokens.push_back(three_letter_strip(i) + "@@");
  }
  for (int i = 0; i < cfg.eng_final_pieces; ++i) {
    inv.eng_tokens.push_back(three_letter_strip(cfg.eng_continuation_pieces + i));
  }
  return inv;
}

class UtteranceSampler {
 public:
  UtteranceSampler(const SynthConfig& cfg, const VocabSet& vocab)
      : cfg_(cfg), vocab_(vocab) {}

  // Mixture-vocabulary token ids for one utterance of the given category.
  std::vector<int> sample_tokens(const std::string& category, Rng& rng) const {
    int budget = static_cast<int>(rng.uniform_int(cfg_.min_tokens, cfg_.max_tokens));
    if (category == "cs") budget = std::max(budget, 2);
    std::vector<int> ids;
    if (category == "man") {
      while (static_cast<int>(ids.size()) < budget) push_man(ids, rng);
    } else if (category == "eng") {
      while (static_cast<int>(ids.size()) < budget) {
        push_eng_word(ids, budget - static_cast<int>(ids.size()), rng);
      }
    } else {
      // Code-switching: contiguous spans of 1-3 tokens, alternating
      // language; the first span is capped so both languages appear.
      bool man_turn = rng.uniform() < 0.5;
      bool first = true;
      while (static_cast<int>(ids.size()) < budget) {
        const int remaining = budget - static_cast<int>(ids.size());
        int span_cap = std::min(3, remaining);
        if (first && remaining > 1) span_cap = std::min(span_cap, remaining - 1);
        const int span = static_cast<int>(rng.uniform_int(1, span_cap));
        int produced = 0;
        while (produced < span) {
          const int before = static_cast<int>(ids.size());
          if (man_turn) {
            push_man(ids, rng);
          } else {
            push_eng_word(ids, span - produced, rng);
          }
          produced += static_cast<int>(ids.size()) - before;
        }
        man_turn = !man_turn;
        first = false;
      }
    }
    return ids;
  }

  Matrix render_features(std::span<const int> ids, Rng& rng) const {
    std::vector<std::pair<int, int>> segments;  // (token id, duration)
    Index total = 0;
    for (const int id : ids) {
      const int dur = static_cast<int>(
          rng.uniform_int(cfg_.min_frames_per_token, cfg_.max_frames_per_token));
      segments.emplace_back(id, dur);
      total += dur;
    }
    Matrix feats(total, cfg_.feat_dim);
    Index row = 0;
    for (const auto& [id, dur] : segments) {
      const Vector tpl = synth_token_template(cfg_, vocab_, id);
      for (int k = 0; k < dur; ++k, ++row) {
        for (Index f = 0; f < cfg_.feat_dim; ++f) {
          feats(row, f) = tpl(f) + static_cast<Real>(cfg_.noise_sigma * rng.gaussian());
        }
      }
    }
    return feats;
  }

 private:
  void push_man(std::vector<int>& ids, Rng& rng) const {
    ids.push_back(2 + static_cast<int>(rng.uniform_int(0, cfg_.man_vocab_size - 1)));
  }

  // One english word: (k-1) continuation pieces and a final piece, with k
  // capped by the remaining budget.
  void push_eng_word(std::vector<int>& ids, int budget, Rng& rng) const {
    const int eng_base = 2 + cfg_.man_vocab_size;
    int max_len = std::min(3, budget);
    if (cfg_.eng_continuation_pieces == 0) max_len = 1;
    const int k = static_cast<int>(rng.uniform_int(1, max_len));
    for (int i = 0; i + 1 < k; ++i) {
      ids.push_back(eng_base +
                    static_cast<int>(rng.uniform_int(0, cfg_.eng_continuation_pieces - 1)));
    }
    ids.push_back(eng_base + cfg_.eng_continuation_pieces +
                  static_cast<int>(rng.uniform_int(0, cfg_.eng_final_pieces - 1)));
  }

  const SynthConfig& cfg_;
  const VocabSet& vocab_;
};

std::vector<std::string> category_plan(const SynthConfig& cfg, int count, Rng& rng) {
  const int n_man = static_cast<int>(std::floor(cfg.man_ratio * count + 0.5));
  const int n_eng = static_cast<int>(std::floor(cfg.eng_ratio * count + 0.5));
  if (n_man + n_eng > count) throw Error("synth: ratio quota exceeds split size");
  std::vector<std::string> plan;
  plan.insert(plan.end(), static_cast<std::size_t>(n_man), "man");
  plan.insert(plan.end(), static_cast<std::size_t>(n_eng), "eng");
  plan.insert(plan.end(), static_cast<std::size_t>(count - n_man - n_eng), "cs");
  rng.shuffle(plan);
  return plan;
}

}  // namespace

Vector synth_token_template(const SynthConfig& cfg, const VocabSet& vocab, int mixture_id) {
  const TokenClass cls = vocab.classify(mixture_id);
  if (cls == TokenClass::kMandarin) {
    return token_template(mixture_id - 2, cfg.feat_dim, false, cfg.cross_band_shadow);
  }
  if (cls == TokenClass::kEnglish) {
    return token_template(mixture_id - 2 - cfg.man_vocab_size, cfg.feat_dim, true,
                          cfg.cross_band_shadow);
  }
  throw Error("synth_token_template: no template for blank/unk");
}

SynthCorpus synth_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const SynthInventories inv = make_inventories(cfg);
  const VocabSet vocab = VocabSet::from_tokens(inv.man_tokens, inv.eng_tokens);

  const fs::path root(out_dir);
  fs::create_directories(root / "features");
  fs::create_directories(root / "vocab");

  SynthCorpus out;
  out.man_vocab_file = (root / "vocab" / "man_tokens.txt").string();
  out.eng_vocab_file = (root / "vocab" / "eng_tokens.txt").string();
  {
    std::ofstream man_out(out.man_vocab_file), eng_out(out.eng_vocab_file);
    if (!man_out || !eng_out) throw Error("cannot write vocabulary files in " + out_dir);
    for (const auto& t : inv.man_tokens) man_out << t << "\n";
    for (const auto& t : inv.eng_tokens) eng_out << t << "\n";
  }

  const UtteranceSampler sampler(cfg, vocab);
  Rng master(cfg.seed);
  Rng rng_pm = master.fork(1), rng_pe = master.fork(2), rng_tr = master.fork(3),
      rng_te = master.fork(4);

  const auto emit_split =
      [&](const std::string& prefix, int count, const std::string& manifest_name,
          const std::string& fixed_category, Rng& rng) {
        std::vector<std::string> plan;
        if (fixed_category.empty()) {
          plan = category_plan(cfg, count, rng);
        } else {
          plan.assign(static_cast<std::size_t>(count), fixed_category);
        }
        std::vector<ManifestRecord> records;
        for (int i = 0; i < count; ++i) {
          char id_buf[32];
          std::snprintf(id_buf, sizeof(id_buf), "%s_%05d", prefix.c_str(), i);
          ManifestRecord rec;
          rec.utt_id = id_buf;
          rec.category = plan[static_cast<std::size_t>(i)];
          const std::vector<int> ids = sampler.sample_tokens(rec.category, rng);
          rec.text = vocab.detokenize(LabelSequence{VocabKind::kMixture, ids});
          rec.feats = "features/" + rec.utt_id + ".feat";
          write_features((root / rec.feats).string(), sampler.render_features(ids, rng));
          records.push_back(std::move(rec));
        }
        const std::string manifest_path = (root / manifest_name).string();
        write_manifest(manifest_path, records);
        return manifest_path;
      };

  out.pretrain_man_manifest =
      emit_split("pm", cfg.pretrain_count, "pretrain_man.jsonl", "man", rng_pm);
  out.pretrain_eng_manifest =
      emit_split("pe", cfg.pretrain_count, "pretrain_eng.jsonl", "eng", rng_pe);
  out.train_manifest = emit_split("tr", cfg.train_count, "train.jsonl", "", rng_tr);
  out.test_manifest = emit_split("te", cfg.test_count, "test.jsonl", "", rng_te);
  return out;
}

}  // namespace lsca
