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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "lsca/ctc.hpp"

using namespace lsca;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

SynthConfig small_synth() {
  SynthConfig cfg;
  cfg.man_vocab_size = 10;
  cfg.eng_final_pieces = 8;
  cfg.eng_continuation_pieces = 4;
  cfg.pretrain_count = 20;
  cfg.train_count = 60;
  cfg.test_count = 20;
  cfg.min_frames_per_token = 4;
  cfg.max_frames_per_token = 8;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("feature files round trip bit-exactly") {
  Rng rng(3);
  Matrix m(10, 16);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.gaussian();
  }
  // storage is 32-bit; quantize the expectation accordingly
  Matrix expect = m;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      expect(r, c) = static_cast<Real>(static_cast<float>(m(r, c)));
    }
  }

  const std::string path = (fs::temp_directory_path() / "lsca_feat_rt.feat").string();
  write_features(path, m);
  CHECK(read_features(path) == expect);

  // a second write of the read-back matrix is byte-identical
  const std::string path2 = (fs::temp_directory_path() / "lsca_feat_rt2.feat").string();
  write_features(path2, read_features(path));
  CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("feature reader rejects corruption; writer rejects empty matrices") {
  const std::string path = (fs::temp_directory_path() / "lsca_feat_bad.feat").string();
  write_features(path, Matrix::Ones(4, 3));
  const std::string good = file_bytes(path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << good.substr(0, good.size() - 5);
  }
  CHECK_THROWS_WITH_AS(read_features(path), doctest::Contains("truncated"), Error);

  CHECK_THROWS_AS(write_features(path, Matrix()), Error);
}

TEST_CASE("manifest parsing and validation") {
  const std::string dir = temp_dir("lsca_manifest_test");
  const std::string path = dir + "/m.jsonl";
  {
    std::ofstream out(path);
    out << R"({"utt_id":"a","feats":"a.feat","text":"你好","category":"man"})" << "\n";
    out << R"({"utt_id":"b","feats":"b.feat","text":"HELLO","category":"eng"})" << "\n";
    out << R"({"utt_id":"c","feats":"c.feat","text":"你HELLO","category":"cs"})" << "\n";
  }
  const auto records = read_manifest(path);
  REQUIRE(records.size() == 3);
  CHECK(records[1].text == "HELLO");
  CHECK(resolve_feature_path(path, records[0]) == dir + "/a.feat");

  {
    std::ofstream out(path, std::ios::app);
    out << R"({"utt_id":"a","feats":"d.feat","text":"你","category":"man"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("duplicate utt_id"), Error);

  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"utt_id":"a","feats":"a.feat","text":"你好"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("category"), Error);

  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"utt_id":"a",)" << "\n";
  }
  CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("line 1"), Error);

  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"utt_id":"a","feats":"a.feat","text":"HELLO","category":"man"})" << "\n";
  }
  CHECK_THROWS_AS(read_manifest(path), Error);  // latin text tagged man
}

TEST_CASE("synthetic corpus is byte-deterministic per seed") {
  const SynthConfig cfg = small_synth();
  const std::string dir_a = temp_dir("lsca_synth_a");
  const std::string dir_b = temp_dir("lsca_synth_b");
  const SynthCorpus a = synth_corpus(cfg, dir_a);
  const SynthCorpus b = synth_corpus(cfg, dir_b);

  CHECK(file_bytes(a.train_manifest) == file_bytes(b.train_manifest));
  CHECK(file_bytes(a.test_manifest) == file_bytes(b.test_manifest));
  CHECK(file_bytes(a.man_vocab_file) == file_bytes(b.man_vocab_file));
  CHECK(file_bytes(a.eng_vocab_file) == file_bytes(b.eng_vocab_file));

  const auto recs_a = read_manifest(a.train_manifest);
  const auto recs_b = read_manifest(b.train_manifest);
  for (std::size_t i = 0; i < std::min<std::size_t>(5, recs_a.size()); ++i) {
    CHECK(file_bytes(resolve_feature_path(a.train_manifest, recs_a[i])) ==
          file_bytes(resolve_feature_path(b.train_manifest, recs_b[i])));
  }

  SynthConfig other = cfg;
  other.seed = 6;
  const std::string dir_c = temp_dir("lsca_synth_c");
  const SynthCorpus c = synth_corpus(other, dir_c);
  CHECK(file_bytes(a.train_manifest) != file_bytes(c.train_manifest));
}

TEST_CASE("synthetic category mix tracks the configured ratios") {
  SynthConfig cfg = small_synth();
  cfg.train_count = 1000;
  const std::string dir = temp_dir("lsca_synth_ratio");
  const SynthCorpus corpus = synth_corpus(cfg, dir);
  int man = 0, eng = 0, cs = 0;
  for (const auto& rec : read_manifest(corpus.train_manifest)) {
    if (rec.category == "man") ++man;
    if (rec.category == "eng") ++eng;
    if (rec.category == "cs") ++cs;
  }
  CHECK(std::abs(man - 270) <= 20);  // 2% of 1000
  CHECK(std::abs(eng - 250) <= 20);
  CHECK(std::abs(cs - 480) <= 20);

  // monolingual pretrain splits stay monolingual
  for (const auto& rec : read_manifest(corpus.pretrain_man_manifest)) {
    CHECK(rec.category == "man");
  }
  for (const auto& rec : read_manifest(corpus.pretrain_eng_manifest)) {
    CHECK(rec.category == "eng");
  }
}

TEST_CASE("tokenize inverts every synthetic text") {
  const SynthConfig cfg = small_synth();
  const std::string dir = temp_dir("lsca_synth_invert");
  const SynthCorpus corpus = synth_corpus(cfg, dir);
  const VocabSet vocab = VocabSet::from_files(corpus.man_vocab_file, corpus.eng_vocab_file);

  for (const std::string manifest :
       {corpus.train_manifest, corpus.test_manifest, corpus.pretrain_man_manifest}) {
    for (const auto& rec : read_manifest(manifest)) {
      const LabelSequence ids = vocab.tokenize(rec.text);
      CHECK(!ids.ids.empty());
      for (const int id : ids.ids) CHECK(id != kUnkId);
      CHECK(vocab.detokenize(ids) == rec.text);
    }
  }
}

TEST_CASE("noise-free corpus is recoverable by a nearest-template matcher") {
  SynthConfig cfg = small_synth();
  cfg.noise_sigma = 0.0;
  cfg.train_count = 30;
  const std::string dir = temp_dir("lsca_synth_sigma0");
  const SynthCorpus corpus = synth_corpus(cfg, dir);
  const VocabSet vocab = VocabSet::from_files(corpus.man_vocab_file, corpus.eng_vocab_file);

  for (const auto& rec : read_manifest(corpus.train_manifest)) {
    const Matrix feats = read_features(resolve_feature_path(corpus.train_manifest, rec));
    std::vector<int> frame_labels;
    for (Index t = 0; t < feats.rows(); ++t) {
      int best = -1;
      double best_dist = 0;
      for (int u = 2; u < vocab.mixture_size(); ++u) {
        const Vector tpl = synth_token_template(cfg, vocab, u);
        const double dist = (feats.row(t).transpose() - tpl).squaredNorm();
        if (best < 0 || dist < best_dist) {
          best = u;
          best_dist = dist;
        }
      }
      frame_labels.push_back(best);
    }
    // run-collapsed frame decisions equal the run-collapsed truth
    const LabelSequence truth = vocab.tokenize(rec.text);
    std::vector<int> truth_runs;
    for (const int id : truth.ids) {
      if (truth_runs.empty() || truth_runs.back() != id) truth_runs.push_back(id);
    }
    CHECK(collapse_alignment(frame_labels) == truth_runs);
  }
}

TEST_CASE("split utterance ids are disjoint") {
  const SynthConfig cfg = small_synth();
  const std::string dir = temp_dir("lsca_synth_disjoint");
  const SynthCorpus corpus = synth_corpus(cfg, dir);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const std::string manifest : {corpus.pretrain_man_manifest, corpus.pretrain_eng_manifest,
                                     corpus.train_manifest, corpus.test_manifest}) {
    for (const auto& rec : read_manifest(manifest)) {
      ids.insert(rec.utt_id);
      ++total;
    }
  }
  CHECK(ids.size() == total);
}
