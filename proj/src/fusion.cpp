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

#include "lsca/fusion.hpp"

#include <cstdio>
#include <fstream>
#include <thread>

#include "lsca/ctc.hpp"
#include "lsca/data.hpp"
#include "lsca/numeric.hpp"

namespace lsca {

Matrix fuse_posteriors(const Matrix* p_mix, const Matrix& p_man, const Matrix& p_eng,
                       const FusionConfig& cfg, const VocabSet& vocab) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("alpha out of range [0,1]");
  if (!cfg.lsm_only && p_mix == nullptr) {
    throw Error("fuse_posteriors: mixture grid required unless lsm_only");
  }
  const Index frames = p_man.rows();
  if (p_eng.rows() != frames || (p_mix != nullptr && p_mix->rows() != frames)) {
    throw Error("fuse_posteriors: grids disagree on frame count");
  }
  if (p_man.cols() != vocab.head_size(Lang::kMandarin) ||
      p_eng.cols() != vocab.head_size(Lang::kEnglish) ||
      (p_mix != nullptr && p_mix->cols() != vocab.mixture_size())) {
    throw Error("fuse_posteriors: grid width does not match vocabulary");
  }

  const Real alpha = cfg.lsm_only ? Real(1) : static_cast<Real>(cfg.alpha);
  const Real keep = Real(1) - alpha;
  Matrix scores(frames, vocab.mixture_size());
  for (int u = 0; u < vocab.mixture_size(); ++u) {
    switch (vocab.classify(u)) {
      case TokenClass::kBlank:
        scores.col(u) = alpha * Real(0.5) * (p_man.col(kBlankId) + p_eng.col(kBlankId));
        if (p_mix != nullptr && !cfg.lsm_only) scores.col(u) += keep * p_mix->col(u);
        break;
      case TokenClass::kUnk:
        if (cfg.lsm_only) {
          if (cfg.lsm_only_unk == FusionConfig::LsmOnlyUnk::kAverage) {
            scores.col(u) = Real(0.5) * (p_man.col(kUnkId) + p_eng.col(kUnkId));
          } else {
            scores.col(u).setZero();
          }
        } else {
          scores.col(u) = p_mix->col(u);
        }
        break;
      case TokenClass::kMandarin:
        scores.col(u) = alpha * p_man.col(vocab.head_index(Lang::kMandarin, u));
        if (p_mix != nullptr && !cfg.lsm_only) scores.col(u) += keep * p_mix->col(u);
        break;
      case TokenClass::kEnglish:
        scores.col(u) = alpha * p_eng.col(vocab.head_index(Lang::kEnglish, u));
        if (p_mix != nullptr && !cfg.lsm_only) scores.col(u) += keep * p_mix->col(u);
        break;
    }
  }
  return scores;
}

std::vector<int> decode_fused(const Matrix& scores) { return greedy_decode(scores); }

namespace {

// Index-sharded parallel map with deterministic placement.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, const Fn& fn) {
  if (jobs <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min<int>(jobs, static_cast<int>(count));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < count;
           i += static_cast<std::size_t>(workers)) {
        fn(i);
      }
    });
  }
  for (auto& t : threads) t.join();
}

struct TestUtterance {
  ManifestRecord record;
  Matrix feats;
};

std::vector<TestUtterance> load_test_set(const std::string& manifest_path) {
  std::vector<TestUtterance> utts;
  for (ManifestRecord& rec : read_manifest(manifest_path)) {
    TestUtterance u;
    u.feats = read_features(resolve_feature_path(manifest_path, rec));
    u.record = std::move(rec);
    utts.push_back(std::move(u));
  }
  if (utts.empty()) throw Error("test manifest is empty: " + manifest_path);
  return utts;
}

DecodeResult assemble_result(const std::vector<TestUtterance>& utts,
                             std::vector<DecodedUtterance> decoded) {
  DecodeResult out;
  std::vector<ScoredUtt> scored;
  scored.reserve(utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    scored.push_back(ScoredUtt{utts[i].record.utt_id, utts[i].record.text,
                               decoded[i].hyp_text, utts[i].record.category});
  }
  out.report = score_set(scored);
  out.utterances = std::move(decoded);
  return out;
}

}  // namespace

DecodeResult decode_manifest(const ModelParams& dual, const std::string& manifest_path,
                             const VocabSet& vocab, const FusionConfig& cfg, int jobs) {
  if (!dual.cfg.with_mixture_head && !cfg.lsm_only) {
    throw Error("decode_manifest: model has no mixture head; use lsm_only");
  }
  const std::vector<TestUtterance> utts = load_test_set(manifest_path);
  std::vector<DecodedUtterance> decoded(utts.size());
  parallel_for(utts.size(), jobs, [&](std::size_t i) {
    const model::DualPosteriors post = model::dual_posteriors(dual, utts[i].feats);
    const Matrix scores = fuse_posteriors(post.mix ? &*post.mix : nullptr, post.man,
                                          post.eng, cfg, vocab);
    DecodedUtterance d;
    d.utt_id = utts[i].record.utt_id;
    d.hyp_ids = decode_fused(scores);
    d.hyp_text = vocab.detokenize(LabelSequence{VocabKind::kMixture, d.hyp_ids});
    decoded[i] = std::move(d);
  });
  return assemble_result(utts, std::move(decoded));
}

DecodeResult decode_pretrained_only(const ModelParams& man_mono, const ModelParams& eng_mono,
                                    const std::string& manifest_path, const VocabSet& vocab,
                                    FusionConfig::LsmOnlyUnk unk_rule, int jobs) {
  if (man_mono.kind != ModelKind::kMono || eng_mono.kind != ModelKind::kMono) {
    throw Error("decode_pretrained_only: both checkpoints must be monolingual models");
  }
  if (man_mono.cfg.feat_dim != eng_mono.cfg.feat_dim) {
    throw Error("decode_pretrained_only: checkpoints disagree on feature dim");
  }
  // Role is positional; a checkpoint whose head width does not match its
  // role's vocabulary is rejected by fuse_posteriors below.

  FusionConfig cfg;
  cfg.lsm_only = true;
  cfg.alpha = 1.0;
  cfg.lsm_only_unk = unk_rule;

  const std::vector<TestUtterance> utts = load_test_set(manifest_path);
  std::vector<DecodedUtterance> decoded(utts.size());
  parallel_for(utts.size(), jobs, [&](std::size_t i) {
    const Matrix p_man = model::mono_posteriors(man_mono, utts[i].feats);
    const Matrix p_eng = model::mono_posteriors(eng_mono, utts[i].feats);
    const Matrix scores = fuse_posteriors(nullptr, p_man, p_eng, cfg, vocab);
    DecodedUtterance d;
    d.utt_id = utts[i].record.utt_id;
    d.hyp_ids = decode_fused(scores);
    d.hyp_text = vocab.detokenize(LabelSequence{VocabKind::kMixture, d.hyp_ids});
    decoded[i] = std::move(d);
  });
  return assemble_result(utts, std::move(decoded));
}

SweepTable sweep(std::span<const SweepModel> models, const std::string& manifest_path,
                 const VocabSet& vocab, std::span<const double> alphas, int jobs,
                 FusionConfig::LsmOnlyUnk unk_rule) {
  for (const double a : alphas) {
    if (a < 0.0 || a > 1.0) throw ConfigError("alpha out of range [0,1]");
  }
  const std::vector<TestUtterance> utts = load_test_set(manifest_path);

  SweepTable table;
  table.alphas.assign(alphas.begin(), alphas.end());
  for (const SweepModel& entry : models) {
    table.lambdas.push_back(entry.lambda);
    const ModelParams params = load_checkpoint(entry.checkpoint_path);
    if (params.kind != ModelKind::kDual) {
      throw Error("sweep: checkpoint is not a dual model: " + entry.checkpoint_path);
    }
    const bool has_mix = params.cfg.with_mixture_head;

    std::vector<model::DualPosteriors> posts(utts.size());
    parallel_for(utts.size(), jobs, [&](std::size_t i) {
      posts[i] = model::dual_posteriors(params, utts[i].feats);
    });

    std::vector<SweepCell> row;
    for (const double alpha : alphas) {
      if (!has_mix && alpha < 1.0) {
        row.push_back(SweepCell{false, 0.0});
        continue;
      }
      FusionConfig cfg;
      cfg.alpha = alpha;
      cfg.lsm_only = !has_mix;
      cfg.lsm_only_unk = unk_rule;
      std::vector<DecodedUtterance> decoded(utts.size());
      parallel_for(utts.size(), jobs, [&](std::size_t i) {
        const Matrix scores = fuse_posteriors(
            posts[i].mix ? &*posts[i].mix : nullptr, posts[i].man, posts[i].eng, cfg, vocab);
        DecodedUtterance d;
        d.utt_id = utts[i].record.utt_id;
        d.hyp_ids = decode_fused(scores);
        d.hyp_text = vocab.detokenize(LabelSequence{VocabKind::kMixture, d.hyp_ids});
        decoded[i] = std::move(d);
      });
      const DecodeResult res = assemble_result(utts, std::move(decoded));
      row.push_back(SweepCell{true, res.report.overall.mer_pct()});
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

void write_sweep_csv(const std::string& path, const SweepTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open sweep csv for writing: " + path);
  out << "# published full-scale reference: lambda=0 alpha=0 -> 27.35 MER, "
         "lambda=0.7 alpha=0.7 -> 23.13 MER; desk-scale runs are not comparable\n";
  char buf[32];
  out << "lambda";
  for (const double a : table.alphas) {
    std::snprintf(buf, sizeof(buf), "%g", a);
    out << "," << buf;
  }
  out << "\n";
  for (std::size_t r = 0; r < table.lambdas.size(); ++r) {
    std::snprintf(buf, sizeof(buf), "%g", table.lambdas[r]);
    out << buf;
    for (const SweepCell& cell : table.cells[r]) {
      if (cell.available) {
        std::snprintf(buf, sizeof(buf), "%.2f", round_half_up(cell.mer_pct, 2));
        out << "," << buf;
      } else {
        out << ",-";
      }
    }
    out << "\n";
  }
}

}  // namespace lsca
