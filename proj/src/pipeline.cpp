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

#include "lsca/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lsca/numeric.hpp"
#include "lsca/scoring.hpp"

namespace lsca {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

bool stage_done(const fs::path& dir) { return fs::exists(dir / "DONE"); }

void mark_done(const fs::path& dir) {
  std::ofstream out(dir / "DONE");
  out << "done\n";
}

void write_stage_summary(const fs::path& dir, const TrainOutput& out) {
  ordered_json j;
  j["steps"] = out.steps;
  j["trained_utterances"] = out.trained_utterances;
  j["skipped_utterances"] = out.skipped_utterances;
  j["first_total_loss"] = out.first_total_loss;
  j["last_total_loss"] = out.last_total_loss;
  j["final_checkpoint"] = fs::path(out.final_checkpoint).filename().string();
  std::ofstream f(dir / "summary.json", std::ios::trunc);
  f << j.dump(2) << "\n";
}

// Mean top-1 probability over frames whose top-1 is an own-language token.
struct ProbeStats {
  double prob_sum = 0;
  long count = 0;
  double mean() const { return count > 0 ? prob_sum / static_cast<double>(count) : 0.0; }
};

void accumulate_probe(const std::vector<ProbeRow>& rows, ProbeStats& stats) {
  for (const ProbeRow& r : rows) {
    if (r.man_token != "#" && r.man_token != "*") {
      stats.prob_sum += r.man_prob;
      ++stats.count;
    }
    if (r.eng_token != "#" && r.eng_token != "*") {
      stats.prob_sum += r.eng_prob;
      ++stats.count;
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  if (plan.lambdas.empty() || plan.alphas.empty()) {
    throw ConfigError("experiment plan needs at least one lambda and one alpha");
  }
  const fs::path corpus(plan.corpus_dir);
  const fs::path root(plan.out_root);
  fs::create_directories(root);

  const std::string man_vocab_file = (corpus / "vocab" / "man_tokens.txt").string();
  const std::string eng_vocab_file = (corpus / "vocab" / "eng_tokens.txt").string();
  const VocabSet vocab = VocabSet::from_files(man_vocab_file, eng_vocab_file);

  ModelConfig mcfg = plan.run.model;
  mcfg.man_vocab_size = vocab.head_size(Lang::kMandarin);
  mcfg.eng_vocab_size = vocab.head_size(Lang::kEnglish);

  ExperimentResult result;

  // --- monolingual pretraining ---------------------------------------------
  const auto pretrain = [&](TrainStage stage, const std::string& name,
                            const std::string& manifest) {
    const fs::path dir = root / name;
    fs::create_directories(dir);
    const std::string final_ckpt = (dir / "final.ckpt").string();
    if (!stage_done(dir)) {
      TrainConfig tcfg = plan.run.pretrain;
      ModelConfig stage_cfg = mcfg;
      stage_cfg.with_mixture_head = false;
      const TrainOutput out = train_loop(stage, stage_cfg, tcfg, vocab, manifest, dir.string());
      write_stage_summary(dir, out);
      mark_done(dir);
    }
    return final_ckpt;
  };
  result.man_pretrain_ckpt = pretrain(TrainStage::kPretrainMan, "pretrain_man",
                                      (corpus / "pretrain_man.jsonl").string());
  result.eng_pretrain_ckpt = pretrain(TrainStage::kPretrainEng, "pretrain_eng",
                                      (corpus / "pretrain_eng.jsonl").string());

  // --- code-switching training, one system per lambda -----------------------
  const std::string train_manifest = (corpus / "train.jsonl").string();
  for (const double lambda : plan.lambdas) {
    const fs::path dir = root / ("lambda_" + format_g(lambda));
    fs::create_directories(dir);
    const std::string final_ckpt = (dir / "final.ckpt").string();
    if (!stage_done(dir)) {
      TrainConfig tcfg = plan.run.cs_train;
      tcfg.lambda = lambda;
      ModelConfig stage_cfg = mcfg;
      stage_cfg.with_mixture_head = lambda < 1.0;  // no extra parameters at lambda = 1
      const TrainOutput out =
          train_loop(TrainStage::kCsTrain, stage_cfg, tcfg, vocab, train_manifest,
                     dir.string(), result.man_pretrain_ckpt, result.eng_pretrain_ckpt);
      write_stage_summary(dir, out);
      mark_done(dir);
    }
    result.trained_models.push_back(SweepModel{lambda, final_ckpt});
  }

  // --- fusion sweep over the test set ---------------------------------------
  const std::string test_manifest = (corpus / "test.jsonl").string();
  result.table = sweep(result.trained_models, test_manifest, vocab, plan.alphas, plan.jobs,
                       plan.run.lsm_only_unk);
  result.sweep_csv = (root / "sweep.csv").string();
  write_sweep_csv(result.sweep_csv, result.table);

  // --- decoding straight from the two pretrained monolingual models ---------
  const ModelParams man_mono = load_checkpoint(result.man_pretrain_ckpt);
  const ModelParams eng_mono = load_checkpoint(result.eng_pretrain_ckpt);
  const DecodeResult pretrained_only = decode_pretrained_only(
      man_mono, eng_mono, test_manifest, vocab, plan.run.lsm_only_unk, plan.jobs);
  result.pretrained_only_mer_pct = pretrained_only.report.overall.mer_pct();

  // --- probes: pretrained vs language-specific-trained branches -------------
  const fs::path probe_dir = root / "probe";
  fs::create_directories(probe_dir);
  double probe_lambda = plan.probe_lambda;
  const SweepModel* probe_model = nullptr;
  for (const SweepModel& m : result.trained_models) {
    if (m.lambda == probe_lambda) probe_model = &m;
  }
  if (probe_model == nullptr) probe_model = &result.trained_models.back();
  const ModelParams probe_dual = load_checkpoint(probe_model->checkpoint_path);
  const ModelParams post_man = extract_mono(probe_dual, Lang::kMandarin);
  const ModelParams post_eng = extract_mono(probe_dual, Lang::kEnglish);

  ProbeStats pre_stats, post_stats;
  int probed = 0;
  for (const ManifestRecord& rec : read_manifest(test_manifest)) {
    if (rec.category != "cs") continue;
    if (probed >= plan.probe_utterances) break;
    ++probed;
    const Matrix feats = read_features(resolve_feature_path(test_manifest, rec));

    const auto dump = [&](const ModelParams& man_m, const ModelParams& eng_m,
                          const std::string& tag) {
      const Matrix p_man = model::mono_posteriors(man_m, feats);
      const Matrix p_eng = model::mono_posteriors(eng_m, feats);
      const std::vector<ProbeRow> rows = probe_frames(p_man, p_eng, vocab);
      write_probe_csv((probe_dir / (rec.utt_id + "_" + tag + ".csv")).string(), rows);
      write_probe_svg((probe_dir / (rec.utt_id + "_" + tag + ".svg")).string(), rows);
      return rows;
    };
    accumulate_probe(dump(man_mono, eng_mono, "pre"), pre_stats);
    accumulate_probe(dump(post_man, post_eng, "post"), post_stats);
  }
  result.probe_pre_confidence = pre_stats.mean();
  result.probe_post_confidence = post_stats.mean();

  // --- report ----------------------------------------------------------------
  const auto cell_at = [&](double lambda, double alpha) -> const SweepCell* {
    for (std::size_t r = 0; r < result.table.lambdas.size(); ++r) {
      if (result.table.lambdas[r] != lambda) continue;
      for (std::size_t c = 0; c < result.table.alphas.size(); ++c) {
        if (result.table.alphas[c] == alpha) return &result.table.cells[r][c];
      }
    }
    return nullptr;
  };
  const SweepCell* baseline = cell_at(0.0, 0.0);
  result.baseline_mer_pct = baseline != nullptr && baseline->available
                                ? baseline->mer_pct
                                : std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  double best_lambda = 0, best_alpha = 0;
  for (std::size_t r = 0; r < result.table.lambdas.size(); ++r) {
    for (std::size_t c = 0; c < result.table.alphas.size(); ++c) {
      const SweepCell& cell = result.table.cells[r][c];
      if (cell.available && cell.mer_pct < best) {
        best = cell.mer_pct;
        best_lambda = result.table.lambdas[r];
        best_alpha = result.table.alphas[c];
      }
    }
  }
  result.best_mer_pct = best;

  ordered_json report;
  report["profile"] = plan.run.profile;
  report["seed"] = plan.run.seed;
  if (baseline != nullptr && baseline->available) {
    report["baseline"] = {{"lambda", 0.0},
                          {"alpha", 0.0},
                          {"mer_pct", round_half_up(result.baseline_mer_pct, 2)}};
  }
  report["best"] = {{"lambda", best_lambda},
                    {"alpha", best_alpha},
                    {"mer_pct", round_half_up(best, 2)}};
  ordered_json cells = ordered_json::array();
  for (std::size_t r = 0; r < result.table.lambdas.size(); ++r) {
    for (std::size_t c = 0; c < result.table.alphas.size(); ++c) {
      const SweepCell& cell = result.table.cells[r][c];
      ordered_json jc;
      jc["lambda"] = result.table.lambdas[r];
      jc["alpha"] = result.table.alphas[c];
      if (cell.available) {
        jc["mer_pct"] = round_half_up(cell.mer_pct, 2);
      } else {
        jc["mer_pct"] = nullptr;
      }
      cells.push_back(std::move(jc));
    }
  }
  report["cells"] = std::move(cells);
  report["pretrained_only"] = {
      {"mer_pct", round_half_up(result.pretrained_only_mer_pct, 2)},
      {"published_reference_mer_pct", 47.84}};
  report["published_reference"] = {{"baseline_mer_pct", 27.35}, {"best_mer_pct", 23.13}};
  report["probe"] = {{"pre_mean_own_confidence", result.probe_pre_confidence},
                     {"post_mean_own_confidence", result.probe_post_confidence},
                     {"utterances", probed}};

  result.report_json = (root / "report.json").string();
  std::ofstream report_out(result.report_json, std::ios::trunc);
  if (!report_out) throw Error("cannot write report: " + result.report_json);
  report_out << report.dump(2) << "\n";
  return result;
}

}  // namespace lsca
