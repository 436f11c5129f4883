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

#include "lsca/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lsca/ctc.hpp"
#include "lsca/numeric.hpp"

namespace lsca {

namespace fs = std::filesystem;
namespace ad = lsca::autodiff;

double lr_at(long step, int d_model, long warmup_steps, double scale) {
  if (step < 1) throw Error("lr_at: step must be >= 1");
  if (d_model < 1 || warmup_steps < 1) throw Error("lr_at: bad schedule parameters");
  const double ramp = static_cast<double>(step) * std::pow(static_cast<double>(warmup_steps), -1.5);
  const double decay = 1.0 / std::sqrt(static_cast<double>(step));
  return scale / std::sqrt(static_cast<double>(d_model)) * std::min(decay, ramp);
}

Matrix spec_augment(const Matrix& feats, const SpecAugmentConfig& cfg, Rng& rng) {
  Matrix out = feats;
  for (int i = 0; i < cfg.num_freq_masks; ++i) {
    Index width = rng.uniform_int(0, cfg.freq_mask_width);
    width = std::min(width, out.cols());
    const Index start = rng.uniform_int(0, out.cols() - width);
    if (width > 0) out.middleCols(start, width).setZero();
  }
  for (int i = 0; i < cfg.num_time_masks; ++i) {
    Index width = rng.uniform_int(0, cfg.time_mask_width);
    width = std::min(width, out.rows());
    const Index start = rng.uniform_int(0, out.rows() - width);
    if (width > 0) out.middleRows(start, width).setZero();
  }
  return out;
}

std::vector<UttEntry> load_entries(const std::string& manifest_path) {
  std::vector<UttEntry> entries;
  for (const ManifestRecord& rec : read_manifest(manifest_path)) {
    UttEntry e;
    e.utt_id = rec.utt_id;
    e.feature_path = resolve_feature_path(manifest_path, rec);
    e.text = rec.text;
    e.category = rec.category;
    e.frames = read_features(e.feature_path).rows();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<Batch> make_batches(std::span<const UttEntry> entries, Index max_frames,
                                std::uint64_t seed) {
  if (max_frames < 1) throw Error("make_batches: frame cap must be positive");
  for (const UttEntry& e : entries) {
    if (e.frames > max_frames) {
      throw Error("utterance " + e.utt_id + " has " + std::to_string(e.frames) +
                  " frames, above the batch cap " + std::to_string(max_frames));
    }
  }
  std::vector<int> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<Batch> batches;
  Batch current;
  for (const int idx : order) {
    const Index frames = entries[static_cast<std::size_t>(idx)].frames;
    if (!current.entry_indices.empty() && current.total_frames + frames > max_frames) {
      batches.push_back(std::move(current));
      current = Batch{};
    }
    current.entry_indices.push_back(idx);
    current.total_frames += frames;
  }
  if (!current.entry_indices.empty()) batches.push_back(std::move(current));
  return batches;
}

PaddedBatch pad_batch(std::span<const BatchItem> items) {
  if (items.empty()) throw Error("pad_batch: empty batch");
  PaddedBatch out;
  for (const BatchItem& item : items) out.max_len = std::max(out.max_len, item.feats.rows());
  const Index feat_dim = items[0].feats.cols();
  out.features = Matrix::Zero(static_cast<Index>(items.size()) * out.max_len, feat_dim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].feats.cols() != feat_dim) throw Error("pad_batch: feature dim mismatch");
    out.lengths.push_back(items[i].feats.rows());
    out.features.middleRows(static_cast<Index>(i) * out.max_len, items[i].feats.rows()) =
        items[i].feats;
  }
  return out;
}

namespace {

// Harvested gradients padded out to the model's full tensor set, so that
// off-path parameters are reported as exact zeros.
std::map<std::string, Matrix> full_gradients(const ModelParams& params, const ad::Tape& tape) {
  std::map<std::string, Matrix> grads;
  tape.for_each_param([&grads](const std::string& name, const Matrix& g) {
    auto [it, inserted] = grads.emplace(name, g);
    if (!inserted) it->second += g;
  });
  for (const auto& [name, value] : params.tensors) {
    grads.emplace(name, Matrix::Zero(value.rows(), value.cols()));
  }
  return grads;
}

ad::Var mean_of(ad::Tape& tape, const std::vector<ad::Var>& losses) {
  ad::Var acc = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) acc = ad::add(acc, losses[i]);
  return ad::scale(acc, Real(1) / static_cast<Real>(losses.size()));
}

}  // namespace

StepResult combined_loss(const ModelParams& dual, std::span<const BatchItem> items,
                         double lambda, const VocabSet& vocab, bool collapse_unk_runs,
                         bool train_mode, Rng* dropout_rng) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda out of range [0,1]");
  if (dual.kind != ModelKind::kDual) throw Error("combined_loss: model is not dual");
  if (lambda < 1.0 && !dual.cfg.with_mixture_head) {
    throw ConfigError("lambda < 1 requires a mixture head");
  }
  const bool use_mix = lambda < 1.0;
  const bool use_ls = lambda > 0.0;

  struct Prepared {
    const BatchItem* item;
    std::vector<int> mix_target;
    std::vector<int> man_target;
    std::vector<int> eng_target;
  };
  std::vector<Prepared> todo;
  int skipped = 0;
  for (const BatchItem& item : items) {
    const Index out_frames = subsampled_frames(item.feats.rows());
    Prepared p{&item, item.target.ids, {}, {}};
    bool ok = !use_mix || ctc_feasible(out_frames, p.mix_target);
    if (use_ls) {
      p.man_target =
          vocab.project_label_ids(
                   vocab.remap_targets(item.target, Lang::kMandarin, collapse_unk_runs),
                   Lang::kMandarin)
              .ids;
      p.eng_target =
          vocab.project_label_ids(
                   vocab.remap_targets(item.target, Lang::kEnglish, collapse_unk_runs),
                   Lang::kEnglish)
              .ids;
      ok = ok && ctc_feasible(out_frames, p.man_target) &&
           ctc_feasible(out_frames, p.eng_target);
    }
    if (ok) {
      todo.push_back(std::move(p));
    } else {
      ++skipped;
    }
  }

  StepResult result;
  result.loss.lambda = lambda;
  result.loss.skipped = skipped;
  result.loss.trained = static_cast<int>(todo.size());
  if (todo.empty()) {
    for (const auto& [name, value] : dual.tensors) {
      result.grads.emplace(name, Matrix::Zero(value.rows(), value.cols()));
    }
    return result;
  }

  ad::Tape tape;
  model::TapeBinding tb(tape, dual);
  const model::ForwardOptions opt{train_mode, dropout_rng};

  std::vector<ad::Var> mix_losses, man_losses, eng_losses;
  for (const Prepared& p : todo) {
    const ad::Var h_man = model::encode(tb, dual.cfg, "man.enc", p.item->feats, opt);
    const ad::Var h_eng = model::encode(tb, dual.cfg, "eng.enc", p.item->feats, opt);
    if (use_mix) {
      const ad::Var mix_logp = ad::log_softmax_rows(
          model::head_logits(tb, "mix_head", model::fuse_hidden(tb, h_man, h_eng)));
      mix_losses.push_back(ad::ctc_loss_node(mix_logp, p.mix_target));
    }
    if (use_ls) {
      man_losses.push_back(ad::ctc_loss_node(
          ad::log_softmax_rows(model::head_logits(tb, "man.head", h_man)), p.man_target));
      eng_losses.push_back(ad::ctc_loss_node(
          ad::log_softmax_rows(model::head_logits(tb, "eng.head", h_eng)), p.eng_target));
    }
  }

  ad::Var total{};
  if (use_mix) {
    const ad::Var mix_mean = mean_of(tape, mix_losses);
    result.loss.mix = mix_mean.value()(0, 0);
    total = (lambda == 0.0) ? mix_mean : ad::scale(mix_mean, Real(1) - static_cast<Real>(lambda));
  }
  if (use_ls) {
    const ad::Var man_mean = mean_of(tape, man_losses);
    const ad::Var eng_mean = mean_of(tape, eng_losses);
    result.loss.man = man_mean.value()(0, 0);
    result.loss.eng = eng_mean.value()(0, 0);
    ad::Var ls = ad::scale(ad::add(man_mean, eng_mean), Real(0.5));
    if (lambda == 1.0) {
      total = ls;
    } else {
      ls = ad::scale(ls, static_cast<Real>(lambda));
      total = ad::add(total, ls);
    }
  }

  tape.backward(total);
  result.grads = full_gradients(dual, tape);
  return result;
}

StepResult mono_ctc_loss(const ModelParams& mono, std::span<const BatchItem> items,
                         const VocabSet& vocab, bool train_mode, Rng* dropout_rng) {
  if (mono.kind != ModelKind::kMono) throw Error("mono_ctc_loss: model is not mono");
  const Lang lang = mono.mono_lang;

  struct Prepared {
    const BatchItem* item;
    std::vector<int> target;
  };
  std::vector<Prepared> todo;
  int skipped = 0;
  for (const BatchItem& item : items) {
    std::vector<int> target =
        vocab.project_label_ids(vocab.remap_targets(item.target, lang), lang).ids;
    if (ctc_feasible(subsampled_frames(item.feats.rows()), target)) {
      todo.push_back(Prepared{&item, std::move(target)});
    } else {
      ++skipped;
    }
  }

  StepResult result;
  result.loss.skipped = skipped;
  result.loss.trained = static_cast<int>(todo.size());
  if (todo.empty()) {
    for (const auto& [name, value] : mono.tensors) {
      result.grads.emplace(name, Matrix::Zero(value.rows(), value.cols()));
    }
    return result;
  }

  ad::Tape tape;
  model::TapeBinding tb(tape, mono);
  const model::ForwardOptions opt{train_mode, dropout_rng};
  std::vector<ad::Var> losses;
  for (const Prepared& p : todo) {
    const ad::Var h = model::encode(tb, mono.cfg, "enc", p.item->feats, opt);
    losses.push_back(ad::ctc_loss_node(
        ad::log_softmax_rows(model::head_logits(tb, "head", h)), p.target));
  }
  const ad::Var mean = mean_of(tape, losses);
  if (lang == Lang::kMandarin) {
    result.loss.man = mean.value()(0, 0);
  } else {
    result.loss.eng = mean.value()(0, 0);
  }
  tape.backward(mean);
  result.grads = full_gradients(mono, tape);
  return result;
}

void AdamOptimizer::step(ModelParams& params, const std::map<std::string, Matrix>& grads,
                         double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto pit = params.tensors.find(name);
    if (pit == params.tensors.end()) throw Error("adam: unknown parameter " + name);
    Matrix& m = m_.try_emplace(name, Matrix::Zero(g.rows(), g.cols())).first->second;
    Matrix& v = v_.try_emplace(name, Matrix::Zero(g.rows(), g.cols())).first->second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    pit->second.array() -=
        static_cast<Real>(lr) * m_hat.array() / (v_hat.array().sqrt() + static_cast<Real>(epsilon_));
  }
}

void TrainConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda out of range [0,1]");
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (max_frames_per_batch < 1) throw ConfigError("max_frames_per_batch must be >= 1");
  if (average_last_n < 1) throw ConfigError("average_last_n must be >= 1");
  if (lr_scale <= 0.0) throw ConfigError("lr_scale must be positive");
}

TrainOutput train_loop(TrainStage stage, const ModelConfig& mcfg, const TrainConfig& tcfg,
                       const VocabSet& vocab, const std::string& manifest_path,
                       const std::string& out_dir, const std::string& man_ckpt,
                       const std::string& eng_ckpt) {
  tcfg.validate();
  mcfg.validate();
  fs::create_directories(out_dir);

  ModelParams params;
  switch (stage) {
    case TrainStage::kPretrainMan:
      params = init_mono_params(mcfg, Lang::kMandarin, tcfg.seed);
      break;
    case TrainStage::kPretrainEng:
      params = init_mono_params(mcfg, Lang::kEnglish, tcfg.seed);
      break;
    case TrainStage::kCsTrain: {
      if (man_ckpt.empty() || eng_ckpt.empty()) {
        throw Error("cs training requires both pretrained checkpoints");
      }
      params = init_dual_params(mcfg, tcfg.seed);
      const ModelParams man = load_checkpoint(man_ckpt);
      const ModelParams eng = load_checkpoint(eng_ckpt);
      load_from_pretrained(params, man, eng);
      break;
    }
  }

  const std::vector<UttEntry> entries = load_entries(manifest_path);
  if (entries.empty()) throw Error("training manifest is empty: " + manifest_path);

  Rng master(tcfg.seed);
  Rng augment_rng = master.fork(101);
  Rng dropout_rng = master.fork(202);

  AdamOptimizer adam;
  TrainOutput out;
  out.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(out.metrics_path, std::ios::trunc);
  if (!metrics) throw Error("cannot open metrics log: " + out.metrics_path);

  long step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed =
        tcfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1;
    for (const Batch& batch : make_batches(entries, tcfg.max_frames_per_batch, epoch_seed)) {
      std::vector<BatchItem> items;
      items.reserve(batch.entry_indices.size());
      for (const int idx : batch.entry_indices) {
        const UttEntry& e = entries[static_cast<std::size_t>(idx)];
        BatchItem item;
        item.utt_id = e.utt_id;
        item.feats = read_features(e.feature_path);
        if (tcfg.use_spec_augment) {
          item.feats = spec_augment(item.feats, tcfg.spec_augment, augment_rng);
        }
        item.target = vocab.tokenize(e.text);
        items.push_back(std::move(item));
      }

      StepResult sr;
      if (stage == TrainStage::kCsTrain) {
        sr = combined_loss(params, items, tcfg.lambda, vocab, tcfg.collapse_unk_runs,
                           /*train_mode=*/true, &dropout_rng);
        if (tcfg.freeze_pretrained) {
          for (auto it = sr.grads.begin(); it != sr.grads.end();) {
            const bool pretrained = it->first.rfind("man.", 0) == 0 ||
                                    it->first.rfind("eng.", 0) == 0;
            it = pretrained ? sr.grads.erase(it) : std::next(it);
          }
        }
      } else {
        sr = mono_ctc_loss(params, items, vocab, /*train_mode=*/true, &dropout_rng);
      }
      out.trained_utterances += sr.loss.trained;
      out.skipped_utterances += sr.loss.skipped;
      if (sr.loss.trained == 0) continue;

      ++step;
      const double lr = lr_at(step, mcfg.d_model, tcfg.warmup_steps, tcfg.lr_scale);
      adam.step(params, sr.grads, lr);

      // the optimized objective: interpolated for cs, plain CTC otherwise
      double objective = sr.loss.total();
      if (stage == TrainStage::kPretrainMan) objective = sr.loss.man;
      if (stage == TrainStage::kPretrainEng) objective = sr.loss.eng;

      nlohmann::ordered_json rec;
      rec["step"] = step;
      rec["lr"] = lr;
      rec["mix_loss"] = sr.loss.mix;
      rec["man_loss"] = sr.loss.man;
      rec["eng_loss"] = sr.loss.eng;
      rec["total"] = objective;
      metrics << rec.dump() << "\n";
      if (step == 1) out.first_total_loss = objective;
      out.last_total_loss = objective;
    }

    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.ckpt", epoch + 1);
    const std::string ckpt_path = (fs::path(out_dir) / name).string();
    save_checkpoint(ckpt_path, params);
    out.epoch_checkpoints.push_back(ckpt_path);
  }
  out.steps = step;

  const int n_avg = std::min<int>(tcfg.average_last_n,
                                  static_cast<int>(out.epoch_checkpoints.size()));
  std::vector<ModelParams> last;
  for (int i = static_cast<int>(out.epoch_checkpoints.size()) - n_avg;
       i < static_cast<int>(out.epoch_checkpoints.size()); ++i) {
    last.push_back(load_checkpoint(out.epoch_checkpoints[static_cast<std::size_t>(i)]));
  }
  const ModelParams averaged = average_checkpoints(last);
  out.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
  save_checkpoint(out.final_checkpoint, averaged);
  return out;
}

}  // namespace lsca
