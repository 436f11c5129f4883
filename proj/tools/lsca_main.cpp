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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <json.hpp>

#include "lsca/config.hpp"
#include "lsca/ctc.hpp"
#include "lsca/pipeline.hpp"
#include "lsca/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonOpts {
  std::string profile = "paper";
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--profile", opts.profile, "built-in defaults: paper or toy")
      ->capture_default_str();
  cmd->add_option("--config", opts.config_file, "key=value config file");
  cmd->add_option("--set", opts.overrides, "config override, e.g. --set train.lambda=0.7");
  cmd->add_option("--seed", opts.seed, "global seed (falls back to LSCA_SEED, then profile)");
  cmd->add_option("--out-dir", opts.out_dir, "output directory")->required();
}

lsca::RunConfig finalize(const CommonOpts& opts) {
  lsca::RunConfig rc = lsca::resolve_config(
      opts.profile,
      opts.config_file.empty() ? std::nullopt : std::optional<std::string>(opts.config_file),
      opts.overrides);
  if (opts.seed) {
    rc.seed = *opts.seed;
    rc.pretrain.seed = rc.seed;
    rc.cs_train.seed = rc.seed;
    rc.synth.seed = rc.seed;
  }
  return rc;
}

void write_run_config(const std::string& out_dir, const lsca::RunConfig& rc) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "run_config.txt", std::ios::trunc);
  if (!out) throw lsca::Error("cannot write run_config.txt in " + out_dir);
  out << rc.serialize();
}

void write_summary(const std::string& out_dir, const ordered_json& summary) {
  std::ofstream out(fs::path(out_dir) / "summary.json", std::ios::trunc);
  if (!out) throw lsca::Error("cannot write summary.json in " + out_dir);
  out << summary.dump(2) << "\n";
}

lsca::ModelConfig model_config_for(const lsca::RunConfig& rc, const lsca::VocabSet& vocab,
                                   bool with_mixture_head) {
  lsca::ModelConfig cfg = rc.model;
  cfg.man_vocab_size = vocab.head_size(lsca::Lang::kMandarin);
  cfg.eng_vocab_size = vocab.head_size(lsca::Lang::kEnglish);
  cfg.with_mixture_head = with_mixture_head;
  return cfg;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw lsca::ConfigError(std::string(what) + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw lsca::ConfigError(std::string(what) + ": empty list");
  return out;
}

std::vector<lsca::SweepModel> parse_lambda_ckpts(const std::string& text) {
  std::vector<lsca::SweepModel> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw lsca::ConfigError("--lambda-ckpts expects lambda=path pairs: '" + item + "'");
    }
    lsca::SweepModel entry;
    try {
      entry.lambda = std::stod(item.substr(0, eq));
    } catch (const std::exception&) {
      throw lsca::ConfigError("--lambda-ckpts: bad lambda: '" + item + "'");
    }
    entry.checkpoint_path = item.substr(eq + 1);
    out.push_back(std::move(entry));
  }
  if (out.empty()) throw lsca::ConfigError("--lambda-ckpts: empty list");
  return out;
}

void write_hypotheses(const std::string& path, const lsca::DecodeResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw lsca::Error("cannot write hypotheses: " + path);
  for (const auto& utt : result.utterances) {
    ordered_json j;
    j["utt_id"] = utt.utt_id;
    j["text"] = utt.hyp_text;
    out << j.dump() << "\n";
  }
}

void write_report_files(const std::string& out_dir, const lsca::MerReport& report) {
  {
    std::ofstream out(fs::path(out_dir) / "report.json", std::ios::trunc);
    out << lsca::mer_report_json(report) << "\n";
  }
  std::ofstream out(fs::path(out_dir) / "report.txt", std::ios::trunc);
  out << lsca::mer_report_table(report);
}

// --- subcommand option blocks -------------------------------------------

struct SynthArgs {
  CommonOpts common;
};

struct PretrainArgs {
  CommonOpts common;
  std::string lang;
  std::string manifest;
  std::string man_vocab, eng_vocab;
};

struct TrainArgs {
  CommonOpts common;
  std::string manifest;
  std::string man_vocab, eng_vocab;
  std::string man_ckpt, eng_ckpt;
  std::optional<double> lambda;
};

struct DecodeArgs {
  CommonOpts common;
  std::string manifest;
  std::string man_vocab, eng_vocab;
  std::string ckpt;
  std::string man_ckpt, eng_ckpt;
  double alpha = 0.0;
  bool lsm_only = false;
  int jobs = 1;
};

struct SweepArgs {
  CommonOpts common;
  std::string manifest;
  std::string man_vocab, eng_vocab;
  std::string lambda_ckpts;
  std::string alphas = "0,0.1,0.3,0.5,0.7,0.9,1.0";
  std::string out_csv = "sweep.csv";
  int jobs = 1;
};

struct ScoreArgs {
  CommonOpts common;
  std::string refs_manifest;
  std::string hyps_file;
};

struct ProbeArgs {
  CommonOpts common;
  std::string manifest;
  std::string man_vocab, eng_vocab;
  std::string ckpt;
  std::string man_ckpt, eng_ckpt;
  std::string utts;
  int first = 3;
  bool no_svg = false;
};

struct AvgArgs {
  CommonOpts common;
  std::vector<std::string> inputs;
  std::string name = "averaged.ckpt";
};

int run_synth(const SynthArgs& args) {
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  const lsca::SynthCorpus corpus = lsca::synth_corpus(rc.synth, args.common.out_dir);
  ordered_json summary;
  summary["train_manifest"] = corpus.train_manifest;
  summary["test_manifest"] = corpus.test_manifest;
  summary["pretrain_man_manifest"] = corpus.pretrain_man_manifest;
  summary["pretrain_eng_manifest"] = corpus.pretrain_eng_manifest;
  summary["man_vocab_file"] = corpus.man_vocab_file;
  summary["eng_vocab_file"] = corpus.eng_vocab_file;
  write_summary(args.common.out_dir, summary);
  return 0;
}

ordered_json train_summary(const lsca::TrainOutput& out) {
  ordered_json j;
  j["steps"] = out.steps;
  j["trained_utterances"] = out.trained_utterances;
  j["skipped_utterances"] = out.skipped_utterances;
  j["first_total_loss"] = out.first_total_loss;
  j["last_total_loss"] = out.last_total_loss;
  j["final_checkpoint"] = out.final_checkpoint;
  j["metrics"] = out.metrics_path;
  return j;
}

int run_pretrain(const PretrainArgs& args) {
  if (args.lang != "man" && args.lang != "eng") {
    throw lsca::ConfigError("--lang must be man or eng");
  }
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  const lsca::VocabSet vocab = lsca::VocabSet::from_files(args.man_vocab, args.eng_vocab);
  const lsca::ModelConfig mcfg = model_config_for(rc, vocab, false);
  const lsca::TrainStage stage = args.lang == "man" ? lsca::TrainStage::kPretrainMan
                                                    : lsca::TrainStage::kPretrainEng;
  const lsca::TrainOutput out =
      lsca::train_loop(stage, mcfg, rc.pretrain, vocab, args.manifest, args.common.out_dir);
  write_summary(args.common.out_dir, train_summary(out));
  return 0;
}

int run_train(const TrainArgs& args) {
  lsca::RunConfig rc = finalize(args.common);
  if (args.lambda) rc.cs_train.lambda = *args.lambda;
  if (rc.cs_train.lambda < 0.0 || rc.cs_train.lambda > 1.0) {
    throw lsca::ConfigError("lambda out of range [0,1]");
  }
  write_run_config(args.common.out_dir, rc);
  const lsca::VocabSet vocab = lsca::VocabSet::from_files(args.man_vocab, args.eng_vocab);
  const lsca::ModelConfig mcfg = model_config_for(rc, vocab, rc.cs_train.lambda < 1.0);
  const lsca::TrainOutput out =
      lsca::train_loop(lsca::TrainStage::kCsTrain, mcfg, rc.cs_train, vocab, args.manifest,
                       args.common.out_dir, args.man_ckpt, args.eng_ckpt);
  write_summary(args.common.out_dir, train_summary(out));
  return 0;
}

int run_decode(const DecodeArgs& args) {
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  const lsca::VocabSet vocab = lsca::VocabSet::from_files(args.man_vocab, args.eng_vocab);

  lsca::DecodeResult result;
  if (!args.ckpt.empty()) {
    lsca::FusionConfig fcfg;
    fcfg.alpha = args.alpha;
    fcfg.lsm_only = args.lsm_only;
    fcfg.lsm_only_unk = rc.lsm_only_unk;
    const lsca::ModelParams dual = lsca::load_checkpoint(args.ckpt);
    result = lsca::decode_manifest(dual, args.manifest, vocab, fcfg, args.jobs);
  } else if (!args.man_ckpt.empty() && !args.eng_ckpt.empty()) {
    const lsca::ModelParams man = lsca::load_checkpoint(args.man_ckpt);
    const lsca::ModelParams eng = lsca::load_checkpoint(args.eng_ckpt);
    result = lsca::decode_pretrained_only(man, eng, args.manifest, vocab, rc.lsm_only_unk,
                                          args.jobs);
  } else {
    throw lsca::ConfigError("decode needs --ckpt, or --man-ckpt and --eng-ckpt");
  }

  write_hypotheses((fs::path(args.common.out_dir) / "hyps.jsonl").string(), result);
  write_report_files(args.common.out_dir, result.report);
  ordered_json summary;
  summary["utterances"] = result.utterances.size();
  summary["overall_mer_pct"] = lsca::display_mer(result.report.overall);
  write_summary(args.common.out_dir, summary);
  std::cout << lsca::mer_report_table(result.report);
  return 0;
}

int run_sweep(const SweepArgs& args) {
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  const lsca::VocabSet vocab = lsca::VocabSet::from_files(args.man_vocab, args.eng_vocab);
  const auto models = parse_lambda_ckpts(args.lambda_ckpts);
  const auto alphas = parse_double_list(args.alphas, "--alphas");
  const lsca::SweepTable table =
      lsca::sweep(models, args.manifest, vocab, alphas, args.jobs, rc.lsm_only_unk);
  const std::string csv_path = (fs::path(args.common.out_dir) / args.out_csv).string();
  lsca::write_sweep_csv(csv_path, table);
  ordered_json summary;
  summary["csv"] = csv_path;
  summary["lambdas"] = table.lambdas;
  summary["alphas"] = table.alphas;
  write_summary(args.common.out_dir, summary);
  std::cout << "sweep table written to " << csv_path << "\n";
  return 0;
}

int run_score(const ScoreArgs& args) {
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  const auto refs = lsca::read_manifest(args.refs_manifest);

  std::ifstream hyps_in(args.hyps_file);
  if (!hyps_in) throw lsca::Error("cannot open hypotheses: " + args.hyps_file);
  std::map<std::string, std::string> hyps;
  std::string line;
  int line_no = 0;
  while (std::getline(hyps_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception&) {
      throw lsca::Error("hypotheses " + args.hyps_file + " line " + std::to_string(line_no) +
                        ": malformed json");
    }
    if (!j.contains("utt_id") || !j.contains("text")) {
      throw lsca::Error("hypotheses " + args.hyps_file + " line " + std::to_string(line_no) +
                        ": need utt_id and text");
    }
    hyps[j["utt_id"].get<std::string>()] = j["text"].get<std::string>();
  }

  std::vector<lsca::ScoredUtt> scored;
  for (const auto& rec : refs) {
    const auto it = hyps.find(rec.utt_id);
    if (it == hyps.end()) throw lsca::Error("missing hypothesis for " + rec.utt_id);
    scored.push_back(lsca::ScoredUtt{rec.utt_id, rec.text, it->second, rec.category});
  }
  const lsca::MerReport report = lsca::score_set(scored);
  write_report_files(args.common.out_dir, report);
  ordered_json summary;
  summary["utterances"] = scored.size();
  summary["overall_mer_pct"] = lsca::display_mer(report.overall);
  write_summary(args.common.out_dir, summary);
  std::cout << lsca::mer_report_table(report);
  return 0;
}

int run_probe(const ProbeArgs& args) {
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  const lsca::VocabSet vocab = lsca::VocabSet::from_files(args.man_vocab, args.eng_vocab);

  lsca::ModelParams man, eng;
  if (!args.ckpt.empty()) {
    const lsca::ModelParams dual = lsca::load_checkpoint(args.ckpt);
    man = lsca::extract_mono(dual, lsca::Lang::kMandarin);
    eng = lsca::extract_mono(dual, lsca::Lang::kEnglish);
  } else if (!args.man_ckpt.empty() && !args.eng_ckpt.empty()) {
    man = lsca::load_checkpoint(args.man_ckpt);
    eng = lsca::load_checkpoint(args.eng_ckpt);
  } else {
    throw lsca::ConfigError("probe needs --ckpt, or --man-ckpt and --eng-ckpt");
  }

  std::set<std::string> wanted;
  if (!args.utts.empty()) {
    std::stringstream ss(args.utts);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) wanted.insert(item);
    }
  }

  int dumped = 0;
  for (const auto& rec : lsca::read_manifest(args.manifest)) {
    const bool selected = wanted.empty()
                              ? (rec.category == "cs" && dumped < args.first)
                              : wanted.count(rec.utt_id) > 0;
    if (!selected) continue;
    ++dumped;
    const lsca::Matrix feats =
        lsca::read_features(lsca::resolve_feature_path(args.manifest, rec));
    const lsca::Matrix p_man = lsca::model::mono_posteriors(man, feats);
    const lsca::Matrix p_eng = lsca::model::mono_posteriors(eng, feats);
    const auto rows = lsca::probe_frames(p_man, p_eng, vocab);
    lsca::write_probe_csv((fs::path(args.common.out_dir) / (rec.utt_id + ".csv")).string(),
                          rows);
    if (!args.no_svg) {
      lsca::write_probe_svg((fs::path(args.common.out_dir) / (rec.utt_id + ".svg")).string(),
                            rows);
    }
  }
  if (dumped == 0) throw lsca::Error("no matching utterances to probe");
  ordered_json summary;
  summary["utterances"] = dumped;
  write_summary(args.common.out_dir, summary);
  return 0;
}

int run_avg(const AvgArgs& args) {
  const lsca::RunConfig rc = finalize(args.common);
  write_run_config(args.common.out_dir, rc);
  if (args.inputs.empty()) throw lsca::ConfigError("avg-ckpt needs --inputs");
  std::vector<lsca::ModelParams> ckpts;
  for (const auto& path : args.inputs) ckpts.push_back(lsca::load_checkpoint(path));
  const lsca::ModelParams averaged = lsca::average_checkpoints(ckpts);
  const std::string out_path = (fs::path(args.common.out_dir) / args.name).string();
  lsca::save_checkpoint(out_path, averaged);
  ordered_json summary;
  summary["inputs"] = args.inputs.size();
  summary["output"] = out_path;
  write_summary(args.common.out_dir, summary);
  std::cout << "averaged checkpoint written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CTC dual-encoder toolkit for bilingual code-switching speech recognition"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic bilingual corpus");
  add_common(synth, synth_args.common);

  PretrainArgs pre_args;
  CLI::App* pretrain = app.add_subcommand("pretrain", "train one monolingual model");
  add_common(pretrain, pre_args.common);
  pretrain->add_option("--lang", pre_args.lang, "man or eng")->required();
  pretrain->add_option("--manifest", pre_args.manifest, "training manifest")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--man-vocab", pre_args.man_vocab, "mandarin token file")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--eng-vocab", pre_args.eng_vocab, "english token file")->required()->check(CLI::ExistingFile);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train the dual-encoder system on cs data");
  add_common(train, train_args.common);
  train->add_option("--manifest", train_args.manifest, "training manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--man-vocab", train_args.man_vocab, "mandarin token file")->required()->check(CLI::ExistingFile);
  train->add_option("--eng-vocab", train_args.eng_vocab, "english token file")->required()->check(CLI::ExistingFile);
  train->add_option("--man-ckpt", train_args.man_ckpt, "pretrained mandarin checkpoint")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--eng-ckpt", train_args.eng_ckpt, "pretrained english checkpoint")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--lambda", train_args.lambda,
                    "weight of the language-specific losses, in [0,1]");

  DecodeArgs decode_args;
  CLI::App* decode = app.add_subcommand("decode", "decode a manifest with fused posteriors");
  add_common(decode, decode_args.common);
  decode->add_option("--manifest", decode_args.manifest, "test manifest")->required()->check(CLI::ExistingFile);
  decode->add_option("--man-vocab", decode_args.man_vocab, "mandarin token file")->required()->check(CLI::ExistingFile);
  decode->add_option("--eng-vocab", decode_args.eng_vocab, "english token file")->required()->check(CLI::ExistingFile);
  decode->add_option("--ckpt", decode_args.ckpt, "dual checkpoint")->check(CLI::ExistingFile);
  decode->add_option("--man-ckpt", decode_args.man_ckpt, "monolingual mandarin checkpoint")->check(CLI::ExistingFile);
  decode->add_option("--eng-ckpt", decode_args.eng_ckpt, "monolingual english checkpoint")->check(CLI::ExistingFile);
  decode->add_option("--alpha", decode_args.alpha, "weight of the head posteriors, in [0,1]")
      ->capture_default_str();
  decode->add_flag("--lsm-only", decode_args.lsm_only, "decode without the mixture head");
  decode->add_option("--jobs", decode_args.jobs, "parallel decoding threads")
      ->capture_default_str();

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "grid of lambda checkpoints x alpha values");
  add_common(sweep, sweep_args.common);
  sweep->add_option("--manifest", sweep_args.manifest, "test manifest")->required()->check(CLI::ExistingFile);
  sweep->add_option("--man-vocab", sweep_args.man_vocab, "mandarin token file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--eng-vocab", sweep_args.eng_vocab, "english token file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--lambda-ckpts", sweep_args.lambda_ckpts,
                    "comma list of lambda=checkpoint pairs")
      ->required();
  sweep->add_option("--alphas", sweep_args.alphas, "comma list of alpha values")
      ->capture_default_str();
  sweep->add_option("--out", sweep_args.out_csv, "csv file name inside --out-dir")
      ->capture_default_str();
  sweep->add_option("--jobs", sweep_args.jobs, "parallel decoding threads")
      ->capture_default_str();

  ScoreArgs score_args;
  CLI::App* score = app.add_subcommand("score", "mixed error rate of hypotheses vs a manifest");
  add_common(score, score_args.common);
  score->add_option("--refs", score_args.refs_manifest, "reference manifest")->required()->check(CLI::ExistingFile);
  score->add_option("--hyps", score_args.hyps_file, "hypotheses jsonl (utt_id, text)")
      ->required()->check(CLI::ExistingFile);

  ProbeArgs probe_args;
  CLI::App* probe = app.add_subcommand("probe", "per-frame top-1 dump of the two heads");
  add_common(probe, probe_args.common);
  probe->add_option("--manifest", probe_args.manifest, "manifest with utterances")->required()->check(CLI::ExistingFile);
  probe->add_option("--man-vocab", probe_args.man_vocab, "mandarin token file")->required()->check(CLI::ExistingFile);
  probe->add_option("--eng-vocab", probe_args.eng_vocab, "english token file")->required()->check(CLI::ExistingFile);
  probe->add_option("--ckpt", probe_args.ckpt, "dual checkpoint (branches are extracted)")->check(CLI::ExistingFile);
  probe->add_option("--man-ckpt", probe_args.man_ckpt, "monolingual mandarin checkpoint")->check(CLI::ExistingFile);
  probe->add_option("--eng-ckpt", probe_args.eng_ckpt, "monolingual english checkpoint")->check(CLI::ExistingFile);
  probe->add_option("--utts", probe_args.utts, "comma list of utterance ids");
  probe->add_option("--first", probe_args.first, "probe the first N cs utterances")
      ->capture_default_str();
  probe->add_flag("--no-svg", probe_args.no_svg, "skip the svg scatter");

  AvgArgs avg_args;
  CLI::App* avg = app.add_subcommand("avg-ckpt", "element-wise mean of checkpoints");
  add_common(avg, avg_args.common);
  avg->add_option("--inputs", avg_args.inputs, "checkpoint files")->required()->delimiter(',');
  avg->add_option("--name", avg_args.name, "output file name inside --out-dir")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(synth)) return run_synth(synth_args);
    if (app.got_subcommand(pretrain)) return run_pretrain(pre_args);
    if (app.got_subcommand(train)) return run_train(train_args);
    if (app.got_subcommand(decode)) return run_decode(decode_args);
    if (app.got_subcommand(sweep)) return run_sweep(sweep_args);
    if (app.got_subcommand(score)) return run_score(score_args);
    if (app.got_subcommand(probe)) return run_probe(probe_args);
    if (app.got_subcommand(avg)) return run_avg(avg_args);
  } catch (const lsca::ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
