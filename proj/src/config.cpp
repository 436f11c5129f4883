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

#include "lsca/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace lsca {

namespace {

long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config key " + key + ": not a boolean: '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an unsigned integer: '" + value + "'");
  }
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

void apply_train_key(TrainConfig& t, const std::string& field, const std::string& key,
                     const std::string& value, bool allow_lambda) {
  if (field == "lambda" && allow_lambda) t.lambda = to_double(key, value);
  else if (field == "warmup_steps") t.warmup_steps = to_long(key, value);
  else if (field == "lr_scale") t.lr_scale = to_double(key, value);
  else if (field == "epochs") t.epochs = static_cast<int>(to_long(key, value));
  else if (field == "max_frames_per_batch") t.max_frames_per_batch = to_long(key, value);
  else if (field == "average_last_n") t.average_last_n = static_cast<int>(to_long(key, value));
  else if (field == "collapse_unk_runs") t.collapse_unk_runs = to_bool(key, value);
  else if (field == "freeze_pretrained") t.freeze_pretrained = to_bool(key, value);
  else if (field == "spec_augment") t.use_spec_augment = to_bool(key, value);
  else if (field == "freq_masks") t.spec_augment.num_freq_masks = static_cast<int>(to_long(key, value));
  else if (field == "freq_mask_width") t.spec_augment.freq_mask_width = static_cast<int>(to_long(key, value));
  else if (field == "time_masks") t.spec_augment.num_time_masks = static_cast<int>(to_long(key, value));
  else if (field == "time_mask_width") t.spec_augment.time_mask_width = static_cast<int>(to_long(key, value));
  else throw ConfigError("unknown config key: " + key);
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  const std::string group = dot == std::string::npos ? key : key.substr(0, dot);
  const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);

  if (key == "seed") {
    cfg.seed = to_u64(key, value);
  } else if (group == "model") {
    if (field == "num_layers") cfg.model.num_layers = static_cast<int>(to_long(key, value));
    else if (field == "d_model") cfg.model.d_model = static_cast<int>(to_long(key, value));
    else if (field == "d_ffn") cfg.model.d_ffn = static_cast<int>(to_long(key, value));
    else if (field == "num_heads") cfg.model.num_heads = static_cast<int>(to_long(key, value));
    else if (field == "conv_channels") cfg.model.conv_channels = static_cast<int>(to_long(key, value));
    else if (field == "feat_dim") cfg.model.feat_dim = static_cast<int>(to_long(key, value));
    else if (field == "dropout") cfg.model.dropout = to_double(key, value);
    else throw ConfigError("unknown config key: " + key);
  } else if (group == "pretrain") {
    apply_train_key(cfg.pretrain, field, key, value, /*allow_lambda=*/false);
  } else if (group == "train") {
    apply_train_key(cfg.cs_train, field, key, value, /*allow_lambda=*/true);
  } else if (group == "synth") {
    if (field == "man_vocab_size") cfg.synth.man_vocab_size = static_cast<int>(to_long(key, value));
    else if (field == "eng_final_pieces") cfg.synth.eng_final_pieces = static_cast<int>(to_long(key, value));
    else if (field == "eng_continuation_pieces") cfg.synth.eng_continuation_pieces = static_cast<int>(to_long(key, value));
    else if (field == "min_tokens") cfg.synth.min_tokens = static_cast<int>(to_long(key, value));
    else if (field == "max_tokens") cfg.synth.max_tokens = static_cast<int>(to_long(key, value));
    else if (field == "min_frames_per_token") cfg.synth.min_frames_per_token = static_cast<int>(to_long(key, value));
    else if (field == "max_frames_per_token") cfg.synth.max_frames_per_token = static_cast<int>(to_long(key, value));
    else if (field == "noise_sigma") cfg.synth.noise_sigma = to_double(key, value);
    else if (field == "cross_band_shadow") cfg.synth.cross_band_shadow = to_double(key, value);
    else if (field == "man_ratio") cfg.synth.man_ratio = to_double(key, value);
    else if (field == "eng_ratio") cfg.synth.eng_ratio = to_double(key, value);
    else if (field == "feat_dim") cfg.synth.feat_dim = static_cast<int>(to_long(key, value));
    else if (field == "pretrain_count") cfg.synth.pretrain_count = static_cast<int>(to_long(key, value));
    else if (field == "train_count") cfg.synth.train_count = static_cast<int>(to_long(key, value));
    else if (field == "test_count") cfg.synth.test_count = static_cast<int>(to_long(key, value));
    else throw ConfigError("unknown config key: " + key);
  } else if (group == "fusion") {
    if (field == "lsm_only_unk") {
      if (value == "average") cfg.lsm_only_unk = FusionConfig::LsmOnlyUnk::kAverage;
      else if (value == "zero") cfg.lsm_only_unk = FusionConfig::LsmOnlyUnk::kZero;
      else throw ConfigError("config key " + key + ": expected average|zero");
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest decimal form that parses back to the exact value.
std::string format_double(double v) {
  char buf[40];
  for (const int precision : {15, 16, 17}) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace

RunConfig profile_defaults(const std::string& name) {
  RunConfig cfg;
  cfg.profile = name;
  if (name == "toy") {
    cfg.model.num_layers = 2;
    cfg.model.d_model = 32;
    cfg.model.d_ffn = 64;
    cfg.model.num_heads = 2;
    cfg.model.conv_channels = 16;
    cfg.model.feat_dim = 16;
    cfg.model.dropout = 0.0;

    for (TrainConfig* t : {&cfg.pretrain, &cfg.cs_train}) {
      t->warmup_steps = 200;
      t->lr_scale = 1.0;
      t->max_frames_per_batch = 2000;
      t->average_last_n = 3;
      t->spec_augment.num_freq_masks = 1;
      t->spec_augment.freq_mask_width = 2;
      t->spec_augment.num_time_masks = 1;
      t->spec_augment.time_mask_width = 4;
    }
    cfg.pretrain.epochs = 8;
    cfg.cs_train.epochs = 6;

    // longer token segments keep remapped all-unk targets feasible after
    // the 4x subsampling
    cfg.synth.min_frames_per_token = 8;
    cfg.synth.max_frames_per_token = 14;
    // a third of the tokens bleed into the other language's bands, giving
    // the combined vocabulary genuinely competing cross-language pairs
    cfg.synth.cross_band_shadow = 0.7;
    cfg.synth.noise_sigma = 0.18;
    // heads decoded without a mixture head never emit unk; an unk
    // hypothesis is always an error against unk-free references
    cfg.lsm_only_unk = FusionConfig::LsmOnlyUnk::kZero;
  } else if (name == "paper") {
    cfg.model.num_layers = 12;
    cfg.model.d_model = 256;
    cfg.model.d_ffn = 2048;
    cfg.model.num_heads = 4;
    cfg.model.conv_channels = 256;
    cfg.model.feat_dim = 80;
    cfg.model.dropout = 0.1;

    for (TrainConfig* t : {&cfg.pretrain, &cfg.cs_train}) {
      t->lr_scale = 1.0;
      t->epochs = 40;
      t->max_frames_per_batch = 10000;
      t->average_last_n = 5;
      t->spec_augment.num_freq_masks = 2;
      t->spec_augment.freq_mask_width = 10;
      t->spec_augment.num_time_masks = 3;
      t->spec_augment.time_mask_width = 50;
    }
    cfg.pretrain.warmup_steps = 250000;
    cfg.cs_train.warmup_steps = 2500;

    cfg.synth.feat_dim = 80;
    cfg.synth.min_frames_per_token = 12;
    cfg.synth.max_frames_per_token = 20;
  } else {
    throw ConfigError("unknown profile '" + name + "' (expected toy|paper)");
  }
  return cfg;
}

std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config file " + path + " line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config file " + path + " line " + std::to_string(line_no) +
                        ": empty key");
    }
    out[key] = value;
  }
  return out;
}

RunConfig resolve_config(const std::string& profile,
                         const std::optional<std::string>& config_file,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg = profile_defaults(profile);
  if (const char* env_seed = std::getenv("LSCA_SEED")) {
    cfg.seed = to_u64("LSCA_SEED", env_seed);
  }
  if (config_file) {
    for (const auto& [key, value] : parse_key_value_file(*config_file)) {
      apply_key(cfg, key, value);
    }
  }
  for (const std::string& pair : overrides) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must look like key=value: '" + pair + "'");
    }
    apply_key(cfg, trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
  }
  // one global seed drives every stage
  cfg.pretrain.seed = cfg.seed;
  cfg.cs_train.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;
  return cfg;
}

std::uint64_t resolve_seed(const RunConfig& cfg, std::optional<std::uint64_t> flag_seed) {
  return flag_seed.value_or(cfg.seed);
}

std::string RunConfig::serialize() const {
  std::map<std::string, std::string> kv;
  const auto put_long = [&kv](const std::string& k, long v) { kv[k] = std::to_string(v); };
  const auto put_real = [&kv](const std::string& k, double v) { kv[k] = format_double(v); };
  const auto put_bool = [&kv](const std::string& k, bool v) { kv[k] = v ? "1" : "0"; };

  kv["profile"] = profile;
  kv["seed"] = std::to_string(seed);
  put_long("model.num_layers", model.num_layers);
  put_long("model.d_model", model.d_model);
  put_long("model.d_ffn", model.d_ffn);
  put_long("model.num_heads", model.num_heads);
  put_long("model.conv_channels", model.conv_channels);
  put_long("model.feat_dim", model.feat_dim);
  put_real("model.dropout", model.dropout);

  const auto put_train = [&](const std::string& prefix, const TrainConfig& t, bool lambda) {
    if (lambda) put_real(prefix + ".lambda", t.lambda);
    put_long(prefix + ".warmup_steps", t.warmup_steps);
    put_real(prefix + ".lr_scale", t.lr_scale);
    put_long(prefix + ".epochs", t.epochs);
    put_long(prefix + ".max_frames_per_batch", t.max_frames_per_batch);
    put_long(prefix + ".average_last_n", t.average_last_n);
    put_bool(prefix + ".collapse_unk_runs", t.collapse_unk_runs);
    put_bool(prefix + ".freeze_pretrained", t.freeze_pretrained);
    put_bool(prefix + ".spec_augment", t.use_spec_augment);
    put_long(prefix + ".freq_masks", t.spec_augment.num_freq_masks);
    put_long(prefix + ".freq_mask_width", t.spec_augment.freq_mask_width);
    put_long(prefix + ".time_masks", t.spec_augment.num_time_masks);
    put_long(prefix + ".time_mask_width", t.spec_augment.time_mask_width);
  };
  put_train("pretrain", pretrain, false);
  put_train("train", cs_train, true);

  put_long("synth.man_vocab_size", synth.man_vocab_size);
  put_long("synth.eng_final_pieces", synth.eng_final_pieces);
  put_long("synth.eng_continuation_pieces", synth.eng_continuation_pieces);
  put_long("synth.min_tokens", synth.min_tokens);
  put_long("synth.max_tokens", synth.max_tokens);
  put_long("synth.min_frames_per_token", synth.min_frames_per_token);
  put_long("synth.max_frames_per_token", synth.max_frames_per_token);
  put_real("synth.noise_sigma", synth.noise_sigma);
  put_real("synth.cross_band_shadow", synth.cross_band_shadow);
  put_real("synth.man_ratio", synth.man_ratio);
  put_real("synth.eng_ratio", synth.eng_ratio);
  put_long("synth.feat_dim", synth.feat_dim);
  put_long("synth.pretrain_count", synth.pretrain_count);
  put_long("synth.train_count", synth.train_count);
  put_long("synth.test_count", synth.test_count);
  kv["fusion.lsm_only_unk"] =
      lsm_only_unk == FusionConfig::LsmOnlyUnk::kAverage ? "average" : "zero";

  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace lsca
