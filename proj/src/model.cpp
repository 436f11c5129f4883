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

#include "lsca/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lsca/numeric.hpp"

namespace lsca {

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'S', 'C', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

Matrix glorot_uniform(Rng& rng, Index rows, Index cols, double fan_in, double fan_out) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = static_cast<Real>(rng.uniform(-bound, bound));
  }
  return m;
}

// Tensor emission order is fixed so that a seed fully determines the draw
// sequence.
void emit_encoder(std::map<std::string, Matrix>& out, Rng& rng, const ModelConfig& cfg,
                  const std::string& prefix) {
  const int c = cfg.conv_channels;
  const int d = cfg.d_model;
  const Index sub_feats = subsampled_frames(cfg.feat_dim);

  out[prefix + ".conv1.w"] = glorot_uniform(rng, c, 9, 9.0, 9.0 * c);
  out[prefix + ".conv1.b"] = Matrix::Zero(1, c);
  out[prefix + ".conv2.w"] = glorot_uniform(rng, c, c * 9, 9.0 * c, 9.0 * c);
  out[prefix + ".conv2.b"] = Matrix::Zero(1, c);
  out[prefix + ".proj.w"] =
      glorot_uniform(rng, c * sub_feats, d, static_cast<double>(c) * sub_feats, d);
  out[prefix + ".proj.b"] = Matrix::Zero(1, d);

  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string bp = prefix + ".block" + std::to_string(i);
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) {
      out[bp + w] = glorot_uniform(rng, d, d, d, d);
    }
    for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"}) {
      out[bp + b] = Matrix::Zero(1, d);
    }
    out[bp + ".ln1.gain"] = Matrix::Ones(1, d);
    out[bp + ".ln1.bias"] = Matrix::Zero(1, d);
    out[bp + ".ffn.w1"] = glorot_uniform(rng, d, cfg.d_ffn, d, cfg.d_ffn);
    out[bp + ".ffn.b1"] = Matrix::Zero(1, cfg.d_ffn);
    out[bp + ".ffn.w2"] = glorot_uniform(rng, cfg.d_ffn, d, cfg.d_ffn, d);
    out[bp + ".ffn.b2"] = Matrix::Zero(1, d);
    out[bp + ".ln2.gain"] = Matrix::Ones(1, d);
    out[bp + ".ln2.bias"] = Matrix::Zero(1, d);
  }
}

void emit_head(std::map<std::string, Matrix>& out, Rng& rng, const ModelConfig& cfg,
               const std::string& prefix, int vocab_size) {
  out[prefix + ".w"] = glorot_uniform(rng, cfg.d_model, vocab_size, cfg.d_model, vocab_size);
  out[prefix + ".b"] = Matrix::Zero(1, vocab_size);
}

std::string config_to_text(const ModelParams& p) {
  std::ostringstream s;
  s << "kind=" << (p.kind == ModelKind::kMono ? "mono" : "dual") << "\n";
  if (p.kind == ModelKind::kMono) s << "mono_lang=" << to_string(p.mono_lang) << "\n";
  char dropout_buf[40];
  std::snprintf(dropout_buf, sizeof(dropout_buf), "%.17g", p.cfg.dropout);
  s << "num_layers=" << p.cfg.num_layers << "\n"
    << "d_model=" << p.cfg.d_model << "\n"
    << "d_ffn=" << p.cfg.d_ffn << "\n"
    << "num_heads=" << p.cfg.num_heads << "\n"
    << "conv_channels=" << p.cfg.conv_channels << "\n"
    << "feat_dim=" << p.cfg.feat_dim << "\n"
    << "dropout=" << dropout_buf << "\n"
    << "with_mixture_head=" << (p.cfg.with_mixture_head ? 1 : 0) << "\n"
    << "man_vocab_size=" << p.cfg.man_vocab_size << "\n"
    << "eng_vocab_size=" << p.cfg.eng_vocab_size << "\n";
  return s.str();
}

void config_from_text(const std::string& text, ModelParams& p) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("malformed checkpoint config line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "kind") {
      p.kind = (val == "mono") ? ModelKind::kMono : ModelKind::kDual;
    } else if (key == "mono_lang") {
      p.mono_lang = (val == "man") ? Lang::kMandarin : Lang::kEnglish;
    } else if (key == "num_layers") p.cfg.num_layers = std::stoi(val);
    else if (key == "d_model") p.cfg.d_model = std::stoi(val);
    else if (key == "d_ffn") p.cfg.d_ffn = std::stoi(val);
    else if (key == "num_heads") p.cfg.num_heads = std::stoi(val);
    else if (key == "conv_channels") p.cfg.conv_channels = std::stoi(val);
    else if (key == "feat_dim") p.cfg.feat_dim = std::stoi(val);
    else if (key == "dropout") p.cfg.dropout = std::stod(val);
    else if (key == "with_mixture_head") p.cfg.with_mixture_head = (val == "1");
    else if (key == "man_vocab_size") p.cfg.man_vocab_size = std::stoi(val);
    else if (key == "eng_vocab_size") p.cfg.eng_vocab_size = std::stoi(val);
    else throw Error("unknown checkpoint config key: " + key);
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw Error("checkpoint truncated at offset " + std::to_string(pos_) + ": " + path_);
    }
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 1 || d_model < 1 || d_ffn < 1 || num_heads < 1 ||
      conv_channels < 1 || feat_dim < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model must be divisible by num_heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (man_vocab_size < 3 || eng_vocab_size < 3) {
    throw ConfigError("head vocabularies need blank, unk and at least one token");
  }
}

bool ModelConfig::same_shape(const ModelConfig& other) const {
  return num_layers == other.num_layers && d_model == other.d_model &&
         d_ffn == other.d_ffn && num_heads == other.num_heads &&
         conv_channels == other.conv_channels && feat_dim == other.feat_dim &&
         man_vocab_size == other.man_vocab_size && eng_vocab_size == other.eng_vocab_size;
}

const Matrix& ModelParams::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("missing tensor: " + name);
  return it->second;
}

ModelParams init_mono_params(const ModelConfig& cfg, Lang lang, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.kind = ModelKind::kMono;
  p.mono_lang = lang;
  p.cfg = cfg;
  p.cfg.with_mixture_head = false;
  Rng rng(seed);
  emit_encoder(p.tensors, rng, cfg, "enc");
  emit_head(p.tensors, rng, cfg, "head", cfg.head_vocab_size(lang));
  return p;
}

ModelParams init_dual_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.kind = ModelKind::kDual;
  p.cfg = cfg;
  Rng rng(seed);
  emit_encoder(p.tensors, rng, cfg, "man.enc");
  emit_head(p.tensors, rng, cfg, "man.head", cfg.man_vocab_size);
  emit_encoder(p.tensors, rng, cfg, "eng.enc");
  emit_head(p.tensors, rng, cfg, "eng.head", cfg.eng_vocab_size);
  p.tensors["fusion.ln.gain"] = Matrix::Ones(1, cfg.d_model);
  p.tensors["fusion.ln.bias"] = Matrix::Zero(1, cfg.d_model);
  p.tensors["fusion.affine.w"] =
      glorot_uniform(rng, cfg.d_model, cfg.d_model, cfg.d_model, cfg.d_model);
  p.tensors["fusion.affine.b"] = Matrix::Zero(1, cfg.d_model);
  if (cfg.with_mixture_head) {
    emit_head(p.tensors, rng, cfg, "mix_head", cfg.mixture_vocab_size());
  }
  return p;
}

void load_from_pretrained(ModelParams& dual, const ModelParams& man_mono,
                          const ModelParams& eng_mono) {
  if (dual.kind != ModelKind::kDual) throw Error("load_from_pretrained: target is not dual");
  if (man_mono.kind != ModelKind::kMono || man_mono.mono_lang != Lang::kMandarin) {
    throw Error("load_from_pretrained: first checkpoint is not a mandarin model");
  }
  if (eng_mono.kind != ModelKind::kMono || eng_mono.mono_lang != Lang::kEnglish) {
    throw Error("load_from_pretrained: second checkpoint is not an english model");
  }
  const auto copy_branch = [&dual](const ModelParams& src, const std::string& prefix) {
    for (const auto& [name, value] : src.tensors) {
      const std::string target_name = prefix + "." + name;
      const auto it = dual.tensors.find(target_name);
      if (it == dual.tensors.end()) {
        throw Error("load_from_pretrained: unexpected tensor " + target_name);
      }
      if (it->second.rows() != value.rows() || it->second.cols() != value.cols()) {
        throw Error("load_from_pretrained: shape mismatch for " + target_name + ": " +
                    std::to_string(value.rows()) + "x" + std::to_string(value.cols()) +
                    " vs " + std::to_string(it->second.rows()) + "x" +
                    std::to_string(it->second.cols()));
      }
      it->second = value;
    }
  };
  copy_branch(man_mono, "man");
  copy_branch(eng_mono, "eng");
}

ModelParams extract_mono(const ModelParams& dual, Lang lang) {
  if (dual.kind != ModelKind::kDual) throw Error("extract_mono: source is not dual");
  ModelParams p;
  p.kind = ModelKind::kMono;
  p.mono_lang = lang;
  p.cfg = dual.cfg;
  p.cfg.with_mixture_head = false;
  const std::string prefix = std::string(to_string(lang)) + ".";
  for (const auto& [name, value] : dual.tensors) {
    if (name.rfind(prefix, 0) == 0) p.tensors[name.substr(prefix.size())] = value;
  }
  if (p.tensors.empty()) throw Error("extract_mono: no tensors under prefix " + prefix);
  return p;
}

ModelParams average_checkpoints(const std::vector<ModelParams>& ckpts) {
  if (ckpts.empty()) throw Error("average_checkpoints: empty checkpoint list");
  ModelParams out = ckpts.front();
  for (std::size_t i = 1; i < ckpts.size(); ++i) {
    const ModelParams& c = ckpts[i];
    if (c.kind != out.kind || !c.cfg.same_shape(out.cfg) ||
        c.tensors.size() != out.tensors.size()) {
      throw Error("average_checkpoints: checkpoint " + std::to_string(i) +
                  " is not shape-compatible");
    }
    for (auto& [name, value] : out.tensors) {
      const auto it = c.tensors.find(name);
      if (it == c.tensors.end() || it->second.rows() != value.rows() ||
          it->second.cols() != value.cols()) {
        throw Error("average_checkpoints: tensor mismatch for " + name);
      }
      value += it->second;
    }
  }
  const Real inv = Real(1) / static_cast<Real>(ckpts.size());
  for (auto& [name, value] : out.tensors) value *= inv;
  return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::string buf;
  buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(buf, kCheckpointVersion);
  const std::string cfg_text = config_to_text(params);
  put_u32(buf, static_cast<std::uint32_t>(cfg_text.size()));
  buf += cfg_text;
  put_u32(buf, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, value] : params.tensors) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, 2);
    put_u32(buf, static_cast<std::uint32_t>(value.rows()));
    put_u32(buf, static_cast<std::uint32_t>(value.cols()));
    for (Index r = 0; r < value.rows(); ++r) {
      for (Index c = 0; c < value.cols(); ++c) put_f64(buf, static_cast<double>(value(r, c)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(std::move(data), path);

  if (r.bytes(sizeof(kCheckpointMagic)) !=
      std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw Error("bad checkpoint magic: " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  ModelParams p;
  config_from_text(r.bytes(r.u32()), p);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw Error("unsupported tensor rank in checkpoint: " + name);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Matrix m(rows, cols);
    for (std::uint32_t rr = 0; rr < rows; ++rr) {
      for (std::uint32_t cc = 0; cc < cols; ++cc) m(rr, cc) = static_cast<Real>(r.f64());
    }
    p.tensors.emplace(name, std::move(m));
  }
  if (!r.exhausted()) {
    throw Error("trailing bytes at offset " + std::to_string(r.offset()) + ": " + path);
  }
  return p;
}

namespace model {

autodiff::Var TapeBinding::operator()(const std::string& name) {
  const auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const autodiff::Var v = tape_.param(params_.tensor(name), name);
  bound_.emplace(name, v);
  return v;
}

namespace {

autodiff::Var maybe_dropout(autodiff::Var x, const ModelConfig& cfg,
                            const ForwardOptions& opt) {
  if (!opt.train || cfg.dropout <= 0.0) return x;
  if (opt.dropout_rng == nullptr) {
    throw Error("encode: train mode with dropout requires a dropout rng");
  }
  return autodiff::dropout(x, static_cast<Real>(cfg.dropout), *opt.dropout_rng);
}

}  // namespace

autodiff::Var encode(TapeBinding& tb, const ModelConfig& cfg, const std::string& prefix,
                     const Matrix& features, const ForwardOptions& opt) {
  if (features.rows() < 4) {
    throw Error("encode: need at least 4 frames, got " + std::to_string(features.rows()));
  }
  if (features.cols() != cfg.feat_dim) {
    throw Error("encode: expected " + std::to_string(cfg.feat_dim) + " features, got " +
                std::to_string(features.cols()));
  }

  namespace ad = lsca::autodiff;
  autodiff::Tape& t = tb.tape();
  const int c = cfg.conv_channels;

  ad::Var x = t.input(features);
  ad::Var h = ad::relu(ad::conv2d_subsample(x, tb(prefix + ".conv1.w"),
                                            tb(prefix + ".conv1.b"), 1, c));
  h = ad::relu(ad::conv2d_subsample(h, tb(prefix + ".conv2.w"), tb(prefix + ".conv2.b"), c, c));
  h = ad::merge_channels(h, c);
  h = ad::affine(h, tb(prefix + ".proj.w"), tb(prefix + ".proj.b"));
  h = ad::scale(h, std::sqrt(static_cast<Real>(cfg.d_model)));
  h = ad::add(h, t.constant(ad::sinusoidal_positional_encoding(h.rows(), cfg.d_model)));
  h = maybe_dropout(h, cfg, opt);

  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string bp = prefix + ".block" + std::to_string(i);
    ad::Var att = ad::multi_head_self_attention(
        h, tb(bp + ".attn.wq"), tb(bp + ".attn.bq"), tb(bp + ".attn.wk"),
        tb(bp + ".attn.bk"), tb(bp + ".attn.wv"), tb(bp + ".attn.bv"),
        tb(bp + ".attn.wo"), tb(bp + ".attn.bo"), cfg.num_heads);
    h = ad::layer_norm(ad::add(h, maybe_dropout(att, cfg, opt)), tb(bp + ".ln1.gain"),
                       tb(bp + ".ln1.bias"));
    ad::Var ff = ad::feed_forward(h, tb(bp + ".ffn.w1"), tb(bp + ".ffn.b1"),
                                  tb(bp + ".ffn.w2"), tb(bp + ".ffn.b2"));
    h = ad::layer_norm(ad::add(h, maybe_dropout(ff, cfg, opt)), tb(bp + ".ln2.gain"),
                       tb(bp + ".ln2.bias"));
  }
  return h;
}

autodiff::Var fuse_hidden(TapeBinding& tb, autodiff::Var h_man, autodiff::Var h_eng) {
  if (h_man.rows() != h_eng.rows() || h_man.cols() != h_eng.cols()) {
    throw Error("fuse_hidden: encoder output shapes differ (" +
                std::to_string(h_man.rows()) + "x" + std::to_string(h_man.cols()) + " vs " +
                std::to_string(h_eng.rows()) + "x" + std::to_string(h_eng.cols()) + ")");
  }
  namespace ad = lsca::autodiff;
  ad::Var normed = ad::layer_norm(ad::add(h_man, h_eng), tb("fusion.ln.gain"),
                                  tb("fusion.ln.bias"));
  return ad::affine(normed, tb("fusion.affine.w"), tb("fusion.affine.b"));
}

autodiff::Var head_logits(TapeBinding& tb, const std::string& head_prefix, autodiff::Var h) {
  return autodiff::affine(h, tb(head_prefix + ".w"), tb(head_prefix + ".b"));
}

model::DualPosteriors dual_posteriors(const ModelParams& dual, const Matrix& features) {
  if (dual.kind != ModelKind::kDual) throw Error("dual_posteriors: model is not dual");
  autodiff::Tape tape;
  TapeBinding tb(tape, dual);
  const ForwardOptions opt;  // eval mode
  const autodiff::Var h_man = encode(tb, dual.cfg, "man.enc", features, opt);
  const autodiff::Var h_eng = encode(tb, dual.cfg, "eng.enc", features, opt);
  DualPosteriors out;
  out.man = lsca::softmax_rows(head_logits(tb, "man.head", h_man).value());
  out.eng = lsca::softmax_rows(head_logits(tb, "eng.head", h_eng).value());
  if (dual.cfg.with_mixture_head) {
    const autodiff::Var mix = fuse_hidden(tb, h_man, h_eng);
    out.mix = lsca::softmax_rows(head_logits(tb, "mix_head", mix).value());
  }
  return out;
}

Matrix mono_posteriors(const ModelParams& mono, const Matrix& features) {
  if (mono.kind != ModelKind::kMono) throw Error("mono_posteriors: model is not mono");
  autodiff::Tape tape;
  TapeBinding tb(tape, mono);
  const ForwardOptions opt;
  const autodiff::Var h = encode(tb, mono.cfg, "enc", features, opt);
  return lsca::softmax_rows(head_logits(tb, "head", h).value());
}

}  // namespace model
}  // namespace lsca
