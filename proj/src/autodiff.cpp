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

#include "lsca/autodiff.hpp"

#include <cmath>

#include "lsca/ctc.hpp"
#include "lsca/numeric.hpp"

namespace lsca::autodiff {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& same_tape(const Var& a, const Var& b) {
  require(a.tape != nullptr && a.tape == b.tape, "operands live on different tapes");
  return *a.tape;
}

}  // namespace

const Matrix& Var::value() const {
  require(tape != nullptr && index >= 0, "uninitialized Var");
  return tape->value_at(index);
}

const Matrix& Var::grad() const {
  require(tape != nullptr && index >= 0, "uninitialized Var");
  require(tape->backward_done(), "gradients not available: run backward first");
  return tape->grad_at(index);
}

Var Tape::push(Matrix value, std::vector<int> parents, BackwardFn bw,
               const char* op, bool is_param, std::string name) {
  require(!backward_done_, "tape is frozen after backward");
  for (const int p : parents) {
    require(p >= 0 && p < static_cast<int>(nodes_.size()),
            std::string(op) + ": parent node out of range");
  }
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(parents),
                        std::move(bw), op, is_param, std::move(name)});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value_at(int index) const {
  require(index >= 0 && index < static_cast<int>(nodes_.size()), "node index out of range");
  return nodes_[static_cast<std::size_t>(index)].value;
}

Matrix& Tape::grad_at(int index) {
  require(index >= 0 && index < static_cast<int>(nodes_.size()), "node index out of range");
  Node& n = nodes_[static_cast<std::size_t>(index)];
  if (n.grad.size() == 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  require(loss.tape == this, "loss does not belong to this tape");
  require(!nodes_.empty() && loss.index >= 0 &&
              loss.index < static_cast<int>(nodes_.size()),
          "backward before forward: tape holds no evaluated nodes");
  require(!backward_done_, "backward already run on this tape");
  const Matrix& lv = nodes_[static_cast<std::size_t>(loss.index)].value;
  require(lv.rows() == 1 && lv.cols() == 1,
          "backward requires a scalar loss, got " + shape_str(lv));

  grad_at(loss.index)(0, 0) = 1;
  for (int i = loss.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;  // not on the loss path
    if (n.backward) n.backward(*this, i);
  }
  backward_done_ = true;
}

void Tape::for_each_param(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  require(backward_done_, "gradients not available: run backward first");
  for (const Node& n : nodes_) {
    if (!n.is_param) continue;
    if (n.grad.size() == 0) {
      fn(n.name, Matrix::Zero(n.value.rows(), n.value.cols()));
    } else {
      fn(n.name, n.grad);
    }
  }
}

// --- primitives -------------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "add: shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  const int ai = a.index, bi = b.index;
  return t.push(a.value() + b.value(), {ai, bi},
                [ai, bi](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  tp.grad_at(ai) += g;
                  tp.grad_at(bi) += g;
                },
                "add");
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "mul: shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  const int ai = a.index, bi = b.index;
  return t.push(a.value().cwiseProduct(b.value()), {ai, bi},
                [ai, bi](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  tp.grad_at(ai) += g.cwiseProduct(tp.value_at(bi));
                  tp.grad_at(bi) += g.cwiseProduct(tp.value_at(ai));
                },
                "mul");
}

Var scale(Var a, Real factor) {
  require(a.tape != nullptr, "scale: uninitialized Var");
  const int ai = a.index;
  return a.tape->push(a.value() * factor, {ai},
                      [ai, factor](Tape& tp, int self) {
                        tp.grad_at(ai) += tp.grad_at(self) * factor;
                      },
                      "scale");
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require(a.cols() == b.rows(),
          "matmul: inner dimension mismatch " + shape_str(a.value()) + " * " +
              shape_str(b.value()));
  const int ai = a.index, bi = b.index;
  return t.push(a.value() * b.value(), {ai, bi},
                [ai, bi](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  tp.grad_at(ai) += g * tp.value_at(bi).transpose();
                  tp.grad_at(bi) += tp.value_at(ai).transpose() * g;
                },
                "matmul");
}

Var transpose(Var a) {
  require(a.tape != nullptr, "transpose: uninitialized Var");
  const int ai = a.index;
  return a.tape->push(a.value().transpose(), {ai},
                      [ai](Tape& tp, int self) {
                        tp.grad_at(ai) += tp.grad_at(self).transpose();
                      },
                      "transpose");
}

Var relu(Var a) {
  require(a.tape != nullptr, "relu: uninitialized Var");
  const int ai = a.index;
  return a.tape->push(a.value().cwiseMax(Real(0)), {ai},
                      [ai](Tape& tp, int self) {
                        const Matrix& g = tp.grad_at(self);
                        const Matrix& x = tp.value_at(ai);
                        tp.grad_at(ai).array() +=
                            g.array() * (x.array() > Real(0)).template cast<Real>();
                      },
                      "relu");
}

Var sum(Var a) {
  require(a.tape != nullptr, "sum: uninitialized Var");
  const int ai = a.index;
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->push(std::move(v), {ai},
                      [ai](Tape& tp, int self) {
                        tp.grad_at(ai).array() += tp.grad_at(self)(0, 0);
                      },
                      "sum");
}

Var affine(Var x, Var weight, Var bias) {
  Tape& t = same_tape(x, weight);
  same_tape(weight, bias);
  require(x.cols() == weight.rows(),
          "affine: input cols " + std::to_string(x.cols()) + " != weight rows " +
              std::to_string(weight.rows()));
  require(bias.rows() == 1 && bias.cols() == weight.cols(),
          "affine: bias shape " + shape_str(bias.value()) + " does not match weight cols");
  Matrix v = x.value() * weight.value();
  v.rowwise() += bias.value().row(0);
  const int xi = x.index, wi = weight.index, bi = bias.index;
  return t.push(std::move(v), {xi, wi, bi},
                [xi, wi, bi](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  tp.grad_at(xi) += g * tp.value_at(wi).transpose();
                  tp.grad_at(wi) += tp.value_at(xi).transpose() * g;
                  tp.grad_at(bi) += g.colwise().sum();
                },
                "affine");
}

Var layer_norm(Var x, Var gain, Var bias, Real epsilon) {
  Tape& t = same_tape(x, gain);
  same_tape(gain, bias);
  const Index n = x.cols();
  require(gain.rows() == 1 && gain.cols() == n && bias.rows() == 1 && bias.cols() == n,
          "layer_norm: gain/bias must be 1x" + std::to_string(n));
  require(epsilon > 0, "layer_norm: epsilon must be positive");

  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Vector inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Real mu = xv.row(r).mean();
    const Real var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = Real(1) / std::sqrt(var + epsilon);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix v = xhat.array().rowwise() * gain.value().row(0).array();
  v.rowwise() += bias.value().row(0);

  const int xi = x.index, gi = gain.index, bi = bias.index;
  return t.push(std::move(v), {xi, gi, bi},
                [xi, gi, bi, xhat, inv_std](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  const auto gain_row = tp.value_at(gi).row(0);
                  Matrix& gx = tp.grad_at(xi);
                  tp.grad_at(gi) += (g.array() * xhat.array()).colwise().sum().matrix();
                  tp.grad_at(bi) += g.colwise().sum();
                  const Real n_inv = Real(1) / static_cast<Real>(xhat.cols());
                  for (Index r = 0; r < g.rows(); ++r) {
                    const auto dxhat = (g.row(r).array() * gain_row.array()).eval();
                    const Real m1 = dxhat.mean();
                    const Real m2 = (dxhat * xhat.row(r).array()).sum() * n_inv;
                    gx.row(r).array() +=
                        inv_std(r) * (dxhat - m1 - xhat.row(r).array() * m2);
                  }
                },
                "layer_norm");
}

Var softmax_rows(Var x) {
  require(x.tape != nullptr, "softmax_rows: uninitialized Var");
  Matrix y = lsca::softmax_rows(x.value());
  const int xi = x.index;
  return x.tape->push(std::move(y), {xi},
                      [xi](Tape& tp, int self) {
                        const Matrix& g = tp.grad_at(self);
                        const Matrix& y = tp.value_at(self);
                        Matrix& gx = tp.grad_at(xi);
                        for (Index r = 0; r < g.rows(); ++r) {
                          const Real dot = g.row(r).dot(y.row(r));
                          gx.row(r).array() +=
                              y.row(r).array() * (g.row(r).array() - dot);
                        }
                      },
                      "softmax_rows");
}

Var log_softmax_rows(Var x) {
  require(x.tape != nullptr, "log_softmax_rows: uninitialized Var");
  Matrix y = lsca::log_softmax_rows(x.value());
  const int xi = x.index;
  return x.tape->push(std::move(y), {xi},
                      [xi](Tape& tp, int self) {
                        const Matrix& g = tp.grad_at(self);
                        const Matrix p = tp.value_at(self).array().exp();
                        Matrix& gx = tp.grad_at(xi);
                        for (Index r = 0; r < g.rows(); ++r) {
                          const Real s = g.row(r).sum();
                          gx.row(r).array() += g.row(r).array() - p.row(r).array() * s;
                        }
                      },
                      "log_softmax_rows");
}

Var slice_cols(Var x, Index start, Index count) {
  require(x.tape != nullptr, "slice_cols: uninitialized Var");
  require(start >= 0 && count >= 1 && start + count <= x.cols(),
          "slice_cols: range out of bounds");
  const int xi = x.index;
  return x.tape->push(x.value().middleCols(start, count), {xi},
                      [xi, start, count](Tape& tp, int self) {
                        tp.grad_at(xi).middleCols(start, count) += tp.grad_at(self);
                      },
                      "slice_cols");
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  Index cols = 0;
  const Index rows = parts[0].rows();
  std::vector<int> parents;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
    parents.push_back(p.index);
  }
  Matrix v(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const Var& p : parts) {
    offsets.push_back(at);
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.push(std::move(v), parents,
                [parents, offsets](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  for (std::size_t i = 0; i < parents.size(); ++i) {
                    Matrix& gp = tp.grad_at(parents[i]);
                    gp += g.middleCols(offsets[i], gp.cols());
                  }
                },
                "concat_cols");
}

Var dropout(Var x, Real rate, Rng& rng) {
  require(x.tape != nullptr, "dropout: uninitialized Var");
  require(rate > 0 && rate < 1, "dropout: rate must be in (0,1)");
  const Real keep_scale = Real(1) / (Real(1) - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index r = 0; r < mask.rows(); ++r) {
    for (Index c = 0; c < mask.cols(); ++c) {
      mask(r, c) = (rng.uniform() >= static_cast<double>(rate)) ? keep_scale : Real(0);
    }
  }
  const int xi = x.index;
  return x.tape->push(x.value().cwiseProduct(mask), {xi},
                      [xi, mask](Tape& tp, int self) {
                        tp.grad_at(xi) += tp.grad_at(self).cwiseProduct(mask);
                      },
                      "dropout");
}

// Shared index helper for the convolution loops: returns channel-stacked
// row index or -1 when (t, f) falls in the zero padding.
namespace {
inline Index conv_src_row(Index ch, Index t, Index frames) { return ch * frames + t; }
}  // namespace

Var conv2d_subsample(Var x, Var weight, Var bias, int in_channels, int out_channels) {
  Tape& t = same_tape(x, weight);
  same_tape(weight, bias);
  require(in_channels >= 1 && out_channels >= 1, "conv2d: channel counts must be >= 1");
  require(x.rows() % in_channels == 0,
          "conv2d: input rows not divisible by in_channels");
  const Index frames = x.rows() / in_channels;
  const Index feats = x.cols();
  require(weight.rows() == out_channels && weight.cols() == in_channels * 9,
          "conv2d: weight must be " + std::to_string(out_channels) + "x" +
              std::to_string(in_channels * 9) + ", got " + shape_str(weight.value()));
  require(bias.rows() == 1 && bias.cols() == out_channels, "conv2d: bias must be 1 x out_channels");

  const Index out_t = conv_subsampled_len(frames);
  const Index out_f = conv_subsampled_len(feats);
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  Matrix v(out_channels * out_t, out_f);
  for (Index oc = 0; oc < out_channels; ++oc) {
    for (Index t2 = 0; t2 < out_t; ++t2) {
      for (Index f2 = 0; f2 < out_f; ++f2) {
        Real acc = bias.value()(0, oc);
        for (Index ic = 0; ic < in_channels; ++ic) {
          for (Index kt = 0; kt < 3; ++kt) {
            const Index ti = 2 * t2 + kt - 1;
            if (ti < 0 || ti >= frames) continue;
            for (Index kf = 0; kf < 3; ++kf) {
              const Index fi = 2 * f2 + kf - 1;
              if (fi < 0 || fi >= feats) continue;
              acc += xv(conv_src_row(ic, ti, frames), fi) * wv(oc, ic * 9 + kt * 3 + kf);
            }
          }
        }
        v(conv_src_row(oc, t2, out_t), f2) = acc;
      }
    }
  }

  const int xi = x.index, wi = weight.index, bi = bias.index;
  return t.push(std::move(v), {xi, wi, bi},
                [xi, wi, bi, in_channels, out_channels, frames, feats, out_t,
                 out_f](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  const Matrix& xv = tp.value_at(xi);
                  const Matrix& wv = tp.value_at(wi);
                  Matrix& gx = tp.grad_at(xi);
                  Matrix& gw = tp.grad_at(wi);
                  Matrix& gb = tp.grad_at(bi);
                  for (Index oc = 0; oc < out_channels; ++oc) {
                    for (Index t2 = 0; t2 < out_t; ++t2) {
                      for (Index f2 = 0; f2 < out_f; ++f2) {
                        const Real go = g(conv_src_row(oc, t2, out_t), f2);
                        if (go == Real(0)) continue;
                        gb(0, oc) += go;
                        for (Index ic = 0; ic < in_channels; ++ic) {
                          for (Index kt = 0; kt < 3; ++kt) {
                            const Index ti = 2 * t2 + kt - 1;
                            if (ti < 0 || ti >= frames) continue;
                            for (Index kf = 0; kf < 3; ++kf) {
                              const Index fi = 2 * f2 + kf - 1;
                              if (fi < 0 || fi >= feats) continue;
                              const Index xr = conv_src_row(ic, ti, frames);
                              gx(xr, fi) += go * wv(oc, ic * 9 + kt * 3 + kf);
                              gw(oc, ic * 9 + kt * 3 + kf) += go * xv(xr, fi);
                            }
                          }
                        }
                      }
                    }
                  }
                },
                "conv2d_subsample");
}

Var merge_channels(Var x, int channels) {
  require(x.tape != nullptr, "merge_channels: uninitialized Var");
  require(channels >= 1 && x.rows() % channels == 0,
          "merge_channels: rows not divisible by channel count");
  const Index frames = x.rows() / channels;
  const Index feats = x.cols();
  Matrix v(frames, channels * feats);
  for (Index c = 0; c < channels; ++c) {
    for (Index t = 0; t < frames; ++t) {
      v.row(t).segment(c * feats, feats) = x.value().row(c * frames + t);
    }
  }
  const int xi = x.index;
  return x.tape->push(std::move(v), {xi},
                      [xi, channels, frames, feats](Tape& tp, int self) {
                        const Matrix& g = tp.grad_at(self);
                        Matrix& gx = tp.grad_at(xi);
                        for (Index c = 0; c < channels; ++c) {
                          for (Index t = 0; t < frames; ++t) {
                            gx.row(c * frames + t) += g.row(t).segment(c * feats, feats);
                          }
                        }
                      },
                      "merge_channels");
}

Var ctc_loss_node(Var log_probs, std::span<const int> targets) {
  require(log_probs.tape != nullptr, "ctc_loss_node: uninitialized Var");
  CtcResult res = lsca::ctc_loss(log_probs.value(), targets);
  require(res.feasible, "ctc_loss_node: target infeasible for grid length " +
                            std::to_string(log_probs.rows()));
  Matrix v(1, 1);
  v(0, 0) = res.loss;
  const int pi = log_probs.index;
  // Local gradient w.r.t. free log-probabilities is -gamma; composing with
  // the upstream log-softmax yields the usual softmax(logits) - gamma.
  Matrix neg_gamma = -res.gamma;
  return log_probs.tape->push(std::move(v), {pi},
                              [pi, neg_gamma](Tape& tp, int self) {
                                tp.grad_at(pi) += tp.grad_at(self)(0, 0) * neg_gamma;
                              },
                              "ctc_loss");
}

// --- composites -------------------------------------------------------------

Var multi_head_self_attention(Var x, Var wq, Var bq, Var wk, Var bk,
                              Var wv, Var bv, Var wo, Var bo, int num_heads) {
  require(num_heads >= 1, "attention: num_heads must be >= 1");
  const Index d = wq.cols();
  require(d % num_heads == 0, "attention: model dim not divisible by head count");
  const Index dh = d / num_heads;
  const Real inv_sqrt_dh = Real(1) / std::sqrt(static_cast<Real>(dh));

  Var q = affine(x, wq, bq);
  Var k = affine(x, wk, bk);
  Var v = affine(x, wv, bv);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
    heads.push_back(matmul(att, vh));
  }
  return affine(concat_cols(heads), wo, bo);
}

Var feed_forward(Var x, Var w1, Var b1, Var w2, Var b2) {
  return affine(relu(affine(x, w1, b1)), w2, b2);
}

Matrix sinusoidal_positional_encoding(Index frames, Index dim) {
  Matrix pe(frames, dim);
  for (Index t = 0; t < frames; ++t) {
    for (Index i = 0; i < dim; i += 2) {
      const Real angle = static_cast<Real>(t) /
                         std::pow(Real(10000), static_cast<Real>(i) / static_cast<Real>(dim));
      pe(t, i) = std::sin(angle);
      if (i + 1 < dim) pe(t, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Real finite_diff_check(const std::function<Real(const Matrix&)>& loss_at,
                       const Matrix& at, const Matrix& analytic_grad,
                       Real epsilon) {
  if (at.size() == 0) throw Error("finite_diff_check: zero-dimension parameter");
  if (analytic_grad.rows() != at.rows() || analytic_grad.cols() != at.cols()) {
    throw Error("finite_diff_check: gradient shape mismatch");
  }
  if (!(epsilon > 0)) throw Error("finite_diff_check: epsilon must be positive");

  Real max_rel = 0;
  Matrix probe = at;
  for (Index r = 0; r < at.rows(); ++r) {
    for (Index c = 0; c < at.cols(); ++c) {
      const Real orig = probe(r, c);
      probe(r, c) = orig + epsilon;
      const Real up = loss_at(probe);
      probe(r, c) = orig - epsilon;
      const Real down = loss_at(probe);
      probe(r, c) = orig;
      const Real numeric = (up - down) / (2 * epsilon);
      const Real analytic = analytic_grad(r, c);
      const Real denom = std::max({std::abs(numeric), std::abs(analytic), Real(1e-8)});
      max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
    }
  }
  return max_rel;
}

}  // namespace lsca::autodiff
