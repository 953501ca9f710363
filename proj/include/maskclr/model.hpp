// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer encoder over visible patch tokens, the projection MLP
// head used during contrastive pre-training, and the linear classification
// head used downstream.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/autodiff.hpp"
#include "maskclr/rng.hpp"
#include "maskclr/tensor.hpp"

namespace maskclr {

struct EncoderConfig {
  int depth = 4;
  int dim = 96;
  int heads = 4;
  int mlp_ratio = 4;
  int patch_t = 16;
  int patch_f = 16;

  int patch_dim() const { return patch_t * patch_f; }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("encoder: depth must be >= 1");
    if (dim % heads != 0) throw std::invalid_argument("encoder: dim must be divisible by heads");
    if (dim % 4 != 0) throw std::invalid_argument("encoder: dim must be divisible by 4");
  }
};

struct ProjectionConfig {
  int hidden = 512;
  int out = 128;

  void validate() const {
    if (hidden < 1 || out < 1) throw std::invalid_argument("projection: dims must be >= 1");
  }
};

// Ordered collection of named parameters and buffers. Order is creation
// order and defines the checkpoint layout. `decay` marks weight-decay
// eligibility (matrices yes, biases and norm scales no); `trainable` is
// false for running-statistic buffers.
template <typename T>
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    TensorPtr<T> tensor;
    bool decay = false;
    bool trainable = true;
  };

  TensorPtr<T> add(const std::string& name, Shape shape, bool decay, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    auto t = make_tensor<T>(std::move(shape), trainable);
    t->name = name;
    index_[name] = entries_.size();
    entries_.push_back({name, t, decay, trainable});
    return t;
  }

  TensorPtr<T> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Entry>& entries() const { return entries_; }

  std::int64_t parameter_count(bool trainable_only = true) const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
      if (!trainable_only || e.trainable) n += e.tensor->numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor->zero_grad();
  }

  // Flat byte image of every tensor, in registry order. Used by tests that
  // assert parameters were not touched.
  std::vector<unsigned char> snapshot_bytes() const {
    std::vector<unsigned char> out;
    for (const auto& e : entries_) {
      const auto* p = reinterpret_cast<const unsigned char*>(e.tensor->value.data());
      out.insert(out.end(), p, p + e.tensor->value.size() * sizeof(T));
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace init {

template <typename T>
void trunc_normal(const TensorPtr<T>& t, double sigma, Rng& rng) {
  for (auto& v : t->value) v = T(rng.trunc_gaussian(sigma));
}

template <typename T>
void constant(const TensorPtr<T>& t, T v) {
  std::fill(t->value.begin(), t->value.end(), v);
}

}  // namespace init

// --- encoder -----------------------------------------------------------------

template <typename T>
struct EncoderBlockParams {
  TensorPtr<T> ln1_g, ln1_b;
  TensorPtr<T> wq, bq, wk, bk, wv, bv, wo, bo;
  TensorPtr<T> ln2_g, ln2_b;
  TensorPtr<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderParams {
  EncoderConfig cfg;
  TensorPtr<T> embed_w, embed_b;
  std::vector<EncoderBlockParams<T>> blocks;
  TensorPtr<T> lnf_g, lnf_b;

  static EncoderParams create(const EncoderConfig& cfg, ParamRegistry<T>& reg, Rng& rng,
                              const std::string& prefix = "enc") {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    const int d = cfg.dim, hdim = cfg.dim * cfg.mlp_ratio;
    auto w = [&](const std::string& n, Shape s) {
      auto t = reg.add(prefix + "." + n, std::move(s), /*decay=*/true);
      init::trunc_normal(t, 0.02, rng);
      return t;
    };
    auto b = [&](const std::string& n, std::int64_t len, T v = T(0)) {
      auto t = reg.add(prefix + "." + n, {len}, /*decay=*/false);
      init::constant(t, v);
      return t;
    };
    p.embed_w = w("embed.w", {cfg.patch_dim(), d});
    p.embed_b = b("embed.b", d);
    for (int i = 0; i < cfg.depth; ++i) {
      const std::string bp = "block" + std::to_string(i) + ".";
      EncoderBlockParams<T> blk;
      blk.ln1_g = b(bp + "ln1.g", d, T(1));
      blk.ln1_b = b(bp + "ln1.b", d);
      blk.wq = w(bp + "attn.wq", {d, d});
      blk.bq = b(bp + "attn.bq", d);
      blk.wk = w(bp + "attn.wk", {d, d});
      blk.bk = b(bp + "attn.bk", d);
      blk.wv = w(bp + "attn.wv", {d, d});
      blk.bv = b(bp + "attn.bv", d);
      blk.wo = w(bp + "attn.wo", {d, d});
      blk.bo = b(bp + "attn.bo", d);
      blk.ln2_g = b(bp + "ln2.g", d, T(1));
      blk.ln2_b = b(bp + "ln2.b", d);
      blk.w1 = w(bp + "mlp.w1", {d, hdim});
      blk.b1 = b(bp + "mlp.b1", hdim);
      blk.w2 = w(bp + "mlp.w2", {hdim, d});
      blk.b2 = b(bp + "mlp.b2", d);
      p.blocks.push_back(std::move(blk));
    }
    p.lnf_g = b("lnf.g", d, T(1));
    p.lnf_b = b("lnf.b", d);
    return p;
  }
};

// Per-layer token representations: entry 0 is the embedded input, entries
// 1..depth-1 the block outputs, and the last entry carries the final layer
// norm. depth+1 entries in total, each (B, V, dim).
template <typename T>
struct LayerStack {
  std::vector<TensorPtr<T>> layers;

  std::int64_t depth_plus_one() const { return std::int64_t(layers.size()); }
  const TensorPtr<T>& last() const { return layers.back(); }
};

namespace detail {

// Applies a (F_in, F_out) weight + bias to the last axis of a (B, V, F_in)
// tensor by flattening the leading axes.
template <typename T>
TensorPtr<T> linear_tokens(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                           const TensorPtr<T>& b) {
  const std::int64_t B = x->dim(0), V = x->dim(1), fin = x->dim(2), fout = w->dim(1);
  auto flat = tape.reshape(x, {B * V, fin});
  auto y = tape.add_bias(tape.matmul(flat, w), b);
  return tape.reshape(y, {B, V, fout});
}

}  // namespace detail

// Encode a batch of token sequences. tokens: (B, V, patch_dim) flattened
// patches; pos: (B, V, dim) positional embeddings added after the linear
// patch projection. All views in the batch share the same visible count V.
template <typename T>
LayerStack<T> encode(Tape<T>& tape, const TensorPtr<T>& tokens, const TensorPtr<T>& pos,
                     const EncoderParams<T>& p) {
  if (tokens->rank() != 3 || tokens->dim(2) != p.cfg.patch_dim())
    throw ShapeError("encode: tokens " + shape_str(tokens->shape) + " vs patch_dim " +
                     std::to_string(p.cfg.patch_dim()));
  if (tokens->dim(1) < 1) throw std::invalid_argument("encode: need at least one token");
  const std::int64_t B = tokens->dim(0), V = tokens->dim(1);
  const int d = p.cfg.dim, H = p.cfg.heads;
  if (pos->shape != Shape{B, V, d})
    throw ShapeError("encode: pos " + shape_str(pos->shape) + " vs " + shape_str(Shape{B, V, d}));

  LayerStack<T> stack;
  auto h = tape.add(detail::linear_tokens(tape, tokens, p.embed_w, p.embed_b), pos);
  stack.layers.push_back(h);

  const T attn_scale = T(1.0 / std::sqrt(double(d / H)));
  for (int i = 0; i < p.cfg.depth; ++i) {
    const auto& blk = p.blocks[std::size_t(i)];
    // attention sublayer
    auto a = tape.layer_norm(h, blk.ln1_g, blk.ln1_b);
    auto q = tape.split_heads(detail::linear_tokens(tape, a, blk.wq, blk.bq), H);
    auto k = tape.split_heads(detail::linear_tokens(tape, a, blk.wk, blk.bk), H);
    auto v = tape.split_heads(detail::linear_tokens(tape, a, blk.wv, blk.bv), H);
    auto scores = tape.scale(tape.bmm(q, k, /*transB=*/true), attn_scale);
    auto attn = tape.softmax(scores, -1);
    auto ctx = tape.merge_heads(tape.bmm(attn, v), H);
    h = tape.add(h, detail::linear_tokens(tape, ctx, blk.wo, blk.bo));
    // mlp sublayer
    auto m = tape.layer_norm(h, blk.ln2_g, blk.ln2_b);
    m = detail::linear_tokens(tape, tape.gelu(detail::linear_tokens(tape, m, blk.w1, blk.b1)),
                              blk.w2, blk.b2);
    h = tape.add(h, m);
    if (i + 1 < p.cfg.depth) stack.layers.push_back(h);
  }
  stack.layers.push_back(tape.layer_norm(h, p.lnf_g, p.lnf_b));
  return stack;
}

// Mean over the token axis of the selected layer (-1 = last).
template <typename T>
TensorPtr<T> pool(Tape<T>& tape, const LayerStack<T>& stack, int layer = -1) {
  const int n = int(stack.layers.size());
  if (layer < 0) layer += n;
  if (layer < 0 || layer >= n)
    throw std::out_of_range("pool: layer " + std::to_string(layer) + " of " + std::to_string(n));
  return tape.mean_axis(stack.layers[std::size_t(layer)], 1);
}

// --- projection head -----------------------------------------------------------

template <typename T>
struct ProjectionParams {
  ProjectionConfig cfg;
  TensorPtr<T> w1, b1, bn1_g, bn1_b;
  TensorPtr<T> w2, b2, bn2_g;  // final batch norm is bias-free
  std::shared_ptr<BatchNormState<T>> bn1_state, bn2_state;
  TensorPtr<T> bn1_mean, bn1_var, bn2_mean, bn2_var;  // registry views of the states

  static ProjectionParams create(int in_dim, const ProjectionConfig& cfg, ParamRegistry<T>& reg,
                                 Rng& rng, const std::string& prefix = "proj") {
    cfg.validate();
    ProjectionParams p;
    p.cfg = cfg;
    p.w1 = reg.add(prefix + ".fc1.w", {in_dim, cfg.hidden}, true);
    init::trunc_normal(p.w1, 0.02, rng);
    p.b1 = reg.add(prefix + ".fc1.b", {cfg.hidden}, false);
    p.bn1_g = reg.add(prefix + ".bn1.g", {cfg.hidden}, false);
    init::constant(p.bn1_g, T(1));
    p.bn1_b = reg.add(prefix + ".bn1.b", {cfg.hidden}, false);
    p.w2 = reg.add(prefix + ".fc2.w", {cfg.hidden, cfg.out}, true);
    init::trunc_normal(p.w2, 0.02, rng);
    p.b2 = reg.add(prefix + ".fc2.b", {cfg.out}, false);
    p.bn2_g = reg.add(prefix + ".bn2.g", {cfg.out}, false);
    init::constant(p.bn2_g, T(1));

    p.bn1_mean = reg.add(prefix + ".bn1.running_mean", {cfg.hidden}, false, /*trainable=*/false);
    p.bn1_var = reg.add(prefix + ".bn1.running_var", {cfg.hidden}, false, /*trainable=*/false);
    init::constant(p.bn1_var, T(1));
    p.bn2_mean = reg.add(prefix + ".bn2.running_mean", {cfg.out}, false, /*trainable=*/false);
    p.bn2_var = reg.add(prefix + ".bn2.running_var", {cfg.out}, false, /*trainable=*/false);
    init::constant(p.bn2_var, T(1));
    return p;
  }
};

// linear -> batch norm -> relu -> linear -> bias-free batch norm, then rows
// l2-normalized onto the unit sphere. Train mode requires batch >= 2.
template <typename T>
TensorPtr<T> project(Tape<T>& tape, const TensorPtr<T>& q, ProjectionParams<T>& p, bool train) {
  // Views over the registry buffers so running stats land in checkpoints.
  BatchNormState<T> s1, s2;
  s1.running_mean = p.bn1_mean->value;
  s1.running_var = p.bn1_var->value;
  s2.running_mean = p.bn2_mean->value;
  s2.running_var = p.bn2_var->value;

  auto h = tape.add_bias(tape.matmul(q, p.w1), p.b1);
  h = tape.batch_norm(h, p.bn1_g, p.bn1_b, s1, train);
  h = tape.relu(h);
  h = tape.add_bias(tape.matmul(h, p.w2), p.b2);
  h = tape.batch_norm(h, p.bn2_g, nullptr, s2, train);

  if (train) {
    p.bn1_mean->value = s1.running_mean;
    p.bn1_var->value = s1.running_var;
    p.bn2_mean->value = s2.running_mean;
    p.bn2_var->value = s2.running_var;
  }
  return tape.l2_normalize(h);
}

// --- classifier ----------------------------------------------------------------

template <typename T>
struct ClassifierParams {
  TensorPtr<T> w, b;

  static ClassifierParams create(int in_dim, int n_classes, ParamRegistry<T>& reg, Rng& rng,
                                 const std::string& prefix = "head") {
    ClassifierParams p;
    p.w = reg.add(prefix + ".w", {in_dim, n_classes}, true);
    init::trunc_normal(p.w, 0.02, rng);
    p.b = reg.add(prefix + ".b", {n_classes}, false);
    return p;
  }
};

// Affine map to logits; losses consume logits directly.
template <typename T>
TensorPtr<T> classify(Tape<T>& tape, const TensorPtr<T>& q, const ClassifierParams<T>& head) {
  return tape.add_bias(tape.matmul(q, head.w), head.b);
}

}  // namespace maskclr
