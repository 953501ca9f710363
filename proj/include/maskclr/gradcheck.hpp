// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference validation of every differentiable op and of the
// end-to-end contrastive loss on a tiny encoder. Runs in double precision;
// nonsmooth ops are sampled away from their kinks.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskclr/autodiff.hpp"
#include "maskclr/losses.hpp"
#include "maskclr/model.hpp"
#include "maskclr/rng.hpp"

namespace maskclr {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

namespace gradcheck_detail {

inline TensorPtr<double> rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                                     bool requires_grad = true) {
  auto t = make_tensor<double>(std::move(shape), requires_grad);
  for (auto& v : t->value) v = rng.uniform(lo, hi);
  return t;
}

// Keeps |x| >= margin so relu/gelu are checked on smooth regions.
inline TensorPtr<double> rand_tensor_away_from_zero(Shape shape, Rng& rng, double margin) {
  auto t = rand_tensor(std::move(shape), rng);
  for (auto& v : t->value) {
    if (v >= 0 && v < margin) v += margin;
    if (v < 0 && v > -margin) v -= margin;
  }
  return t;
}

// Reduces an op output to a scalar through fixed random weights so the
// check exercises every output coordinate asymmetrically.
inline TensorPtr<double> weighted_sum(Tape<double>& tape, const TensorPtr<double>& x, Rng& rng) {
  static thread_local std::vector<double> weights;
  auto w = make_tensor<double>(x->shape, false);
  for (auto& v : w->value) v = rng.uniform(-1.0, 1.0);
  return tape.sum_all(tape.mul(x, w));
}

}  // namespace gradcheck_detail

inline std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 7, double eps = 1e-4) {
  using gradcheck_detail::rand_tensor;
  using gradcheck_detail::rand_tensor_away_from_zero;
  std::vector<GradCheckEntry> results;
  Rng rng(seed_mix({seed, stage::kInit, 4242}));

  auto check = [&](const std::string& name, auto builder, std::vector<TensorPtr<double>> inputs) {
    results.push_back({name, grad_check(builder, inputs, eps)});
  };

  {  // add / sub / mul / scale
    auto a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
    auto wseed = rng.next_u64();
    check("add", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.add(a, b), wr);
    }, {a, b});
    check("sub", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.sub(a, b), wr);
    }, {a, b});
    check("mul", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.mul(a, b), wr);
    }, {a, b});
    check("scale", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.scale(a, 1.7), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({4, 5}, rng), bias = rand_tensor({5}, rng);
    auto wseed = rng.next_u64();
    check("add_bias", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.add_bias(a, bias), wr);
    }, {a, bias});
  }
  {
    auto a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 5}, rng);
    auto wseed = rng.next_u64();
    check("matmul", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.matmul(a, b), wr);
    }, {a, b});
  }
  {
    auto a = rand_tensor({2, 3, 4}, rng), b = rand_tensor({2, 4, 5}, rng);
    auto wseed = rng.next_u64();
    check("bmm", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.bmm(a, b), wr);
    }, {a, b});
    auto c = rand_tensor({2, 5, 4}, rng);
    check("bmm_nt", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.bmm(a, c, true), wr);
    }, {a, c});
  }
  {
    auto a = rand_tensor({3, 4}, rng);
    auto wseed = rng.next_u64();
    check("transpose", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.transpose(a), wr);
    }, {a});
    check("reshape", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.reshape(a, {2, 6}), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({2, 3}, rng), b = rand_tensor({4, 3}, rng);
    auto wseed = rng.next_u64();
    check("concat", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.concat({a, b}, 0), wr);
    }, {a, b});
  }
  {
    auto a = rand_tensor({5, 3}, rng);
    auto wseed = rng.next_u64();
    check("slice_rows", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.slice_rows(a, 1, 4), wr);
    }, {a});
    check("gather_rows", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.gather_rows(a, {4, 0, 2, 2}), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({2, 3, 8}, rng);
    auto wseed = rng.next_u64();
    check("split_merge_heads", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.merge_heads(t.split_heads(a, 2), 2), wr);
    }, {a});
  }
  {
    auto a = rand_tensor_away_from_zero({4, 5}, rng, 0.2);
    auto wseed = rng.next_u64();
    check("relu", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.relu(a), wr);
    }, {a});
    check("gelu", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.gelu(a), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({3, 4}, rng, 0.5, 2.0);
    auto wseed = rng.next_u64();
    check("log", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.log(a), wr);
    }, {a});
    check("exp", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.exp(a), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({3, 5}, rng, -2.0, 2.0);
    auto wseed = rng.next_u64();
    check("softmax", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.softmax(a, 1), wr);
    }, {a});
    check("softmax_axis0", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.softmax(a, 0), wr);
    }, {a});
    check("log_softmax", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.log_softmax(a, 1), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({2, 3, 4}, rng);
    auto wseed = rng.next_u64();
    check("mean_axis", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.mean_axis(a, 1), wr);
    }, {a});
    check("mean_all", [&](Tape<double>& t) { return t.mean_all(a); }, {a});
    check("sum_all", [&](Tape<double>& t) { return t.sum_all(a); }, {a});
  }
  {
    auto a = rand_tensor({4, 6}, rng);
    auto g = rand_tensor({6}, rng, 0.5, 1.5), b = rand_tensor({6}, rng);
    auto wseed = rng.next_u64();
    check("layer_norm", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.layer_norm(a, g, b), wr);
    }, {a, g, b});
  }
  {
    auto a = rand_tensor({6, 4}, rng);
    auto g = rand_tensor({4}, rng, 0.5, 1.5), b = rand_tensor({4}, rng);
    auto wseed = rng.next_u64();
    check("batch_norm_train", [&, wseed](Tape<double>& t) {
      BatchNormState<double> st(4);
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.batch_norm(a, g, b, st, true), wr);
    }, {a, g, b});
    check("batch_norm_eval", [&, wseed](Tape<double>& t) {
      BatchNormState<double> st(4);
      for (std::size_t i = 0; i < 4; ++i) {
        st.running_mean[i] = 0.1 * double(i);
        st.running_var[i] = 1.0 + 0.2 * double(i);
      }
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.batch_norm(a, g, b, st, false), wr);
    }, {a, g, b});
    check("batch_norm_biasfree", [&, wseed](Tape<double>& t) {
      BatchNormState<double> st(4);
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.batch_norm(a, g, nullptr, st, true), wr);
    }, {a, g});
  }
  {
    auto a = rand_tensor({3, 5}, rng, 0.3, 1.5);
    auto wseed = rng.next_u64();
    check("l2_normalize", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.l2_normalize(a), wr);
    }, {a});
  }
  {
    auto a = rand_tensor({4, 4}, rng);
    auto wseed = rng.next_u64();
    check("diag", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.diag(a), wr);
    }, {a});
    check("pick", [&, wseed](Tape<double>& t) {
      Rng wr(wseed);
      return gradcheck_detail::weighted_sum(t, t.pick(a, {2, 0, 3, 1}), wr);
    }, {a});
  }
  {
    auto logits = rand_tensor({4, 3}, rng, -2.0, 2.0);
    check("cross_entropy",
          [&](Tape<double>& t) { return t.cross_entropy(logits, {0, 2, 1, 2}); }, {logits});
    auto targets = make_tensor<double>({4, 3}, false);
    for (auto& v : targets->value) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    check("bce_with_logits",
          [&](Tape<double>& t) { return t.bce_with_logits(logits, targets); }, {logits});
  }
  {
    auto zt = rand_tensor({3, 6}, rng), zf = rand_tensor({3, 6}, rng);
    check("info_nce", [&](Tape<double>& t) { return info_nce(t, zt, zf, 0.5); }, {zt, zf});
  }

  // End to end: tiny encoder + projection + symmetric InfoNCE, checked over
  // every trainable parameter.
  {
    EncoderConfig ec;
    ec.depth = 2;
    ec.dim = 16;
    ec.heads = 2;
    ec.mlp_ratio = 2;
    ec.patch_t = 2;
    ec.patch_f = 2;
    ProjectionConfig pc;
    pc.hidden = 8;
    pc.out = 6;
    ParamRegistry<double> reg;
    Rng init_rng(seed_mix({seed, stage::kInit, 5151}));
    auto enc = EncoderParams<double>::create(ec, reg, init_rng);
    auto proj = ProjectionParams<double>::create(ec.dim, pc, reg, init_rng);

    const std::int64_t B = 2, V = 8;
    auto tokens = rand_tensor({2 * B, V, ec.patch_dim()}, rng, -1.0, 1.0, false);
    auto pos = rand_tensor({2 * B, V, ec.dim}, rng, -1.0, 1.0, false);

    std::vector<TensorPtr<double>> params;
    for (const auto& e : reg.entries())
      if (e.trainable) params.push_back(e.tensor);

    auto builder = [&](Tape<double>& t) {
      auto stack = encode(t, tokens, pos, enc);
      auto pooled = pool(t, stack);
      auto z = project(t, pooled, proj, true);
      auto zt = t.slice_rows(z, 0, B);
      auto zf = t.slice_rows(z, B, 2 * B);
      return info_nce(t, zt, zf, 0.1);
    };
    check("end_to_end_pretrain_loss", builder, params);
  }

  return results;
}

}  // namespace maskclr
