// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Symmetric InfoNCE over paired view embeddings, plus the supervised losses
// used by probes and fine-tuning (cross-entropy and BCE live on the tape as
// fused ops; this header wires them into batch-level entry points).

#pragma once

#include <cstdint>
#include <stdexcept>

#include "maskclr/autodiff.hpp"

namespace maskclr {

// Pairwise dot products between rows: entry (i,j) = <a_i, b_j>. With
// unit-norm rows this is the cosine similarity matrix.
template <typename T>
TensorPtr<T> similarity_matrix(Tape<T>& tape, const TensorPtr<T>& za, const TensorPtr<T>& zb) {
  if (za->rank() != 2 || zb->rank() != 2 || za->dim(1) != zb->dim(1))
    throw ShapeError("similarity_matrix: " + shape_str(za->shape) + " vs " + shape_str(zb->shape));
  return tape.matmul(za, tape.transpose(zb));
}

// Symmetric InfoNCE: mean over 2B terms of the negative log-softmax of the
// positive similarity at temperature tau, in both the t->f and f->t
// directions. Inputs are expected to be row-normalized already; softmax
// denominators are computed with the usual max-shift.
template <typename T>
TensorPtr<T> info_nce(Tape<T>& tape, const TensorPtr<T>& zt, const TensorPtr<T>& zf, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be > 0");
  if (zt->shape != zf->shape)
    throw ShapeError("info_nce: " + shape_str(zt->shape) + " vs " + shape_str(zf->shape));
  const std::int64_t batch = zt->dim(0);

  auto sims = tape.scale(similarity_matrix(tape, zt, zf), T(1.0 / tau));
  auto log_p_tf = tape.diag(tape.log_softmax(sims, 1));              // rows: t -> f
  auto log_p_ft = tape.diag(tape.log_softmax(tape.transpose(sims), 1));  // cols: f -> t
  auto total = tape.add(tape.sum_all(log_p_tf), tape.sum_all(log_p_ft));
  return tape.scale(total, T(-1.0 / double(2 * batch)));
}

}  // namespace maskclr
