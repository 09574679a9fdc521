#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "mcqa/autograd.hpp"
#include "mcqa/param_store.hpp"
#include "mcqa/rng.hpp"

namespace mcqa {

// Co-attention between two sequences: a soft-alignment matrix of rectified
// projections scores every (i, j) pair, its row/column softmaxes give
// attention weights in both directions, and each sequence is replaced by its
// attended summary of the other.
//
// Masks are valid-prefix lengths: timesteps [0, valid) are real, the rest is
// padding. Masked key positions get exactly zero weight and masked query
// positions produce all-zero output rows.

struct CoAttentionParams {
  std::size_t d_att = 0;
  std::size_t d_p = 0;
  std::size_t d_q = 0;
  std::size_t w_p = 0;  // store index, d_att x d_p
  std::size_t w_q = 0;  // store index, d_att x d_q
};

inline CoAttentionParams make_coattention_params(ParameterStore& store,
                                                 const std::string& prefix,
                                                 std::size_t d_att, std::size_t d_p,
                                                 std::size_t d_q, Rng* rng) {
  if (d_att == 0 || d_p == 0 || d_q == 0)
    fail("make_coattention_params: zero width for '", prefix, "'");
  const auto projection = [&](const char* name, std::size_t cols) {
    Tensor t = Tensor::matrix(d_att, cols);
    if (rng != nullptr) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng->uniform(-bound, bound);
    }
    return store.add(prefix + "." + name, std::move(t));
  };
  CoAttentionParams p;
  p.d_att = d_att;
  p.d_p = d_p;
  p.d_q = d_q;
  p.w_p = projection("w_p", d_p);
  p.w_q = projection("w_q", d_q);
  return p;
}

// S[i,j] = relu(w_p u_p_i) . relu(w_q u_q_j); every entry is nonnegative.
inline Var alignment_matrix(Tape& tape, ParameterStore& store, Var u_p, Var u_q,
                            const CoAttentionParams& params) {
  const Tensor& tp = u_p.value();
  const Tensor& tq = u_q.value();
  if (!tp.is_matrix() || !tq.is_matrix())
    fail("alignment_matrix: inputs must be matrices, got ", tp.shape_str(), " and ",
         tq.shape_str());
  if (tp.cols() != params.d_p)
    fail("alignment_matrix: first input width ", tp.cols(), " does not match w_p (",
         params.d_att, "x", params.d_p, ")");
  if (tq.cols() != params.d_q)
    fail("alignment_matrix: second input width ", tq.cols(), " does not match w_q (",
         params.d_att, "x", params.d_q, ")");
  Var w_p = tape.param(store, params.w_p);
  Var w_q = tape.param(store, params.w_q);
  Var p = relu(matmul(u_p, transpose(w_p)));  // T_p x d_att
  Var q = relu(matmul(u_q, transpose(w_q)));  // T_q x d_att
  return matmul(p, transpose(q));             // T_p x T_q
}

struct Attended {
  Var u_p_hat;  // T_p x d_q
  Var u_q_hat;  // T_q x d_p
};

// Row-softmax of S over valid q-positions attends u_q for every valid
// p-position, and column-softmax over valid p-positions attends u_p for every
// valid q-position.
inline Attended attend(Var s, Var u_p, Var u_q, std::size_t valid_p,
                       std::size_t valid_q) {
  const Tensor& ts = s.value();
  if (!ts.is_matrix()) fail("attend: S must be a matrix, got ", ts.shape_str());
  if (ts.rows() != u_p.value().rows() || ts.cols() != u_q.value().rows())
    fail("attend: S is ", ts.shape_str(), " but inputs have ", u_p.value().rows(),
         " and ", u_q.value().rows(), " timesteps");
  if (valid_p == 0 || valid_q == 0)
    fail("attend: a slice has no valid key positions (valid lengths ", valid_p,
         ", ", valid_q, ")");
  Var alpha_rows = masked_softmax(s, Axis::rows, valid_p, valid_q);
  Var alpha_cols = masked_softmax(s, Axis::cols, valid_p, valid_q);
  Attended out;
  out.u_p_hat = matmul(alpha_rows, u_q);
  out.u_q_hat = matmul(transpose(alpha_cols), u_p);
  return out;
}

// Full co-attention of two equal-length sequences; row t of the output is
// [u_p_hat_t ; u_q_hat_t], valid where both inputs are valid.
inline Var coattend(Tape& tape, ParameterStore& store, Var u_p, Var u_q,
                    const CoAttentionParams& params, std::size_t valid_p,
                    std::size_t valid_q) {
  if (u_p.value().rows() != u_q.value().rows())
    fail("coattend: sequence lengths differ, ", u_p.value().rows(), " vs ",
         u_q.value().rows());
  Var s = alignment_matrix(tape, store, u_p, u_q, params);
  Attended att = attend(s, u_p, u_q, valid_p, valid_q);
  return concat_features({att.u_p_hat, att.u_q_hat});
}

}  // namespace mcqa
