#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mcqa/autograd.hpp"
#include "mcqa/param_store.hpp"
#include "mcqa/rng.hpp"

namespace mcqa {

// Standard LSTM cell (no peepholes) and a bidirectional encoder that returns
// the outputs of every timestep, not just the final state.

// Store indices of one direction's weights: input-to-gate matrices (h x d_in),
// hidden-to-gate matrices (h x h) and biases (h) for the input/forget/
// candidate/output gates.
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t w_i = 0, w_f = 0, w_g = 0, w_o = 0;
  std::size_t u_i = 0, u_f = 0, u_g = 0, u_o = 0;
  std::size_t b_i = 0, b_f = 0, b_g = 0, b_o = 0;
};

struct BiLstmParams {
  LstmParams fw;
  LstmParams bw;
  std::size_t input_dim() const { return fw.input_dim; }
  std::size_t hidden_dim() const { return fw.hidden_dim; }
};

// Weights uniform in [-1/sqrt(h), +1/sqrt(h)], biases zero except the forget
// bias at 1.0. Passing rng = nullptr zero-initializes everything (including
// the forget bias), which the analytic zero-cases rely on.
inline LstmParams make_lstm_params(ParameterStore& store, const std::string& prefix,
                                   std::size_t input_dim, std::size_t hidden_dim,
                                   Rng* rng) {
  if (input_dim == 0 || hidden_dim == 0)
    fail("make_lstm_params: zero dimension for '", prefix, "'");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  const auto weight = [&](const char* name, std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    if (rng != nullptr)
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng->uniform(-bound, bound);
    return store.add(prefix + "." + name, std::move(t));
  };
  const auto bias = [&](const char* name, double init) {
    Tensor t = Tensor::vector(hidden_dim);
    if (rng != nullptr) t.fill(init);
    return store.add(prefix + "." + name, std::move(t));
  };
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_i = weight("w_i", hidden_dim, input_dim);
  p.w_f = weight("w_f", hidden_dim, input_dim);
  p.w_g = weight("w_g", hidden_dim, input_dim);
  p.w_o = weight("w_o", hidden_dim, input_dim);
  p.u_i = weight("u_i", hidden_dim, hidden_dim);
  p.u_f = weight("u_f", hidden_dim, hidden_dim);
  p.u_g = weight("u_g", hidden_dim, hidden_dim);
  p.u_o = weight("u_o", hidden_dim, hidden_dim);
  p.b_i = bias("b_i", 0.0);
  p.b_f = bias("b_f", 1.0);
  p.b_g = bias("b_g", 0.0);
  p.b_o = bias("b_o", 0.0);
  return p;
}

inline BiLstmParams make_bilstm_params(ParameterStore& store,
                                       const std::string& prefix,
                                       std::size_t input_dim, std::size_t hidden_dim,
                                       Rng* rng) {
  BiLstmParams p;
  p.fw = make_lstm_params(store, prefix + ".fw", input_dim, hidden_dim, rng);
  p.bw = make_lstm_params(store, prefix + ".bw", input_dim, hidden_dim, rng);
  return p;
}

// Parameter leaves bound to one tape, so an encoder invocation reuses the
// same leaves across timesteps.
struct LstmVars {
  Var w_i, w_f, w_g, w_o;
  Var u_i, u_f, u_g, u_o;
  Var b_i, b_f, b_g, b_o;
};

inline LstmVars bind_lstm(Tape& tape, ParameterStore& store, const LstmParams& p) {
  LstmVars v;
  v.w_i = tape.param(store, p.w_i);
  v.w_f = tape.param(store, p.w_f);
  v.w_g = tape.param(store, p.w_g);
  v.w_o = tape.param(store, p.w_o);
  v.u_i = tape.param(store, p.u_i);
  v.u_f = tape.param(store, p.u_f);
  v.u_g = tape.param(store, p.u_g);
  v.u_o = tape.param(store, p.u_o);
  v.b_i = tape.param(store, p.b_i);
  v.b_f = tape.param(store, p.b_f);
  v.b_g = tape.param(store, p.b_g);
  v.b_o = tape.param(store, p.b_o);
  return v;
}

struct LstmState {
  Var h;
  Var c;
};

// i,f,o = sigmoid(W x + U h_prev + b), g = tanh(W_g x + U_g h_prev + b_g),
// c = f*c_prev + i*g, h = o*tanh(c).
inline LstmState lstm_step(Var x, const LstmState& prev, const LstmVars& p) {
  const auto gate_in = [&](Var w, Var u, Var b) {
    return add(add(matmul(w, x), matmul(u, prev.h)), b);
  };
  Var i = sigmoid(gate_in(p.w_i, p.u_i, p.b_i));
  Var f = sigmoid(gate_in(p.w_f, p.u_f, p.b_f));
  Var g = tanh(gate_in(p.w_g, p.u_g, p.b_g));
  Var o = sigmoid(gate_in(p.w_o, p.u_o, p.b_o));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

// Single-step convenience entry point over raw store indices.
inline LstmState lstm_step(Tape& tape, ParameterStore& store, Var x, Var h_prev,
                           Var c_prev, const LstmParams& params) {
  if (x.value().size() != params.input_dim)
    fail("lstm_step: input has shape ", x.value().shape_str(), ", expected [",
         params.input_dim, "]");
  if (h_prev.value().size() != params.hidden_dim ||
      c_prev.value().size() != params.hidden_dim)
    fail("lstm_step: state shapes ", h_prev.value().shape_str(), "/",
         c_prev.value().shape_str(), " do not match hidden width ",
         params.hidden_dim);
  return lstm_step(x, {h_prev, c_prev}, bind_lstm(tape, store, params));
}

// Bidirectional encoding of only the first valid_len rows of a T x d_in
// sequence: the forward scan runs 1..valid_len from zero state, the backward
// scan valid_len..1 from zero state, and output rows beyond valid_len are
// exactly zero. Row t of the T x 2h output is [forward h_t ; backward h_t].
inline Var mask_aware_encode(Tape& tape, ParameterStore& store, Var seq,
                             std::size_t valid_len, const BiLstmParams& params) {
  const Tensor& s = seq.value();
  if (!s.is_matrix()) fail("encode: sequence must be a matrix, got ", s.shape_str());
  const std::size_t steps = s.rows();
  if (valid_len == 0) fail("encode: sequence has no valid timesteps");
  if (valid_len > steps)
    fail("encode: valid length ", valid_len, " exceeds ", steps, " rows");
  if (s.cols() != params.input_dim())
    fail("encode: sequence width ", s.cols(), " does not match encoder input width ",
         params.input_dim());

  const std::size_t h = params.hidden_dim();
  std::vector<Var> inputs(valid_len);
  for (std::size_t t = 0; t < valid_len; ++t) inputs[t] = row(seq, t);

  std::vector<Var> fw_rows(steps), bw_rows(steps);
  {
    LstmVars vars = bind_lstm(tape, store, params.fw);
    LstmState state{tape.zeros(h), tape.zeros(h)};
    for (std::size_t t = 0; t < valid_len; ++t) {
      state = lstm_step(inputs[t], state, vars);
      fw_rows[t] = state.h;
    }
  }
  {
    LstmVars vars = bind_lstm(tape, store, params.bw);
    LstmState state{tape.zeros(h), tape.zeros(h)};
    for (std::size_t t = valid_len; t-- > 0;) {
      state = lstm_step(inputs[t], state, vars);
      bw_rows[t] = state.h;
    }
  }
  for (std::size_t t = valid_len; t < steps; ++t) {
    fw_rows[t] = tape.zeros(h);
    bw_rows[t] = tape.zeros(h);
  }
  Var fw = stack_rows(std::span<const Var>(fw_rows));
  Var bw = stack_rows(std::span<const Var>(bw_rows));
  return concat_features({fw, bw});
}

// All timesteps valid.
inline Var encode_bidirectional(Tape& tape, ParameterStore& store, Var seq,
                                const BiLstmParams& params) {
  const Tensor& s = seq.value();
  if (!s.is_matrix()) fail("encode: sequence must be a matrix, got ", s.shape_str());
  return mask_aware_encode(tape, store, seq, s.rows(), params);
}

}  // namespace mcqa
