#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mcqa/gradcheck.hpp"
#include "mcqa/lstm.hpp"
#include "mcqa/rng.hpp"

using namespace mcqa;

namespace {

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = cols == 0 ? Tensor::vector(rows) : Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Straight-line re-implementation of the four gate equations, independent of
// the tape machinery.
struct CellOracle {
  const ParameterStore& store;
  const LstmParams& p;

  std::vector<double> affine(std::size_t w, std::size_t u, std::size_t b,
                             const std::vector<double>& x,
                             const std::vector<double>& h) const {
    const Tensor& W = store.value(w);
    const Tensor& U = store.value(u);
    const Tensor& B = store.value(b);
    std::vector<double> out(p.hidden_dim, 0.0);
    for (std::size_t i = 0; i < p.hidden_dim; ++i) {
      double acc = B[i];
      for (std::size_t j = 0; j < p.input_dim; ++j) acc += W.at(i, j) * x[j];
      for (std::size_t j = 0; j < p.hidden_dim; ++j) acc += U.at(i, j) * h[j];
      out[i] = acc;
    }
    return out;
  }

  void step(const std::vector<double>& x, std::vector<double>& h,
            std::vector<double>& c) const {
    const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const std::vector<double> zi = affine(p.w_i, p.u_i, p.b_i, x, h);
    const std::vector<double> zf = affine(p.w_f, p.u_f, p.b_f, x, h);
    const std::vector<double> zg = affine(p.w_g, p.u_g, p.b_g, x, h);
    const std::vector<double> zo = affine(p.w_o, p.u_o, p.b_o, x, h);
    for (std::size_t i = 0; i < p.hidden_dim; ++i) {
      const double gi = sig(zi[i]);
      const double gf = sig(zf[i]);
      const double gg = std::tanh(zg[i]);
      const double go = sig(zo[i]);
      c[i] = gf * c[i] + gi * gg;
      h[i] = go * std::tanh(c[i]);
    }
  }
};

}  // namespace

TEST_SUITE("recurrent-encoder") {

TEST_CASE("all-zero parameters force gates to 0.5 and zero outputs") {
  ParameterStore store;
  const LstmParams p = make_lstm_params(store, "cell", 3, 2, nullptr);
  Tape tape;
  Var x = tape.constant(Tensor::of({0.7, -0.3, 1.1}));
  Var h0 = tape.zeros(2);
  Var c0 = tape.zeros(2);
  const LstmState out = lstm_step(tape, store, x, h0, c0, p);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out.c.value()[i] == 0.0);
    CHECK(out.h.value()[i] == 0.0);
  }
}

TEST_CASE("forget bias +20 carries the cell state through") {
  ParameterStore store;
  const LstmParams p = make_lstm_params(store, "cell", 2, 3, nullptr);
  store.value(p.b_f).fill(20.0);
  const Tensor v = Tensor::of({0.8, -0.5, 0.25});
  Tape tape;
  Var x = tape.constant(Tensor::vector(2));
  Var h0 = tape.zeros(3);
  Var c0 = tape.constant(v);
  const LstmState out = lstm_step(tape, store, x, h0, c0, p);
  const double sig20 = 1.0 / (1.0 + std::exp(-20.0));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.c.value()[i] == doctest::Approx(sig20 * v[i]).epsilon(1e-15));
    CHECK(std::abs(out.c.value()[i] - v[i]) <= 1e-8);
  }
}

TEST_CASE("random cell matches the straight-line gate-equation oracle") {
  Rng rng(91);
  ParameterStore store;
  const LstmParams p = make_lstm_params(store, "cell", 4, 3, &rng);
  const CellOracle oracle{store, p};

  std::vector<double> h_ref(3, 0.0), c_ref(3, 0.0);
  Tape tape;
  LstmState state{tape.zeros(3), tape.zeros(3)};
  const LstmVars vars = bind_lstm(tape, store, p);
  for (int t = 0; t < 4; ++t) {
    const Tensor xt = random_tensor(rng, 4, 0);
    std::vector<double> x(xt.data(), xt.data() + 4);
    oracle.step(x, h_ref, c_ref);
    state = lstm_step(tape.constant(xt), state, vars);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(state.h.value()[i] == doctest::Approx(h_ref[i]).epsilon(1e-12));
      CHECK(state.c.value()[i] == doctest::Approx(c_ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("T=1 with identical direction parameters gives equal halves") {
  Rng rng(5);
  ParameterStore store;
  BiLstmParams p;
  p.fw = make_lstm_params(store, "fw", 3, 2, &rng);
  p.bw = p.fw;  // share the same store entries for both directions
  Tape tape;
  Var seq = tape.constant(random_tensor(rng, 1, 3));
  Var enc = encode_bidirectional(tape, store, seq, p);
  CHECK(enc.value().rows() == 1);
  CHECK(enc.value().cols() == 4);
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(enc.value().at(0, j) == enc.value().at(0, 2 + j));
}

TEST_CASE("zero parameters map any input to exactly zero") {
  Rng rng(6);
  ParameterStore store;
  const BiLstmParams p = make_bilstm_params(store, "enc", 3, 2, nullptr);
  Tape tape;
  Var seq = tape.constant(random_tensor(rng, 5, 3));
  Var enc = encode_bidirectional(tape, store, seq, p);
  CHECK(enc.value().rows() == 5);
  CHECK(enc.value().cols() == 4);
  for (std::size_t i = 0; i < enc.value().size(); ++i)
    CHECK(enc.value()[i] == 0.0);
}

TEST_CASE("reversing the sequence with swapped directions mirrors the output") {
  Rng rng(31);
  ParameterStore store;
  const BiLstmParams p = make_bilstm_params(store, "enc", 2, 3, &rng);
  const std::size_t T = 3;
  const Tensor seq = random_tensor(rng, T, 2);
  Tensor rev = seq;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < 2; ++j) rev.at(t, j) = seq.at(T - 1 - t, j);

  Tape tape;
  Var enc = encode_bidirectional(tape, store, tape.constant(seq), p);
  BiLstmParams swapped;
  swapped.fw = p.bw;
  swapped.bw = p.fw;
  Var enc_rev = encode_bidirectional(tape, store, tape.constant(rev), swapped);

  const std::size_t h = 3;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t mirror = T - 1 - t;
    for (std::size_t j = 0; j < h; ++j) {
      CHECK(enc_rev.value().at(t, j) ==
            doctest::Approx(enc.value().at(mirror, h + j)).epsilon(1e-15));
      CHECK(enc_rev.value().at(t, h + j) ==
            doctest::Approx(enc.value().at(mirror, j)).epsilon(1e-15));
    }
  }
}

TEST_CASE("mask-aware encoding: full validity matches the unmasked encoder") {
  Rng rng(12);
  ParameterStore store;
  const BiLstmParams p = make_bilstm_params(store, "enc", 3, 2, &rng);
  Tape tape;
  Var seq = tape.constant(random_tensor(rng, 4, 3));
  Var full = encode_bidirectional(tape, store, seq, p);
  Var masked = mask_aware_encode(tape, store, seq, 4, p);
  CHECK(bitwise_equal(full.value(), masked.value()));
}

TEST_CASE("mask-aware encoding zeroes padded rows and preserves the prefix") {
  Rng rng(13);
  ParameterStore store;
  const BiLstmParams p = make_bilstm_params(store, "enc", 3, 2, &rng);
  const Tensor base = random_tensor(rng, 3, 3);
  Tensor padded = Tensor::matrix(6, 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 3; ++j) padded.at(t, j) = base.at(t, j);
  // garbage beyond the valid prefix must not leak into the output
  for (std::size_t t = 3; t < 6; ++t)
    for (std::size_t j = 0; j < 3; ++j) padded.at(t, j) = 99.0;

  Tape tape;
  Var enc_full = encode_bidirectional(tape, store, tape.constant(base), p);
  Var enc_masked = mask_aware_encode(tape, store, tape.constant(padded), 3, p);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(std::abs(enc_masked.value().at(t, j) - enc_full.value().at(t, j)) <=
            1e-12);
  for (std::size_t t = 3; t < 6; ++t)
    for (std::size_t j = 0; j < 4; ++j) CHECK(enc_masked.value().at(t, j) == 0.0);
}

TEST_CASE("mask-aware encoding rejects an empty or oversized valid prefix") {
  Rng rng(14);
  ParameterStore store;
  const BiLstmParams p = make_bilstm_params(store, "enc", 3, 2, &rng);
  Tape tape;
  Var seq = tape.constant(random_tensor(rng, 4, 3));
  CHECK_THROWS_AS((void)mask_aware_encode(tape, store, seq, 0, p), McqaError);
  CHECK_THROWS_AS((void)mask_aware_encode(tape, store, seq, 5, p), McqaError);
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(15);
  ParameterStore store;
  const BiLstmParams p = make_bilstm_params(store, "enc", 4, 3, &rng);
  const std::size_t seq_idx = store.add("seq", random_tensor(rng, 5, 4));
  const Tensor upstream = random_tensor(rng, 5, 6);

  const GradCheckReport report = finite_difference_check(
      [&](Tape& tape, ParameterStore& st) {
        Var seq = tape.param(st, seq_idx);
        Var enc = mask_aware_encode(tape, st, seq, 4, p);
        return sum(mul(enc, tape.constant(upstream)));
      },
      store);
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("lstm_step validates shapes") {
  ParameterStore store;
  const LstmParams p = make_lstm_params(store, "cell", 3, 2, nullptr);
  Tape tape;
  Var bad_x = tape.constant(Tensor::of({1.0, 2.0}));
  Var h0 = tape.zeros(2);
  Var c0 = tape.zeros(2);
  CHECK_THROWS_AS((void)lstm_step(tape, store, bad_x, h0, c0, p), McqaError);
  Var x = tape.constant(Tensor::of({1.0, 2.0, 3.0}));
  Var bad_h = tape.zeros(3);
  CHECK_THROWS_AS((void)lstm_step(tape, store, x, bad_h, c0, p), McqaError);
}

}  // TEST_SUITE
