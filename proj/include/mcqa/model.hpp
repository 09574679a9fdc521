#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcqa/autograd.hpp"
#include "mcqa/coattention.hpp"
#include "mcqa/lstm.hpp"
#include "mcqa/param_store.hpp"
#include "mcqa/rng.hpp"
#include "mcqa/sample.hpp"

namespace mcqa {

// The full MCQA network: bidirectional encoders for the three modalities and
// the question/answer streams, pairwise modality co-attention feeding a
// fusion encoder, context-query co-attention feeding a final encoder, linear
// self-alignment, and a two-layer feed-forward scorer. Every stream is padded
// to one common length `seq_len` before any co-attention or feature
// concatenation; valid-prefix lengths travel alongside the values. Where
// streams of different valid lengths are concatenated along the feature axis,
// the union (maximum) of their valid lengths is kept so no real timestep is
// dropped.

struct ModelConfig {
  // input feature widths; question/answer share the text width
  std::size_t d_text = 768;
  std::size_t d_audio = 74;
  std::size_t d_video = 2208;
  // per-direction encoder widths
  std::size_t h_text = 200;
  std::size_t h_audio = 100;
  std::size_t h_video = 250;
  std::size_t h_query = 100;
  std::size_t h_fusion = 150;
  std::size_t h_final = 150;
  std::size_t d_att = 100;  // co-attention projection width
  std::size_t d_ffn = 64;   // scorer hidden width
  std::size_t seq_len = 16;

  bool ablate_fusion_coattention = false;
  bool ablate_context_query_coattention = false;
  bool mask_padding = true;

  void validate() const {
    const std::size_t widths[] = {d_text,  d_audio,  d_video, h_text,
                                  h_audio, h_video,  h_query, h_fusion,
                                  h_final, d_att,    d_ffn,   seq_len};
    for (std::size_t w : widths)
      if (w == 0) fail("ModelConfig: all widths and the sequence length must be > 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Tiny configuration used by the gradient suite and as the gradcheck default.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.d_text = 6;
  c.d_audio = 4;
  c.d_video = 8;
  c.h_text = 4;
  c.h_audio = 3;
  c.h_video = 4;
  c.h_query = 3;
  c.h_fusion = 4;
  c.h_final = 4;
  c.d_att = 3;
  c.d_ffn = 4;
  c.seq_len = 3;
  return c;
}

struct FfnParams {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

struct ModelParams {
  BiLstmParams enc_text, enc_audio, enc_video, enc_question, enc_answer;
  CoAttentionParams att_ta, att_av, att_vt;  // modality pairs
  BiLstmParams fusion;
  CoAttentionParams att_uq, att_uc;  // context-query sites
  BiLstmParams final_enc;
  std::size_t w_r = 0;  // self-alignment vector, 2*h_final
  FfnParams scorer;
};

// Width of the fusion encoder input: the three pairwise co-attentions plus
// the three encodings (or just the encodings when ablated).
inline std::size_t fusion_input_width(const ModelConfig& c) {
  const std::size_t et = 2 * c.h_text, ea = 2 * c.h_audio, ev = 2 * c.h_video;
  std::size_t w = et + ea + ev;
  if (!c.ablate_fusion_coattention) w += (ea + et) + (ev + ea) + (et + ev);
  return w;
}

// Width of the final encoder input: [v_uq, v_uc, q_enc, c_enc, u] or
// [q_enc, c_enc, u] when the context-query sites are ablated.
inline std::size_t final_input_width(const ModelConfig& c) {
  const std::size_t eq = 2 * c.h_query, eu = 2 * c.h_fusion;
  std::size_t w = 2 * eq + eu;
  if (!c.ablate_context_query_coattention) w += 2 * (eq + eu);
  return w;
}

// Registers every trainable tensor under a stable name, in a fixed order, so
// two stores built from the same (config, seed) are bit-identical. All sites
// have independent parameters; the ablation flags do not change the
// parameter set, only the wiring.
inline ModelParams init_model_params(ParameterStore& store, const ModelConfig& c,
                                     std::uint64_t seed) {
  c.validate();
  Rng rng = Rng::derive(seed, 0x9a7a);
  ModelParams p;
  p.enc_text = make_bilstm_params(store, "enc_text", c.d_text, c.h_text, &rng);
  p.enc_audio = make_bilstm_params(store, "enc_audio", c.d_audio, c.h_audio, &rng);
  p.enc_video = make_bilstm_params(store, "enc_video", c.d_video, c.h_video, &rng);
  p.enc_question =
      make_bilstm_params(store, "enc_question", c.d_text, c.h_query, &rng);
  p.enc_answer = make_bilstm_params(store, "enc_answer", c.d_text, c.h_query, &rng);

  const std::size_t et = 2 * c.h_text, ea = 2 * c.h_audio, ev = 2 * c.h_video;
  p.att_ta = make_coattention_params(store, "att_ta", c.d_att, et, ea, &rng);
  p.att_av = make_coattention_params(store, "att_av", c.d_att, ea, ev, &rng);
  p.att_vt = make_coattention_params(store, "att_vt", c.d_att, ev, et, &rng);
  p.fusion =
      make_bilstm_params(store, "fusion", fusion_input_width(c), c.h_fusion, &rng);

  const std::size_t eq = 2 * c.h_query, eu = 2 * c.h_fusion;
  p.att_uq = make_coattention_params(store, "att_uq", c.d_att, eu, eq, &rng);
  p.att_uc = make_coattention_params(store, "att_uc", c.d_att, eu, eq, &rng);
  p.final_enc =
      make_bilstm_params(store, "final", final_input_width(c), c.h_final, &rng);

  {
    const std::size_t ef = 2 * c.h_final;
    Tensor wr = Tensor::vector(ef);
    const double bound = 1.0 / std::sqrt(static_cast<double>(ef));
    for (std::size_t i = 0; i < wr.size(); ++i) wr[i] = rng.uniform(-bound, bound);
    p.w_r = store.add("w_r", std::move(wr));

    Tensor w1 = Tensor::matrix(c.d_ffn, ef);
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = rng.uniform(-bound, bound);
    p.scorer.w1 = store.add("scorer.w1", std::move(w1));
    p.scorer.b1 = store.add("scorer.b1", Tensor::vector(c.d_ffn));
    Tensor w2 = Tensor::matrix(1, c.d_ffn);
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(c.d_ffn));
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = rng.uniform(-bound2, bound2);
    p.scorer.w2 = store.add("scorer.w2", std::move(w2));
    p.scorer.b2 = store.add("scorer.b2", Tensor::vector(1));
  }
  return p;
}

// Optional capture of intermediate values for inspection and tests.
struct ForwardTrace {
  Tensor text_enc, audio_enc, video_enc, question_enc, answer_enc;
  Tensor u_ta, u_av, u_vt;
  Tensor u;  // fused multimodal context
  Tensor v_uq, v_uc;
  Tensor h;
  Tensor beta;
  Tensor h_hat;
  double score = 0.0;
};

namespace detail {

struct MaskedSeq {
  Var seq;
  std::size_t valid = 0;
};

inline std::size_t effective_valid(const ModelConfig& c, std::size_t valid) {
  return c.mask_padding ? valid : c.seq_len;
}

inline MaskedSeq encode_stream(Tape& tape, ParameterStore& store,
                               const BiLstmParams& enc, const ModelConfig& c,
                               const Tensor& stream, std::size_t valid,
                               const char* name, const std::string& sample_id) {
  if (!stream.is_matrix() || stream.rows() != c.seq_len)
    fail("encode_inputs: sample '", sample_id, "' ", name, " stream has shape ",
         stream.shape_str(), ", expected ", c.seq_len, " rows");
  if (valid == 0)
    fail("encode_inputs: sample '", sample_id, "' ", name,
         " stream has valid length 0");
  const std::size_t v = effective_valid(c, valid);
  Var raw = tape.constant(stream);
  return {mask_aware_encode(tape, store, raw, v, enc), v};
}

}  // namespace detail

struct EncodedInputs {
  detail::MaskedSeq text, audio, video, question;
  std::vector<detail::MaskedSeq> answers;
};

// Mask-aware bidirectional encodings of all five streams, keeping every
// timestep output. Also validates the sample against the config widths.
inline EncodedInputs encode_inputs(Tape& tape, ParameterStore& store,
                                   const ModelParams& p, const ModelConfig& c,
                                   const Sample& s) {
  if (s.text.cols() != c.d_text || s.audio.cols() != c.d_audio ||
      s.video.cols() != c.d_video)
    fail("encode_inputs: sample '", s.id, "' widths (", s.text.cols(), ", ",
         s.audio.cols(), ", ", s.video.cols(), ") do not match config (", c.d_text,
         ", ", c.d_audio, ", ", c.d_video, ")");
  if (s.question.cols() != c.d_text)
    fail("encode_inputs: sample '", s.id, "' question width ", s.question.cols(),
         " does not match text width ", c.d_text);
  if (s.answers.size() != s.labels.size() ||
      s.answers.size() != s.valid_answers.size())
    fail("encode_inputs: sample '", s.id, "' candidate bookkeeping is inconsistent");

  EncodedInputs out;
  out.text = detail::encode_stream(tape, store, p.enc_text, c, s.text, s.valid_text,
                                   "text", s.id);
  out.audio = detail::encode_stream(tape, store, p.enc_audio, c, s.audio,
                                    s.valid_audio, "audio", s.id);
  out.video = detail::encode_stream(tape, store, p.enc_video, c, s.video,
                                    s.valid_video, "video", s.id);
  out.question = detail::encode_stream(tape, store, p.enc_question, c, s.question,
                                       s.valid_question, "question", s.id);
  out.answers.reserve(s.answers.size());
  for (std::size_t k = 0; k < s.answers.size(); ++k) {
    if (s.answers[k].cols() != c.d_text)
      fail("encode_inputs: sample '", s.id, "' answer ", k, " width ",
           s.answers[k].cols(), " does not match text width ", c.d_text);
    out.answers.push_back(detail::encode_stream(tape, store, p.enc_answer, c,
                                                s.answers[k], s.valid_answers[k],
                                                "answer", s.id));
  }
  return out;
}

// Pairwise co-attention of the modality encodings, feature-concatenated with
// the encodings themselves and passed through the fusion encoder. With the
// fusion ablation only the raw encodings are fused.
inline detail::MaskedSeq fuse_modalities(Tape& tape, ParameterStore& store,
                                         const ModelParams& p, const ModelConfig& c,
                                         const detail::MaskedSeq& xt,
                                         const detail::MaskedSeq& xa,
                                         const detail::MaskedSeq& xv,
                                         ForwardTrace* trace = nullptr) {
  std::vector<Var> parts;
  if (!c.ablate_fusion_coattention) {
    Var u_ta = coattend(tape, store, xt.seq, xa.seq, p.att_ta, xt.valid, xa.valid);
    Var u_av = coattend(tape, store, xa.seq, xv.seq, p.att_av, xa.valid, xv.valid);
    Var u_vt = coattend(tape, store, xv.seq, xt.seq, p.att_vt, xv.valid, xt.valid);
    if (trace != nullptr) {
      trace->u_ta = u_ta.value();
      trace->u_av = u_av.value();
      trace->u_vt = u_vt.value();
    }
    parts = {u_ta, u_av, u_vt, xt.seq, xa.seq, xv.seq};
  } else {
    parts = {xt.seq, xa.seq, xv.seq};
  }
  Var fused_in = concat_features(std::span<const Var>(parts));
  const std::size_t valid = std::max({xt.valid, xa.valid, xv.valid});
  Var u = mask_aware_encode(tape, store, fused_in, valid, p.fusion);
  if (trace != nullptr) trace->u = u.value();
  return {u, valid};
}

// Context-query co-attention and the final encoder producing h. With the
// context-query ablation h = BiLSTM([q_enc, c_enc, u]).
inline detail::MaskedSeq align_context_query(Tape& tape, ParameterStore& store,
                                             const ModelParams& p,
                                             const ModelConfig& c,
                                             const detail::MaskedSeq& u,
                                             const detail::MaskedSeq& q,
                                             const detail::MaskedSeq& cand,
                                             ForwardTrace* trace = nullptr) {
  std::vector<Var> parts;
  if (!c.ablate_context_query_coattention) {
    Var v_uq = coattend(tape, store, u.seq, q.seq, p.att_uq, u.valid, q.valid);
    Var v_uc = coattend(tape, store, u.seq, cand.seq, p.att_uc, u.valid, cand.valid);
    if (trace != nullptr) {
      trace->v_uq = v_uq.value();
      trace->v_uc = v_uc.value();
    }
    parts = {v_uq, v_uc, q.seq, cand.seq, u.seq};
  } else {
    parts = {q.seq, cand.seq, u.seq};
  }
  Var h_in = concat_features(std::span<const Var>(parts));
  const std::size_t valid = std::max({u.valid, q.valid, cand.valid});
  Var h = mask_aware_encode(tape, store, h_in, valid, p.final_enc);
  if (trace != nullptr) trace->h = h.value();
  return {h, valid};
}

// beta = softmax over valid positions of w_r . h_k ; h_hat = sum_k beta_k h_k.
inline Var self_align(Tape& tape, ParameterStore& store, std::size_t w_r_index,
                      Var h, std::size_t valid, ForwardTrace* trace = nullptr) {
  if (valid == 0) fail("self_align: no valid positions");
  Var w_r = tape.param(store, w_r_index);
  if (h.value().cols() != w_r.value().size())
    fail("self_align: h width ", h.value().cols(), " does not match w_r length ",
         w_r.value().size());
  Var projections = matmul(h, w_r);
  Var beta = masked_softmax(projections, valid);
  Var h_hat = weighted_sum(beta, h);
  if (trace != nullptr) {
    trace->beta = beta.value();
    trace->h_hat = h_hat.value();
  }
  return h_hat;
}

namespace detail {

inline Var scorer_ffn(Tape& tape, ParameterStore& store, const FfnParams& f,
                      Var h_hat) {
  Var w1 = tape.param(store, f.w1);
  Var b1 = tape.param(store, f.b1);
  Var w2 = tape.param(store, f.w2);
  Var b2 = tape.param(store, f.b2);
  Var hidden = relu(add(matmul(w1, h_hat), b1));
  return add(matmul(w2, hidden), b2);
}

}  // namespace detail

// Full pipeline for one candidate: encode -> fuse -> align -> self-align ->
// feed-forward scorer. Returns the scalar logit.
inline Var score_candidate(Tape& tape, ParameterStore& store, const ModelParams& p,
                           const ModelConfig& c, const Sample& s,
                           std::size_t candidate, ForwardTrace* trace = nullptr) {
  if (candidate >= s.answers.size())
    fail("score_candidate: candidate ", candidate, " out of ", s.answers.size(),
         " for sample '", s.id, "'");

  // Encode only the streams this pass needs; each candidate gets a full
  // independent forward pass sharing all parameters.
  detail::MaskedSeq xt = detail::encode_stream(tape, store, p.enc_text, c, s.text,
                                               s.valid_text, "text", s.id);
  detail::MaskedSeq xa = detail::encode_stream(tape, store, p.enc_audio, c, s.audio,
                                               s.valid_audio, "audio", s.id);
  detail::MaskedSeq xv = detail::encode_stream(tape, store, p.enc_video, c, s.video,
                                               s.valid_video, "video", s.id);
  detail::MaskedSeq q = detail::encode_stream(tape, store, p.enc_question, c,
                                              s.question, s.valid_question,
                                              "question", s.id);
  if (s.answers[candidate].cols() != c.d_text)
    fail("score_candidate: sample '", s.id, "' answer ", candidate, " width ",
         s.answers[candidate].cols(), " does not match text width ", c.d_text);
  detail::MaskedSeq cand = detail::encode_stream(tape, store, p.enc_answer, c,
                                                 s.answers[candidate],
                                                 s.valid_answers[candidate],
                                                 "answer", s.id);
  if (trace != nullptr) {
    trace->text_enc = xt.seq.value();
    trace->audio_enc = xa.seq.value();
    trace->video_enc = xv.seq.value();
    trace->question_enc = q.seq.value();
    trace->answer_enc = cand.seq.value();
  }

  detail::MaskedSeq u = fuse_modalities(tape, store, p, c, xt, xa, xv, trace);
  detail::MaskedSeq h = align_context_query(tape, store, p, c, u, q, cand, trace);
  Var h_hat = self_align(tape, store, p.w_r, h.seq, h.valid, trace);
  Var logit = detail::scorer_ffn(tape, store, p.scorer, h_hat);
  if (trace != nullptr) trace->score = logit.value()[0];
  return logit;
}

// Mean over candidates of the binary cross-entropy between sigmoid(logit) and
// the correctness label.
inline Var sample_loss(Tape& tape, ParameterStore& store, const ModelParams& p,
                       const ModelConfig& c, const Sample& s) {
  if (s.answers.empty())
    fail("sample_loss: sample '", s.id, "' has no labeled candidates");
  Var total;
  for (std::size_t k = 0; k < s.answers.size(); ++k) {
    Var logit = score_candidate(tape, store, p, c, s, k);
    Var term = bce_with_logits(logit, static_cast<double>(s.labels[k]));
    total = k == 0 ? term : add(total, term);
  }
  return scale(total, 1.0 / static_cast<double>(s.answers.size()));
}

// Argmax with ties broken toward the lowest index.
inline int argmax_lowest(std::span<const double> logits) {
  if (logits.empty()) fail("argmax_lowest: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

inline std::vector<double> candidate_logits(ParameterStore& store,
                                            const ModelParams& p,
                                            const ModelConfig& c, const Sample& s) {
  std::vector<double> logits(s.answers.size());
  for (std::size_t k = 0; k < s.answers.size(); ++k) {
    Tape tape;
    logits[k] = score_candidate(tape, store, p, c, s, k).value()[0];
  }
  return logits;
}

namespace detail {
inline int predict_n(ParameterStore& store, const ModelParams& p,
                     const ModelConfig& c, const Sample& s, std::size_t expected,
                     const char* task) {
  if (s.answers.size() != expected)
    fail(task, ": sample '", s.id, "' has ", s.answers.size(),
         " candidates, expected ", expected);
  const std::vector<double> logits = candidate_logits(store, p, c, s);
  return argmax_lowest(logits);
}
}  // namespace detail

inline int predict_a2(ParameterStore& store, const ModelParams& p,
                      const ModelConfig& c, const Sample& s) {
  return detail::predict_n(store, p, c, s, 2, "predict_a2");
}

inline int predict_a4(ParameterStore& store, const ModelParams& p,
                      const ModelConfig& c, const Sample& s) {
  return detail::predict_n(store, p, c, s, 4, "predict_a4");
}

}  // namespace mcqa
