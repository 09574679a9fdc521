#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mcqa/adam.hpp"
#include "mcqa/checkpoint.hpp"
#include "mcqa/gradcheck.hpp"
#include "mcqa/manifest.hpp"
#include "mcqa/model.hpp"
#include "mcqa/rng.hpp"
#include "mcqa/synth.hpp"

namespace mcqa {

enum class Task { a2, a4 };

inline std::size_t task_candidates(Task t) { return t == Task::a2 ? 2 : 4; }

inline Task task_from_string(const std::string& s) {
  if (s == "a2" || s == "A2") return Task::a2;
  if (s == "a4" || s == "A4") return Task::a4;
  fail("unknown task '", s, "', expected a2 or a4");
}

// ---------------------------------------------------------------------------
// evaluation

struct PredictionRecord {
  std::string sample_id;
  int predicted = 0;
  int correct = 0;
  std::vector<double> logits;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<PredictionRecord> records;  // sample order of the input
};

inline double accuracy_from_records(std::span<const PredictionRecord> records) {
  if (records.empty()) fail("accuracy_from_records: no prediction records");
  std::size_t hits = 0;
  for (const PredictionRecord& r : records)
    if (r.predicted == r.correct) ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline EvalResult evaluate_samples(ParameterStore& store, const ModelParams& params,
                                   const ModelConfig& config,
                                   std::span<const Sample> samples, Task task) {
  EvalResult result;
  result.records.reserve(samples.size());
  for (const Sample& s : samples) {
    if (s.candidate_count() != task_candidates(task))
      fail("evaluate: sample '", s.id, "' has ", s.candidate_count(),
           " candidates, task expects ", task_candidates(task));
    PredictionRecord rec;
    rec.sample_id = s.id;
    rec.logits = candidate_logits(store, params, config, s);
    rec.predicted = argmax_lowest(rec.logits);
    rec.correct = s.correct_index();
    result.records.push_back(std::move(rec));
  }
  result.accuracy = accuracy_from_records(result.records);
  return result;
}

inline EvalResult evaluate(const std::filesystem::path& checkpoint_path,
                           const std::filesystem::path& manifest_path, Task task,
                           const std::string& split = "test") {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ParameterStore store;
  const ModelParams params = init_model_params(store, ckpt.config, ckpt.seed);
  apply_checkpoint_to(ckpt, store);
  const Manifest manifest = load_manifest(manifest_path);
  const std::vector<Sample> samples =
      load_split_samples(manifest, split, ckpt.config);
  if (samples.empty())
    fail("evaluate: split '", split, "' of '", manifest_path.string(),
         "' has no samples");
  return evaluate_samples(store, params, ckpt.config, samples, task);
}

// ---------------------------------------------------------------------------
// training

struct TrainRun {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  std::filesystem::path manifest_path;            // train split source
  std::filesystem::path val_manifest_path;        // optional; val split source
  std::filesystem::path checkpoint_path;          // written when non-empty
  std::filesystem::path resume_path;              // optional
  std::filesystem::path metrics_path;             // optional copy of the log

  // Stop once validation accuracy reaches this value (0 disables; training
  // runs the full epoch budget by default).
  double stop_at_accuracy = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  std::uint32_t epochs_completed = 0;
  std::string log;  // the emitted metric lines
};

namespace detail {

inline std::string format_metric_line(const EpochMetrics& m) {
  char buf[128];
  std::string line = "epoch=" + std::to_string(m.epoch);
  std::snprintf(buf, sizeof(buf), " train_loss=%.17g", m.train_loss);
  line += buf;
  if (m.val_accuracy.has_value()) {
    std::snprintf(buf, sizeof(buf), " val_accuracy=%.17g", *m.val_accuracy);
    line += buf;
  }
  line += '\n';
  return line;
}

}  // namespace detail

// Deterministic training loop: per-epoch shuffle drawn from (seed, epoch),
// mean-loss batches, one Adam step per batch, single-threaded updates.
// Emits one metric record per epoch and writes a checkpoint at the end.
inline TrainResult train(const TrainRun& run, std::ostream* echo = nullptr) {
  run.config.validate();
  if (run.epochs > 0 && run.batch_size == 0) fail("train: batch size must be >= 1");

  const Manifest manifest = load_manifest(run.manifest_path);
  std::vector<Sample> train_samples =
      load_split_samples(manifest, "train", run.config);
  if (train_samples.empty()) fail("train: empty training split");

  std::vector<Sample> val_samples;
  if (!run.val_manifest_path.empty()) {
    const Manifest vm = load_manifest(run.val_manifest_path);
    val_samples = load_split_samples(vm, "val", run.config);
  } else {
    val_samples = load_split_samples(manifest, "val", run.config);
  }

  ParameterStore store;
  const ModelParams params = init_model_params(store, run.config, run.seed);
  AdamState adam;
  adam.lr = run.lr;
  adam.beta1 = run.beta1;
  adam.beta2 = run.beta2;
  adam.eps = run.adam_eps;

  std::uint32_t start_epoch = 0;
  if (!run.resume_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(run.resume_path);
    apply_checkpoint_to(ckpt, store);
    if (!(ckpt.config == run.config))
      fail("train: resume checkpoint was produced by a different ModelConfig");
    if (ckpt.has_optimizer) adam = ckpt.adam;
    start_epoch = ckpt.epochs_completed;
    if (start_epoch > run.epochs)
      fail("train: resume checkpoint already has ", start_epoch,
           " epochs, run asks for ", run.epochs);
  }

  TrainResult result;
  result.epochs_completed = start_epoch;

  std::vector<std::size_t> order(train_samples.size());
  Tape tape;
  for (std::size_t epoch = start_epoch + 1; epoch <= run.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::derive(run.seed, 0x5u, epoch);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += run.batch_size) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + run.batch_size);
      const double inv = 1.0 / static_cast<double>(batch_end - batch_start);
      for (std::size_t k = batch_start; k < batch_end; ++k) {
        tape.reset();
        Var loss = sample_loss(tape, store, params, run.config,
                               train_samples[order[k]]);
        loss_sum += loss.value()[0];
        tape.backward(loss, store, inv);
      }
      adam_step(store, adam);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(train_samples.size());
    if (!val_samples.empty())
      m.val_accuracy =
          evaluate_samples(store, params, run.config, val_samples,
                           val_samples.front().candidate_count() == 4 ? Task::a4
                                                                      : Task::a2)
              .accuracy;
    const std::string line = detail::format_metric_line(m);
    result.log += line;
    if (echo != nullptr) (*echo) << line << std::flush;
    result.metrics.push_back(m);
    result.epochs_completed = static_cast<std::uint32_t>(epoch);

    if (run.stop_at_accuracy > 0.0 && m.val_accuracy.has_value() &&
        *m.val_accuracy >= run.stop_at_accuracy)
      break;
  }

  if (!run.metrics_path.empty()) {
    std::ofstream out(run.metrics_path, std::ios::trunc);
    if (!out) fail("train: cannot write metric log '", run.metrics_path.string(), "'");
    out << result.log;
  }
  if (!run.checkpoint_path.empty())
    save_checkpoint(make_checkpoint(run.config, run.seed, result.epochs_completed,
                                    store, &adam),
                    run.checkpoint_path);
  return result;
}

// ---------------------------------------------------------------------------
// gradient verification of the full model

// Deterministic QA instance with values in [-1, 1] and deliberately uneven
// valid lengths so the masked paths are exercised.
inline Sample make_gradcheck_sample(const ModelConfig& config, std::uint64_t seed,
                                    std::size_t candidates = 2) {
  Rng rng = Rng::derive(seed, 0x6a11);
  const auto fill = [&](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  };
  const std::size_t L = config.seq_len;
  Sample s;
  s.id = "gradcheck";
  s.text = Tensor::matrix(L, config.d_text);
  s.audio = Tensor::matrix(L, config.d_audio);
  s.video = Tensor::matrix(L, config.d_video);
  s.question = Tensor::matrix(L, config.d_text);
  fill(s.text);
  fill(s.audio);
  fill(s.video);
  fill(s.question);
  s.valid_text = L;
  s.valid_audio = L > 1 ? L - 1 : L;
  s.valid_video = L;
  s.valid_question = L > 1 ? L - 1 : L;
  s.original_text = s.valid_text;
  s.original_audio = s.valid_audio;
  s.original_video = s.valid_video;
  s.original_question = s.valid_question;
  for (std::size_t k = 0; k < candidates; ++k) {
    Tensor ans = Tensor::matrix(L, config.d_text);
    fill(ans);
    s.answers.push_back(std::move(ans));
    s.valid_answers.push_back(k % 2 == 0 ? L : (L > 1 ? L - 1 : L));
    s.original_answers.push_back(s.valid_answers.back());
    s.labels.push_back(k == 0 ? 1 : 0);
  }
  return s;
}

struct ModelGradCheck {
  GradCheckReport report;
  std::size_t parameter_entries = 0;
};

// Central finite differences of the full QA loss against the analytic
// gradients, for every parameter entry, reported per parameter group.
inline ModelGradCheck model_gradcheck(const ModelConfig& config, std::uint64_t seed,
                                      double eps = 1e-5) {
  ParameterStore store;
  const ModelParams params = init_model_params(store, config, seed);
  const Sample sample = make_gradcheck_sample(config, seed);
  ModelGradCheck out;
  out.parameter_entries = store.total_parameter_count();
  out.report = finite_difference_check(
      [&](Tape& tape, ParameterStore& st) {
        return sample_loss(tape, st, params, config, sample);
      },
      store, eps);
  return out;
}

}  // namespace mcqa
