#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mcqa/adam.hpp"
#include "mcqa/checkpoint.hpp"
#include "mcqa/rng.hpp"
#include "mcqa/synth.hpp"
#include "mcqa/trainer.hpp"

using namespace mcqa;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mcqa-trainer-" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

template <typename F>
std::string thrown_message(F&& f) {
  try {
    f();
  } catch (const McqaError& e) {
    return e.what();
  }
  return "";
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// config matching the miniature synthetic feature widths
ModelConfig mini_config() {
  ModelConfig c;
  c.d_text = 4;
  c.d_audio = 3;
  c.d_video = 4;
  c.h_text = 3;
  c.h_audio = 2;
  c.h_video = 3;
  c.h_query = 2;
  c.h_fusion = 3;
  c.h_final = 3;
  c.d_att = 3;
  c.d_ffn = 4;
  c.seq_len = 4;
  return c;
}

SynthConfig mini_synth(std::uint64_t seed, std::size_t train, std::size_t val) {
  SynthConfig s;
  s.seed = seed;
  s.train_samples = train;
  s.val_samples = val;
  s.seq_len = 4;
  s.d_text = 4;
  s.d_audio = 3;
  s.d_video = 4;
  s.noise_sigma = 0.1;
  return s;
}

bool stores_bitwise_equal(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a.name(p) != b.name(p)) return false;
    if (!bitwise_equal(a.value(p), b.value(p))) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("trainer-cli") {

TEST_CASE("first adam step follows the bias-corrected hand formula") {
  ParameterStore store;
  const std::size_t x = store.add("x", Tensor::of({1.0, -2.0, 0.5, 100.0}));
  const Tensor before = store.value(x);
  const Tensor g = Tensor::of({0.3, -1.7, 2e-6, 40.0});
  store.grad(x) = g;
  AdamState adam;
  adam_step(store, adam);
  CHECK(adam.step == 1);
  for (std::size_t i = 0; i < 4; ++i) {
    const double expected = before[i] - adam.lr * g[i] / (std::abs(g[i]) + adam.eps);
    CHECK(std::abs(store.value(x)[i] - expected) <= 1e-12);
  }
  // gradients are zeroed after the step
  for (std::size_t i = 0; i < 4; ++i) CHECK(store.grad(x)[i] == 0.0);
}

TEST_CASE("zero gradients and zero learning rate leave parameters unchanged") {
  Rng rng(4);
  ParameterStore store;
  Tensor init = Tensor::vector(6);
  for (std::size_t i = 0; i < 6; ++i) init[i] = rng.uniform(-1.0, 1.0);
  const std::size_t x = store.add("x", init);

  AdamState adam;
  adam_step(store, adam);  // zero gradient
  CHECK(bitwise_equal(store.value(x), init));

  AdamState frozen;
  frozen.lr = 0.0;
  for (std::size_t i = 0; i < 6; ++i) store.grad(x)[i] = rng.uniform(-2.0, 2.0);
  adam_step(store, frozen);
  CHECK(bitwise_equal(store.value(x), init));
}

TEST_CASE("adam rejects a mis-shaped gradient naming the parameter") {
  ParameterStore store;
  (void)store.add("fine", Tensor::vector(3));
  const std::size_t bad = store.add("broken", Tensor::vector(3));
  store.grad(bad) = Tensor::vector(2);
  AdamState adam;
  const std::string msg = thrown_message([&] { adam_step(store, adam); });
  CHECK(msg.find("'broken'") != std::string::npos);
}

TEST_CASE("two half-batches with gradient accumulation equal one full batch") {
  Rng rng(5);
  const auto build_store = [&](std::uint64_t seed) {
    ParameterStore store;
    Rng r(seed);
    Tensor x = Tensor::vector(4);
    for (std::size_t i = 0; i < 4; ++i) x[i] = r.uniform(-1.0, 1.0);
    store.add("x", x);
    return store;
  };
  std::vector<Tensor> targets;
  for (int i = 0; i < 4; ++i) {
    Tensor c = Tensor::vector(4);
    for (std::size_t j = 0; j < 4; ++j) c[j] = rng.uniform(-1.0, 1.0);
    targets.push_back(c);
  }
  const auto accumulate = [&](ParameterStore& store, int from, int to) {
    for (int i = from; i < to; ++i) {
      Tape tape;
      Var x = tape.param(store, 0);
      Var d = sub(x, tape.constant(targets[static_cast<std::size_t>(i)]));
      Var loss = sum(mul(d, d));
      tape.backward(loss, store, 0.25);  // mean over the 4-sample batch
    }
  };

  ParameterStore full = build_store(11);
  accumulate(full, 0, 4);
  AdamState adam_full;
  adam_step(full, adam_full);

  ParameterStore split = build_store(11);
  accumulate(split, 0, 2);
  accumulate(split, 2, 4);
  AdamState adam_split;
  adam_step(split, adam_split);

  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(full.value(0)[i] - split.value(0)[i]) <= 1e-12);
}

TEST_CASE("evaluation accuracy matches an independent recount exactly") {
  // 10,000 synthetic prediction records from a uniform-random scorer
  Rng rng(6);
  std::vector<PredictionRecord> records(10000);
  for (std::size_t i = 0; i < records.size(); ++i) {
    PredictionRecord& r = records[i];
    r.sample_id = "s" + std::to_string(i);
    r.logits.resize(4);
    for (double& v : r.logits) v = rng.uniform(-1.0, 1.0);
    r.predicted = argmax_lowest(r.logits);
    r.correct = static_cast<int>(rng.below(4));
  }
  const double accuracy = accuracy_from_records(records);

  std::size_t hits = 0;
  for (const PredictionRecord& r : records)
    if (r.predicted == r.correct) ++hits;
  const double recount = static_cast<double>(hits) / 10000.0;
  CHECK(accuracy == recount);  // exact, not approximate

  // uniform-random A4 scorer sits near 0.25
  CHECK(accuracy >= 0.23);
  CHECK(accuracy <= 0.27);
}

TEST_CASE("a zero-parameter model predicts index 0 and scores all-correct sets") {
  const ModelConfig c = mini_config();
  ParameterStore store;
  const ModelParams params = init_model_params(store, c, 3);
  for (std::size_t p = 0; p < store.size(); ++p) store.value(p).fill(0.0);

  std::vector<Sample> samples;
  for (int i = 0; i < 5; ++i) {
    Sample s = make_gradcheck_sample(c, 100 + static_cast<std::uint64_t>(i));
    s.id = "s" + std::to_string(i);
    samples.push_back(s);  // label 1 sits at index 0
  }
  const EvalResult r = evaluate_samples(store, params, c, samples, Task::a2);
  CHECK(r.accuracy == 1.0);
  REQUIRE(r.records.size() == 5);
  CHECK(r.records[0].sample_id == "s0");
  for (const PredictionRecord& rec : r.records) CHECK(rec.predicted == 0);

  const std::string msg = thrown_message(
      [&] { (void)evaluate_samples(store, params, c, samples, Task::a4); });
  CHECK(msg.find("task expects 4") != std::string::npos);
}

TEST_CASE("loss on a single repeated sample decreases over 50 steps") {
  const ModelConfig c = mini_config();
  ParameterStore store;
  const ModelParams params = init_model_params(store, c, 7);
  const Sample s = make_gradcheck_sample(c, 7);
  AdamState adam;
  adam.lr = 0.005;

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    Var loss = sample_loss(tape, store, params, c, s);
    if (step == 0) first = loss.value()[0];
    last = loss.value()[0];
    tape.backward(loss, store);
    adam_step(store, adam);
  }
  CHECK(last < first);
  CHECK(last < 0.5 * first);
}

TEST_CASE("training runs are deterministic and checkpoints round trip") {
  TempDir dir("determinism");
  const SynthConfig synth = mini_synth(21, 10, 4);
  generate_synthetic(synth, dir.path / "data");

  TrainRun run;
  run.config = mini_config();
  run.seed = 5;
  run.epochs = 2;
  run.batch_size = 4;
  run.lr = 0.003;
  run.manifest_path = dir.path / "data" / "manifest.txt";
  run.checkpoint_path = dir.path / "a.ckpt";
  run.metrics_path = dir.path / "a.metrics";

  const TrainResult ra = train(run);
  run.checkpoint_path = dir.path / "b.ckpt";
  run.metrics_path = dir.path / "b.metrics";
  const TrainResult rb = train(run);

  CHECK(ra.log == rb.log);
  CHECK(ra.metrics.size() == 2);
  REQUIRE(ra.metrics[0].val_accuracy.has_value());
  CHECK(file_bytes(dir.path / "a.ckpt") == file_bytes(dir.path / "b.ckpt"));
  CHECK(file_bytes(dir.path / "a.metrics") == file_bytes(dir.path / "b.metrics"));

  // the metric log has one record per epoch in the documented format
  std::istringstream lines(ra.log);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    CHECK(line.rfind("epoch=", 0) == 0);
    CHECK(line.find("train_loss=") != std::string::npos);
    CHECK(line.find("val_accuracy=") != std::string::npos);
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("a zero-epoch run checkpoints the untouched initialization") {
  TempDir dir("zero-epoch");
  generate_synthetic(mini_synth(22, 4, 0), dir.path / "data");

  TrainRun run;
  run.config = mini_config();
  run.seed = 9;
  run.epochs = 0;
  run.manifest_path = dir.path / "data" / "manifest.txt";
  run.checkpoint_path = dir.path / "init.ckpt";
  (void)train(run);

  const Checkpoint ckpt = load_checkpoint(dir.path / "init.ckpt");
  CHECK(ckpt.epochs_completed == 0);
  ParameterStore fresh;
  (void)init_model_params(fresh, run.config, run.seed);
  ParameterStore loaded;
  (void)init_model_params(loaded, run.config, run.seed);
  apply_checkpoint_to(ckpt, loaded);
  CHECK(stores_bitwise_equal(fresh, loaded));
}

TEST_CASE("train k, save, load, train k equals train 2k bit-exactly") {
  TempDir dir("resume");
  generate_synthetic(mini_synth(23, 8, 0), dir.path / "data");

  TrainRun base;
  base.config = mini_config();
  base.seed = 13;
  base.batch_size = 4;
  base.lr = 0.002;
  base.manifest_path = dir.path / "data" / "manifest.txt";

  TrainRun two_k = base;
  two_k.epochs = 4;
  two_k.checkpoint_path = dir.path / "straight.ckpt";
  (void)train(two_k);

  TrainRun first_half = base;
  first_half.epochs = 2;
  first_half.checkpoint_path = dir.path / "half.ckpt";
  (void)train(first_half);

  TrainRun second_half = base;
  second_half.epochs = 4;
  second_half.resume_path = dir.path / "half.ckpt";
  second_half.checkpoint_path = dir.path / "resumed.ckpt";
  const TrainResult resumed = train(second_half);
  CHECK(resumed.metrics.size() == 2);  // epochs 3 and 4 only
  CHECK(resumed.metrics.front().epoch == 3);

  CHECK(file_bytes(dir.path / "straight.ckpt") ==
        file_bytes(dir.path / "resumed.ckpt"));
}

TEST_CASE("checkpoints preserve every bit pattern including weird doubles") {
  TempDir dir("bits");
  const ModelConfig c = mini_config();
  ParameterStore store;
  (void)init_model_params(store, c, 31);
  store.value(0)[0] = -0.0;
  store.value(0)[1] = 4.9406564584124654e-324;  // smallest subnormal
  store.value(0)[2] = -4.9406564584124654e-324;
  store.value(1)[0] = 1e-308;
  AdamState adam;
  adam.step = 17;
  store.adam_m(0)[0] = -0.0;
  store.adam_v(0)[0] = 2.5e-310;

  const fs::path p = dir.path / "weird.ckpt";
  save_checkpoint(make_checkpoint(c, 31, 3, store, &adam), p);
  const Checkpoint back = load_checkpoint(p);
  CHECK(back.epochs_completed == 3);
  CHECK(back.adam.step == 17);
  ParameterStore restored;
  (void)init_model_params(restored, c, 31);
  apply_checkpoint_to(back, restored);
  CHECK(stores_bitwise_equal(store, restored));
  CHECK(bitwise_equal(store.adam_m(0), restored.adam_m(0)));
  CHECK(bitwise_equal(store.adam_v(0), restored.adam_v(0)));

  // decode-encode round trip is byte-identical
  CHECK(encode_checkpoint(back) == file_bytes(p));
}

TEST_CASE("corrupt, truncated and mismatched checkpoints are rejected") {
  TempDir dir("badckpt");
  const ModelConfig c = mini_config();
  ParameterStore store;
  (void)init_model_params(store, c, 41);
  const fs::path p = dir.path / "good.ckpt";
  save_checkpoint(make_checkpoint(c, 41, 1, store, nullptr), p);
  const std::string bytes = file_bytes(p);

  CHECK(thrown_message([&] {
          (void)decode_checkpoint(bytes.substr(0, bytes.size() / 2), "t");
        }).find("truncated") != std::string::npos);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK(thrown_message([&] {
          (void)decode_checkpoint(wrong_magic, "m");
        }).find("not a checkpoint") != std::string::npos);

  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  CHECK(thrown_message([&] {
          (void)decode_checkpoint(wrong_version, "v");
        }).find("unknown version") != std::string::npos);

  // a checkpoint from a different configuration names the first mismatch
  ModelConfig other = c;
  other.h_text = 4;
  ParameterStore other_store;
  (void)init_model_params(other_store, other, 41);
  const Checkpoint good = load_checkpoint(p);
  const std::string msg =
      thrown_message([&] { apply_checkpoint_to(good, other_store); });
  CHECK(msg.find("enc_text") != std::string::npos);
}

TEST_CASE("training rejects an empty training split") {
  TempDir dir("empty-split");
  generate_synthetic(mini_synth(24, 0, 3), dir.path / "data");
  TrainRun run;
  run.config = mini_config();
  run.epochs = 1;
  run.manifest_path = dir.path / "data" / "manifest.txt";
  CHECK(thrown_message([&] { (void)train(run); }).find("empty training split") !=
        std::string::npos);
}

TEST_CASE("resuming under a different configuration is rejected") {
  TempDir dir("resume-mismatch");
  generate_synthetic(mini_synth(25, 4, 0), dir.path / "data");
  TrainRun run;
  run.config = mini_config();
  run.seed = 3;
  run.epochs = 1;
  run.batch_size = 2;
  run.manifest_path = dir.path / "data" / "manifest.txt";
  run.checkpoint_path = dir.path / "one.ckpt";
  (void)train(run);

  // shape-changing mismatch names the first offending tensor
  TrainRun other = run;
  other.config.d_ffn = 8;
  other.epochs = 2;
  other.resume_path = dir.path / "one.ckpt";
  const std::string msg = thrown_message([&] { (void)train(other); });
  CHECK(msg.find("scorer.w1") != std::string::npos);

  // flag-only mismatch keeps every shape but is still rejected
  TrainRun flag = run;
  flag.config.mask_padding = false;
  flag.epochs = 2;
  flag.resume_path = dir.path / "one.ckpt";
  const std::string flag_msg = thrown_message([&] { (void)train(flag); });
  CHECK(flag_msg.find("different ModelConfig") != std::string::npos);
}

TEST_CASE("file-level evaluation matches the in-memory path") {
  TempDir dir("eval-files");
  generate_synthetic(mini_synth(26, 6, 0), dir.path / "data");
  SynthConfig test_synth = mini_synth(26, 0, 0);
  test_synth.test_samples = 5;
  generate_synthetic(test_synth, dir.path / "data2");

  TrainRun run;
  run.config = mini_config();
  run.seed = 8;
  run.epochs = 1;
  run.batch_size = 3;
  run.manifest_path = dir.path / "data" / "manifest.txt";
  run.checkpoint_path = dir.path / "m.ckpt";
  (void)train(run);

  const EvalResult r = evaluate(dir.path / "m.ckpt",
                                dir.path / "data2" / "manifest.txt", Task::a2);
  CHECK(r.records.size() == 5);
  std::size_t hits = 0;
  for (const PredictionRecord& rec : r.records)
    if (rec.predicted == rec.correct) ++hits;
  CHECK(r.accuracy == static_cast<double>(hits) / 5.0);

  CHECK(thrown_message([&] {
          (void)evaluate(dir.path / "m.ckpt", dir.path / "data2" / "manifest.txt",
                         Task::a2, "val");
        }).find("no samples") != std::string::npos);
}

TEST_CASE("the model gradcheck report lists every parameter exactly once") {
  ModelConfig c = mini_config();
  c.seq_len = 2;
  const ModelGradCheck check = model_gradcheck(c, 2);
  ParameterStore reference;
  (void)init_model_params(reference, c, 2);
  REQUIRE(check.report.params.size() == reference.size());
  std::set<std::string> names;
  for (const GradCheckEntry& e : check.report.params) names.insert(e.name);
  CHECK(names.size() == reference.size());
  for (std::size_t p = 0; p < reference.size(); ++p)
    CHECK(names.count(reference.name(p)) == 1);
  CHECK(check.report.pass(1e-4));
}

}  // TEST_SUITE
