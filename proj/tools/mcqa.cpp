// Command-line front end: train, eval, gradcheck, synth-gen and inspect
// subcommands over the mcqa library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcqa/synth.hpp"
#include "mcqa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

mcqa::ModelConfig config_from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) mcqa::fail("config: cannot open '", path.string(), "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    mcqa::fail("config: '", path.string(), "' is not valid JSON: ", e.what());
  }
  mcqa::ModelConfig c;
  const auto take_size = [&](const char* key, std::size_t& field) {
    if (doc.contains(key)) {
      if (!doc[key].is_number_unsigned() || doc[key].get<std::uint64_t>() == 0)
        mcqa::fail("config: '", key, "' must be a positive integer");
      field = doc[key].get<std::size_t>();
      doc.erase(key);
    }
  };
  const auto take_bool = [&](const char* key, bool& field) {
    if (doc.contains(key)) {
      if (!doc[key].is_boolean()) mcqa::fail("config: '", key, "' must be a boolean");
      field = doc[key].get<bool>();
      doc.erase(key);
    }
  };
  take_size("d_text", c.d_text);
  take_size("d_audio", c.d_audio);
  take_size("d_video", c.d_video);
  take_size("h_text", c.h_text);
  take_size("h_audio", c.h_audio);
  take_size("h_video", c.h_video);
  take_size("h_query", c.h_query);
  take_size("h_fusion", c.h_fusion);
  take_size("h_final", c.h_final);
  take_size("d_att", c.d_att);
  take_size("d_ffn", c.d_ffn);
  take_size("seq_len", c.seq_len);
  take_bool("ablate_fusion_coattention", c.ablate_fusion_coattention);
  take_bool("ablate_context_query_coattention", c.ablate_context_query_coattention);
  take_bool("mask_padding", c.mask_padding);
  if (!doc.empty())
    mcqa::fail("config: unknown key '", doc.begin().key(), "' in '", path.string(),
               "'");
  c.validate();
  return c;
}

void apply_ablation(mcqa::ModelConfig& config, const std::string& ablate) {
  if (ablate == "none" || ablate.empty()) {
    config.ablate_fusion_coattention = false;
    config.ablate_context_query_coattention = false;
  } else if (ablate == "fusion") {
    config.ablate_fusion_coattention = true;
  } else if (ablate == "context-query") {
    config.ablate_context_query_coattention = true;
  } else {
    mcqa::fail("--ablate must be fusion, context-query or none, got '", ablate, "'");
  }
}

void check_manifest_task(const mcqa::Manifest& manifest, const std::string& task) {
  if (task.empty() || manifest.entries.empty()) return;
  const std::size_t want = mcqa::task_candidates(mcqa::task_from_string(task));
  if (manifest.candidate_count() != want)
    mcqa::fail("manifest has ", manifest.candidate_count(),
               " candidates per sample but task ", task, " expects ", want);
}

int run_train(const fs::path& manifest, const fs::path& val_manifest,
              const fs::path& config_path, std::uint64_t seed, std::size_t epochs,
              std::size_t batch_size, double lr, const std::string& task,
              const std::string& ablate, const fs::path& checkpoint,
              const fs::path& resume, const fs::path& metrics_out,
              double stop_at_accuracy) {
  mcqa::TrainRun run;
  if (!config_path.empty()) run.config = config_from_json_file(config_path);
  apply_ablation(run.config, ablate);
  run.seed = seed;
  run.epochs = epochs;
  run.batch_size = batch_size;
  run.lr = lr;
  run.manifest_path = manifest;
  run.val_manifest_path = val_manifest;
  run.checkpoint_path = checkpoint;
  run.resume_path = resume;
  run.metrics_path = metrics_out;
  run.stop_at_accuracy = stop_at_accuracy;

  check_manifest_task(mcqa::load_manifest(manifest), task);
  const mcqa::TrainResult result = mcqa::train(run, &std::cout);
  std::cout << "epochs_completed=" << result.epochs_completed << "\n";
  if (!checkpoint.empty()) std::cout << "checkpoint=" << checkpoint.string() << "\n";
  return 0;
}

int run_eval(const fs::path& checkpoint, const fs::path& manifest,
             std::string task, const std::string& split,
             const fs::path& predictions_out) {
  const mcqa::Manifest m = mcqa::load_manifest(manifest);
  if (task.empty())
    task = m.candidate_count() == 4 ? "a4" : "a2";
  check_manifest_task(m, task);
  const mcqa::EvalResult result =
      mcqa::evaluate(checkpoint, manifest, mcqa::task_from_string(task), split);

  std::string records;
  for (const mcqa::PredictionRecord& r : result.records) {
    records += "sample=" + r.sample_id;
    records += " predicted=" + std::to_string(r.predicted);
    records += " correct=" + std::to_string(r.correct);
    records += " logits=";
    char buf[64];
    for (std::size_t k = 0; k < r.logits.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s%.17g", k ? "," : "", r.logits[k]);
      records += buf;
    }
    records += "\n";
  }
  if (!predictions_out.empty()) {
    std::ofstream out(predictions_out, std::ios::trunc);
    if (!out)
      mcqa::fail("eval: cannot write predictions to '", predictions_out.string(),
                 "'");
    out << records;
  } else {
    std::cout << records;
  }
  std::printf("samples=%zu\n", result.records.size());
  std::printf("accuracy=%.17g\n", result.accuracy);
  return 0;
}

int run_gradcheck(const fs::path& config_path, std::uint64_t seed, double eps) {
  const mcqa::ModelConfig config = config_path.empty()
                                       ? mcqa::tiny_model_config()
                                       : config_from_json_file(config_path);
  const mcqa::ModelGradCheck check = mcqa::model_gradcheck(config, seed, eps);
  for (const mcqa::GradCheckEntry& e : check.report.params)
    std::printf("group=%s max_rel_err=%.6e\n", e.name.c_str(), e.max_rel_err);
  const bool pass = check.report.pass(1e-4);
  std::printf("entries=%zu groups=%zu\n", check.parameter_entries,
              check.report.params.size());
  std::printf("max_rel_err=%.6e threshold=1e-4 result=%s\n",
              check.report.max_rel_err, pass ? "pass" : "fail");
  return pass ? 0 : 2;
}

int run_synth_gen(const fs::path& out_dir, const mcqa::SynthConfig& cfg) {
  const mcqa::Manifest m = mcqa::generate_synthetic(cfg, out_dir);
  std::printf("manifest=%s\n", (out_dir / "manifest.txt").string().c_str());
  std::printf("samples=%zu candidates=%zu\n", m.entries.size(),
              m.candidate_count());
  return 0;
}

int run_inspect(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) mcqa::fail("inspect: cannot open '", path.string(), "'");
  char head[17] = {};
  probe.read(head, 16);
  const std::string prefix(head, static_cast<std::size_t>(probe.gcount()));
  probe.close();

  if (prefix.rfind("MMF", 0) == 0) {
    const mcqa::Tensor m = mcqa::read_feature_matrix(path);
    double lo = m[0], hi = m[0], total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      lo = std::min(lo, m[i]);
      hi = std::max(hi, m[i]);
      total += m[i];
    }
    std::printf("feature-matrix rows=%zu cols=%zu min=%.6g max=%.6g mean=%.6g\n",
                m.rows(), m.cols(), lo, hi, total / static_cast<double>(m.size()));
    return 0;
  }
  if (prefix.rfind("MCQACKPT", 0) == 0) {
    const mcqa::Checkpoint ckpt = mcqa::load_checkpoint(path);
    std::printf("checkpoint seed=%llu epochs_completed=%u optimizer=%s\n",
                static_cast<unsigned long long>(ckpt.seed), ckpt.epochs_completed,
                ckpt.has_optimizer ? "yes" : "no");
    const mcqa::ModelConfig& c = ckpt.config;
    std::printf(
        "config d=(%zu,%zu,%zu) h=(%zu,%zu,%zu) h_query=%zu h_fusion=%zu "
        "h_final=%zu d_att=%zu d_ffn=%zu seq_len=%zu ablate=(%d,%d) mask=%d\n",
        c.d_text, c.d_audio, c.d_video, c.h_text, c.h_audio, c.h_video, c.h_query,
        c.h_fusion, c.h_final, c.d_att, c.d_ffn, c.seq_len,
        c.ablate_fusion_coattention ? 1 : 0,
        c.ablate_context_query_coattention ? 1 : 0, c.mask_padding ? 1 : 0);
    std::size_t entries = 0;
    for (std::size_t p = 0; p < ckpt.store.size(); ++p)
      entries += ckpt.store.value(p).size();
    std::printf("tensors=%zu parameter_entries=%zu\n", ckpt.store.size(), entries);
    for (std::size_t p = 0; p < ckpt.store.size(); ++p)
      std::printf("  %s %s\n", ckpt.store.name(p).c_str(),
                  ckpt.store.value(p).shape_str().c_str());
    return 0;
  }
  if (prefix.rfind("MCQA-MANIFEST-V1", 0) == 0) {
    const mcqa::Manifest m = mcqa::load_manifest(path);
    std::printf("manifest samples=%zu candidates=%zu train=%zu val=%zu test=%zu\n",
                m.entries.size(), m.candidate_count(), m.split("train").size(),
                m.split("val").size(), m.split("test").size());
    return 0;
  }
  mcqa::fail("inspect: '", path.string(),
             "' is not a feature matrix, checkpoint or manifest");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCQA multimodal question answering trainer and tools"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a manifest");
  fs::path train_manifest, val_manifest, train_config, train_ckpt, train_resume,
      metrics_out;
  std::uint64_t train_seed = 0;
  std::size_t epochs = 100, batch_size = 32;
  double lr = 0.001, stop_at = 0.0;
  std::string train_task, ablate = "none";
  train_cmd->add_option("--manifest", train_manifest, "training manifest")
      ->required();
  train_cmd->add_option("--val-manifest", val_manifest,
                        "manifest providing the validation split");
  train_cmd->add_option("--config", train_config, "model configuration JSON");
  train_cmd->add_option("--seed", train_seed, "initialization and shuffle seed");
  train_cmd->add_option("--epochs", epochs, "training epochs (default 100)");
  train_cmd->add_option("--batch-size", batch_size, "batch size (default 32)");
  train_cmd->add_option("--lr", lr, "Adam learning rate (default 0.001)");
  train_cmd->add_option("--task", train_task, "a2 or a4 (validates the manifest)");
  train_cmd->add_option("--ablate", ablate, "fusion | context-query | none");
  train_cmd->add_option("--checkpoint", train_ckpt, "checkpoint output path");
  train_cmd->add_option("--resume-from", train_resume, "checkpoint to resume");
  train_cmd->add_option("--metrics-out", metrics_out, "metric log file");
  train_cmd->add_option("--stop-at-accuracy", stop_at,
                        "stop once validation accuracy reaches this (0 = off)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path eval_ckpt, eval_manifest, predictions_out;
  std::string eval_task, split = "test";
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest")
      ->required();
  eval_cmd->add_option("--task", eval_task, "a2 or a4 (default: from manifest)");
  eval_cmd->add_option("--split", split, "split tag to evaluate (default test)");
  eval_cmd->add_option("--predictions-out", predictions_out,
                       "write per-sample records here instead of stdout");

  // gradcheck
  auto* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  fs::path grad_config;
  std::uint64_t grad_seed = 1;
  double grad_eps = 1e-5;
  grad_cmd->add_option("--config", grad_config,
                       "model configuration JSON (default: built-in tiny)");
  grad_cmd->add_option("--seed", grad_seed, "seed for parameters and sample");
  grad_cmd->add_option("--eps", grad_eps, "finite-difference step (default 1e-5)");

  // synth-gen
  auto* synth_cmd =
      app.add_subcommand("synth-gen", "generate the planted-XOR synthetic task");
  fs::path out_dir;
  mcqa::SynthConfig synth;
  synth.train_samples = 2000;
  synth.val_samples = 500;
  synth_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--train-samples", synth.train_samples, "default 2000");
  synth_cmd->add_option("--val-samples", synth.val_samples, "default 500");
  synth_cmd->add_option("--test-samples", synth.test_samples, "default 0");
  synth_cmd->add_option("--length", synth.seq_len, "sequence length (default 8)");
  synth_cmd->add_option("--candidates", synth.candidates, "2 or 4 (default 2)");
  synth_cmd->add_option("--noise", synth.noise_sigma, "noise sigma (default 0.1)");
  synth_cmd->add_option("--magnitude", synth.magnitude, "spike size (default 1)");
  synth_cmd->add_option("--d-text", synth.d_text, "text width (default 6)");
  synth_cmd->add_option("--d-audio", synth.d_audio, "audio width (default 4)");
  synth_cmd->add_option("--d-video", synth.d_video, "video width (default 6)");

  // inspect
  auto* inspect_cmd =
      app.add_subcommand("inspect", "describe a feature/checkpoint/manifest file");
  fs::path inspect_path;
  inspect_cmd->add_option("path", inspect_path, "file to inspect")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed())
      return run_train(train_manifest, val_manifest, train_config, train_seed,
                       epochs, batch_size, lr, train_task, ablate, train_ckpt,
                       train_resume, metrics_out, stop_at);
    if (eval_cmd->parsed())
      return run_eval(eval_ckpt, eval_manifest, eval_task, split, predictions_out);
    if (grad_cmd->parsed()) return run_gradcheck(grad_config, grad_seed, grad_eps);
    if (synth_cmd->parsed()) return run_synth_gen(out_dir, synth);
    if (inspect_cmd->parsed()) return run_inspect(inspect_path);
  } catch (const mcqa::McqaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
