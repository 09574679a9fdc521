#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcqa/error.hpp"
#include "mcqa/feature_file.hpp"
#include "mcqa/manifest.hpp"
#include "mcqa/rng.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// Planted cross-modal XOR task. Per sample, two bits a and b are drawn; a is
// embedded as a signed spike (+/- magnitude) in coordinate 0 of one uniformly
// random text timestep, b likewise in the video stream. Audio is pure noise
// and the question stream is constant. The correct answer's matrix carries
// the bit a XOR b as a signed value in coordinate 0 of every timestep,
// distractors carry the complement, and Gaussian noise sigma is added
// everywhere. Neither text alone nor video alone determines the label.
struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::size_t test_samples = 0;
  std::size_t seq_len = 8;
  std::size_t d_text = 6;
  std::size_t d_audio = 4;
  std::size_t d_video = 6;
  std::size_t candidates = 2;
  double noise_sigma = 0.1;
  double magnitude = 1.0;

  void validate() const {
    if (noise_sigma < 0.0) fail("SynthConfig: noise_sigma must be >= 0");
    if (d_text < 2 || d_audio < 2 || d_video < 2)
      fail("SynthConfig: feature widths must be >= 2");
    if (seq_len == 0) fail("SynthConfig: seq_len must be >= 1");
    if (candidates != 2 && candidates != 4)
      fail("SynthConfig: candidate count must be 2 or 4");
    if (magnitude <= 0.0) fail("SynthConfig: magnitude must be positive");
  }
};

namespace detail {

inline Tensor noise_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                           double sigma) {
  Tensor t = Tensor::matrix(rows, cols);
  if (sigma > 0.0)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sigma);
  return t;
}

}  // namespace detail

// Writes feature files under <out_dir>/features and the manifest to
// <out_dir>/manifest.txt. A pure function of the config: the same seed
// produces byte-identical files.
inline Manifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir / "features");

  Manifest manifest;
  manifest.base_dir = out_dir;

  const struct {
    const char* tag;
    std::size_t count;
    std::uint64_t stream;
  } splits[] = {{"train", cfg.train_samples, 1},
                {"val", cfg.val_samples, 2},
                {"test", cfg.test_samples, 3}};

  for (const auto& split : splits) {
    for (std::size_t i = 0; i < split.count; ++i) {
      Rng rng = Rng::derive(cfg.seed, split.stream, i);
      const int a = rng.bit();
      const int b = rng.bit();
      const std::size_t pos_a = static_cast<std::size_t>(rng.below(cfg.seq_len));
      const std::size_t pos_b = static_cast<std::size_t>(rng.below(cfg.seq_len));
      const int x = a ^ b;
      const std::size_t correct =
          static_cast<std::size_t>(rng.below(cfg.candidates));

      Tensor text = detail::noise_matrix(rng, cfg.seq_len, cfg.d_text,
                                         cfg.noise_sigma);
      text.at(pos_a, 0) += a == 1 ? cfg.magnitude : -cfg.magnitude;
      Tensor video = detail::noise_matrix(rng, cfg.seq_len, cfg.d_video,
                                          cfg.noise_sigma);
      video.at(pos_b, 0) += b == 1 ? cfg.magnitude : -cfg.magnitude;
      Tensor audio = detail::noise_matrix(rng, cfg.seq_len, cfg.d_audio,
                                          cfg.noise_sigma);
      Tensor question = detail::noise_matrix(rng, cfg.seq_len, cfg.d_text,
                                             cfg.noise_sigma);

      ManifestEntry e;
      e.id = std::string(split.tag) + "-" + std::to_string(i);
      e.split = split.tag;
      const std::string stem = "features/" + e.id;
      e.text = stem + "-text.mmf";
      e.audio = stem + "-audio.mmf";
      e.video = stem + "-video.mmf";
      e.question = stem + "-question.mmf";
      write_feature_matrix(out_dir / e.text, text);
      write_feature_matrix(out_dir / e.audio, audio);
      write_feature_matrix(out_dir / e.video, video);
      write_feature_matrix(out_dir / e.question, question);

      for (std::size_t k = 0; k < cfg.candidates; ++k) {
        const int bit = k == correct ? x : 1 - x;
        Tensor ans = detail::noise_matrix(rng, cfg.seq_len, cfg.d_text,
                                          cfg.noise_sigma);
        for (std::size_t t = 0; t < cfg.seq_len; ++t)
          ans.at(t, 0) += bit == 1 ? cfg.magnitude : -cfg.magnitude;
        const std::string path = stem + "-ans" + std::to_string(k) + ".mmf";
        write_feature_matrix(out_dir / path, ans);
        e.answers.emplace_back(path, k == correct ? 1 : 0);
      }
      manifest.entries.push_back(std::move(e));
    }
  }
  save_manifest(manifest, out_dir / "manifest.txt");
  return manifest;
}

}  // namespace mcqa
