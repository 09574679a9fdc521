#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mcqa/error.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// One QA instance in memory: aligned text/audio/video feature sequences, the
// question sequence and the candidate answers with 0/1 correctness labels.
// All matrices are padded or truncated to one common length; valid_* record
// how many leading rows are real and original_* the pre-padding lengths.
struct Sample {
  std::string id;
  Tensor text, audio, video, question;
  std::vector<Tensor> answers;
  std::vector<int> labels;

  std::size_t valid_text = 0, valid_audio = 0, valid_video = 0, valid_question = 0;
  std::vector<std::size_t> valid_answers;
  std::size_t original_text = 0, original_audio = 0, original_video = 0,
              original_question = 0;
  std::vector<std::size_t> original_answers;

  std::size_t candidate_count() const { return answers.size(); }

  int correct_index() const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == 1) return static_cast<int>(i);
    fail("Sample '", id, "': no candidate labeled correct");
  }
};

// Keep the first min(T, target_len) rows, zero-fill the rest; returns the new
// matrix and the number of valid rows.
inline std::pair<Tensor, std::size_t> pad_or_truncate(const Tensor& m,
                                                      std::size_t target_len) {
  if (!m.is_matrix()) fail("pad_or_truncate: expected matrix, got ", m.shape_str());
  if (target_len == 0) fail("pad_or_truncate: target length must be positive");
  const std::size_t valid = std::min(m.rows(), target_len);
  if (m.rows() == target_len) return {m, valid};
  Tensor out = Tensor::matrix(target_len, m.cols());
  for (std::size_t i = 0; i < valid; ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) = m.at(i, j);
  return {out, valid};
}

}  // namespace mcqa
