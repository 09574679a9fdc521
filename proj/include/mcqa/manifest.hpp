#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mcqa/error.hpp"
#include "mcqa/feature_file.hpp"
#include "mcqa/model.hpp"
#include "mcqa/sample.hpp"

namespace mcqa {

// On-disk sample index. Line-oriented text: a header line, then one
// self-describing record per sample:
//
//   MCQA-MANIFEST-V1
//   sample id=<id> split=<train|val|test> text=<path> audio=<path>
//     video=<path> question=<path> answers=<path>:<0|1>;<path>:<0|1>[;...]
//
// (each record on a single line; '#' starts a comment). Paths are relative
// to the manifest's directory. Every sample has exactly one correct
// candidate and the candidate count is uniformly 2 or 4 within a manifest.

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string text, audio, video, question;
  std::vector<std::pair<std::string, int>> answers;  // (path, label)
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;  // file order

  std::size_t candidate_count() const {
    return entries.empty() ? 0 : entries.front().answers.size();
  }

  std::vector<const ManifestEntry*> split(const std::string& tag) const {
    std::vector<const ManifestEntry*> out;
    for (const ManifestEntry& e : entries)
      if (e.split == tag) out.push_back(&e);
    return out;
  }

  const ManifestEntry& by_id(const std::string& id) const {
    for (const ManifestEntry& e : entries)
      if (e.id == id) return e;
    fail("Manifest: no sample with id '", id, "'");
  }
};

namespace detail {

inline std::string manifest_field(const std::string& token, const char* key,
                                  const std::string& id, std::size_t line_no) {
  const std::string prefix = std::string(key) + "=";
  if (token.rfind(prefix, 0) != 0)
    fail("load_manifest: line ", line_no, " (sample '", id, "'): expected ", key,
         "=..., got '", token, "'");
  const std::string value = token.substr(prefix.size());
  if (value.empty())
    fail("load_manifest: line ", line_no, " (sample '", id, "'): empty ", key);
  return value;
}

inline void validate_manifest(const Manifest& m) {
  std::unordered_set<std::string> ids;
  std::size_t count = 0;
  for (const ManifestEntry& e : m.entries) {
    if (!ids.insert(e.id).second)
      fail("load_manifest: duplicate sample id '", e.id, "'");
    if (e.split != "train" && e.split != "val" && e.split != "test")
      fail("load_manifest: sample '", e.id, "' has unknown split '", e.split, "'");
    if (e.answers.size() != 2 && e.answers.size() != 4)
      fail("load_manifest: sample '", e.id, "' has ", e.answers.size(),
           " candidates, expected 2 or 4");
    if (count == 0) count = e.answers.size();
    if (e.answers.size() != count)
      fail("load_manifest: sample '", e.id, "' has ", e.answers.size(),
           " candidates but the manifest uses ", count);
    std::size_t correct = 0;
    for (const auto& [path, label] : e.answers) {
      if (label != 0 && label != 1)
        fail("load_manifest: sample '", e.id, "' has label ", label);
      correct += static_cast<std::size_t>(label);
    }
    if (correct != 1)
      fail("load_manifest: sample '", e.id, "' has ", correct,
           " candidates labeled correct, expected exactly 1");
  }
}

}  // namespace detail

inline Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "MCQA-MANIFEST-V1")
        fail("load_manifest: line ", line_no,
             ": missing MCQA-MANIFEST-V1 header, got '", line, "'");
      header_seen = true;
      continue;
    }
    std::istringstream tokens(line);
    std::string tag;
    tokens >> tag;
    if (tag != "sample")
      fail("load_manifest: line ", line_no, ": expected 'sample', got '", tag, "'");
    ManifestEntry e;
    std::string token;
    tokens >> token;
    e.id = detail::manifest_field(token, "id", "?", line_no);
    tokens >> token;
    e.split = detail::manifest_field(token, "split", e.id, line_no);
    tokens >> token;
    e.text = detail::manifest_field(token, "text", e.id, line_no);
    tokens >> token;
    e.audio = detail::manifest_field(token, "audio", e.id, line_no);
    tokens >> token;
    e.video = detail::manifest_field(token, "video", e.id, line_no);
    tokens >> token;
    e.question = detail::manifest_field(token, "question", e.id, line_no);
    tokens >> token;
    const std::string answers = detail::manifest_field(token, "answers", e.id, line_no);
    std::istringstream alist(answers);
    std::string item;
    while (std::getline(alist, item, ';')) {
      const std::size_t colon = item.rfind(':');
      if (colon == std::string::npos || colon + 2 != item.size() ||
          (item[colon + 1] != '0' && item[colon + 1] != '1'))
        fail("load_manifest: line ", line_no, " (sample '", e.id,
             "'): malformed answer '", item, "', expected <path>:<0|1>");
      e.answers.emplace_back(item.substr(0, colon), item[colon + 1] - '0');
    }
    if (tokens >> token)
      fail("load_manifest: line ", line_no, " (sample '", e.id,
           "'): unexpected trailing token '", token, "'");
    m.entries.push_back(std::move(e));
  }
  if (!header_seen && !m.entries.empty())
    fail("load_manifest: missing header");
  detail::validate_manifest(m);
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("load_manifest: cannot open '", path.string(), "'");
  return parse_manifest(in, path.parent_path());
}

inline std::string encode_manifest(const Manifest& m) {
  std::ostringstream out;
  out << "MCQA-MANIFEST-V1\n";
  for (const ManifestEntry& e : m.entries) {
    out << "sample id=" << e.id << " split=" << e.split << " text=" << e.text
        << " audio=" << e.audio << " video=" << e.video
        << " question=" << e.question << " answers=";
    for (std::size_t k = 0; k < e.answers.size(); ++k) {
      if (k > 0) out << ';';
      out << e.answers[k].first << ':' << e.answers[k].second;
    }
    out << '\n';
  }
  return out.str();
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_manifest(m), "save_manifest");
}

// Decode one sample: read its feature files, validate widths against the
// config, and pad or truncate every stream to the common length.
inline Sample load_sample(const Manifest& m, const ManifestEntry& e,
                          const ModelConfig& config) {
  const auto resolve = [&](const std::string& rel) { return m.base_dir / rel; };
  const auto load_stream = [&](const std::string& rel, std::size_t want_cols,
                               const char* name) {
    Tensor t = read_feature_matrix(resolve(rel));
    if (t.cols() != want_cols)
      fail("load_sample: sample '", e.id, "' ", name, " has width ", t.cols(),
           ", config expects ", want_cols);
    return t;
  };

  Sample s;
  s.id = e.id;
  const Tensor text = load_stream(e.text, config.d_text, "text");
  const Tensor audio = load_stream(e.audio, config.d_audio, "audio");
  const Tensor video = load_stream(e.video, config.d_video, "video");
  const Tensor question = load_stream(e.question, config.d_text, "question");
  s.original_text = text.rows();
  s.original_audio = audio.rows();
  s.original_video = video.rows();
  s.original_question = question.rows();
  std::tie(s.text, s.valid_text) = pad_or_truncate(text, config.seq_len);
  std::tie(s.audio, s.valid_audio) = pad_or_truncate(audio, config.seq_len);
  std::tie(s.video, s.valid_video) = pad_or_truncate(video, config.seq_len);
  std::tie(s.question, s.valid_question) = pad_or_truncate(question, config.seq_len);
  for (const auto& [rel, label] : e.answers) {
    const Tensor ans = load_stream(rel, config.d_text, "answer");
    s.original_answers.push_back(ans.rows());
    auto [padded, valid] = pad_or_truncate(ans, config.seq_len);
    s.answers.push_back(std::move(padded));
    s.valid_answers.push_back(valid);
    s.labels.push_back(label);
  }
  return s;
}

inline Sample load_sample(const Manifest& m, const std::string& id,
                          const ModelConfig& config) {
  return load_sample(m, m.by_id(id), config);
}

inline std::vector<Sample> load_split_samples(const Manifest& m,
                                              const std::string& split,
                                              const ModelConfig& config) {
  std::vector<Sample> out;
  for (const ManifestEntry* e : m.split(split)) out.push_back(load_sample(m, *e, config));
  return out;
}

}  // namespace mcqa
