#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mcqa/error.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// Feature matrix container: magic "MMF1", u32-le rows, u32-le cols, then
// rows*cols f32-le values in row-major order. Values are stored at 32-bit
// precision and widened to 64-bit exactly on read.

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::filesystem::path& path,
                                   const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(what, ": cannot open '", path.string(), "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) fail(what, ": read error on '", path.string(), "'");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::string& bytes, const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(what, ": cannot open '", path.string(), "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(what, ": write error on '", path.string(), "'");
}

}  // namespace detail

inline std::string encode_feature_matrix(const Tensor& m) {
  if (!m.is_matrix())
    fail("write_feature_matrix: expected a matrix, got ", m.shape_str());
  if (m.rows() > 0xffffffffull || m.cols() > 0xffffffffull)
    fail("write_feature_matrix: extents exceed the 32-bit format limit");
  std::string out;
  out.reserve(12 + 4 * m.size());
  out += "MMF1";
  detail::put_u32le(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32le(out, static_cast<std::uint32_t>(m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m[i]);
    detail::put_u32le(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline void write_feature_matrix(const std::filesystem::path& path, const Tensor& m) {
  detail::write_file_bytes(path, encode_feature_matrix(m), "write_feature_matrix");
}

inline Tensor decode_feature_matrix(const std::string& bytes,
                                    const std::string& origin) {
  if (bytes.size() < 12)
    fail("read_feature_matrix: '", origin, "' truncated header (", bytes.size(),
         " bytes)");
  if (std::memcmp(bytes.data(), "MMF", 3) != 0)
    fail("read_feature_matrix: '", origin, "' is not a feature matrix file");
  if (bytes[3] != '1')
    fail("read_feature_matrix: '", origin, "' has unsupported format version '",
         bytes[3], "'");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t rows = detail::get_u32le(p + 4);
  const std::uint64_t cols = detail::get_u32le(p + 8);
  if (rows == 0 || cols == 0)
    fail("read_feature_matrix: '", origin, "' declares zero extent ", rows, "x",
         cols);
  const std::uint64_t count = rows * cols;
  if (count > (1ull << 31))
    fail("read_feature_matrix: '", origin, "' size overflow, ", rows, "x", cols);
  if (bytes.size() != 12 + 4 * count)
    fail("read_feature_matrix: '", origin, "' payload is ", bytes.size() - 12,
         " bytes, expected ", 4 * count);
  Tensor m = Tensor::matrix(static_cast<std::size_t>(rows),
                            static_cast<std::size_t>(cols));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = detail::get_u32le(p + 12 + 4 * i);
    m[static_cast<std::size_t>(i)] =
        static_cast<double>(std::bit_cast<float>(bits));
  }
  return m;
}

inline Tensor read_feature_matrix(const std::filesystem::path& path) {
  return decode_feature_matrix(
      detail::read_file_bytes(path, "read_feature_matrix"), path.string());
}

}  // namespace mcqa
