#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <string>
#include <vector>

#include "mcqa/error.hpp"

namespace mcqa {

// Dense row-major tensor of doubles. Rank 1 (vector) or rank 2 (matrix) only;
// a scalar is a rank-1 tensor of size 1. Value semantics throughout.
class Tensor {
 public:
  Tensor() = default;

  static Tensor vector(std::size_t n) { return Tensor(1, n, 1); }
  static Tensor matrix(std::size_t rows, std::size_t cols) {
    return Tensor(2, rows, cols);
  }
  static Tensor scalar(double v) {
    Tensor t = vector(1);
    t.data_[0] = v;
    return t;
  }
  static Tensor of(std::initializer_list<double> values) {
    Tensor t = vector(values.size());
    std::size_t i = 0;
    for (double v : values) t.data_[i++] = v;
    return t;
  }
  static Tensor of_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Tensor t = matrix(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) fail("Tensor::of_rows: ragged initializer rows");
      for (double v : row) t.data_[i++] = v;
    }
    return t;
  }

  int rank() const { return rank_; }
  bool empty() const { return rank_ == 0; }
  bool is_vector() const { return rank_ == 1; }
  bool is_matrix() const { return rank_ == 2; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  double operator[](std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }
  double& at(std::size_t i, std::size_t j) {
    assert(rank_ == 2 && i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double at(std::size_t i, std::size_t j) const {
    assert(rank_ == 2 && i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double* row_data(std::size_t i) { return data_.data() + i * cols_; }
  const double* row_data(std::size_t i) const { return data_.data() + i * cols_; }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  bool same_shape(const Tensor& o) const {
    return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    if (rank_ == 0) return "[]";
    if (rank_ == 1) return "[" + std::to_string(rows_) + "]";
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  // Zero tensor with the shape of this one.
  Tensor zeros_like() const { return Tensor(rank_, rows_, cols_); }

 private:
  Tensor(int rank, std::size_t rows, std::size_t cols)
      : rank_(rank), rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) fail("Tensor: zero extent in shape ", shape_str());
  }

  int rank_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // compare representations, so -0.0 != +0.0 and NaNs compare by payload
    const double x = a[i];
    const double y = b[i];
    if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace mcqa
