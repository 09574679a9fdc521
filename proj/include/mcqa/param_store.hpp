#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcqa/error.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// Named collection of trainable tensors. Each entry owns its value, a
// gradient accumulator of identical shape, and first/second moment slots for
// the optimizer. Entry order is registration order and is the canonical
// iteration order everywhere (checkpoints, gradient checks, updates), so a
// store built the same way twice behaves identically.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value) {
    if (index_.count(name))
      fail("ParameterStore: duplicate parameter name '", name, "'");
    if (value.empty()) fail("ParameterStore: empty tensor for '", name, "'");
    Entry e;
    e.name = std::move(name);
    e.grad = value.zeros_like();
    e.adam_m = value.zeros_like();
    e.adam_v = value.zeros_like();
    e.value = std::move(value);
    entries_.push_back(std::move(e));
    index_[entries_.back().name] = entries_.size() - 1;
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("ParameterStore: unknown parameter '", name, "'");
    return it->second;
  }

  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  Tensor& value(std::size_t i) { return entries_.at(i).value; }
  const Tensor& value(std::size_t i) const { return entries_.at(i).value; }
  Tensor& grad(std::size_t i) { return entries_.at(i).grad; }
  const Tensor& grad(std::size_t i) const { return entries_.at(i).grad; }
  Tensor& adam_m(std::size_t i) { return entries_.at(i).adam_m; }
  Tensor& adam_v(std::size_t i) { return entries_.at(i).adam_v; }
  const Tensor& adam_m(std::size_t i) const { return entries_.at(i).adam_m; }
  const Tensor& adam_v(std::size_t i) const { return entries_.at(i).adam_v; }

  void zero_grads() {
    for (Entry& e : entries_) e.grad.fill(0.0);
  }

  std::size_t total_parameter_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

 private:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
  };

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mcqa
