#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace mcqa {

// All recoverable failures (shape mismatches, malformed files, bad configs)
// surface as McqaError carrying a human-readable message.
class McqaError : public std::runtime_error {
 public:
  explicit McqaError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void append_all(std::ostringstream&) {}

template <typename T, typename... Rest>
void append_all(std::ostringstream& os, T&& v, Rest&&... rest) {
  os << std::forward<T>(v);
  append_all(os, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream os;
  detail::append_all(os, std::forward<Args>(args)...);
  throw McqaError(os.str());
}

}  // namespace mcqa
