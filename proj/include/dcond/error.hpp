#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dcond {

enum class ErrorKind {
  parse,
  label,
  empty_dataset,
  validation,
  empty_class,
  capacity,
  shape,
  domain,
  architecture,
  divergence,
  numerical,
  linear_algebra,
  config,
  context,
  io,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it to
// an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace dcond
