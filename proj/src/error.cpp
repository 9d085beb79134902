#include "dcond/error.hpp"

namespace dcond {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::label: return "label error";
    case ErrorKind::empty_dataset: return "empty-dataset error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::empty_class: return "empty-class error";
    case ErrorKind::capacity: return "capacity error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::architecture: return "architecture error";
    case ErrorKind::divergence: return "divergence error";
    case ErrorKind::numerical: return "numerical error";
    case ErrorKind::linear_algebra: return "linear-algebra error";
    case ErrorKind::config: return "config error";
    case ErrorKind::context: return "context error";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace dcond
