#include "pathweaver/error.hpp"

namespace pathweaver {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Format: return "format";
    case ErrorKind::Config: return "config";
    case ErrorKind::Frame: return "frame";
    case ErrorKind::Size: return "size";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace pathweaver
