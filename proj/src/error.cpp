#include "rpna/error.hpp"

namespace rpna {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Backend: return 3;
    case ErrorKind::Internal: break;
  }
  return 2;
}

CorpusError::CorpusError(std::size_t line, const std::string& what)
    : DataError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

StageError::StageError(std::string stage, ErrorKind cause, const std::string& what)
    : Error(cause, "stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

}  // namespace rpna
