#pragma once

#include <stdexcept>
#include <string>

namespace rpna {

/// Broad error category; the CLI maps each to an exit code.
enum class ErrorKind { Usage, Data, Backend, Internal };

int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid parameters or configuration.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Corpus record failed to parse or validate. `line` is 1-based, 0 when not line-specific.
class CorpusError : public DataError {
 public:
  CorpusError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Bad magic, version or header in an activation-exchange payload.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Declared payload size exceeds the bytes available.
class TruncationError : public DataError {
 public:
  using DataError::DataError;
};

class NonFiniteError : public DataError {
 public:
  using DataError::DataError;
};

/// Operands disagree in layer count, width or item set.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Input carries no variation, so the requested quantity is undefined.
class DegenerateError : public DataError {
 public:
  using DataError::DataError;
};

/// Ablation plan references layers or dims outside the backend's shape.
class PlanError : public DataError {
 public:
  using DataError::DataError;
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(ErrorKind::Backend, what) {}
};

class ConnectionError : public BackendError {
 public:
  using BackendError::BackendError;
};

class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Activations returned by a backend disagree with its descriptor.
class ShapeMismatchError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ContextLengthError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// A pipeline stage failed; carries the stage name and the cause's category.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorKind cause, const std::string& what);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace rpna
