#pragma once

#include <stdexcept>
#include <string>

namespace cxnlm {

// Base for every error raised by the toolkit. Data errors are problems with
// inputs (malformed files, impossible requests); stage errors wrap a failure
// inside a pipeline stage and carry the stage name.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IngestError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class ClassificationError : public DataError {
 public:
  using DataError::DataError;
};

class CompositionError : public DataError {
 public:
  using DataError::DataError;
};

class TokenizerError : public DataError {
 public:
  using DataError::DataError;
};

class ModelError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class EvalError : public DataError {
 public:
  using DataError::DataError;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace cxnlm
