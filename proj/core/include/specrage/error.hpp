#pragma once

#include <stdexcept>
#include <string>

namespace specrage {

enum class ErrorKind {
  parameter,
  format,
  io,
  training,
  optimizer,
  state,
  ill_conditioned,
  degenerate_data,
  input,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::training: return "training";
    case ErrorKind::optimizer: return "optimizer";
    case ErrorKind::state: return "state";
    case ErrorKind::ill_conditioned: return "ill-conditioned";
    case ErrorKind::degenerate_data: return "degenerate-data";
    case ErrorKind::input: return "input";
  }
  return "unknown";
}

// Base of every exception thrown by the library. The kind doubles as the
// category printed by the command line tool.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::parameter, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorKind::state, what) {}
};

class OptimizerError : public Error {
 public:
  explicit OptimizerError(const std::string& what) : Error(ErrorKind::optimizer, what) {}
};

class IllConditionedError : public Error {
 public:
  explicit IllConditionedError(const std::string& what) : Error(ErrorKind::ill_conditioned, what) {}
};

class DegenerateDataError : public Error {
 public:
  explicit DegenerateDataError(const std::string& what) : Error(ErrorKind::degenerate_data, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

// Raised when a training loop produces non-finite values. epoch() is 1-based;
// 0 means the failure happened outside an epoch (e.g. a single step).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(ErrorKind::training, what + (epoch > 0 ? " (epoch " + std::to_string(epoch) + ")" : "")),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace specrage
