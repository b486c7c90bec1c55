#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace koala {

enum class ErrorCode {
  InvalidInput,
  Dimension,
  Format,
  Fit,
  Infeasible,
  GammaUndefined,
  Train,
  Io,
};

// Stable, machine-parsable name used by the CLI ("E_FORMAT" etc).
const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& message)
      : Error(ErrorCode::InvalidInput, message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error(ErrorCode::Dimension, message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message,
                       std::optional<std::size_t> row = std::nullopt)
      : Error(ErrorCode::Format, row ? "row " + std::to_string(*row) + ": " + message
                                     : message),
        row_(row) {}

  std::optional<std::size_t> row() const noexcept { return row_; }

 private:
  std::optional<std::size_t> row_;
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& message) : Error(ErrorCode::Fit, message) {}
};

class Infeasible : public Error {
 public:
  explicit Infeasible(const std::string& message)
      : Error(ErrorCode::Infeasible, message) {}
};

class GammaUndefined : public Error {
 public:
  explicit GammaUndefined(const std::string& message)
      : Error(ErrorCode::GammaUndefined, message) {}
};

class TrainError : public Error {
 public:
  TrainError(const std::string& message, int epoch)
      : Error(ErrorCode::Train, "epoch " + std::to_string(epoch) + ": " + message),
        epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorCode::Io, message) {}
};

}  // namespace koala
