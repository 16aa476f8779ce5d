#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pbcnn {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents between operands.
class ShapeError : public Error {
public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or a value outside its numeric domain.
class NumericError : public Error {
public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
  using Error::Error;
};

// Configuration rejected; `field()` names the offending key.
class ValidationError : public Error {
public:
  ValidationError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class TrainingError : public Error {
public:
  TrainingError(std::size_t epoch, const std::string& message)
      : Error("epoch " + std::to_string(epoch) + ": " + message), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

private:
  std::size_t epoch_;
};

class StageError : public Error {
public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace pbcnn
