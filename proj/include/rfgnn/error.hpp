#pragma once

#include <stdexcept>
#include <string>

namespace rfgnn {

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV, manifests, shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A call whose arguments violate the documented preconditions.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, double loss)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " (loss=" + std::to_string(loss) + ")"),
        epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Wraps an error escaping one pipeline stage with that stage's name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace rfgnn
