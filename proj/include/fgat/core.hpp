#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fgat {

/// Row-major dense matrix of doubles; every embedding table and weight uses it.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Id = std::uint64_t;

/// Negative slope shared by every LeakyReLU in the model.
inline constexpr double kLeakySlope = 0.2;

enum class ErrorKind {
  Malformed,
  DanglingReference,
  DimensionMismatch,
  InvalidArgument,
  NotFound,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Malformed: return "malformed";
    case ErrorKind::DanglingReference: return "dangling reference";
    case ErrorKind::DimensionMismatch: return "dimension mismatch";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::NotFound: return "not found";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Validation failure on user-supplied input (files, configs, ids).
class DataError : public std::runtime_error {
 public:
  DataError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Failure during optimisation (non-finite loss and friends).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fgat
