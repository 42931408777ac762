#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace innodpc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// Error taxonomy mirrored by the CLI exit codes (2/3/4/5).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataLengthError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct CertificateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace innodpc
