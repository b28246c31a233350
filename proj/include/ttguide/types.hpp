#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ttguide {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixXd = RowMatrix<double>;
using VectorXd = Vector<double>;

/// Incompatible dimensions, element counts, or layouts.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// A NaN/Inf appeared, or a numeric precondition (nonzero norm, symmetry) failed.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// A dense materialization or Jacobian would exceed the configured entry cap.
class CapError : public std::length_error {
public:
    explicit CapError(const std::string& what) : std::length_error(what) {}
};

/// Invalid user-facing configuration (bad preset, malformed file, out-of-range value).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace ttguide
