#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace follmer {

using Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
/// Row-major sample matrices: one draw per row.
template <typename Scalar>
using SampleMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Two algebraically equal routes disagreed beyond tolerance.
class NumericalInconsistency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
template <typename Scalar>
void require_open_unit(Scalar t, const char* what) {
  if (!(t > Scalar(0) && t < Scalar(1)))
    throw std::domain_error(std::string(what) + ": time must lie in (0,1), got " +
                            std::to_string(static_cast<double>(t)));
}
}  // namespace detail

}  // namespace follmer
