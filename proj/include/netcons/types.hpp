#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace netcons {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Library-wide default tolerances. Rank decisions keep singular values
// sigma > rank_tol * sigma_max; eigenvalue clustering is relative with an
// absolute floor for near-zero quantities.
namespace defaults {
inline constexpr double rank_tol = 1e-9;
inline constexpr double cluster_tol = 1e-7;
inline constexpr double abs_floor = 1e-12;
}  // namespace defaults

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};
struct DisconnectedGraph : Error {
  using Error::Error;
};
struct AmbientMismatch : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct NotSymmetric : Error {
  using Error::Error;
};
struct NotSPD : Error {
  using Error::Error;
};
struct NoDampedNode : Error {
  using Error::Error;
};
struct SingularDampedBlock : Error {
  using Error::Error;
};
struct StepTooLarge : Error {
  using Error::Error;
};

}  // namespace netcons
