#ifndef ORBITSTAB_SCHUR_HPP_
#define ORBITSTAB_SCHUR_HPP_

#include <Eigen/Core>

namespace orbitstab {

/// Real Schur decomposition M = U T U^T with the eigenvalues inside the unit
/// circle ordered first.  The leading n_stable columns of U span the invariant
/// subspace of the multipliers with |lambda| < 1.
struct OrderedSchur {
  Eigen::MatrixXd U;
  Eigen::MatrixXd T;
  int n_stable = 0;
};

OrderedSchur ordered_schur_stable_first(const Eigen::MatrixXd& M);

}  // namespace orbitstab

#endif  // ORBITSTAB_SCHUR_HPP_
