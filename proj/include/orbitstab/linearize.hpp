#ifndef ORBITSTAB_LINEARIZE_HPP_
#define ORBITSTAB_LINEARIZE_HPP_

#include "orbitstab/fourier.hpp"
#include "orbitstab/frame.hpp"
#include "orbitstab/model.hpp"

#include <Eigen/Core>

namespace orbitstab {

/// Periodic linear data along the orbit.  Transverse block: A(t) (d x d with
/// d = n-1), B2(t) = g2(t, 0), cost Hessian Q(t), and Rbar = 1/2 B2 R^-1 B2^T.
/// Original-coordinate block: A0 = Df(gamma), B0 = g(gamma), Q0 = d2q(gamma).
struct PeriodicLinearization {
  double period = 0.0;
  int d = 0;  // transverse dimension n-1
  int m = 0;
  int n = 0;  // original state dimension (0 until original_linearization ran)

  PeriodicMatrix A, B2, Q, Rbar;
  PeriodicMatrix A0, B0, Q0;
  Eigen::MatrixXd R;

  /// Ham(t) = [[A, -Rbar], [-Q, -A^T]], the coefficient matrix of the linear
  /// transverse Hamiltonian system.
  Eigen::MatrixXd hamiltonian(double t) const;
  std::function<Eigen::MatrixXd(double)> hamiltonian_fn() const;
};

/// Samples A, B2, Q, Rbar on N uniform nodes and fits periodic interpolants.
/// Q eigenvalues in [-1e-6, 0) are clipped to zero; below -1e-6 throws
/// NonPSDHessian.
PeriodicLinearization transverse_linearization(const TransverseModel& tm, const CostSpec& cost,
                                               int N = 256);

/// Fills the original-coordinate triple A0(t), B0(t), Q0(t) on the same grid.
void original_linearization(const ControlAffineSystem& system, const CostSpec& cost,
                            const PeriodicOrbit& orbit, int N, PeriodicLinearization& out);

}  // namespace orbitstab

#endif  // ORBITSTAB_LINEARIZE_HPP_
