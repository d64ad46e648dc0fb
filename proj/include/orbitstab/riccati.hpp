#ifndef ORBITSTAB_RICCATI_HPP_
#define ORBITSTAB_RICCATI_HPP_

#include "orbitstab/floquet.hpp"
#include "orbitstab/fourier.hpp"
#include "orbitstab/linearize.hpp"

#include <Eigen/Core>

#include <string>

namespace orbitstab {

/// Periodic stabilizing solution P(t) of
///   Pdot + A^T P + P A - P Rbar P + Q = 0,   Rbar = 1/2 B2 R^-1 B2^T.
struct RiccatiSolution {
  double period = 0.0;
  PeriodicMatrix P;
  Eigen::VectorXcd closed_loop_multipliers;  // of A - Rbar P
  Eigen::VectorXd residuals;                 // equation residual per grid node
  double periodicity_error = 0.0;            // |P(0) - P(T)|
  double min_eigenvalue = 0.0;
  double max_asymmetry = 0.0;
  bool gates_verified = false;               // stabilizability/detectability gate
  double stabilizable_margin_B2 = 0.0;
  double stabilizable_margin_Rbar = 0.0;
  double detectable_margin = 0.0;
  std::string method;

  Eigen::MatrixXd eval(double t) const { return P(t); }
  double max_closed_loop_modulus() const;
};

struct RiccatiOptions {
  double residual_tol = 1e-6;
  double asymmetry_tol = 1e-6;
  double psd_tol = 1e-8;
  double gram_tol = 1e-8;
  IntegrateOptions ode{};
};

/// Stable-subspace method: ordered Schur basis of the monodromy of Ham(t) for
/// the multipliers inside the unit circle, then the basis [X; Y] is carried
/// around the period (backward, re-orthonormalized every grid step) and
/// P(t) = Y(t) X(t)^-1.  Throws NoStabilizingSolution / ResidualTooLarge.
/// When the gramian gates fail the solve is still attempted and the result is
/// flagged unverified.
RiccatiSolution solve_periodic_riccati(const PeriodicLinearization& lin, const Eigen::MatrixXd& R,
                                       double T, const RiccatiOptions& opts = {});

/// |Pdot + A^T P + P A - P Rbar P + Q|_F per grid node, Pdot by spectral
/// differentiation of the interpolant.
Eigen::VectorXd riccati_residual(const RiccatiSolution& sol, const PeriodicLinearization& lin);

/// Linear orbital feedback gain K(t) = -1/2 R^-1 B2(t)^T P(t), so that
/// u = K(x1) x2 and the closed loop is x2dot = (A - Rbar P) x2.
PeriodicMatrix linear_feedback(const RiccatiSolution& sol, const PeriodicLinearization& lin,
                               const Eigen::MatrixXd& R);

}  // namespace orbitstab

#endif  // ORBITSTAB_RICCATI_HPP_
