#ifndef ORBITSTAB_FLOQUET_HPP_
#define ORBITSTAB_FLOQUET_HPP_

#include "orbitstab/linearize.hpp"
#include "orbitstab/ode.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>

namespace orbitstab {

class HamiltonianSystem;   // hamilton.hpp
struct RiccatiSolution;    // riccati.hpp

using MatrixFn = std::function<Eigen::MatrixXd(double)>;

struct MonodromyReport {
  Eigen::MatrixXd monodromy;
  Eigen::VectorXcd multipliers;  // sorted by descending modulus
  int n_stable = 0;              // |lambda| < 1 - eps
  int n_unit = 0;                // within eps of the unit circle
  int n_unstable = 0;            // |lambda| > 1 + eps
  double epsilon = 1e-4;
  double liouville_residual = 0.0;  // | |det Phi| - exp(int tr A) | / exp(int tr A)
  std::optional<double> symplectic_residual;  // |Phi^T J Phi - J|, Hamiltonian inputs
  std::optional<double> reciprocal_residual;  // max over pairs of | lambda mu - 1 |

  /// Multiplicity of the unit multiplier counted as |lambda - 1| <= tol.
  int count_near_one(double tol) const;
};

struct FloquetOptions {
  double epsilon = 1e-4;  // multiplier classification threshold
  IntegrateOptions ode{};
  bool hamiltonian_structure = false;  // enables symplectic/reciprocal checks
};

/// Solves Phidot = A(t) Phi, Phi(t0) = I from t0 to t1 (adaptive RK45).
Eigen::MatrixXd fundamental_matrix(const MatrixFn& A, int dim, double t0, double t1,
                                   const IntegrateOptions& opts = {});

/// Monodromy Phi(T, 0) with multiplier classification, Liouville determinant
/// check, and (for Hamiltonian coefficient matrices) symplectic and
/// reciprocal-pair residuals.
MonodromyReport monodromy(const MatrixFn& A, int dim, double T, const FloquetOptions& opts = {});

/// W_c(t0, t1) = int Phi(t1,s) B(s) B(s)^T Phi(t1,s)^T ds, composite Simpson
/// on quad_intervals subintervals (rounded up to even).
Eigen::MatrixXd controllability_gramian(const MatrixFn& A, const MatrixFn& B, int dim, double t0,
                                        double t1, int quad_intervals = 256);

/// W_o(t0, t1) = int Phi(s,t0)^T C(s)^T C(s) Phi(s,t0) ds.
Eigen::MatrixXd observability_gramian(const MatrixFn& C, const MatrixFn& A, int dim, double t0,
                                      double t1, int quad_intervals = 256);

struct GramianTest {
  bool verified = false;  // false means "not verified", not a disproof
  double margin = 0.0;    // smallest gramian eigenvalue
};

/// Sufficient test: positive definite one-period controllability gramian.
GramianTest check_stabilizable(const MatrixFn& A, const MatrixFn& B, int dim, double T,
                               double gram_tol = 1e-8, int quad_intervals = 256);
GramianTest check_detectable(const MatrixFn& C, const MatrixFn& A, int dim, double T,
                             double gram_tol = 1e-8, int quad_intervals = 256);

struct NhimReport {
  bool pass = false;
  double tangent_multiplier_deviation = 0.0;  // |lambda - 1| of the closest-to-one multiplier
  int unit_multiplicity = 0;
  int dim_stable = 0;
  int dim_unstable = 0;
  double contraction_rate = 0.0;  // alpha estimate: -log(max stable |lambda|)/T
  double expansion_rate = 0.0;
  double max_closed_loop_modulus = 0.0;       // of A - Rbar P
  std::complex<double> offending_multiplier{0.0, 0.0};
  std::string detail;
};

/// Verifies normal hyperbolicity of the zero section: (i) A - Rbar P
/// multipliers strictly inside the unit circle; (ii) the full 2n monodromy
/// about the orbit splits as 2 unit multipliers + (n-1) inside + (n-1)
/// outside; (iii) contraction/expansion rates estimated from the extreme
/// transverse multipliers.  Returns a failing report rather than throwing.
NhimReport verify_nhim(const RiccatiSolution& riccati, const PeriodicLinearization& lin,
                       const HamiltonianSystem& hs, const FloquetOptions& opts = {});

/// Monodromy of the full 2n-dimensional Hamiltonian flow linearized about the
/// orbit solution (x1 = t, x2 = 0, p = 0).
MonodromyReport full_orbit_monodromy(const HamiltonianSystem& hs, const FloquetOptions& opts = {});

}  // namespace orbitstab

#endif  // ORBITSTAB_FLOQUET_HPP_
