#ifndef ORBITSTAB_HAMILTON_HPP_
#define ORBITSTAB_HAMILTON_HPP_

#include "orbitstab/frame.hpp"
#include "orbitstab/model.hpp"
#include "orbitstab/ode.hpp"
#include "orbitstab/riccati.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace orbitstab {

/// Hamiltonian system of the stationary HJB equation in transverse
/// coordinates:
///   H(x, p) = p^T xdot0(x) - 1/4 G^T R^-1 G + q(psi(x)),
///   G(x, p) = [g1; g2]^T p,
/// with the flow given by the symplectic gradient of H.
class HamiltonianSystem {
 public:
  HamiltonianSystem() = default;

  int state_dim() const { return tm_.state_dim(); }  // n; the flow is 2n-dimensional
  double period() const { return tm_.period(); }
  double tube_radius() const { return tm_.tube_radius(); }
  const TransverseModel& model() const { return tm_; }
  const Eigen::MatrixXd& input_weight() const { return R_; }

  double hamiltonian(const Eigen::VectorXd& x, const Eigen::VectorXd& p) const;
  double hamiltonian(const Eigen::VectorXd& xp) const;

  /// u = -1/2 R^-1 (g1^T p1 + g2^T p2).
  Eigen::VectorXd optimal_input(const Eigen::VectorXd& x, const Eigen::VectorXd& p) const;

  /// Symplectic gradient (dH/dp; -dH/dx); dH/dp in closed form, dH/dx by
  /// 4th-order central differences of H.
  Eigen::VectorXd vector_field(const Eigen::VectorXd& xp) const;

  /// Jacobian of the vector field assembled as J * Hess(H) with the Hessian
  /// symmetrized, so the linearization is exactly infinitesimally symplectic.
  Eigen::MatrixXd vector_field_jacobian(const Eigen::VectorXd& xp) const;
  /// Same, on the orbit solution (x1 = t, x2 = 0, p = 0).
  Eigen::MatrixXd vector_field_jacobian_on_orbit(double t) const;

  friend HamiltonianSystem assemble_hamiltonian(const TransverseModel&, const CostSpec&);

 private:
  Eigen::VectorXd gradient_x(const Eigen::VectorXd& x, const Eigen::VectorXd& p) const;

  TransverseModel tm_;
  Eigen::MatrixXd R_;
  Eigen::MatrixXd R_inv_;
};

/// Builds the Hamiltonian system and cross-validates the vector field against
/// central differences of H (J grad H) at random tube points; throws
/// GradientMismatch if they disagree.
HamiltonianSystem assemble_hamiltonian(const TransverseModel& tm, const CostSpec& cost);

struct FlowOptions {
  IntegrateOptions ode{};
  int samples_per_period = 64;
  double h_drift_tol = 1e-7;   // allowed |H(t) - H(0)| per period, relative
  bool enforce_tube = true;
  double stop_when_distance_below = 0.0;  // closed-loop early stop; 0 disables
};

/// One integrated Hamiltonian trajectory with the derived signals.
struct Trajectory {
  Eigen::VectorXd times;
  Eigen::MatrixXd x;  // n x N
  Eigen::MatrixXd p;  // n x N
  Eigen::MatrixXd u;  // m x N
  Eigen::VectorXd hamiltonian;
  Eigen::VectorXd running_cost;  // accumulated cost integral
  double max_abs_hamiltonian() const;
  double total_cost() const { return running_cost.size() ? running_cost(running_cost.size() - 1) : 0.0; }
};

/// Integrates the Hamiltonian flow from (x0, p0) over [t0, t1], recording the
/// input law and accumulated cost; checks conservation of H and the tube.
Trajectory flow(const HamiltonianSystem& hs, const Eigen::VectorXd& x0, const Eigen::VectorXd& p0,
                double t0, double t1, const FlowOptions& opts = {});

struct StableTrajectoryOptions {
  int shooting_segments = 8;
  double boundary_tol = 1e-8;        // Newton tolerance on the boundary residual
  double terminal_x2_tol = 1e-4;     // horizon extension target
  double max_horizon_periods = 16.0;
  double min_horizon_periods = 2.0;
  int max_newton_iterations = 60;
  FlowOptions flow{};
};

/// One stable-manifold trajectory: the two-point BVP with unknown p(0),
/// terminal conditions p1(Tf) = 0 and p2(Tf) = P(x1(Tf)) x2(Tf).
struct ManifoldTrajectory {
  Trajectory trajectory;
  Eigen::VectorXd p0;
  double horizon = 0.0;
  double total_cost = 0.0;
  double max_abs_h = 0.0;
  double terminal_x2_norm = 0.0;
  double terminal_fiber_residual = 0.0;  // |p2 - P x2| at Tf
  double boundary_residual = 0.0;
  int newton_iterations = 0;
};

/// Multiple-shooting solve, warm-started from the linear-feedback closed loop
/// and the fiber relation p = [0; P x2].  The horizon is doubled (up to
/// max_horizon_periods) until |x2(Tf)| < terminal_x2_tol.
ManifoldTrajectory stable_trajectory(const HamiltonianSystem& hs, double x1_0,
                                     const Eigen::VectorXd& x2_0, const RiccatiSolution& riccati,
                                     const StableTrajectoryOptions& opts = {});

struct ValueSample {
  double x1 = 0.0;
  Eigen::VectorXd x2;
  double value = 0.0;
  Eigen::VectorXd p0;
  double loop_residual = 0.0;  // |circulation| / loop area around this point
  bool converged = false;
  std::string error;
};

struct ValueGridOptions {
  StableTrajectoryOptions bvp{};
  double loop_half_width = 0.05;  // rectangle half-size for the circulation probe
  bool compute_loops = true;
  int threads = 0;  // 0 = hardware concurrency
};

/// Samples the value function V(x0) = cost of the stable-manifold trajectory
/// on a grid, plus a closedness diagnostic of the p(0) field: the circulation
/// of p around a small rectangle at each grid point, divided by its area
/// (Simpson rule along the edges).  Scalar-x2 problems only for the loops.
std::vector<ValueSample> value_and_lagrangian_diagnostic(const HamiltonianSystem& hs,
                                                         const RiccatiSolution& riccati,
                                                         const std::vector<double>& x1_grid,
                                                         const std::vector<double>& x2_grid,
                                                         const ValueGridOptions& opts = {});

/// State feedback in transverse coordinates.
struct Feedback {
  std::string kind;
  std::function<Eigen::VectorXd(double x1, const Eigen::VectorXd& x2)> u;
};

/// u(x1, x2) = K(x1) x2 with the periodic Riccati gain.
Feedback make_linear_feedback(const PeriodicMatrix& gain);

/// Bilinear interpolation of u over a table of stable-manifold trajectories
/// on an (x1, x2) grid; periodic in x1, clamped in x2.  Scalar x2 only.
Feedback make_table_feedback(const std::vector<double>& x1_grid, const std::vector<double>& x2_grid,
                             const std::vector<ValueSample>& table, const HamiltonianSystem& hs);

struct ClosedLoopResult {
  Eigen::VectorXd times;
  Eigen::MatrixXd z;        // original coordinates (n x N); empty for transverse runs
  Eigen::VectorXd x1;
  Eigen::MatrixXd x2;       // d x N
  Eigen::VectorXd distance; // |x2(t)|
  Eigen::MatrixXd u;
  Eigen::VectorXd running_cost;
  double total_cost = 0.0;
  double final_distance = 0.0;
};

/// Integrates zdot = f(z) + g(z) u with u evaluated through the transverse
/// chart, recording orbital distance and accumulated cost q + u^T R u.
ClosedLoopResult closed_loop_simulate(const ControlAffineSystem& system, const CostSpec& cost,
                                      const PeriodicOrbit& orbit, const MovingFrame& frame,
                                      const Feedback& feedback, const Eigen::VectorXd& z0,
                                      double duration, const FlowOptions& opts = {});

/// Same closed loop directly in transverse coordinates (used for models
/// without a chart, e.g. reproduction mode).
ClosedLoopResult closed_loop_simulate_transverse(const TransverseModel& tm, const CostSpec& cost,
                                                 const Feedback& feedback, double x1_0,
                                                 const Eigen::VectorXd& x2_0, double duration,
                                                 const FlowOptions& opts = {});

}  // namespace orbitstab

#endif  // ORBITSTAB_HAMILTON_HPP_
