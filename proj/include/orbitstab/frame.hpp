#ifndef ORBITSTAB_FRAME_HPP_
#define ORBITSTAB_FRAME_HPP_

#include "orbitstab/fourier.hpp"
#include "orbitstab/model.hpp"

#include <Eigen/Core>

#include <memory>

namespace orbitstab {

/// Moving orthonormal coordinate system about the orbit: unit tangent e1 and
/// an n x (n-1) orthonormal complement Z, continued smoothly over one period.
class MovingFrame {
 public:
  MovingFrame() = default;

  Eigen::VectorXd tangent(double theta) const { return e1_(theta); }
  Eigen::MatrixXd complement(double theta) const { return Z_(theta); }
  Eigen::MatrixXd complement_derivative(double theta) const { return Z_.derivative(theta); }
  Eigen::MatrixXd complement_second_derivative(double theta) const {
    return Z_.second_derivative(theta);
  }

  double period() const { return Z_.period(); }
  int dim() const { return Z_.rows(); }
  int codim() const { return Z_.cols(); }
  int node_count() const { return Z_.node_count(); }
  double node(int k) const { return Z_.node_time(k); }

  /// Residual of the period-closure check Z(T) vs Z(0) from the continuation.
  double closure_error() const { return closure_error_; }
  /// Half the minimal curvature radius along the orbit; the transverse chart
  /// is only used for |x2| below this bound.
  double tube_radius() const { return tube_radius_; }

  friend MovingFrame build_frame(const PeriodicOrbit&, const ControlAffineSystem&, int);

 private:
  PeriodicMatrix e1_;  // n x 1
  PeriodicMatrix Z_;   // n x (n-1)
  double closure_error_ = 0.0;
  double tube_radius_ = 0.0;
};

/// Builds the frame on K uniform nodes.  e1 = gammadot/|gammadot|; Z is seeded
/// at theta = 0 (for n = 2 by the 90-degree rotation of e1, giving the
/// outward-radial sign on circular orbits) and continued node-to-node by
/// projection onto the new tangent complement plus re-orthonormalization.
/// Throws NonOrientableFrame when the continuation does not close up.
MovingFrame build_frame(const PeriodicOrbit& orbit, const ControlAffineSystem& system, int K);

/// Transverse coordinates of a point near the orbit: z = gamma(x1) + Z(x1) x2.
struct TransverseCoords {
  double x1 = 0.0;
  Eigen::VectorXd x2;
};

/// Inverts the chart by Newton iteration on the orthogonality condition
/// gammadot(x1)^T (z - gamma(x1)) = 0, seeded from the nearest orbit node.
/// Distance ties between phase minima are broken toward the smallest x1.
/// Throws OutOfTube outside the chart's validity tube.
TransverseCoords to_transverse(const Eigen::VectorXd& z, const MovingFrame& frame,
                               const PeriodicOrbit& orbit);

Eigen::VectorXd from_transverse(double x1, const Eigen::VectorXd& x2, const MovingFrame& frame,
                                const PeriodicOrbit& orbit);

/// Transverse dynamics in the moving frame:
///   x1dot = 1 + f1(x1,x2) + g1(x1,x2) u
///   x2dot = A(x1) x2 + f2(x1,x2) + g2(x1,x2) u
/// Built either generically by the chain rule through the chart (mode
/// generic), or from a published closed-form model (mode closed_form).
class TransverseModel {
 public:
  enum class Mode { generic, closed_form };

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  double period() const { return period_; }
  Mode mode() const { return mode_; }
  double tube_radius() const { return tube_radius_; }

  /// Full xdot at u = 0 (component 0 contains the 1 + f1 term).
  Eigen::VectorXd drift(const Eigen::VectorXd& x) const;
  /// Input matrix in transverse coordinates, rows [g1; g2], n x m.
  Eigen::MatrixXd input(const Eigen::VectorXd& x) const;
  double cost(const Eigen::VectorXd& x) const;  // q o psi
  Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

  double f1(const Eigen::VectorXd& x) const { return drift(x)(0) - 1.0; }
  Eigen::VectorXd f2(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd g1(const Eigen::VectorXd& x) const { return input(x).topRows(1); }
  Eigen::MatrixXd g2(const Eigen::VectorXd& x) const { return input(x).bottomRows(n_ - 1); }

  /// A(t) = d(x2dot)/dx2 at (x1 = t, x2 = 0, u = 0).
  Eigen::MatrixXd state_matrix(double t) const;
  /// Cost Hessian d^2(q o psi)/dx2^2 at (t, 0), symmetrized, not clipped.
  Eigen::MatrixXd cost_hessian_on_orbit(double t) const;

  /// Analytic x-derivatives, when the closed-form model ships them.
  bool has_analytic_x_derivatives() const;
  Eigen::MatrixXd drift_jacobian(const Eigen::VectorXd& x) const;
  std::vector<Eigen::MatrixXd> input_x_jacobians(const Eigen::VectorXd& x) const;
  Eigen::VectorXd cost_gradient(const Eigen::VectorXd& x) const;

  /// Chart map back to original coordinates (generic mode only).
  Eigen::VectorXd psi(const Eigen::VectorXd& x) const;
  bool has_chart() const { return frame_ != nullptr; }
  const MovingFrame& chart_frame() const { return *frame_; }
  const PeriodicOrbit& chart_orbit() const { return *orbit_; }

  friend TransverseModel transverse_dynamics(const ControlAffineSystem&, const CostSpec&,
                                             const MovingFrame&, const PeriodicOrbit&);
  friend TransverseModel reproduction_model(const ExampleProblem&);

 private:
  Mode mode_ = Mode::generic;
  int n_ = 0;
  int m_ = 0;
  double period_ = 0.0;
  double tube_radius_ = 0.0;

  // generic mode
  std::shared_ptr<const MovingFrame> frame_;
  std::shared_ptr<const PeriodicOrbit> orbit_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> sys_f_;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> sys_g_;
  std::function<double(const Eigen::VectorXd&)> sys_q_;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> sys_df_;   // optional
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> sys_dg_;  // optional
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> sys_dq_;   // optional
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> sys_d2q_;  // optional

  Eigen::MatrixXd chart_jacobian_partial(const Eigen::VectorXd& x, int i) const;

  // closed-form mode
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> cf_drift_;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> cf_input_;
  std::function<double(const Eigen::VectorXd&)> cf_cost_;
  std::function<Eigen::MatrixXd(double)> cf_state_matrix_;   // optional
  std::function<Eigen::MatrixXd(double)> cf_cost_hessian_;   // optional
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> cf_drift_jac_;             // optional
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> cf_input_jx_; // optional
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> cf_cost_grad_;             // optional

  Eigen::MatrixXd chart_jacobian(const Eigen::VectorXd& x) const;  // D psi
};

/// Generic transverse model by the chain rule: xdot = Dpsi(x)^{-1} (f + g u)(psi(x)).
TransverseModel transverse_dynamics(const ControlAffineSystem& system, const CostSpec& cost,
                                    const MovingFrame& frame, const PeriodicOrbit& orbit);

/// Reproduction-mode model from the example's published closed-form equations.
TransverseModel reproduction_model(const ExampleProblem& problem);

}  // namespace orbitstab

#endif  // ORBITSTAB_FRAME_HPP_
