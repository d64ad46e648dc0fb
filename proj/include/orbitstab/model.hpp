#ifndef ORBITSTAB_MODEL_HPP_
#define ORBITSTAB_MODEL_HPP_

#include "orbitstab/fourier.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace orbitstab {

/// Control-affine plant  zdot = f(z) + g(z) u,  z in R^n, u in R^m.
struct ControlAffineSystem {
  int n = 0;
  int m = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> g;
  /// Optional analytic Jacobian of f (n x n).
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> df;
  /// Optional analytic Jacobians of the columns of g (m matrices, each n x n).
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> dg;

  Eigen::VectorXd eval_f(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd eval_g(const Eigen::VectorXd& z) const;
};

/// Running cost  q(z) + u^T R u.
struct CostSpec {
  std::function<double(const Eigen::VectorXd&)> q;
  Eigen::MatrixXd R;
  /// Optional analytic gradient and Hessian of q.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> dq;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> d2q;

  double eval_q(const Eigen::VectorXd& z) const;
};

/// Periodic orbit of the drift, represented by K uniform samples and a
/// trigonometric interpolant.  gamma(0) == gamma(T) holds exactly by
/// construction; the phase theta is time along the orbit, theta in [0, T).
/// (Internally the interpolant lives on the normalized phase theta/T, so the
/// period-1 setting of the theory and the user-facing period T coincide.)
class PeriodicOrbit {
 public:
  PeriodicOrbit() = default;
  /// samples: n x K, column k = gamma(k*T/K).  Requires n >= 2, K >= 8.
  PeriodicOrbit(const Eigen::MatrixXd& samples, double period);

  Eigen::VectorXd point(double theta) const { return interp_(theta); }
  Eigen::VectorXd velocity(double theta) const { return interp_.derivative(theta); }
  Eigen::VectorXd acceleration(double theta) const { return interp_.second_derivative(theta); }

  double period() const { return period_; }
  int dim() const { return interp_.dim(); }
  int node_count() const { return interp_.sample_count(); }
  double node(int k) const { return period_ * k / node_count(); }
  const Eigen::MatrixXd& samples() const { return samples_; }

 private:
  TrigInterpolant interp_;
  Eigen::MatrixXd samples_;
  double period_ = 0.0;
};

/// Closed-form transverse model shipped with an example for reproduction mode
/// (the published transformed equations, taken verbatim).  Coordinates are
/// x = (x1, x2) with x1 the phase; drift is the full xdot at u = 0.
struct ClosedFormTransverse {
  int n = 0;
  int m = 0;
  double period = 0.0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> input;  // n x m, rows [g1; g2]
  std::function<double(const Eigen::VectorXd&)> cost;            // q o psi
  /// Optional analytic A(t) = d(x2dot)/dx2 at x2 = 0 and Hessian of the cost.
  std::function<Eigen::MatrixXd(double)> state_matrix;
  std::function<Eigen::MatrixXd(double)> cost_hessian;
  /// Optional analytic x-derivatives (all three or none); they keep the
  /// Hamiltonian right-hand side out of finite differences.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> drift_jacobian;  // n x n
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)>
      input_x_jacobians;  // n entries: d(input)/dx_i, each n x m
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> cost_gradient;
  /// Chart validity bound on |x2| (the published chart may degenerate).
  double x2_bound = std::numeric_limits<double>::infinity();
};

struct ExampleProblem {
  std::string name;
  ControlAffineSystem system;
  CostSpec cost;
  PeriodicOrbit orbit;
  std::optional<ClosedFormTransverse> closed_form;
};

struct ValidationTolerances {
  double orbit_tol = 1e-8;
  double jac_tol = 1e-6;
  int probe_points = 100;
  unsigned seed = 0x5eed;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double residual = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool pass = false;

  const CheckResult* find(const std::string& name) const;
};

/// Checks every construction invariant of the (system, cost, orbit) triple:
/// evaluator shapes/finiteness, orbit consistency gammadot = f(gamma), R SPD,
/// q and grad q vanishing on the orbit, q >= 0 in a tube, and analytic
/// derivative cross-checks against central differences when supplied.
ValidationReport validate_problem(const ControlAffineSystem& system, const CostSpec& cost,
                                  const PeriodicOrbit& orbit, const ValidationTolerances& tol = {});

/// Mass-spring oscillator stabilized at unit energy: f = (z2, -z1),
/// g = (0, 1)^T, q = (z1^2 + z2^2 - 1)^2, R = 1, orbit = unit circle, T = 2*pi.
/// Ships a closed-form transverse model for reproduction mode.
ExampleProblem make_mass_spring(int orbit_nodes = 256);

/// Synthetic 3-state problem with a circular orbit in the (z1, z2) plane and a
/// contracting third axis: f = (z2, -z1, -z3), two inputs, q = (z1^2+z2^2-1)^2 + z3^2.
ExampleProblem make_circular3(int orbit_nodes = 256);

std::vector<std::string> example_names();
ExampleProblem make_example(const std::string& name, int orbit_nodes = 256);

/// Loads a problem from a JSON config string: named built-in example plus
/// optional orbit-sample override (inline rows or a CSV path with header
/// theta,z1,...,zn).  Throws ValidationFailure on schema errors.
ExampleProblem load_problem_config(const std::string& json_text, const std::string& base_dir = ".");

}  // namespace orbitstab

#endif  // ORBITSTAB_MODEL_HPP_
