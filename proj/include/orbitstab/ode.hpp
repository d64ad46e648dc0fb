#ifndef ORBITSTAB_ODE_HPP_
#define ORBITSTAB_ODE_HPP_

#include <Eigen/Core>

#include <functional>
#include <limits>
#include <vector>

namespace orbitstab {

using OdeRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

struct IntegrateOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 4'000'000;
  /// Optional stop predicate checked after every accepted step; integration
  /// halts at the first step end where it returns true.
  std::function<bool(double, const Eigen::VectorXd&)> stop;
};

struct OdeResult {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  bool stopped = false;  // stop predicate fired before reaching the last sample time
  long steps = 0;

  const Eigen::VectorXd& back() const { return states.back(); }
};

/// Adaptive embedded Dormand-Prince 5(4) integrator.  Integrates from t0 to
/// the last entry of sample_times (monotone, forward or backward), recording
/// the state at every sample time exactly (steps are clipped to land on them).
OdeResult integrate_dopri(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0,
                          const std::vector<double>& sample_times,
                          const IntegrateOptions& opts = {});

/// Single-endpoint convenience wrapper.
Eigen::VectorXd integrate_to(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0,
                             double t1, const IntegrateOptions& opts = {});

}  // namespace orbitstab

#endif  // ORBITSTAB_ODE_HPP_
