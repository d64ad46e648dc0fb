#ifndef ORBITSTAB_DERIVATIVES_HPP_
#define ORBITSTAB_DERIVATIVES_HPP_

#include <Eigen/Core>

#include <functional>

namespace orbitstab {

/// Finite-difference derivatives used wherever no analytic evaluator is
/// supplied.  First derivatives are 4th-order central differences; Hessians
/// are 2nd-order central second differences, symmetrized by the caller.

inline double fd_step(const Eigen::VectorXd& x) {
  return std::max(1e-5, 1e-5 * x.norm());
}

/// 4th-order central difference of a vector-valued function along coordinate i.
Eigen::VectorXd partial_central4(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, int i, double h);

/// Full Jacobian via 4th-order central differences.
Eigen::MatrixXd jacobian_central4(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h = 0.0);

/// Gradient of a scalar function via 4th-order central differences.
Eigen::VectorXd gradient_central4(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h = 0.0);

/// Symmetrized Hessian via 2nd-order central second differences (step per
/// coordinate, default 1e-4).
Eigen::MatrixXd hessian_central2(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-4);

}  // namespace orbitstab

#endif  // ORBITSTAB_DERIVATIVES_HPP_
