#include "orbitstab/riccati_oracle.hpp"

#include "orbitstab/errors.hpp"
#include "orbitstab/ode.hpp"

#include <Eigen/Dense>

#include <vector>

namespace orbitstab {

RiccatiOracleResult riccati_backward_oracle(const PeriodicLinearization& lin, double T,
                                            int min_periods, int max_periods, double settle_tol) {
  const int d = lin.d;
  const int N = lin.A.node_count();

  // Pdot = -(A^T P + P A - P Rbar P + Q), integrated backward in time.
  auto rhs = [&lin, d](double t, const Eigen::VectorXd& y) {
    const Eigen::Map<const Eigen::MatrixXd> P(y.data(), d, d);
    const Eigen::MatrixXd A = lin.A(t);
    Eigen::MatrixXd Pdot = -(A.transpose() * P + P * A - P * lin.Rbar(t) * P + lin.Q(t));
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(Pdot.data(), d * d));
  };

  IntegrateOptions opts;
  opts.abs_tol = opts.rel_tol = 1e-11;

  Eigen::VectorXd y = Eigen::VectorXd::Zero(d * d);  // P(tf) = 0
  std::vector<Eigen::MatrixXd> current(static_cast<size_t>(N));
  std::vector<Eigen::MatrixXd> previous;

  int period = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (; period < max_periods; ++period) {
    // walk one period backward, recording grid nodes (descending time)
    for (int k = N; k-- > 0;) {
      const double t_hi = T * (k + 1) / N;
      const double t_lo = T * k / N;
      y = integrate_to(rhs, t_hi, y, t_lo, opts);
      current[static_cast<size_t>(k)] = Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d);
    }
    if (!previous.empty()) {
      gap = 0.0;
      for (int k = 0; k < N; ++k)
        gap = std::max(gap, (current[static_cast<size_t>(k)] - previous[static_cast<size_t>(k)]).norm());
      if (period + 1 >= min_periods && gap < settle_tol) break;
    }
    previous = current;
  }
  if (gap >= settle_tol)
    throw ResidualTooLarge("riccati_backward_oracle: no periodic limit after " +
                           std::to_string(max_periods) + " periods (gap " + std::to_string(gap) + ")");

  for (auto& P : current) P = 0.5 * (P + P.transpose());
  RiccatiOracleResult out;
  out.P = PeriodicMatrix::fit(current, T);
  out.periods_used = period + 1;
  out.settle_gap = gap;
  return out;
}

}  // namespace orbitstab
