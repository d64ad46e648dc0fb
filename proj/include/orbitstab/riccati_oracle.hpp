#ifndef ORBITSTAB_RICCATI_ORACLE_HPP_
#define ORBITSTAB_RICCATI_ORACLE_HPP_

#include "orbitstab/fourier.hpp"
#include "orbitstab/linearize.hpp"

#include <Eigen/Core>

namespace orbitstab {

/// Independent cross-check for the subspace-based periodic Riccati solver:
/// integrates the Riccati ODE itself backward from P(tf) = 0 until successive
/// period samples settle, then returns one converged period on the grid.
/// Deliberately shares no code path with solve_periodic_riccati.
struct RiccatiOracleResult {
  PeriodicMatrix P;
  int periods_used = 0;
  double settle_gap = 0.0;  // |P_k - P_{k+1}| between the last two periods
};

RiccatiOracleResult riccati_backward_oracle(const PeriodicLinearization& lin, double T,
                                            int min_periods = 20, int max_periods = 80,
                                            double settle_tol = 1e-8);

}  // namespace orbitstab

#endif  // ORBITSTAB_RICCATI_ORACLE_HPP_
