#include "orbitstab/floquet.hpp"
#include "orbitstab/hamilton.hpp"
#include "orbitstab/riccati.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace orbitstab {

MonodromyReport full_orbit_monodromy(const HamiltonianSystem& hs, const FloquetOptions& opts) {
  const int dim = 2 * hs.state_dim();
  const double T = hs.period();

  // The on-orbit Jacobian is smooth and T-periodic: sample once, interpolate,
  // and integrate the interpolated coefficients.
  const PeriodicMatrix Jorb = PeriodicMatrix::from_function(
      [&hs](double t) { return hs.vector_field_jacobian_on_orbit(t); }, dim, dim, T, 256);

  FloquetOptions fo = opts;
  fo.hamiltonian_structure = true;
  return monodromy(Jorb.as_function(), dim, T, fo);
}

NhimReport verify_nhim(const RiccatiSolution& riccati, const PeriodicLinearization& lin,
                       const HamiltonianSystem& hs, const FloquetOptions& opts) {
  NhimReport rep;
  const int d = lin.d;
  const double eps = opts.epsilon;
  std::ostringstream detail;

  // (i) closed-loop multipliers of A - Rbar P strictly inside the unit circle
  rep.max_closed_loop_modulus = riccati.max_closed_loop_modulus();
  const bool closed_loop_ok = rep.max_closed_loop_modulus < 1.0 - eps;
  if (!closed_loop_ok) {
    detail << "closed-loop multiplier modulus " << rep.max_closed_loop_modulus
           << " not inside the unit circle by " << eps << "; ";
    for (Eigen::Index i = 0; i < riccati.closed_loop_multipliers.size(); ++i)
      if (std::abs(riccati.closed_loop_multipliers(i)) >= 1.0 - eps)
        rep.offending_multiplier = riccati.closed_loop_multipliers(i);
  }

  // (ii) the full 2n monodromy splits as 2 unit + d inside + d outside
  const MonodromyReport full = full_orbit_monodromy(hs, opts);
  rep.unit_multiplicity = full.count_near_one(eps);
  rep.dim_stable = full.n_stable;
  rep.dim_unstable = full.n_unstable;

  double closest_to_one = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < full.multipliers.size(); ++i)
    closest_to_one = std::min(closest_to_one, std::abs(full.multipliers(i) - 1.0));
  rep.tangent_multiplier_deviation = closest_to_one;

  const bool split_ok = rep.dim_stable == d && rep.dim_unstable == d && full.n_unit == 2 &&
                        rep.unit_multiplicity >= 2;
  if (!split_ok) {
    detail << "monodromy split (" << full.n_unit << " unit, " << full.n_stable << " stable, "
           << full.n_unstable << " unstable) is not (2, " << d << ", " << d << "); ";
    for (Eigen::Index i = 0; i < full.multipliers.size(); ++i) {
      const double mod = std::abs(full.multipliers(i));
      const bool near_unit = std::abs(mod - 1.0) <= eps;
      const bool is_one = std::abs(full.multipliers(i) - 1.0) <= eps;
      if (near_unit && !is_one) rep.offending_multiplier = full.multipliers(i);
    }
  }

  // (iii) rates from the extreme transverse multipliers
  double max_stable = 0.0;
  double min_unstable = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < full.multipliers.size(); ++i) {
    const double mod = std::abs(full.multipliers(i));
    if (mod < 1.0 - eps) max_stable = std::max(max_stable, mod);
    if (mod > 1.0 + eps) min_unstable = std::min(min_unstable, mod);
  }
  if (max_stable > 0.0) rep.contraction_rate = -std::log(max_stable) / hs.period();
  if (std::isfinite(min_unstable)) rep.expansion_rate = std::log(min_unstable) / hs.period();

  rep.pass = closed_loop_ok && split_ok;
  rep.detail = rep.pass ? "normally hyperbolic" : detail.str();
  return rep;
}

}  // namespace orbitstab
