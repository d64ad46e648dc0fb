#include "orbitstab/riccati.hpp"

#include "orbitstab/errors.hpp"
#include "orbitstab/schur.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iostream>
#include <vector>

namespace orbitstab {

double RiccatiSolution::max_closed_loop_modulus() const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < closed_loop_multipliers.size(); ++i)
    worst = std::max(worst, std::abs(closed_loop_multipliers(i)));
  return worst;
}

namespace {

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& Q) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

RiccatiSolution solve_periodic_riccati(const PeriodicLinearization& lin, const Eigen::MatrixXd& R,
                                       double T, const RiccatiOptions& opts) {
  if (std::abs(T - lin.period) > 1e-12 * std::max(1.0, lin.period))
    throw std::invalid_argument("solve_periodic_riccati: period mismatch with linearization");
  if ((R - lin.R).norm() > 1e-12 * std::max(1.0, R.norm()))
    throw std::invalid_argument("solve_periodic_riccati: R does not match the linearization");
  const int d = lin.d;
  const int N = lin.A.node_count();

  RiccatiSolution sol;
  sol.period = T;
  sol.method = "monodromy-schur-subspace";

  // Existence gate (sufficient conditions); failure only flags the result.
  {
    const auto st_b2 = check_stabilizable(lin.A.as_function(), lin.B2.as_function(), d, T,
                                          opts.gram_tol, N);
    const auto st_rbar = check_stabilizable(lin.A.as_function(), lin.Rbar.as_function(), d, T,
                                            opts.gram_tol, N);
    const auto dt = check_detectable([&lin](double t) { return sqrt_psd(lin.Q(t)); },
                                     lin.A.as_function(), d, T, opts.gram_tol, N);
    sol.stabilizable_margin_B2 = st_b2.margin;
    sol.stabilizable_margin_Rbar = st_rbar.margin;
    sol.detectable_margin = dt.margin;
    sol.gates_verified = st_b2.verified && dt.verified;
    if (!sol.gates_verified)
      std::cerr << "solve_periodic_riccati: gramian gate not verified "
                << "(stabilizable margin " << st_b2.margin << ", detectable margin " << dt.margin
                << "); attempting anyway\n";
  }

  // Stable subspace of the monodromy of the Hamiltonian coefficient matrix.
  const MatrixFn ham = lin.hamiltonian_fn();
  const Eigen::MatrixXd Phi = fundamental_matrix(ham, 2 * d, 0.0, T, opts.ode);
  const OrderedSchur schur = ordered_schur_stable_first(Phi);
  if (schur.n_stable != d)
    throw NoStabilizingSolution("stable subspace has dimension " + std::to_string(schur.n_stable) +
                                ", expected " + std::to_string(d));
  Eigen::MatrixXd basis = schur.U.leftCols(d);  // [X; Y] at t = T (== t = 0 subspace)

  auto p_from_basis = [d, &opts](const Eigen::MatrixXd& V, double t) {
    const Eigen::MatrixXd X = V.topRows(d);
    const Eigen::MatrixXd Y = V.bottomRows(d);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(X);
    if (!lu.isInvertible() || lu.rcond() < 1e-13)
      throw NoStabilizingSolution("stable subspace is not a graph over the state block at t = " +
                                  std::to_string(t));
    Eigen::MatrixXd P = Y * lu.inverse();
    const double asym = (P - P.transpose()).norm();
    if (asym > opts.asymmetry_tol)
      throw NoStabilizingSolution("Riccati solution asymmetry " + std::to_string(asym) + " at t = " +
                                  std::to_string(t));
    P = 0.5 * (P + P.transpose());
    return std::make_pair(P, asym);
  };

  // Carry the basis backward over one period (the stable subspace is
  // attracting in reverse time), re-orthonormalizing at every grid node.
  std::vector<Eigen::MatrixXd> P_nodes(static_cast<size_t>(N));
  sol.max_asymmetry = 0.0;

  auto rhs = [&ham, d](double t, const Eigen::VectorXd& y) {
    const Eigen::Map<const Eigen::MatrixXd> V(y.data(), 2 * d, d);
    Eigen::VectorXd dy(y.size());
    Eigen::Map<Eigen::MatrixXd>(dy.data(), 2 * d, d) = ham(t) * V;
    return dy;
  };

  Eigen::MatrixXd V = basis;
  Eigen::MatrixXd P_end;  // P(T) from the Schur basis directly
  {
    auto [P, asym] = p_from_basis(V, T);
    P_end = P;
    sol.max_asymmetry = std::max(sol.max_asymmetry, asym);
  }
  for (int k = N; k-- > 0;) {
    const double t_hi = T * (k + 1) / N;
    const double t_lo = T * k / N;
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(V.data(), 2 * d * d);
    y = integrate_to(rhs, t_hi, y, t_lo, opts.ode);
    V = Eigen::Map<const Eigen::MatrixXd>(y.data(), 2 * d, d);
    // re-orthonormalize; the column space is what matters
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
    V = qr.householderQ() * Eigen::MatrixXd::Identity(2 * d, d);
    auto [P, asym] = p_from_basis(V, t_lo);
    P_nodes[static_cast<size_t>(k)] = P;
    sol.max_asymmetry = std::max(sol.max_asymmetry, asym);
  }

  sol.P = PeriodicMatrix::fit(P_nodes, T);
  sol.periodicity_error = (P_nodes[0] - P_end).norm();

  // PSD check over the nodes.
  sol.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (const auto& P : P_nodes) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    sol.min_eigenvalue = std::min(sol.min_eigenvalue, es.eigenvalues().minCoeff());
  }
  if (sol.min_eigenvalue < -opts.psd_tol)
    throw NoStabilizingSolution("Riccati solution is not positive semi-definite (min eig " +
                                std::to_string(sol.min_eigenvalue) + ")");

  // Closed-loop multipliers of A - Rbar P.
  {
    const PeriodicMatrix Pm = sol.P;
    const MatrixFn closed = [&lin, Pm](double t) { return Eigen::MatrixXd(lin.A(t) - lin.Rbar(t) * Pm(t)); };
    FloquetOptions fo;
    fo.ode = opts.ode;
    const MonodromyReport rep = monodromy(closed, d, T, fo);
    sol.closed_loop_multipliers = rep.multipliers;
    if (sol.max_closed_loop_modulus() >= 1.0)
      throw NoStabilizingSolution("closed loop A - Rbar P is not asymptotically stable (|lambda| = " +
                                  std::to_string(sol.max_closed_loop_modulus()) + ")");
  }

  sol.residuals = riccati_residual(sol, lin);
  const double max_res = sol.residuals.maxCoeff();
  if (max_res > opts.residual_tol)
    throw ResidualTooLarge("Riccati equation residual " + std::to_string(max_res) +
                           " exceeds tolerance");
  if (sol.periodicity_error > 1e-6)
    throw NoStabilizingSolution("Riccati solution is not periodic (gap " +
                                std::to_string(sol.periodicity_error) + ")");
  return sol;
}

Eigen::VectorXd riccati_residual(const RiccatiSolution& sol, const PeriodicLinearization& lin) {
  const int N = lin.A.node_count();
  Eigen::VectorXd res(N);
  for (int k = 0; k < N; ++k) {
    const double t = lin.A.node_time(k);
    const Eigen::MatrixXd P = sol.P(t);
    const Eigen::MatrixXd Pdot = sol.P.derivative(t);
    const Eigen::MatrixXd A = lin.A(t);
    res(k) = (Pdot + A.transpose() * P + P * A - P * lin.Rbar(t) * P + lin.Q(t)).norm();
  }
  return res;
}

PeriodicMatrix linear_feedback(const RiccatiSolution& sol, const PeriodicLinearization& lin,
                               const Eigen::MatrixXd& R) {
  const int N = lin.B2.node_count();
  const Eigen::MatrixXd Rinv = R.inverse();
  std::vector<Eigen::MatrixXd> K(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    const double t = lin.B2.node_time(k);
    K[static_cast<size_t>(k)] = -0.5 * Rinv * lin.B2(t).transpose() * sol.P(t);
  }
  return PeriodicMatrix::fit(K, lin.period);
}

}  // namespace orbitstab
