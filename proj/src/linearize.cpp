#include "orbitstab/linearize.hpp"

#include "orbitstab/derivatives.hpp"
#include "orbitstab/errors.hpp"

#include <Eigen/Dense>

#include <vector>

namespace orbitstab {

Eigen::MatrixXd PeriodicLinearization::hamiltonian(double t) const {
  Eigen::MatrixXd H(2 * d, 2 * d);
  H.topLeftCorner(d, d) = A(t);
  H.topRightCorner(d, d) = -Rbar(t);
  H.bottomLeftCorner(d, d) = -Q(t);
  H.bottomRightCorner(d, d) = -A(t).transpose();
  return H;
}

std::function<Eigen::MatrixXd(double)> PeriodicLinearization::hamiltonian_fn() const {
  return [self = *this](double t) { return self.hamiltonian(t); };
}

namespace {

Eigen::MatrixXd clip_psd(const Eigen::MatrixXd& Qraw, double t, int* clipped) {
  Eigen::MatrixXd Qs = 0.5 * (Qraw + Qraw.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Qs);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-6)
    throw NonPSDHessian("cost Hessian has eigenvalue " + std::to_string(min_eig) + " at t = " +
                        std::to_string(t));
  if (min_eig < 0.0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    Qs = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    Qs = 0.5 * (Qs + Qs.transpose());
    if (clipped) ++(*clipped);
  }
  return Qs;
}

void check_periodic(const std::function<Eigen::MatrixXd(double)>& fn, double T,
                    const char* what) {
  if ((fn(T) - fn(0.0)).cwiseAbs().maxCoeff() > 1e-8)
    throw ValidationFailure(std::string(what) + " is not periodic over the declared period");
}

}  // namespace

PeriodicLinearization transverse_linearization(const TransverseModel& tm, const CostSpec& cost,
                                               int N) {
  PeriodicLinearization lin;
  lin.period = tm.period();
  lin.d = tm.state_dim() - 1;
  lin.m = tm.input_dim();
  lin.R = cost.R;
  const Eigen::MatrixXd Rinv = cost.R.inverse();

  std::vector<Eigen::MatrixXd> As, B2s, Qs, Rbars;
  As.reserve(N);
  B2s.reserve(N);
  Qs.reserve(N);
  Rbars.reserve(N);
  int clipped = 0;

  Eigen::VectorXd x_on_orbit = Eigen::VectorXd::Zero(tm.state_dim());
  for (int k = 0; k < N; ++k) {
    const double t = lin.period * k / N;
    x_on_orbit(0) = t;
    As.push_back(tm.state_matrix(t));
    B2s.push_back(tm.input(x_on_orbit).bottomRows(lin.d));
    Qs.push_back(clip_psd(tm.cost_hessian_on_orbit(t), t, &clipped));
    Eigen::MatrixXd Rb = 0.5 * B2s.back() * Rinv * B2s.back().transpose();
    Rbars.push_back(0.5 * (Rb + Rb.transpose()));
  }

  check_periodic([&](double t) { return tm.state_matrix(t); }, lin.period, "A(t)");
  check_periodic([&](double t) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(tm.state_dim());
    x(0) = t;
    return Eigen::MatrixXd(tm.input(x));
  }, lin.period, "g(t,0)");

  lin.A = PeriodicMatrix::fit(As, lin.period);
  lin.B2 = PeriodicMatrix::fit(B2s, lin.period);
  lin.Q = PeriodicMatrix::fit(Qs, lin.period);
  lin.Rbar = PeriodicMatrix::fit(Rbars, lin.period);
  return lin;
}

void original_linearization(const ControlAffineSystem& system, const CostSpec& cost,
                            const PeriodicOrbit& orbit, int N, PeriodicLinearization& out) {
  out.n = system.n;
  std::vector<Eigen::MatrixXd> A0s, B0s, Q0s;
  A0s.reserve(N);
  B0s.reserve(N);
  Q0s.reserve(N);
  for (int k = 0; k < N; ++k) {
    const double t = orbit.period() * k / N;
    const Eigen::VectorXd z = orbit.point(t);
    A0s.push_back(system.df ? system.df(z)
                            : jacobian_central4([&](const Eigen::VectorXd& p) { return system.f(p); }, z));
    B0s.push_back(system.eval_g(z));
    Eigen::MatrixXd H = cost.d2q
                            ? cost.d2q(z)
                            : hessian_central2([&](const Eigen::VectorXd& p) { return cost.q(p); }, z);
    Q0s.push_back(0.5 * (H + H.transpose()));
  }
  out.A0 = PeriodicMatrix::fit(A0s, orbit.period());
  out.B0 = PeriodicMatrix::fit(B0s, orbit.period());
  out.Q0 = PeriodicMatrix::fit(Q0s, orbit.period());
}

}  // namespace orbitstab
