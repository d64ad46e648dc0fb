#include "orbitstab/floquet.hpp"

#include "orbitstab/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace orbitstab {

namespace {

Eigen::MatrixXd symplectic_J(int d) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  J.topRightCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
  J.bottomLeftCorner(d, d) = -Eigen::MatrixXd::Identity(d, d);
  return J;
}

/// Integrates the matrix ODE together with the trace integral for the
/// Liouville check.  State layout: [vec(Phi); int tr A].
Eigen::MatrixXd integrate_fundamental(const MatrixFn& A, int dim, double t0, double t1,
                                      const IntegrateOptions& opts, double* trace_integral) {
  const int sz = dim * dim;
  auto rhs = [&A, dim, sz](double t, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd At = A(t);
    const Eigen::Map<const Eigen::MatrixXd> Phi(y.data(), dim, dim);
    Eigen::VectorXd dy(sz + 1);
    Eigen::Map<Eigen::MatrixXd>(dy.data(), dim, dim) = At * Phi;
    dy(sz) = At.trace();
    return dy;
  };
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(sz + 1);
  Eigen::Map<Eigen::MatrixXd>(y0.data(), dim, dim).setIdentity();
  const Eigen::VectorXd y1 = integrate_to(rhs, t0, y0, t1, opts);
  if (trace_integral) *trace_integral = y1(sz);
  return Eigen::Map<const Eigen::MatrixXd>(y1.data(), dim, dim);
}

}  // namespace

int MonodromyReport::count_near_one(double tol) const {
  int count = 0;
  for (Eigen::Index i = 0; i < multipliers.size(); ++i)
    if (std::abs(multipliers(i) - std::complex<double>(1.0, 0.0)) <= tol) ++count;
  return count;
}

Eigen::MatrixXd fundamental_matrix(const MatrixFn& A, int dim, double t0, double t1,
                                   const IntegrateOptions& opts) {
  return integrate_fundamental(A, dim, t0, t1, opts, nullptr);
}

MonodromyReport monodromy(const MatrixFn& A, int dim, double T, const FloquetOptions& opts) {
  MonodromyReport rep;
  rep.epsilon = opts.epsilon;

  double trace_integral = 0.0;
  rep.monodromy = integrate_fundamental(A, dim, 0.0, T, opts.ode, &trace_integral);

  const double det = rep.monodromy.determinant();
  const double liouville = std::exp(trace_integral);
  rep.liouville_residual = std::abs(std::abs(det) - liouville) / liouville;

  Eigen::EigenSolver<Eigen::MatrixXd> es(rep.monodromy);
  Eigen::VectorXcd mult = es.eigenvalues();
  std::vector<int> order(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&mult](int a, int b) { return std::abs(mult(a)) > std::abs(mult(b)); });
  rep.multipliers.resize(dim);
  for (int i = 0; i < dim; ++i) rep.multipliers(i) = mult(order[static_cast<size_t>(i)]);

  for (Eigen::Index i = 0; i < rep.multipliers.size(); ++i) {
    const double mod = std::abs(rep.multipliers(i));
    if (mod < 1.0 - opts.epsilon)
      ++rep.n_stable;
    else if (mod > 1.0 + opts.epsilon)
      ++rep.n_unstable;
    else
      ++rep.n_unit;
  }

  if (opts.hamiltonian_structure) {
    if (dim % 2 != 0) throw std::invalid_argument("monodromy: Hamiltonian dimension must be even");
    const Eigen::MatrixXd J = symplectic_J(dim / 2);
    rep.symplectic_residual = (rep.monodromy.transpose() * J * rep.monodromy - J).norm();

    // Greedy reciprocal pairing: for each multiplier find the best partner.
    double worst = 0.0;
    for (Eigen::Index i = 0; i < rep.multipliers.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < rep.multipliers.size(); ++j)
        best = std::min(best, std::abs(rep.multipliers(i) * rep.multipliers(j) - 1.0));
      worst = std::max(worst, best);
    }
    rep.reciprocal_residual = worst;
  }
  return rep;
}

Eigen::MatrixXd controllability_gramian(const MatrixFn& A, const MatrixFn& B, int dim, double t0,
                                        double t1, int quad_intervals) {
  if (!(t1 > t0)) throw std::invalid_argument("controllability_gramian: need t1 > t0");
  int N = quad_intervals;
  if (N % 2 != 0) ++N;
  const double h = (t1 - t0) / N;

  // M(s) = Phi(t1, s) solves dM/ds = -M A(s), M(t1) = I; integrate backward
  // over the Simpson grid and accumulate the weighted integrand.
  const int sz = dim * dim;
  auto rhs = [&A, dim](double s, const Eigen::VectorXd& y) {
    const Eigen::Map<const Eigen::MatrixXd> M(y.data(), dim, dim);
    Eigen::VectorXd dy(y.size());
    Eigen::Map<Eigen::MatrixXd>(dy.data(), dim, dim) = -M * A(s);
    return dy;
  };
  Eigen::VectorXd y = Eigen::VectorXd::Zero(sz);
  Eigen::Map<Eigen::MatrixXd>(y.data(), dim, dim).setIdentity();

  std::vector<double> nodes(static_cast<size_t>(N + 1));
  for (int k = 0; k <= N; ++k) nodes[static_cast<size_t>(k)] = t1 - h * k;  // backward
  const OdeResult states = integrate_dopri(rhs, t1, y, nodes);

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, dim);
  for (int k = 0; k <= N; ++k) {
    const double s = nodes[static_cast<size_t>(k)];
    const Eigen::Map<const Eigen::MatrixXd> M(states.states[static_cast<size_t>(k)].data(), dim, dim);
    const Eigen::MatrixXd Bs = B(s);
    const Eigen::MatrixXd F = M * Bs * Bs.transpose() * M.transpose();
    const double w = (k == 0 || k == N) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    W += w * F;
  }
  W *= h / 3.0;
  return 0.5 * (W + W.transpose());
}

Eigen::MatrixXd observability_gramian(const MatrixFn& C, const MatrixFn& A, int dim, double t0,
                                      double t1, int quad_intervals) {
  if (!(t1 > t0)) throw std::invalid_argument("observability_gramian: need t1 > t0");
  int N = quad_intervals;
  if (N % 2 != 0) ++N;
  const double h = (t1 - t0) / N;

  const int sz = dim * dim;
  auto rhs = [&A, dim](double s, const Eigen::VectorXd& y) {
    const Eigen::Map<const Eigen::MatrixXd> M(y.data(), dim, dim);
    Eigen::VectorXd dy(y.size());
    Eigen::Map<Eigen::MatrixXd>(dy.data(), dim, dim) = A(s) * M;
    return dy;
  };
  Eigen::VectorXd y = Eigen::VectorXd::Zero(sz);
  Eigen::Map<Eigen::MatrixXd>(y.data(), dim, dim).setIdentity();

  std::vector<double> nodes(static_cast<size_t>(N + 1));
  for (int k = 0; k <= N; ++k) nodes[static_cast<size_t>(k)] = t0 + h * k;
  const OdeResult states = integrate_dopri(rhs, t0, y, nodes);

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, dim);
  for (int k = 0; k <= N; ++k) {
    const double s = nodes[static_cast<size_t>(k)];
    const Eigen::Map<const Eigen::MatrixXd> M(states.states[static_cast<size_t>(k)].data(), dim, dim);
    const Eigen::MatrixXd Cs = C(s);
    const Eigen::MatrixXd F = M.transpose() * Cs.transpose() * Cs * M;
    const double w = (k == 0 || k == N) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    W += w * F;
  }
  W *= h / 3.0;
  return 0.5 * (W + W.transpose());
}

GramianTest check_stabilizable(const MatrixFn& A, const MatrixFn& B, int dim, double T,
                               double gram_tol, int quad_intervals) {
  const Eigen::MatrixXd W = controllability_gramian(A, B, dim, 0.0, T, quad_intervals);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
  GramianTest out;
  out.margin = es.eigenvalues().minCoeff();
  out.verified = out.margin > gram_tol;
  return out;
}

GramianTest check_detectable(const MatrixFn& C, const MatrixFn& A, int dim, double T,
                             double gram_tol, int quad_intervals) {
  const Eigen::MatrixXd W = observability_gramian(C, A, dim, 0.0, T, quad_intervals);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
  GramianTest out;
  out.margin = es.eigenvalues().minCoeff();
  out.verified = out.margin > gram_tol;
  return out;
}

}  // namespace orbitstab
