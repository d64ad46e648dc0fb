#include "orbitstab/frame.hpp"

#include "orbitstab/derivatives.hpp"
#include "orbitstab/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace orbitstab {

namespace {

/// Orthonormal complement of a unit vector e: for n = 2 the 90-degree
/// rotation (outward-radial on circular orbits); otherwise the non-axis
/// columns of the Householder reflection mapping e to a coordinate axis.
Eigen::MatrixXd seed_complement(const Eigen::VectorXd& e) {
  const int n = static_cast<int>(e.size());
  if (n == 2) {
    Eigen::MatrixXd Z(2, 1);
    Z << -e(1), e(0);
    return Z;
  }
  int axis = 0;
  e.cwiseAbs().maxCoeff(&axis);
  Eigen::VectorXd v = e;
  v(axis) += e(axis) >= 0.0 ? 1.0 : -1.0;
  const Eigen::MatrixXd H =
      Eigen::MatrixXd::Identity(n, n) - 2.0 / v.squaredNorm() * v * v.transpose();
  Eigen::MatrixXd Z(n, n - 1);
  int col = 0;
  for (int j = 0; j < n; ++j)
    if (j != axis) Z.col(col++) = H.col(j);
  return Z;
}

/// Projects the previous complement onto the orthogonal complement of the new
/// tangent and re-orthonormalizes (modified Gram-Schmidt).
Eigen::MatrixXd transport_complement(const Eigen::MatrixXd& Z_prev, const Eigen::VectorXd& e_new) {
  const int d = static_cast<int>(Z_prev.cols());
  Eigen::MatrixXd Z = Z_prev - e_new * (e_new.transpose() * Z_prev);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < j; ++i) Z.col(j) -= Z.col(i).dot(Z.col(j)) * Z.col(i);
    const double nrm = Z.col(j).norm();
    if (nrm < 1e-8)
      throw NonOrientableFrame("frame continuation degenerated: complement lost rank");
    Z.col(j) /= nrm;
  }
  return Z;
}

}  // namespace

MovingFrame build_frame(const PeriodicOrbit& orbit, const ControlAffineSystem& system, int K) {
  if (K < 8) throw ValidationFailure("build_frame: need at least 8 nodes");
  if (orbit.dim() < 2) throw ValidationFailure("build_frame: dimension must be >= 2");

  std::vector<Eigen::MatrixXd> e1_nodes(static_cast<size_t>(K));
  std::vector<Eigen::MatrixXd> Z_nodes(static_cast<size_t>(K));

  double min_curvature_radius = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    const double th = orbit.period() * k / K;
    const Eigen::VectorXd v = orbit.velocity(th);
    const double speed = v.norm();
    if (speed < 1e-12) throw ValidationFailure("build_frame: equilibrium point on the orbit");
    const Eigen::VectorXd e = v / speed;
    // sanity: the tangent should agree with the vector field direction
    const Eigen::VectorXd fv = system.eval_f(orbit.point(th));
    if ((fv - v).norm() > 1e-6 * std::max(1.0, speed))
      throw ValidationFailure("build_frame: orbit is not a trajectory of the drift");
    e1_nodes[static_cast<size_t>(k)] = e;

    const Eigen::VectorXd acc = orbit.acceleration(th);
    const Eigen::VectorXd acc_perp = acc - e * (e.dot(acc));
    if (acc_perp.norm() > 1e-12)
      min_curvature_radius = std::min(min_curvature_radius, speed * speed / acc_perp.norm());
  }

  Z_nodes[0] = seed_complement(e1_nodes[0]);
  for (int k = 1; k < K; ++k)
    Z_nodes[static_cast<size_t>(k)] = transport_complement(Z_nodes[static_cast<size_t>(k - 1)], e1_nodes[static_cast<size_t>(k)]);

  const Eigen::MatrixXd Z_closed = transport_complement(Z_nodes[static_cast<size_t>(K - 1)], e1_nodes[0]);
  const double closure = (Z_closed - Z_nodes[0]).norm();
  if (closure > 1e-8)
    throw NonOrientableFrame("frame continuation does not close over the period (residual " +
                             std::to_string(closure) + ")");

  MovingFrame frame;
  frame.e1_ = PeriodicMatrix::fit(e1_nodes, orbit.period());
  frame.Z_ = PeriodicMatrix::fit(Z_nodes, orbit.period());
  frame.closure_error_ = closure;
  frame.tube_radius_ = 0.5 * min_curvature_radius;
  return frame;
}

Eigen::VectorXd from_transverse(double x1, const Eigen::VectorXd& x2, const MovingFrame& frame,
                                const PeriodicOrbit& orbit) {
  return orbit.point(x1) + frame.complement(x1) * x2;
}

TransverseCoords to_transverse(const Eigen::VectorXd& z, const MovingFrame& frame,
                               const PeriodicOrbit& orbit) {
  const double T = orbit.period();
  const int K = orbit.node_count();

  // Node distances; Newton from every local minimum of the cyclic profile.
  Eigen::VectorXd dist(K);
  for (int k = 0; k < K; ++k) dist(k) = (z - orbit.samples().col(k)).norm();

  struct Candidate {
    double x1;
    double distance;
  };
  std::vector<Candidate> candidates;
  auto newton_from = [&](double s0) {
    double s = s0;
    for (int it = 0; it < 60; ++it) {
      const Eigen::VectorXd gamma = orbit.point(s);
      const Eigen::VectorXd vel = orbit.velocity(s);
      const Eigen::VectorXd acc = orbit.acceleration(s);
      const Eigen::VectorXd r = z - gamma;
      const double phi = vel.dot(r);
      const double dphi = acc.dot(r) - vel.squaredNorm();
      if (std::abs(dphi) < 1e-14) return;
      const double step = phi / dphi;
      s -= step;
      if (std::abs(step) < 1e-13 * std::max(1.0, T)) {
        s -= T * std::floor(s / T);
        candidates.push_back({s, (z - orbit.point(s)).norm()});
        return;
      }
    }
  };

  for (int k = 0; k < K; ++k) {
    const double prev = dist((k + K - 1) % K);
    const double next = dist((k + 1) % K);
    if (dist(k) <= prev && dist(k) <= next) newton_from(orbit.node(k));
  }
  if (candidates.empty()) throw OutOfTube("to_transverse: phase Newton iteration failed");

  // Deduplicate converged phases; ties in distance break toward smallest x1.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.x1 < b.x1;
  });
  std::vector<Candidate> unique;
  for (const auto& c : candidates) {
    if (!unique.empty() && std::abs(c.x1 - unique.back().x1) < 1e-9 * T) continue;
    unique.push_back(c);
  }
  Candidate best = unique.front();
  for (const auto& c : unique)
    if (c.distance < best.distance - 1e-9) best = c;

  TransverseCoords tc;
  tc.x1 = best.x1;
  const Eigen::VectorXd r = z - orbit.point(tc.x1);
  tc.x2 = frame.complement(tc.x1).transpose() * r;

  if (tc.x2.norm() > frame.tube_radius())
    throw OutOfTube("to_transverse: point outside the tube (|x2| = " + std::to_string(tc.x2.norm()) + ")");
  const double recon = (from_transverse(tc.x1, tc.x2, frame, orbit) - z).norm();
  if (recon > 1e-10 * std::max(1.0, z.norm()))
    throw OutOfTube("to_transverse: chart reconstruction failed (residual " + std::to_string(recon) + ")");
  return tc;
}

Eigen::MatrixXd TransverseModel::chart_jacobian(const Eigen::VectorXd& x) const {
  const double x1 = x(0);
  const Eigen::VectorXd x2 = x.tail(n_ - 1);
  Eigen::MatrixXd J(n_, n_);
  J.col(0) = orbit_->velocity(x1) + frame_->complement_derivative(x1) * x2;
  J.rightCols(n_ - 1) = frame_->complement(x1);
  return J;
}

Eigen::VectorXd TransverseModel::psi(const Eigen::VectorXd& x) const {
  if (!frame_) throw Error("TransverseModel: closed-form model has no chart map");
  return from_transverse(x(0), x.tail(n_ - 1), *frame_, *orbit_);
}

Eigen::VectorXd TransverseModel::drift(const Eigen::VectorXd& x) const {
  if (mode_ == Mode::closed_form) return cf_drift_(x);
  const Eigen::MatrixXd J = chart_jacobian(x);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (lu.rcond() < 1e-10)
    throw SingularJacobian("transverse chart Jacobian singular at x1 = " + std::to_string(x(0)));
  return lu.solve(sys_f_(psi(x)));
}

Eigen::MatrixXd TransverseModel::input(const Eigen::VectorXd& x) const {
  if (mode_ == Mode::closed_form) return cf_input_(x);
  const Eigen::MatrixXd J = chart_jacobian(x);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (lu.rcond() < 1e-10)
    throw SingularJacobian("transverse chart Jacobian singular at x1 = " + std::to_string(x(0)));
  return lu.solve(sys_g_(psi(x)));
}

double TransverseModel::cost(const Eigen::VectorXd& x) const {
  if (mode_ == Mode::closed_form) return cf_cost_(x);
  return sys_q_(psi(x));
}

Eigen::VectorXd TransverseModel::dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return drift(x) + input(x) * u;
}

Eigen::VectorXd TransverseModel::f2(const Eigen::VectorXd& x) const {
  return drift(x).tail(n_ - 1) - state_matrix(x(0)) * x.tail(n_ - 1);
}

Eigen::MatrixXd TransverseModel::state_matrix(double t) const {
  if (mode_ == Mode::closed_form && cf_state_matrix_) return cf_state_matrix_(t);
  // d(x2dot)/dx2 at (t, 0), 4th-order central differences.
  auto tail_drift = [this, t](const Eigen::VectorXd& x2) {
    Eigen::VectorXd x(n_);
    x(0) = t;
    x.tail(n_ - 1) = x2;
    return Eigen::VectorXd(drift(x).tail(n_ - 1));
  };
  return jacobian_central4(tail_drift, Eigen::VectorXd::Zero(n_ - 1), 1e-5);
}

Eigen::MatrixXd TransverseModel::cost_hessian_on_orbit(double t) const {
  if (mode_ == Mode::closed_form && cf_cost_hessian_) return cf_cost_hessian_(t);
  if (mode_ == Mode::generic && sys_d2q_) {
    // psi is affine in x2, so the chart Hessian term vanishes on the orbit
    // where grad q = 0: Q(t) = Z^T (d2q o gamma) Z exactly.
    const Eigen::MatrixXd Z = frame_->complement(t);
    const Eigen::MatrixXd H = Z.transpose() * sys_d2q_(orbit_->point(t)) * Z;
    return 0.5 * (H + H.transpose());
  }
  auto qx2 = [this, t](const Eigen::VectorXd& x2) {
    Eigen::VectorXd x(n_);
    x(0) = t;
    x.tail(n_ - 1) = x2;
    return cost(x);
  };
  return hessian_central2(qx2, Eigen::VectorXd::Zero(n_ - 1), 1e-4);
}

TransverseModel transverse_dynamics(const ControlAffineSystem& system, const CostSpec& cost,
                                    const MovingFrame& frame, const PeriodicOrbit& orbit) {
  TransverseModel tm;
  tm.mode_ = TransverseModel::Mode::generic;
  tm.n_ = system.n;
  tm.m_ = system.m;
  tm.period_ = orbit.period();
  tm.tube_radius_ = frame.tube_radius();
  tm.frame_ = std::make_shared<MovingFrame>(frame);
  tm.orbit_ = std::make_shared<PeriodicOrbit>(orbit);
  tm.sys_f_ = system.f;
  tm.sys_g_ = system.g;
  tm.sys_q_ = cost.q;
  tm.sys_df_ = system.df;
  tm.sys_dg_ = system.dg;
  tm.sys_dq_ = cost.dq;
  tm.sys_d2q_ = cost.d2q;
  return tm;
}

bool TransverseModel::has_analytic_x_derivatives() const {
  if (mode_ == Mode::closed_form)
    return static_cast<bool>(cf_drift_jac_) && static_cast<bool>(cf_input_jx_) &&
           static_cast<bool>(cf_cost_grad_);
  return true;  // chain rule through the chart; system derivatives or plain FD of f, g, q
}

/// d(Dpsi)/dx_i: for i = 0 the columns are [gammaddot + Z'' x2 | Z'];
/// for i = j >= 1 only the phase column moves, by Z'.col(j-1).
Eigen::MatrixXd TransverseModel::chart_jacobian_partial(const Eigen::VectorXd& x, int i) const {
  const double x1 = x(0);
  const Eigen::VectorXd x2 = x.tail(n_ - 1);
  Eigen::MatrixXd dJ = Eigen::MatrixXd::Zero(n_, n_);
  if (i == 0) {
    dJ.col(0) = orbit_->acceleration(x1) + frame_->complement_second_derivative(x1) * x2;
    dJ.rightCols(n_ - 1) = frame_->complement_derivative(x1);
  } else {
    dJ.col(0) = frame_->complement_derivative(x1).col(i - 1);
  }
  return dJ;
}

Eigen::MatrixXd TransverseModel::drift_jacobian(const Eigen::VectorXd& x) const {
  if (mode_ == Mode::closed_form) return cf_drift_jac_(x);
  const Eigen::MatrixXd J = chart_jacobian(x);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  const Eigen::VectorXd z = psi(x);
  const Eigen::VectorXd dr = lu.solve(sys_f_(z));
  const Eigen::MatrixXd df =
      sys_df_ ? sys_df_(z) : jacobian_central4([this](const Eigen::VectorXd& v) { return sys_f_(v); }, z);
  Eigen::MatrixXd out(n_, n_);
  for (int i = 0; i < n_; ++i)
    out.col(i) = lu.solve(df * J.col(i) - chart_jacobian_partial(x, i) * dr);
  return out;
}

std::vector<Eigen::MatrixXd> TransverseModel::input_x_jacobians(const Eigen::VectorXd& x) const {
  if (mode_ == Mode::closed_form) return cf_input_jx_(x);
  const Eigen::MatrixXd J = chart_jacobian(x);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  const Eigen::VectorXd z = psi(x);
  const Eigen::MatrixXd gz = sys_g_(z);
  const Eigen::MatrixXd gx = lu.solve(gz);

  std::vector<Eigen::MatrixXd> dg;
  if (sys_dg_) {
    dg = sys_dg_(z);
  } else {
    dg.reserve(static_cast<size_t>(m_));
    for (int c = 0; c < m_; ++c)
      dg.push_back(jacobian_central4(
          [this, c](const Eigen::VectorXd& v) { return Eigen::VectorXd(sys_g_(v).col(c)); }, z));
  }

  std::vector<Eigen::MatrixXd> out(static_cast<size_t>(n_));
  for (int i = 0; i < n_; ++i) {
    const Eigen::MatrixXd dJ = chart_jacobian_partial(x, i);
    Eigen::MatrixXd block(n_, m_);
    for (int c = 0; c < m_; ++c)
      block.col(c) = lu.solve(dg[static_cast<size_t>(c)] * J.col(i) - dJ * gx.col(c));
    out[static_cast<size_t>(i)] = block;
  }
  return out;
}

Eigen::VectorXd TransverseModel::cost_gradient(const Eigen::VectorXd& x) const {
  if (mode_ == Mode::closed_form) return cf_cost_grad_(x);
  const Eigen::VectorXd z = psi(x);
  const Eigen::VectorXd dq =
      sys_dq_ ? sys_dq_(z)
              : gradient_central4([this](const Eigen::VectorXd& v) { return sys_q_(v); }, z);
  const Eigen::MatrixXd J = chart_jacobian(x);
  return J.transpose() * dq;
}

TransverseModel reproduction_model(const ExampleProblem& problem) {
  if (!problem.closed_form)
    throw ValidationFailure("example '" + problem.name + "' has no closed-form transverse model");
  const ClosedFormTransverse& cf = *problem.closed_form;
  TransverseModel tm;
  tm.mode_ = TransverseModel::Mode::closed_form;
  tm.n_ = cf.n;
  tm.m_ = cf.m;
  tm.period_ = cf.period;
  tm.tube_radius_ = cf.x2_bound;
  tm.cf_drift_ = cf.drift;
  tm.cf_input_ = cf.input;
  tm.cf_cost_ = cf.cost;
  tm.cf_state_matrix_ = cf.state_matrix;
  tm.cf_cost_hessian_ = cf.cost_hessian;
  tm.cf_drift_jac_ = cf.drift_jacobian;
  tm.cf_input_jx_ = cf.input_x_jacobians;
  tm.cf_cost_grad_ = cf.cost_gradient;
  return tm;
}

}  // namespace orbitstab
