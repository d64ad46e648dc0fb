#include "orbitstab/hamilton.hpp"

#include "orbitstab/derivatives.hpp"
#include "orbitstab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <thread>

namespace orbitstab {

namespace {

std::vector<double> linspace(double a, double b, int count) {
  std::vector<double> out(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out[static_cast<size_t>(i)] = a + (b - a) * i / std::max(1, count - 1);
  return out;
}

int sample_count(double span, double period, int per_period) {
  return std::max(2, static_cast<int>(std::ceil(std::abs(span) / period * per_period)) + 1);
}

}  // namespace

double HamiltonianSystem::hamiltonian(const Eigen::VectorXd& x, const Eigen::VectorXd& p) const {
  const Eigen::VectorXd G = tm_.input(x).transpose() * p;
  return p.dot(tm_.drift(x)) - 0.25 * G.dot(R_inv_ * G) + tm_.cost(x);
}

double HamiltonianSystem::hamiltonian(const Eigen::VectorXd& xp) const {
  const int n = state_dim();
  return hamiltonian(xp.head(n), xp.tail(n));
}

Eigen::VectorXd HamiltonianSystem::optimal_input(const Eigen::VectorXd& x,
                                                 const Eigen::VectorXd& p) const {
  return -0.5 * R_inv_ * (tm_.input(x).transpose() * p);
}

Eigen::VectorXd HamiltonianSystem::gradient_x(const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& p) const {
  const int n = state_dim();
  if (tm_.has_analytic_x_derivatives()) {
    const Eigen::VectorXd RinvG = R_inv_ * (tm_.input(x).transpose() * p);
    const Eigen::MatrixXd Jf = tm_.drift_jacobian(x);
    const auto Jg = tm_.input_x_jacobians(x);
    const Eigen::VectorXd dq = tm_.cost_gradient(x);
    Eigen::VectorXd dHdx(n);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd dG = Jg[static_cast<size_t>(i)].transpose() * p;
      dHdx(i) = p.dot(Jf.col(i)) - 0.5 * RinvG.dot(dG) + dq(i);
    }
    return dHdx;
  }
  auto h_of_x = [this, &p](const Eigen::VectorXd& xv) { return hamiltonian(xv, p); };
  return gradient_central4(h_of_x, x, 1e-5);
}

Eigen::VectorXd HamiltonianSystem::vector_field(const Eigen::VectorXd& xp) const {
  const int n = state_dim();
  const Eigen::VectorXd x = xp.head(n);
  const Eigen::VectorXd p = xp.tail(n);

  // dH/dp in closed form: xdot0(x) - 1/2 [g1; g2] R^-1 G.
  const Eigen::MatrixXd gm = tm_.input(x);
  const Eigen::VectorXd dHdp = tm_.drift(x) - 0.5 * gm * (R_inv_ * (gm.transpose() * p));

  Eigen::VectorXd out(2 * n);
  out.head(n) = dHdp;
  out.tail(n) = -gradient_x(x, p);
  return out;
}

Eigen::MatrixXd HamiltonianSystem::vector_field_jacobian(const Eigen::VectorXd& xp) const {
  const int n = state_dim();
  const Eigen::VectorXd x = xp.head(n);
  const Eigen::VectorXd p = xp.tail(n);

  // Hessian blocks of H; assembling J * Hess keeps the linearization exactly
  // infinitesimally symplectic, which is what the multiplier structure needs.
  const Eigen::MatrixXd gm = tm_.input(x);
  Eigen::MatrixXd Hpp = -0.5 * gm * R_inv_ * gm.transpose();
  Hpp = 0.5 * (Hpp + Hpp.transpose());

  auto dHdp_of_x = [this, &p](const Eigen::VectorXd& xv) {
    const Eigen::MatrixXd g = tm_.input(xv);
    return Eigen::VectorXd(tm_.drift(xv) - 0.5 * g * (R_inv_ * (g.transpose() * p)));
  };
  const Eigen::MatrixXd M = jacobian_central4(dHdp_of_x, x, 1e-5);  // d(dH/dp)/dx

  auto dHdx_of_x = [this, &p](const Eigen::VectorXd& xv) { return gradient_x(xv, p); };
  Eigen::MatrixXd Hxx =
      jacobian_central4(dHdx_of_x, x, tm_.has_analytic_x_derivatives() ? 1e-5 : 1e-4);
  Hxx = 0.5 * (Hxx + Hxx.transpose());

  Eigen::MatrixXd DF(2 * n, 2 * n);
  DF.topLeftCorner(n, n) = M;
  DF.topRightCorner(n, n) = Hpp;
  DF.bottomLeftCorner(n, n) = -Hxx;
  DF.bottomRightCorner(n, n) = -M.transpose();
  return DF;
}

Eigen::MatrixXd HamiltonianSystem::vector_field_jacobian_on_orbit(double t) const {
  Eigen::VectorXd xp = Eigen::VectorXd::Zero(2 * state_dim());
  xp(0) = t;
  return vector_field_jacobian(xp);
}

HamiltonianSystem assemble_hamiltonian(const TransverseModel& tm, const CostSpec& cost) {
  HamiltonianSystem hs;
  hs.tm_ = tm;
  hs.R_ = cost.R;
  hs.R_inv_ = cost.R.inverse();

  // Cross-validate the vector field against central differences of H.
  const int n = tm.state_dim();
  std::mt19937 rng(0xf10u);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss;
  const double x2_scale = 0.3 * std::min(1.0, tm.tube_radius());

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd xp(2 * n);
    xp(0) = unif(rng) * tm.period();
    for (int i = 1; i < n; ++i) xp(i) = x2_scale * gauss(rng);
    for (int i = n; i < 2 * n; ++i) xp(i) = 0.3 * gauss(rng);

    const Eigen::VectorXd field = hs.vector_field(xp);
    const Eigen::VectorXd grad =
        gradient_central4([&hs](const Eigen::VectorXd& v) { return hs.hamiltonian(v); }, xp, 3e-5);
    Eigen::VectorXd field_fd(2 * n);
    field_fd.head(n) = grad.tail(n);
    field_fd.tail(n) = -grad.head(n);
    worst = std::max(worst, (field - field_fd).norm() / std::max(1.0, field.norm()));
  }
  if (worst > 1e-6)
    throw GradientMismatch("Hamiltonian vector field deviates from J grad H by " +
                           std::to_string(worst));
  return hs;
}

double Trajectory::max_abs_hamiltonian() const {
  return hamiltonian.size() ? hamiltonian.cwiseAbs().maxCoeff() : 0.0;
}

Trajectory flow(const HamiltonianSystem& hs, const Eigen::VectorXd& x0, const Eigen::VectorXd& p0,
                double t0, double t1, const FlowOptions& opts) {
  const int n = hs.state_dim();
  const int m = static_cast<int>(hs.input_weight().rows());
  const double tube = hs.tube_radius();

  // State layout: [x; p; accumulated cost].
  auto rhs = [&hs, n](double, const Eigen::VectorXd& y) {
    const Eigen::VectorXd xp = y.head(2 * n);
    Eigen::VectorXd dy(2 * n + 1);
    dy.head(2 * n) = hs.vector_field(xp);
    const Eigen::VectorXd u = hs.optimal_input(xp.head(n), xp.tail(n));
    dy(2 * n) = hs.model().cost(xp.head(n)) + u.dot(hs.input_weight() * u);
    return dy;
  };

  IntegrateOptions iopts = opts.ode;
  if (opts.enforce_tube && std::isfinite(tube)) {
    iopts.stop = [n, tube](double, const Eigen::VectorXd& y) {
      return y.segment(1, n - 1).norm() > tube;
    };
  }

  Eigen::VectorXd y0(2 * n + 1);
  y0.head(n) = x0;
  y0.segment(n, n) = p0;
  y0(2 * n) = 0.0;

  const auto times = linspace(t0, t1, sample_count(t1 - t0, hs.period(), opts.samples_per_period));
  const OdeResult sol = integrate_dopri(rhs, t0, y0, times, iopts);
  if (sol.stopped)
    throw TubeExit("Hamiltonian trajectory left the tube at t = " + std::to_string(sol.times.back()));

  const int N = static_cast<int>(sol.times.size());
  Trajectory traj;
  traj.times.resize(N);
  traj.x.resize(n, N);
  traj.p.resize(n, N);
  traj.u.resize(m, N);
  traj.hamiltonian.resize(N);
  traj.running_cost.resize(N);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd& y = sol.states[static_cast<size_t>(k)];
    traj.times(k) = sol.times[static_cast<size_t>(k)];
    traj.x.col(k) = y.head(n);
    traj.p.col(k) = y.segment(n, n);
    traj.u.col(k) = hs.optimal_input(y.head(n), y.segment(n, n));
    traj.hamiltonian(k) = hs.hamiltonian(y.head(2 * n));
    traj.running_cost(k) = y(2 * n);
  }

  const double h0 = traj.hamiltonian(0);
  const double drift = (traj.hamiltonian.array() - h0).abs().maxCoeff();
  const double periods = std::max(1.0, std::abs(t1 - t0) / hs.period());
  if (drift > opts.h_drift_tol * (1.0 + std::abs(h0)) * periods)
    throw IntegrationFailure("Hamiltonian drift " + std::to_string(drift) +
                             " exceeds conservation tolerance");
  return traj;
}

namespace {

/// Shooting state for the stable-manifold BVP.
struct ShootingGrid {
  int segments = 0;
  int n = 0;
  double horizon = 0.0;
  std::vector<double> nodes;  // segment boundaries, size segments+1
};

Eigen::VectorXd integrate_segment(const HamiltonianSystem& hs, const Eigen::VectorXd& xp0,
                                  double t0, double t1, const IntegrateOptions& opts) {
  const int n2 = static_cast<int>(xp0.size());
  auto rhs = [&hs, n2](double, const Eigen::VectorXd& y) { return hs.vector_field(y.head(n2)); };
  return integrate_to(rhs, t0, xp0, t1, opts);
}

/// Boundary + continuity residual of the multiple-shooting unknowns.
/// w = [p(0); s_1; ...; s_{S-1}] with s_i the full (x, p) at node i.
Eigen::VectorXd shooting_residual(const HamiltonianSystem& hs, const RiccatiSolution& riccati,
                                  const Eigen::VectorXd& x0, const ShootingGrid& grid,
                                  const Eigen::VectorXd& w, const IntegrateOptions& opts) {
  const int n = grid.n;
  const int S = grid.segments;
  Eigen::VectorXd F(2 * n * (S - 1) + n);

  Eigen::VectorXd start(2 * n);
  start.head(n) = x0;
  start.tail(n) = w.head(n);
  for (int i = 0; i < S; ++i) {
    const Eigen::VectorXd end = integrate_segment(hs, start, grid.nodes[static_cast<size_t>(i)],
                                                  grid.nodes[static_cast<size_t>(i + 1)], opts);
    if (i < S - 1) {
      const Eigen::VectorXd node = w.segment(n + 2 * n * i, 2 * n);
      F.segment(2 * n * i, 2 * n) = end - node;
      start = node;
    } else {
      // terminal conditions: p1 = 0 and p2 = P(x1) x2
      const double x1_end = end(0);
      const Eigen::VectorXd x2_end = end.segment(1, n - 1);
      const double p1_end = end(n);
      const Eigen::VectorXd p2_end = end.tail(n - 1);
      F(2 * n * (S - 1)) = p1_end;
      F.segment(2 * n * (S - 1) + 1, n - 1) = p2_end - riccati.P(x1_end) * x2_end;
    }
  }
  return F;
}

}  // namespace

ManifoldTrajectory stable_trajectory(const HamiltonianSystem& hs, double x1_0,
                                     const Eigen::VectorXd& x2_0, const RiccatiSolution& riccati,
                                     const StableTrajectoryOptions& opts) {
  const int n = hs.state_dim();
  const int d = n - 1;
  const double T = hs.period();
  if (x2_0.size() != d) throw std::invalid_argument("stable_trajectory: x2 has wrong dimension");
  if (hs.model().tube_radius() < x2_0.norm())
    throw OutOfTube("stable_trajectory: initial offset outside the tube");
  if (riccati.closed_loop_multipliers.size() == 0 || riccati.max_closed_loop_modulus() >= 1.0)
    throw NotNormallyHyperbolic(
        "stable_trajectory: the closed loop is not contracting, no stable manifold to target");

  Eigen::VectorXd x0(n);
  x0(0) = x1_0;
  x0.tail(d) = x2_0;

  // Already on the orbit: the trajectory is the orbit itself with p = 0.
  if (x2_0.norm() < 1e-13) {
    ManifoldTrajectory out;
    out.horizon = opts.min_horizon_periods * T;
    out.trajectory = flow(hs, x0, Eigen::VectorXd::Zero(n), 0.0, out.horizon, opts.flow);
    out.p0 = Eigen::VectorXd::Zero(n);
    out.total_cost = out.trajectory.total_cost();
    out.max_abs_h = out.trajectory.max_abs_hamiltonian();
    return out;
  }

  // Horizon from the closed-loop contraction rate, then doubled on demand.
  const double rho = std::min(riccati.max_closed_loop_modulus(), 1.0 - 1e-12);
  double periods = opts.min_horizon_periods;
  if (rho < 1.0 - 1e-9) {
    const double needed = std::log(0.2 * opts.terminal_x2_tol / x2_0.norm()) / std::log(rho);
    periods = std::clamp(1.25 * needed, opts.min_horizon_periods, opts.max_horizon_periods);
  }

  std::string last_failure;
  while (true) {
    const double Tf = periods * T;
    ShootingGrid grid;
    grid.segments = opts.shooting_segments;
    grid.n = n;
    grid.horizon = Tf;
    grid.nodes = linspace(0.0, Tf, grid.segments + 1);

    // Warm start: nonlinear closed loop under the linear gain, with the fiber
    // relation p = [0; P x2] along it.
    Eigen::VectorXd w(n + 2 * n * (grid.segments - 1));
    {
      const TransverseModel& tm = hs.model();
      const Eigen::MatrixXd Rinv = hs.input_weight().inverse();
      auto rhs = [&tm, &riccati, &Rinv, n, d](double, const Eigen::VectorXd& x) {
        const Eigen::MatrixXd g = tm.input(x);
        const Eigen::VectorXd u =
            -0.5 * Rinv * g.bottomRows(d).transpose() * (riccati.P(x(0)) * x.tail(d));
        return Eigen::VectorXd(tm.drift(x) + g * u);
      };
      IntegrateOptions warm_opts;
      warm_opts.abs_tol = warm_opts.rel_tol = 1e-9;
      std::vector<double> node_times(grid.nodes.begin() + 1, grid.nodes.end());
      const OdeResult warm = integrate_dopri(rhs, 0.0, x0, node_times, warm_opts);

      w.head(n).setZero();
      w.segment(1, d) = riccati.P(x1_0) * x2_0;  // p(0) guess = [0; P x2]
      for (int i = 0; i + 1 < grid.segments; ++i) {
        const Eigen::VectorXd& xi = warm.states[static_cast<size_t>(i)];
        Eigen::VectorXd si(2 * n);
        si.head(n) = xi;
        si(n) = 0.0;
        si.tail(d) = riccati.P(xi(0)) * xi.tail(d);
        w.segment(n + 2 * n * i, 2 * n) = si;
      }
    }

    auto eval_residual = [&](const Eigen::VectorXd& wv) -> std::pair<bool, Eigen::VectorXd> {
      try {
        return {true, shooting_residual(hs, riccati, x0, grid, wv, opts.flow.ode)};
      } catch (const Error&) {
        return {false, Eigen::VectorXd()};
      }
    };

    bool converged = false;
    int iterations = 0;
    auto [ok0, F] = eval_residual(w);
    if (!ok0) {
      last_failure = "residual evaluation failed at the warm start";
    } else {
      for (int it = 0; it < opts.max_newton_iterations; ++it) {
        ++iterations;
        const double fnorm = F.lpNorm<Eigen::Infinity>();
        if (fnorm <= opts.boundary_tol) {
          converged = true;
          break;
        }
        // central-difference Jacobian of the shooting map
        const int dim = static_cast<int>(w.size());
        Eigen::MatrixXd Jw(F.size(), dim);
        bool jac_ok = true;
        for (int c = 0; c < dim && jac_ok; ++c) {
          const double h = 1e-6 * std::max(1.0, std::abs(w(c)));
          Eigen::VectorXd wp = w, wm = w;
          wp(c) += h;
          wm(c) -= h;
          auto [okp, Fp] = eval_residual(wp);
          auto [okm, Fm] = eval_residual(wm);
          if (!okp || !okm) {
            jac_ok = false;
            break;
          }
          Jw.col(c) = (Fp - Fm) / (2.0 * h);
        }
        if (!jac_ok) {
          last_failure = "Jacobian evaluation failed (trajectory left the tube)";
          break;
        }
        const Eigen::VectorXd step = Jw.fullPivLu().solve(-F);
        // Armijo backtracking on the residual norm
        double alpha = 1.0;
        bool accepted = false;
        while (alpha >= 1.0 / 1024.0) {
          auto [oka, Fa] = eval_residual(w + alpha * step);
          if (oka && Fa.lpNorm<Eigen::Infinity>() <= (1.0 - 1e-4 * alpha) * fnorm) {
            w += alpha * step;
            F = Fa;
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted) {
          last_failure = "Newton stagnation at residual " + std::to_string(fnorm);
          break;
        }
      }
    }

    if (converged) {
      // Re-integrate segment by segment with cost and dense samples.
      ManifoldTrajectory out;
      out.p0 = w.head(n);
      out.horizon = Tf;
      out.newton_iterations = iterations;
      out.boundary_residual = F.lpNorm<Eigen::Infinity>();

      std::vector<Trajectory> pieces;
      Eigen::VectorXd start_x = x0;
      Eigen::VectorXd start_p = w.head(n);
      double cost_offset = 0.0;
      for (int i = 0; i < grid.segments; ++i) {
        Trajectory piece = flow(hs, start_x, start_p, grid.nodes[static_cast<size_t>(i)],
                                grid.nodes[static_cast<size_t>(i + 1)], opts.flow);
        piece.running_cost.array() += cost_offset;
        cost_offset = piece.total_cost();
        pieces.push_back(piece);
        if (i + 1 < grid.segments) {
          const Eigen::VectorXd node = w.segment(n + 2 * n * i, 2 * n);
          start_x = node.head(n);
          start_p = node.tail(n);
        }
      }
      int total = 0;
      for (const auto& piece : pieces) total += static_cast<int>(piece.times.size()) - 1;
      ++total;
      Trajectory& traj = out.trajectory;
      traj.times.resize(total);
      traj.x.resize(n, total);
      traj.p.resize(n, total);
      traj.u.resize(pieces.front().u.rows(), total);
      traj.hamiltonian.resize(total);
      traj.running_cost.resize(total);
      int at = 0;
      for (size_t pi = 0; pi < pieces.size(); ++pi) {
        const Trajectory& piece = pieces[pi];
        const int keep = static_cast<int>(piece.times.size()) - (pi + 1 < pieces.size() ? 1 : 0);
        for (int k = 0; k < keep; ++k, ++at) {
          traj.times(at) = piece.times(k);
          traj.x.col(at) = piece.x.col(k);
          traj.p.col(at) = piece.p.col(k);
          traj.u.col(at) = piece.u.col(k);
          traj.hamiltonian(at) = piece.hamiltonian(k);
          traj.running_cost(at) = piece.running_cost(k);
        }
      }

      out.total_cost = traj.total_cost();
      out.max_abs_h = traj.max_abs_hamiltonian();
      const int last = total - 1;
      out.terminal_x2_norm = traj.x.col(last).tail(d).norm();
      out.terminal_fiber_residual =
          (traj.p.col(last).tail(d) - riccati.P(traj.x(0, last)) * traj.x.col(last).tail(d)).norm();

      if (out.terminal_x2_norm <= opts.terminal_x2_tol) return out;
      last_failure = "terminal offset " + std::to_string(out.terminal_x2_norm) + " above target";
    }

    if (periods >= opts.max_horizon_periods - 1e-9) {
      if (converged)
        throw HorizonExceeded("stable_trajectory: " + last_failure + " at the maximum horizon");
      throw BvpDiverged("stable_trajectory: " + last_failure);
    }
    periods = std::min(2.0 * periods, opts.max_horizon_periods);
  }
}

std::vector<ValueSample> value_and_lagrangian_diagnostic(const HamiltonianSystem& hs,
                                                         const RiccatiSolution& riccati,
                                                         const std::vector<double>& x1_grid,
                                                         const std::vector<double>& x2_grid,
                                                         const ValueGridOptions& opts) {
  const int d = hs.state_dim() - 1;
  if (opts.compute_loops && d != 1)
    throw std::invalid_argument("value grid loops require a scalar transverse coordinate");

  struct Task {
    double x1;
    double x2;
  };
  std::vector<Task> tasks;
  for (double x1 : x1_grid)
    for (double x2 : x2_grid) tasks.push_back({x1, x2});

  std::vector<ValueSample> samples(tasks.size());

  auto solve_point = [&hs, &riccati, &opts](double x1, double x2) {
    Eigen::VectorXd v(1);
    v(0) = x2;
    return stable_trajectory(hs, x1, v, riccati, opts.bvp);
  };

  auto run_range = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      ValueSample& s = samples[i];
      s.x1 = tasks[i].x1;
      s.x2 = Eigen::VectorXd::Constant(1, tasks[i].x2);
      try {
        const ManifoldTrajectory mt = solve_point(tasks[i].x1, tasks[i].x2);
        s.value = mt.total_cost;
        s.p0 = mt.p0;
        s.converged = true;

        if (opts.compute_loops) {
          const double delta = opts.loop_half_width;
          // p(0) at the 8 Simpson points of the rectangle boundary
          auto p_at = [&](double a, double b) { return solve_point(a, b).p0; };
          const double x1c = tasks[i].x1, x2c = tasks[i].x2;
          const Eigen::VectorXd p_bl = p_at(x1c - delta, x2c - delta);
          const Eigen::VectorXd p_bm = p_at(x1c, x2c - delta);
          const Eigen::VectorXd p_br = p_at(x1c + delta, x2c - delta);
          const Eigen::VectorXd p_rm = p_at(x1c + delta, x2c);
          const Eigen::VectorXd p_tr = p_at(x1c + delta, x2c + delta);
          const Eigen::VectorXd p_tm = p_at(x1c, x2c + delta);
          const Eigen::VectorXd p_tl = p_at(x1c - delta, x2c + delta);
          const Eigen::VectorXd p_lm = p_at(x1c - delta, x2c);
          // Simpson along each edge, counterclockwise
          const double w = 2.0 * delta / 6.0;
          double circ = 0.0;
          circ += w * (p_bl(0) + 4.0 * p_bm(0) + p_br(0));   // bottom, +x1
          circ += w * (p_br(1) + 4.0 * p_rm(1) + p_tr(1));   // right, +x2
          circ -= w * (p_tr(0) + 4.0 * p_tm(0) + p_tl(0));   // top, -x1
          circ -= w * (p_tl(1) + 4.0 * p_lm(1) + p_bl(1));   // left, -x2
          s.loop_residual = std::abs(circ) / (4.0 * delta * delta);
        }
      } catch (const Error& e) {
        s.converged = false;
        s.error = e.what();
      }
    }
  };

  int threads = opts.threads > 0 ? opts.threads
                                 : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<int>(threads, static_cast<int>(tasks.size()));
  if (threads <= 1) {
    run_range(0, tasks.size());
  } else {
    std::vector<std::future<void>> futures;
    const size_t chunk = (tasks.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const size_t lo = static_cast<size_t>(t) * chunk;
      const size_t hi = std::min(tasks.size(), lo + chunk);
      if (lo >= hi) break;
      futures.push_back(std::async(std::launch::async, run_range, lo, hi));
    }
    for (auto& f : futures) f.get();
  }
  return samples;
}

Feedback make_linear_feedback(const PeriodicMatrix& gain) {
  Feedback fb;
  fb.kind = "linear";
  fb.u = [gain](double x1, const Eigen::VectorXd& x2) { return Eigen::VectorXd(gain(x1) * x2); };
  return fb;
}

Feedback make_table_feedback(const std::vector<double>& x1_grid, const std::vector<double>& x2_grid,
                             const std::vector<ValueSample>& table, const HamiltonianSystem& hs) {
  if (hs.state_dim() != 2)
    throw std::invalid_argument("table feedback requires a scalar transverse coordinate");
  const size_t n1 = x1_grid.size(), n2 = x2_grid.size();
  if (table.size() != n1 * n2)
    throw std::invalid_argument("table feedback: table size does not match the grid");
  const double T = hs.period();

  // u(0) of each converged trajectory; non-converged entries fall back to 0.
  const int m = static_cast<int>(hs.input_weight().rows());
  Eigen::MatrixXd U(static_cast<Eigen::Index>(n1 * n2), m);
  for (size_t i = 0; i < table.size(); ++i) {
    if (table[i].converged) {
      Eigen::VectorXd x(2);
      x << table[i].x1, table[i].x2(0);
      U.row(static_cast<Eigen::Index>(i)) =
          hs.optimal_input(x, table[i].p0).transpose();
    } else {
      U.row(static_cast<Eigen::Index>(i)).setZero();
    }
  }

  auto x1g = x1_grid;
  auto x2g = x2_grid;
  Feedback fb;
  fb.kind = "table";
  fb.u = [x1g, x2g, U, T, m](double x1, const Eigen::VectorXd& x2) {
    const size_t n1 = x1g.size(), n2 = x2g.size();
    // periodic bracket in x1
    double s = x1 - T * std::floor(x1 / T);
    size_t i1 = 0;
    while (i1 + 1 < n1 && x1g[i1 + 1] <= s) ++i1;
    const size_t i1n = (i1 + 1) % n1;
    const double span1 = (i1 + 1 < n1 ? x1g[i1 + 1] : T + x1g[0]) - x1g[i1];
    const double a = std::clamp((s - x1g[i1]) / span1, 0.0, 1.0);
    // clamped bracket in x2
    double v = std::clamp(x2(0), x2g.front(), x2g.back());
    size_t j = 0;
    while (j + 2 < n2 && x2g[j + 1] <= v) ++j;
    const double b = std::clamp((v - x2g[j]) / (x2g[j + 1] - x2g[j]), 0.0, 1.0);

    auto at = [&](size_t i, size_t jj) { return U.row(static_cast<Eigen::Index>(i * n2 + jj)); };
    Eigen::VectorXd u = ((1 - a) * (1 - b) * at(i1, j) + (1 - a) * b * at(i1, j + 1) +
                         a * (1 - b) * at(i1n, j) + a * b * at(i1n, j + 1))
                            .transpose();
    u.conservativeResize(m);
    return u;
  };
  return fb;
}

namespace {

/// Phase tracker: warm-starts the chart inversion from the previous phase so
/// the closed-loop right-hand side does not rescan the orbit every call.
class PhaseTracker {
 public:
  PhaseTracker(const MovingFrame& frame, const PeriodicOrbit& orbit)
      : frame_(frame), orbit_(orbit) {}

  TransverseCoords locate(const Eigen::VectorXd& z) {
    if (has_last_) {
      double s = last_x1_;
      for (int it = 0; it < 30; ++it) {
        const Eigen::VectorXd r = z - orbit_.point(s);
        const Eigen::VectorXd vel = orbit_.velocity(s);
        const double phi = vel.dot(r);
        const double dphi = orbit_.acceleration(s).dot(r) - vel.squaredNorm();
        if (std::abs(dphi) < 1e-14) break;
        const double step = phi / dphi;
        s -= step;
        if (std::abs(step) < 1e-13 * std::max(1.0, orbit_.period())) {
          TransverseCoords tc;
          tc.x1 = s - orbit_.period() * std::floor(s / orbit_.period());
          tc.x2 = frame_.complement(tc.x1).transpose() * (z - orbit_.point(tc.x1));
          if (tc.x2.norm() <= frame_.tube_radius()) {
            last_x1_ = s;
            return tc;
          }
          break;
        }
      }
    }
    const TransverseCoords tc = to_transverse(z, frame_, orbit_);
    last_x1_ = tc.x1;
    has_last_ = true;
    return tc;
  }

 private:
  const MovingFrame& frame_;
  const PeriodicOrbit& orbit_;
  double last_x1_ = 0.0;
  bool has_last_ = false;
};

}  // namespace

ClosedLoopResult closed_loop_simulate(const ControlAffineSystem& system, const CostSpec& cost,
                                      const PeriodicOrbit& orbit, const MovingFrame& frame,
                                      const Feedback& feedback, const Eigen::VectorXd& z0,
                                      double duration, const FlowOptions& opts) {
  const int n = system.n;
  const int d = n - 1;
  const double tube = frame.tube_radius();
  auto tracker = std::make_shared<PhaseTracker>(frame, orbit);

  // [z; cost]; the control is evaluated through the chart at every stage.
  auto rhs = [&system, &cost, &feedback, tracker](double, const Eigen::VectorXd& y) {
    const Eigen::VectorXd z = y.head(y.size() - 1);
    const TransverseCoords tc = tracker->locate(z);
    const Eigen::VectorXd u = feedback.u(tc.x1, tc.x2);
    Eigen::VectorXd dy(y.size());
    dy.head(z.size()) = system.f(z) + system.g(z) * u;
    dy(z.size()) = cost.q(z) + u.dot(cost.R * u);
    return dy;
  };

  // The stop predicate runs its own (cheap) chart inversion.
  auto stop_tracker = std::make_shared<PhaseTracker>(frame, orbit);
  IntegrateOptions iopts = opts.ode;
  const double floor_dist = opts.stop_when_distance_below;
  iopts.stop = [stop_tracker, tube, floor_dist, enforce = opts.enforce_tube](
                   double, const Eigen::VectorXd& y) {
    try {
      const TransverseCoords tc = stop_tracker->locate(y.head(y.size() - 1));
      const double dist = tc.x2.norm();
      return (enforce && dist > tube) || (floor_dist > 0.0 && dist < floor_dist);
    } catch (const OutOfTube&) {
      return true;
    }
  };

  Eigen::VectorXd y0(n + 1);
  y0.head(n) = z0;
  y0(n) = 0.0;

  const auto times =
      linspace(0.0, duration, sample_count(duration, orbit.period(), opts.samples_per_period));
  OdeResult sol;
  try {
    sol = integrate_dopri(rhs, 0.0, y0, times, iopts);
  } catch (const OutOfTube& e) {
    // the chart inversion failed mid-step: the loop has left the tube
    throw TubeExit(e.what());
  }
  if (sol.stopped) {
    // Distinguish tube exit from the early-stop distance floor.
    bool left_tube = true;
    try {
      left_tube = to_transverse(sol.states.back().head(n), frame, orbit).x2.norm() > 0.5 * tube;
    } catch (const OutOfTube&) {
    }
    if (left_tube)
      throw TubeExit("closed loop left the tube at t = " + std::to_string(sol.times.back()));
  }

  const int N = static_cast<int>(sol.times.size());
  ClosedLoopResult out;
  out.times.resize(N);
  out.z.resize(n, N);
  out.x1.resize(N);
  out.x2.resize(d, N);
  out.distance.resize(N);
  out.u.resize(system.m, N);
  out.running_cost.resize(N);
  PhaseTracker sample_tracker(frame, orbit);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd& y = sol.states[static_cast<size_t>(k)];
    const TransverseCoords tc = sample_tracker.locate(y.head(n));
    out.times(k) = sol.times[static_cast<size_t>(k)];
    out.z.col(k) = y.head(n);
    out.x1(k) = tc.x1;
    out.x2.col(k) = tc.x2;
    out.distance(k) = tc.x2.norm();
    out.u.col(k) = feedback.u(tc.x1, tc.x2);
    out.running_cost(k) = y(n);
  }
  out.total_cost = out.running_cost(N - 1);
  out.final_distance = out.distance(N - 1);
  return out;
}

ClosedLoopResult closed_loop_simulate_transverse(const TransverseModel& tm, const CostSpec& cost,
                                                 const Feedback& feedback, double x1_0,
                                                 const Eigen::VectorXd& x2_0, double duration,
                                                 const FlowOptions& opts) {
  const int n = tm.state_dim();
  const int d = n - 1;
  const double tube = tm.tube_radius();

  auto rhs = [&tm, &cost, &feedback, d](double, const Eigen::VectorXd& y) {
    const Eigen::VectorXd x = y.head(y.size() - 1);
    const Eigen::VectorXd u = feedback.u(x(0), x.tail(d));
    Eigen::VectorXd dy(y.size());
    dy.head(x.size()) = tm.dynamics(x, u);
    dy(x.size()) = tm.cost(x) + u.dot(cost.R * u);
    return dy;
  };

  IntegrateOptions iopts = opts.ode;
  const double floor_dist = opts.stop_when_distance_below;
  if (opts.enforce_tube && std::isfinite(tube)) {
    iopts.stop = [d, tube, floor_dist](double, const Eigen::VectorXd& y) {
      const double dist = y.segment(1, d).norm();
      return dist > tube || (floor_dist > 0.0 && dist < floor_dist);
    };
  } else if (floor_dist > 0.0) {
    iopts.stop = [d, floor_dist](double, const Eigen::VectorXd& y) {
      return y.segment(1, d).norm() < floor_dist;
    };
  }

  Eigen::VectorXd y0(n + 1);
  y0(0) = x1_0;
  y0.segment(1, d) = x2_0;
  y0(n) = 0.0;

  const auto times = linspace(0.0, duration, sample_count(duration, tm.period(), opts.samples_per_period));
  const OdeResult sol = integrate_dopri(rhs, 0.0, y0, times, iopts);
  if (sol.stopped && sol.states.back().segment(1, d).norm() > tube)
    throw TubeExit("closed loop left the tube at t = " + std::to_string(sol.times.back()));

  const int N = static_cast<int>(sol.times.size());
  ClosedLoopResult out;
  out.times.resize(N);
  out.x1.resize(N);
  out.x2.resize(d, N);
  out.distance.resize(N);
  out.u.resize(feedback.u(x1_0, x2_0).size(), N);
  out.running_cost.resize(N);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd& y = sol.states[static_cast<size_t>(k)];
    out.times(k) = sol.times[static_cast<size_t>(k)];
    out.x1(k) = y(0);
    out.x2.col(k) = y.segment(1, d);
    out.distance(k) = out.x2.col(k).norm();
    out.u.col(k) = feedback.u(y(0), y.segment(1, d));
    out.running_cost(k) = y(n);
  }
  out.total_cost = out.running_cost(N - 1);
  out.final_distance = out.distance(N - 1);
  return out;
}

}  // namespace orbitstab
