#include "orbitstab/errors.hpp"
#include "orbitstab/frame.hpp"
#include "orbitstab/hamilton.hpp"
#include "orbitstab/model.hpp"
#include "orbitstab/pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

using namespace orbitstab;
namespace {
constexpr double kPi = std::numbers::pi;

struct ReproSetup {
  ExampleProblem problem;
  TransverseModel tm;
  PeriodicLinearization lin;
  RiccatiSolution riccati;
  PeriodicMatrix gain;
  HamiltonianSystem hs;
};

const ReproSetup& setup() {
  static const ReproSetup s = [] {
    ReproSetup r{make_mass_spring(), {}, {}, {}, {}, {}};
    r.tm = reproduction_model(r.problem);
    r.lin = transverse_linearization(r.tm, r.problem.cost, 256);
    r.riccati = solve_periodic_riccati(r.lin, r.lin.R, r.lin.period);
    r.gain = linear_feedback(r.riccati, r.lin, r.lin.R);
    r.hs = assemble_hamiltonian(r.tm, r.problem.cost);
    return r;
  }();
  return s;
}

ManifoldTrajectory solve(double x1_0, double x2_0) {
  return stable_trajectory(setup().hs, x1_0, Eigen::VectorXd::Constant(1, x2_0), setup().riccati);
}
}  // namespace

TEST_CASE("on-orbit start gives the trivial trajectory") {
  const ManifoldTrajectory mt = solve(0.4, 0.0);
  REQUIRE(mt.total_cost == 0.0);
  REQUIRE(mt.p0.norm() == 0.0);
  REQUIRE(mt.trajectory.u.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stable-manifold trajectories converge with conserved H") {
  for (double x2 : {0.3, -0.3}) {
    const ManifoldTrajectory mt = solve(0.0, x2);
    INFO("x2 = " << x2);
    REQUIRE(mt.terminal_x2_norm < 1e-4);
    REQUIRE(mt.max_abs_h < 1e-6);
    REQUIRE(mt.terminal_fiber_residual < 1e-6);
    REQUIRE(mt.boundary_residual < 1e-8);
    REQUIRE(mt.total_cost > 0.0);

    // per-period envelope of |x2| decays monotonically
    const double T = setup().hs.period();
    std::vector<double> envelope;
    double current = 0.0;
    int period_index = 0;
    for (int k = 0; k < mt.trajectory.times.size(); ++k) {
      const int pi = static_cast<int>(mt.trajectory.times(k) / T);
      if (pi != period_index) {
        envelope.push_back(current);
        current = 0.0;
        period_index = pi;
      }
      current = std::max(current, std::abs(mt.trajectory.x(1, k)));
    }
    envelope.push_back(current);
    for (size_t i = 1; i < envelope.size(); ++i) REQUIRE(envelope[i] < envelope[i - 1]);
  }
}

TEST_CASE("value function is quadratic near the orbit with coefficient one half") {
  // V(x2) ~ c * P(0) * x2^2; the fitted c pins the convention between the
  // Riccati solution and the accumulated cost.
  const double P0 = setup().riccati.P(0.0)(0, 0);
  std::vector<double> offsets{0.01, 0.02, 0.03, 0.04, 0.05};
  double c_min = std::numeric_limits<double>::infinity(), c_max = 0.0;
  for (double x2 : offsets) {
    const ManifoldTrajectory mt = solve(0.0, x2);
    const double c = mt.total_cost / (P0 * x2 * x2);
    c_min = std::min(c_min, c);
    c_max = std::max(c_max, c);
  }
  REQUIRE(c_min > 0.45);
  REQUIRE(c_max < 0.55);
  // the smallest offset is closest to the limit
  const ManifoldTrajectory tiny = solve(0.0, 0.01);
  REQUIRE(tiny.total_cost / (P0 * 1e-4) == Catch::Approx(0.5).margin(0.02));
  // and p2(0) follows the fiber relation p2 = P x2 to first order
  REQUIRE(tiny.p0(1) == Catch::Approx(P0 * 0.01).epsilon(0.05));
}

TEST_CASE("flow restarted from a converged trajectory reproduces its tail") {
  const ManifoldTrajectory mt = solve(0.0, 0.2);
  const int k0 = static_cast<int>(mt.trajectory.times.size()) / 3;
  const int k1 = 2 * k0;  // a stored sample a few time units downstream
  FlowOptions fo;
  const Trajectory tail = flow(setup().hs, mt.trajectory.x.col(k0), mt.trajectory.p.col(k0),
                               mt.trajectory.times(k0), mt.trajectory.times(k1), fo);
  const int tlast = static_cast<int>(tail.times.size()) - 1;
  REQUIRE(tail.times(tlast) == Catch::Approx(mt.trajectory.times(k1)).margin(1e-12));
  REQUIRE((tail.x.col(tlast) - mt.trajectory.x.col(k1)).norm() < 1e-6);
  REQUIRE((tail.p.col(tlast) - mt.trajectory.p.col(k1)).norm() < 1e-6);
}

TEST_CASE("horizon extension and tube guards") {
  // outside the chart bound
  REQUIRE_THROWS_AS(solve(0.0, 0.6), OutOfTube);

  // a horizon cap too short to meet the terminal target
  StableTrajectoryOptions opts;
  opts.min_horizon_periods = 0.25;
  opts.max_horizon_periods = 0.25;
  REQUIRE_THROWS_AS(stable_trajectory(setup().hs, 0.0, Eigen::VectorXd::Constant(1, 0.3),
                                      setup().riccati, opts),
                    HorizonExceeded);
}

TEST_CASE("value table: zero on the orbit, positive off it, closed p-field") {
  std::vector<double> x1_grid, x2_grid;
  for (int i = 0; i < 8; ++i) x1_grid.push_back(2.0 * kPi * i / 8);
  for (int j = 0; j < 8; ++j) x2_grid.push_back(-0.3 + 0.6 * j / 7);

  ValueGridOptions opts;
  opts.loop_half_width = 0.05;
  const std::vector<ValueSample> table =
      value_and_lagrangian_diagnostic(setup().hs, setup().riccati, x1_grid, x2_grid, opts);

  REQUIRE(table.size() == 64);
  for (const auto& s : table) {
    INFO("x1 = " << s.x1 << ", x2 = " << s.x2(0));
    REQUIRE(s.converged);
    if (std::abs(s.x2(0)) < 1e-12) {
      REQUIRE(s.value == 0.0);
    } else {
      REQUIRE(s.value > 0.0);
    }
    REQUIRE(s.loop_residual < 1e-3);
  }

  // on-orbit value through the dedicated path as well
  const ManifoldTrajectory on_orbit = solve(1.0, 0.0);
  REQUIRE(on_orbit.total_cost == 0.0);
}

TEST_CASE("open-loop perturbations of p(0) never beat the optimum") {
  const ManifoldTrajectory mt = solve(0.0, 0.2);
  const double Tf = mt.horizon;
  std::mt19937 rng(99);
  std::normal_distribution<double> gauss;

  FlowOptions fo;
  fo.enforce_tube = true;
  int feasible_probes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd dp(2);
    dp << gauss(rng), gauss(rng);
    dp *= 1e-3 / dp.norm();
    Eigen::VectorXd x0(2);
    x0 << 0.0, 0.2;
    try {
      const Trajectory probe = flow(setup().hs, x0, mt.p0 + dp, 0.0, Tf, fo);
      const int last = static_cast<int>(probe.times.size()) - 1;
      const double term_x2 = std::abs(probe.x(1, last));
      const double fiber = std::abs(probe.p(1, last) -
                                    setup().riccati.P(probe.x(0, last))(0, 0) * probe.x(1, last));
      const bool as_feasible = term_x2 <= std::max(1e-4, mt.terminal_x2_norm) &&
                               fiber <= std::max(1e-6, mt.terminal_fiber_residual);
      if (as_feasible) {
        ++feasible_probes;
        REQUIRE(probe.total_cost() >= mt.total_cost - 1e-9);
      }
    } catch (const Error&) {
      // left the tube or failed to integrate: not a feasible competitor
    }
  }
  INFO("feasible probes: " << feasible_probes);
}

TEST_CASE("optimal cost undercuts the linear feedback closed loop") {
  const Feedback fb = make_linear_feedback(setup().gain);
  for (double x2 : {0.1, -0.2, 0.3}) {
    const ManifoldTrajectory mt = solve(0.0, x2);
    FlowOptions fo;
    const ClosedLoopResult lin_run = closed_loop_simulate_transverse(
        setup().tm, setup().problem.cost, fb, 0.0, Eigen::VectorXd::Constant(1, x2),
        mt.horizon, fo);
    INFO("x2 = " << x2);
    REQUIRE(mt.total_cost <= lin_run.total_cost + 1e-6);
  }
}

TEST_CASE("three-state example: full pipeline with a two-dimensional transverse block") {
  const Pipeline pl = build_pipeline(make_circular3(), PipelineOptions{});
  REQUIRE(pl.riccati.gates_verified);
  REQUIRE(pl.riccati.residuals.maxCoeff() < 1e-6);
  REQUIRE(pl.riccati.periodicity_error < 1e-6);
  REQUIRE(pl.riccati.max_closed_loop_modulus() < 1.0);

  const NhimReport nhim = verify_nhim(pl.riccati, pl.lin, pl.hs);
  REQUIRE(nhim.pass);
  REQUIRE(nhim.dim_stable == 2);
  REQUIRE(nhim.dim_unstable == 2);
  REQUIRE(nhim.unit_multiplicity >= 2);

  Eigen::VectorXd x2(2);
  x2 << 0.15, -0.1;
  const ManifoldTrajectory mt = stable_trajectory(pl.hs, 0.3, x2, pl.riccati);
  REQUIRE(mt.terminal_x2_norm < 1e-4);
  REQUIRE(mt.max_abs_h < 1e-6);
  REQUIRE(mt.terminal_fiber_residual < 1e-6);
  // quadratic value approximation with the one-half convention
  const double quad = 0.5 * (x2.transpose() * pl.riccati.P(0.3) * x2)(0);
  REQUIRE(mt.total_cost == Catch::Approx(quad).epsilon(0.25));
}

TEST_CASE("table feedback built from the trajectory grid stabilizes the loop") {
  std::vector<double> x1_grid, x2_grid;
  for (int i = 0; i < 8; ++i) x1_grid.push_back(2.0 * kPi * i / 8);
  for (int j = 0; j < 7; ++j) x2_grid.push_back(-0.3 + 0.6 * j / 6);

  ValueGridOptions opts;
  opts.compute_loops = false;
  const std::vector<ValueSample> table =
      value_and_lagrangian_diagnostic(setup().hs, setup().riccati, x1_grid, x2_grid, opts);
  const Feedback fb = make_table_feedback(x1_grid, x2_grid, table, setup().hs);

  FlowOptions fo;
  const ClosedLoopResult run = closed_loop_simulate_transverse(
      setup().tm, setup().problem.cost, fb, 0.0, Eigen::VectorXd::Constant(1, 0.25),
      6.0 * setup().hs.period(), fo);
  REQUIRE(run.final_distance < 1e-2);
  // the interpolated optimal law should not lose much to the linear gain
  const ClosedLoopResult lin_run = closed_loop_simulate_transverse(
      setup().tm, setup().problem.cost, make_linear_feedback(setup().gain), 0.0,
      Eigen::VectorXd::Constant(1, 0.25), 6.0 * setup().hs.period(), fo);
  REQUIRE(run.total_cost < 1.2 * lin_run.total_cost);
}
