#include "orbitstab/errors.hpp"
#include "orbitstab/floquet.hpp"
#include "orbitstab/frame.hpp"
#include "orbitstab/hamilton.hpp"
#include "orbitstab/model.hpp"
#include "orbitstab/pipeline.hpp"
#include "orbitstab/sim.hpp"

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
  HamiltonianSystem hs;
};

const ReproSetup& repro_setup() {
  static const ReproSetup setup = [] {
    ReproSetup s{make_mass_spring(), {}, {}, {}, {}};
    s.tm = reproduction_model(s.problem);
    s.lin = transverse_linearization(s.tm, s.problem.cost, 256);
    s.riccati = solve_periodic_riccati(s.lin, s.lin.R, s.lin.period);
    s.hs = assemble_hamiltonian(s.tm, s.problem.cost);
    return s;
  }();
  return setup;
}

double G_published(const Eigen::VectorXd& x, const Eigen::VectorXd& p) {
  return -p(0) * std::cos(x(0)) + p(1) * (2.0 * x(1) + 1.0) * std::sin(x(0));
}
}  // namespace

TEST_CASE("reproduction Hamiltonian matches the published closed form") {
  const auto& s = repro_setup();
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(2), p(2);
    x << 2.0 * kPi * std::abs(gauss(rng)), 0.3 * gauss(rng);
    p << gauss(rng), gauss(rng);
    if (std::abs(x(1)) > 0.45) continue;
    const double G = G_published(x, p);
    const double H_expected = p(0) - 0.25 * G * G + x(1) * x(1);
    REQUIRE(s.hs.hamiltonian(x, p) == Catch::Approx(H_expected).margin(1e-12));
  }
}

TEST_CASE("H at zero momentum reduces to the transformed cost") {
  const auto& s = repro_setup();
  for (double x1 : {0.0, 1.3, 4.0}) {
    for (double x2 : {-0.3, 0.0, 0.2}) {
      Eigen::VectorXd x(2);
      x << x1, x2;
      REQUIRE(s.hs.hamiltonian(x, Eigen::VectorXd::Zero(2)) ==
              Catch::Approx(s.tm.cost(x)).margin(1e-14));
    }
  }
}

TEST_CASE("vector field on the orbit solution") {
  const auto& s = repro_setup();
  Eigen::VectorXd xp = Eigen::VectorXd::Zero(4);
  xp(0) = 1.7;
  const Eigen::VectorXd f = s.hs.vector_field(xp);
  REQUIRE(f(0) == Catch::Approx(1.0).margin(1e-12));  // x1dot = 1 on M
  REQUIRE(f.tail(3).norm() < 1e-12);
}

TEST_CASE("published Hamiltonian flow equations hold off the orbit") {
  const auto& s = repro_setup();
  Eigen::VectorXd xp(4);
  xp << 0.8, 0.1, -0.2, 0.35;
  const Eigen::VectorXd f = s.hs.vector_field(xp);
  const double x1 = xp(0), x2 = xp(1), p1 = xp(2), p2 = xp(3);
  const double G = -p1 * std::cos(x1) + p2 * (2.0 * x2 + 1.0) * std::sin(x1);
  REQUIRE(f(0) == Catch::Approx(1.0 + 0.5 * G * std::cos(x1)).margin(1e-10));
  REQUIRE(f(1) == Catch::Approx(-0.5 * (2.0 * x2 + 1.0) * G * std::sin(x1)).margin(1e-10));
  REQUIRE(f(2) == Catch::Approx(0.25 * (2.0 * p1 * std::sin(x1) +
                                        2.0 * p2 * (2.0 * x2 + 1.0) * std::cos(x1)) * G)
                      .margin(1e-10));
  REQUIRE(f(3) == Catch::Approx(p2 * G * std::sin(x1) - 2.0 * x2).margin(1e-10));
}

TEST_CASE("optimal input law") {
  const auto& s = repro_setup();
  // vanishes at p = 0
  Eigen::VectorXd x(2);
  x << 0.9, 0.2;
  REQUIRE(s.hs.optimal_input(x, Eigen::VectorXd::Zero(2)).norm() == 0.0);

  // published value at x = 0, p = (1, 0): u = -1/2 (-cos 0) = 1/2
  Eigen::VectorXd p(2);
  p << 1.0, 0.0;
  REQUIRE(s.hs.optimal_input(Eigen::VectorXd::Zero(2), p)(0) ==
          Catch::Approx(0.5).margin(1e-14));

  // stationarity of the control Hamiltonian at the optimum
  x << 1.2, -0.1;
  p << 0.4, -0.7;
  const Eigen::VectorXd u_star = s.hs.optimal_input(x, p);
  auto Hd = [&](double u) {
    Eigen::VectorXd uu = Eigen::VectorXd::Constant(1, u);
    return p.dot(s.tm.dynamics(x, uu)) + s.tm.cost(x) + uu.dot(s.problem.cost.R * uu);
  };
  const double h = 1e-6;
  const double dHdu = (Hd(u_star(0) + h) - Hd(u_star(0) - h)) / (2.0 * h);
  REQUIRE(std::abs(dHdu) < 1e-9);

  // doubling R halves the input at fixed (x, p)
  ExampleProblem doubled = make_mass_spring();
  doubled.cost.R *= 2.0;
  const HamiltonianSystem hs2 = assemble_hamiltonian(reproduction_model(doubled), doubled.cost);
  REQUIRE(hs2.optimal_input(x, p)(0) == Catch::Approx(0.5 * u_star(0)).margin(1e-14));
}

TEST_CASE("on-orbit variational matrix matches the published linearization") {
  const auto& s = repro_setup();
  for (double t : {0.0, 0.6, 2.2, 3.9, 5.7}) {
    const Eigen::MatrixXd J = s.hs.vector_field_jacobian_on_orbit(t);
    Eigen::MatrixXd expected(4, 4);
    const double c = std::cos(t), sn = std::sin(t);
    expected << 0, 0, -0.5 * c * c, 0.5 * sn * c,
                0, 0, 0.5 * sn * c, -0.5 * sn * sn,
                0, 0, 0, 0,
                0, -2.0, 0, 0;
    INFO("t = " << t);
    REQUIRE((J - expected).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("flow conserves H and stays on the invariant set") {
  const auto& s = repro_setup();
  // start on M: remains on M over a period
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
  x0(0) = 0.3;
  const Trajectory on_m = flow(s.hs, x0, Eigen::VectorXd::Zero(2), 0.0, 2.0 * kPi);
  for (int k = 0; k < on_m.times.size(); ++k) {
    REQUIRE(std::abs(on_m.x(1, k)) < 1e-8);
    REQUIRE(on_m.p.col(k).norm() < 1e-8);
  }
  REQUIRE(on_m.total_cost() < 1e-10);

  // off M: H is a first integral
  Eigen::VectorXd xs(2), ps(2);
  xs << 0.0, 0.2;
  ps << 0.0, 0.6;
  const Trajectory traj = flow(s.hs, xs, ps, 0.0, 2.0 * kPi);
  const double h0 = traj.hamiltonian(0);
  REQUIRE((traj.hamiltonian.array() - h0).abs().maxCoeff() < 1e-7 * (1.0 + std::abs(h0)));
}

TEST_CASE("flow is deterministic from interior samples") {
  const auto& s = repro_setup();
  Eigen::VectorXd xs(2), ps(2);
  xs << 0.5, 0.15;
  ps << 0.0, 0.4;
  const Trajectory traj = flow(s.hs, xs, ps, 0.0, 4.0);
  const int mid = static_cast<int>(traj.times.size()) / 2;
  const Trajectory tail =
      flow(s.hs, traj.x.col(mid), traj.p.col(mid), traj.times(mid), 4.0);
  const int last = static_cast<int>(traj.times.size()) - 1;
  const int tlast = static_cast<int>(tail.times.size()) - 1;
  REQUIRE((tail.x.col(tlast) - traj.x.col(last)).norm() < 1e-6);
  REQUIRE((tail.p.col(tlast) - traj.p.col(last)).norm() < 1e-6);
}

TEST_CASE("full-orbit monodromy: unit pair plus a reciprocal hyperbolic pair") {
  const auto& s = repro_setup();
  const MonodromyReport rep = full_orbit_monodromy(s.hs);

  REQUIRE(rep.multipliers.size() == 4);
  REQUIRE(rep.count_near_one(1e-4) >= 2);
  REQUIRE(rep.symplectic_residual.has_value());
  REQUIRE(*rep.symplectic_residual < 1e-7);

  // the non-unit pair is real, reciprocal, and hyperbolic
  std::vector<std::complex<double>> transverse;
  for (int i = 0; i < 4; ++i)
    if (std::abs(rep.multipliers(i) - std::complex<double>(1.0, 0.0)) > 1e-4)
      transverse.push_back(rep.multipliers(i));
  REQUIRE(transverse.size() == 2);
  const double big = std::max(std::abs(transverse[0]), std::abs(transverse[1]));
  const double small = std::min(std::abs(transverse[0]), std::abs(transverse[1]));
  REQUIRE(small < 1.0);
  REQUIRE(big > 1.0);
  REQUIRE(std::abs(transverse[0] * transverse[1] - 1.0) < 1e-5);

  // they coincide with the transverse Hamiltonian multipliers
  FloquetOptions fo;
  fo.hamiltonian_structure = true;
  const MonodromyReport trep = monodromy(s.lin.hamiltonian_fn(), 2, s.lin.period, fo);
  REQUIRE(small == Catch::Approx(std::abs(trep.multipliers(1))).epsilon(1e-5));
  REQUIRE(big == Catch::Approx(std::abs(trep.multipliers(0))).epsilon(1e-5));

  // the flow direction is an eigenvector for multiplier one
  Eigen::VectorXd v_tan = s.hs.vector_field(Eigen::VectorXd::Zero(4));
  REQUIRE((rep.monodromy * v_tan - v_tan).norm() / v_tan.norm() < 1e-5);
}

TEST_CASE("NHIM verification passes for the example and reports the rates") {
  const auto& s = repro_setup();
  const NhimReport rep = verify_nhim(s.riccati, s.lin, s.hs);
  REQUIRE(rep.pass);
  REQUIRE(rep.dim_stable == 1);
  REQUIRE(rep.dim_unstable == 1);
  REQUIRE(rep.unit_multiplicity >= 2);
  REQUIRE(rep.contraction_rate > 0.0);
  REQUIRE(rep.expansion_rate > 0.0);
  // alpha estimate equals -log(rho)/T of the closed loop here
  REQUIRE(rep.contraction_rate ==
          Catch::Approx(-std::log(s.riccati.max_closed_loop_modulus()) / s.hs.period())
              .epsilon(1e-3));
}

TEST_CASE("no hyperbolicity without cost and control") {
  // A = 0, B = 0, Q = 0 with the trivial solution P = 0: every multiplier
  // sits on the unit circle and the verification must fail.
  ExampleProblem p = make_mass_spring();
  p.cost.q = [](const Eigen::VectorXd&) { return 0.0; };
  p.cost.dq = nullptr;
  p.cost.d2q = nullptr;
  ClosedFormTransverse cf = *p.closed_form;
  cf.input = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 1); };
  cf.input_x_jacobians = [](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(2, 1)};
  };
  cf.cost = [](const Eigen::VectorXd&) { return 0.0; };
  cf.cost_gradient = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2); };
  cf.cost_hessian = [](double) { return Eigen::MatrixXd::Zero(1, 1); };
  p.closed_form = cf;

  const TransverseModel tm = reproduction_model(p);
  const PeriodicLinearization lin = transverse_linearization(tm, p.cost, 64);
  const HamiltonianSystem hs = assemble_hamiltonian(tm, p.cost);

  RiccatiSolution zero;  // P = 0 solves the degenerate equation
  zero.period = lin.period;
  zero.P = PeriodicMatrix::fit(std::vector<Eigen::MatrixXd>(64, Eigen::MatrixXd::Zero(1, 1)),
                               lin.period);
  zero.closed_loop_multipliers = Eigen::VectorXcd::Ones(1);

  const NhimReport rep = verify_nhim(zero, lin, hs);
  REQUIRE_FALSE(rep.pass);
  REQUIRE(rep.dim_stable == 0);
  REQUIRE(rep.dim_unstable == 0);

  // without hyperbolicity there is no stable manifold to shoot for
  REQUIRE_THROWS_AS(stable_trajectory(hs, 0.0, Eigen::VectorXd::Constant(1, 0.1), zero),
                    NotNormallyHyperbolic);
}

TEST_CASE("wrong analytic derivatives are caught by the gradient cross-check") {
  ExampleProblem p = make_mass_spring();
  ClosedFormTransverse cf = *p.closed_form;
  cf.cost_gradient = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2);
    g << 0.0, -2.0 * x(1);  // sign error
    return g;
  };
  p.closed_form = cf;
  REQUIRE_THROWS_AS(assemble_hamiltonian(reproduction_model(p), p.cost), GradientMismatch);
}

TEST_CASE("closed loop through the chart: on-orbit start stays put") {
  PipelineOptions po;
  const Pipeline pl = build_pipeline(make_mass_spring(), po);
  const Feedback fb = make_linear_feedback(pl.gain);
  FlowOptions fo;
  const ClosedLoopResult run =
      closed_loop_simulate(pl.problem.system, pl.problem.cost, pl.problem.orbit, *pl.frame, fb,
                           pl.problem.orbit.point(0.7), 2.0 * pl.period(), fo);
  REQUIRE(run.distance.maxCoeff() < 1e-8);
  REQUIRE(run.u.cwiseAbs().maxCoeff() < 1e-7);
  REQUIRE(run.total_cost < 1e-10);
}

TEST_CASE("closed loop through the chart: decay matches the Floquet prediction") {
  PipelineOptions po;
  const Pipeline pl = build_pipeline(make_mass_spring(), po);
  const Feedback fb = make_linear_feedback(pl.gain);
  FlowOptions fo;
  fo.stop_when_distance_below = 1e-7;
  const ClosedLoopResult run =
      closed_loop_simulate(pl.problem.system, pl.problem.cost, pl.problem.orbit, *pl.frame, fb,
                           Eigen::Vector2d(1.2, 0.0), 16.0 * pl.period(), fo);

  // reaches 1e-3 well within 16 periods
  bool crossed = false;
  for (int k = 0; k < run.times.size() && !crossed; ++k)
    crossed = run.distance(k) < 1e-3;
  REQUIRE(crossed);

  const double predicted = std::log(pl.riccati.max_closed_loop_modulus()) / pl.period();
  const DecayFit fit = decay_rate(run.times, run.distance);
  REQUIRE(std::abs(fit.exponent - predicted) < 0.3 * std::abs(predicted));
}

TEST_CASE("tube exit is reported") {
  PipelineOptions po;
  const Pipeline pl = build_pipeline(make_mass_spring(), po);
  // destabilizing feedback pushes the state outward until the chart fails
  Feedback bad;
  bad.kind = "destabilizing";
  bad.u = [](double x1, const Eigen::VectorXd& x2) {
    return Eigen::VectorXd::Constant(1, -3.0 * std::sin(x1) * x2(0) - 1.5 * std::cos(x1));
  };
  FlowOptions fo;
  REQUIRE_THROWS_AS(closed_loop_simulate(pl.problem.system, pl.problem.cost, pl.problem.orbit,
                                         *pl.frame, bad, Eigen::Vector2d(1.4, 0.0),
                                         8.0 * pl.period(), fo),
                    TubeExit);
}
