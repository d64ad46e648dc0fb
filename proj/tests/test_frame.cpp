#include "orbitstab/errors.hpp"
#include "orbitstab/frame.hpp"
#include "orbitstab/model.hpp"
#include "orbitstab/ode.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace orbitstab;
namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("mass-spring frame: tangent and radial complement") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 64);

  REQUIRE((frame.tangent(0.0) - Eigen::Vector2d(0.0, -1.0)).norm() < 1e-10);
  REQUIRE((frame.complement(0.0) - Eigen::MatrixXd::Identity(2, 1)).norm() < 1e-10);

  // the complement is the outward radial direction all around the orbit
  for (int k = 0; k < frame.node_count(); ++k) {
    const double th = frame.node(k);
    Eigen::Vector2d radial(std::cos(th), -std::sin(th));
    REQUIRE((frame.complement(th) - radial).norm() < 1e-10);
  }
  REQUIRE(frame.tube_radius() == Catch::Approx(0.5).margin(1e-8));
}

TEST_CASE("frame orthonormality and periodicity at all nodes") {
  for (const auto& name : {"mass-spring", "circular3"}) {
    const ExampleProblem p = make_example(name);
    const MovingFrame frame = build_frame(p.orbit, p.system, 128);
    const int d = frame.codim();
    for (int k = 0; k < frame.node_count(); ++k) {
      const double th = frame.node(k);
      const Eigen::VectorXd e1 = frame.tangent(th);
      const Eigen::MatrixXd Z = frame.complement(th);
      INFO(name << " node " << k);
      REQUIRE(std::abs(e1.norm() - 1.0) < 1e-10);
      REQUIRE((Z.transpose() * Z - Eigen::MatrixXd::Identity(d, d)).norm() < 1e-10);
      REQUIRE((e1.transpose() * Z).norm() < 1e-10);
    }
    REQUIRE(frame.closure_error() < 1e-8);
    REQUIRE((frame.complement(p.orbit.period()) - frame.complement(0.0)).norm() < 1e-10);
  }
}

TEST_CASE("transverse chart: on-orbit points and the radial example") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 128);

  for (double theta : {0.0, 1.1, 3.9, 5.5}) {
    const TransverseCoords tc = to_transverse(p.orbit.point(theta), frame, p.orbit);
    REQUIRE(tc.x1 == Catch::Approx(theta).margin(1e-9));
    REQUIRE(tc.x2.norm() < 1e-9);
  }

  Eigen::Vector2d z(1.2, 0.0);
  const TransverseCoords tc = to_transverse(z, frame, p.orbit);
  REQUIRE(tc.x1 == Catch::Approx(0.0).margin(1e-10));
  REQUIRE(tc.x2(0) == Catch::Approx(0.2).margin(1e-10));
  REQUIRE((from_transverse(0.0, Eigen::VectorXd::Constant(1, 0.2), frame, p.orbit) - z).norm() < 1e-12);
}

TEST_CASE("transverse chart round trip on tube samples") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 128);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x1 = u01(rng) * p.orbit.period();
    const double x2 = (2.0 * u01(rng) - 1.0) * 0.4;  // inside the 0.5 tube
    const Eigen::VectorXd z = from_transverse(x1, Eigen::VectorXd::Constant(1, x2), frame, p.orbit);
    const TransverseCoords tc = to_transverse(z, frame, p.orbit);
    const Eigen::VectorXd z_back = from_transverse(tc.x1, tc.x2, frame, p.orbit);
    REQUIRE((z_back - z).norm() < 1e-9);
  }
}

TEST_CASE("from_transverse is periodic in the phase") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 64);
  const Eigen::VectorXd x2 = Eigen::VectorXd::Constant(1, 0.13);
  const Eigen::VectorXd a = from_transverse(1.2, x2, frame, p.orbit);
  const Eigen::VectorXd b = from_transverse(1.2 + p.orbit.period(), x2, frame, p.orbit);
  REQUIRE((a - b).norm() < 1e-12);
}

TEST_CASE("points outside the tube are rejected") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 64);
  REQUIRE_THROWS_AS(to_transverse(Eigen::Vector2d(2.0, 0.0), frame, p.orbit), OutOfTube);
  REQUIRE_THROWS_AS(to_transverse(Eigen::Vector2d(0.05, 0.05), frame, p.orbit), OutOfTube);
}

TEST_CASE("generic transverse dynamics: normal form on the orbit") {
  for (const auto& name : {"mass-spring", "circular3"}) {
    const ExampleProblem p = make_example(name);
    const MovingFrame frame = build_frame(p.orbit, p.system, 128);
    const TransverseModel tm = transverse_dynamics(p.system, p.cost, frame, p.orbit);
    const int d = tm.state_dim() - 1;
    for (double t : {0.0, 0.7, 2.9, 4.8}) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(tm.state_dim());
      x(0) = t;
      const Eigen::VectorXd xdot = tm.drift(x);
      INFO(name << " t=" << t);
      REQUIRE(xdot(0) == Catch::Approx(1.0).margin(1e-9));      // x1dot = 1 on the orbit
      REQUIRE(xdot.tail(d).norm() < 1e-9);                      // x2dot = 0
      REQUIRE(tm.f2(x).norm() < 1e-7);                          // f2(x1, 0) = 0
    }
  }
}

TEST_CASE("mass-spring reproduction model matches its published equations") {
  const ExampleProblem p = make_mass_spring();
  const TransverseModel tm = reproduction_model(p);
  for (double x1 : {0.0, 0.9, 2.5}) {
    for (double x2 : {-0.2, 0.0, 0.3}) {
      Eigen::Vector2d x(x1, x2);
      const Eigen::VectorXd drift = tm.drift(x);
      REQUIRE(drift(0) == 1.0);
      REQUIRE(drift(1) == 0.0);
      const Eigen::MatrixXd g = tm.input(x);
      REQUIRE(g(0, 0) == Catch::Approx(-std::cos(x1)).margin(1e-15));
      REQUIRE(g(1, 0) == Catch::Approx((2.0 * x2 + 1.0) * std::sin(x1)).margin(1e-15));
      REQUIRE(tm.cost(x) == Catch::Approx(x2 * x2).margin(1e-15));
    }
  }
}

TEST_CASE("generic and reproduction models agree where the theory says they must") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 128);
  const TransverseModel generic = transverse_dynamics(p.system, p.cost, frame, p.orbit);
  const TransverseModel repro = reproduction_model(p);

  for (double t : {0.3, 1.7, 3.1, 5.9}) {
    Eigen::Vector2d x(t, 0.0);
    // same phase rate on the orbit
    REQUIRE(generic.drift(x)(0) == Catch::Approx(repro.drift(x)(0)).margin(1e-9));
    // |g2| agrees; the sign convention differs between the charts
    const double g2_generic = generic.input(x)(1, 0);
    const double g2_repro = repro.input(x)(1, 0);
    REQUIRE(std::abs(g2_generic) == Catch::Approx(std::abs(g2_repro)).margin(1e-9));
    REQUIRE(std::abs(g2_generic) == Catch::Approx(std::abs(std::sin(t))).margin(1e-9));
  }
  // chain rule through the radial chart gives g2(t, 0) = -sin(t)
  Eigen::Vector2d x(1.0, 0.0);
  REQUIRE(generic.input(x)(1, 0) == Catch::Approx(-std::sin(1.0)).margin(1e-9));
}

TEST_CASE("normal form structure: f2 is second order in x2, Fact-2 periodicity, f1 decay") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 128);
  const TransverseModel tm = transverse_dynamics(p.system, p.cost, frame, p.orbit);
  const double T = p.orbit.period();

  for (double t : {0.2, 1.9, 4.1}) {
    // d f2 / d x2 vanishes on the orbit
    const double h = 1e-5;
    Eigen::Vector2d xp(t, h), xm(t, -h);
    const double df2 = (tm.f2(xp)(0) - tm.f2(xm)(0)) / (2.0 * h);
    REQUIRE(std::abs(df2) < 1e-7);

    // all components are period-T in x1
    Eigen::Vector2d x(t, 0.0), xT(t + T, 0.0);
    REQUIRE((tm.drift(x) - tm.drift(xT)).norm() < 1e-9);
    REQUIRE((tm.input(x) - tm.input(xT)).norm() < 1e-9);
    REQUIRE(std::abs(tm.state_matrix(t)(0, 0) - tm.state_matrix(t + T)(0, 0)) < 1e-9);

    // |f1| -> 0 along rays x2 -> 0
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.2, 0.02, 0.002}) {
      const double f1 = std::abs(tm.f1(Eigen::Vector2d(t, eps)));
      REQUIRE(f1 < std::max(prev, 1e-8));
      REQUIRE(f1 < 10.0 * eps);
      prev = f1;
    }
  }
}

TEST_CASE("chart degeneracy raises SingularJacobian") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 64);
  const TransverseModel tm = transverse_dynamics(p.system, p.cost, frame, p.orbit);
  // at x2 = -1 the radial chart collapses onto the origin
  REQUIRE_THROWS_AS(tm.drift(Eigen::Vector2d(0.5, -1.0)), SingularJacobian);
}

TEST_CASE("twisted normal bundle is reported, not repaired") {
  // wobbled circle in R^3: the complement does not return to itself
  const double T = 2.0 * kPi;
  const int K = 256;
  Eigen::MatrixXd s(3, K);
  for (int k = 0; k < K; ++k) {
    const double th = T * k / K;
    s.col(k) << std::cos(th), -std::sin(th),
        0.3 * std::cos(2.0 * th) + 0.15 * std::sin(3.0 * th);
  }
  const PeriodicOrbit orbit(s, T);
  ControlAffineSystem sys;
  sys.n = 3;
  sys.m = 1;
  sys.f = [orbit, T](const Eigen::VectorXd& z) {
    const double th = std::atan2(-z(1), z(0));
    return Eigen::VectorXd(orbit.velocity(th < 0 ? th + T : th));
  };
  sys.g = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(3, 1); };
  REQUIRE_THROWS_AS(build_frame(orbit, sys, 256), NonOrientableFrame);
}

TEST_CASE("orbit invariance: free transverse flow keeps x2 = 0 over a period") {
  const ExampleProblem p = make_mass_spring();
  const MovingFrame frame = build_frame(p.orbit, p.system, 128);
  const TransverseModel tm = transverse_dynamics(p.system, p.cost, frame, p.orbit);

  auto rhs = [&tm](double, const Eigen::VectorXd& x) {
    return tm.dynamics(x, Eigen::VectorXd::Zero(1));
  };
  Eigen::VectorXd x0(2);
  x0 << 0.4, 0.0;
  const auto sol = integrate_dopri(rhs, 0.0, x0, {kPi / 2, kPi, 2.0 * kPi});
  for (const auto& x : sol.states) REQUIRE(std::abs(x(1)) < 1e-7);
  REQUIRE(sol.states.back()(0) == Catch::Approx(0.4 + 2.0 * kPi).margin(1e-7));
}
