#include "orbitstab/derivatives.hpp"
#include "orbitstab/errors.hpp"
#include "orbitstab/fourier.hpp"
#include "orbitstab/ode.hpp"
#include "orbitstab/schur.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace orbitstab;
namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("trig interpolant reproduces samples to machine precision") {
  const int K = 32;
  const double T = 2.0 * kPi;
  Eigen::MatrixXd samples(2, K);
  for (int k = 0; k < K; ++k) {
    const double t = T * k / K;
    samples.col(k) << std::cos(t) + 0.3 * std::sin(3.0 * t), std::exp(std::sin(t));
  }
  const auto interp = TrigInterpolant::fit(samples, T);
  for (int k = 0; k < K; ++k)
    REQUIRE((interp(T * k / K) - samples.col(k)).norm() < 1e-13);
}

TEST_CASE("trig interpolant is exactly periodic") {
  const int K = 16;
  Eigen::MatrixXd samples(1, K);
  for (int k = 0; k < K; ++k) samples(0, k) = std::sin(2.0 * kPi * k / K) + 2.0;
  const auto interp = TrigInterpolant::fit(samples, 1.0);
  for (double t : {0.0, 0.123, 0.77}) {
    REQUIRE(interp(t + 1.0)(0) == interp(t)(0));  // bitwise, phase is wrapped
    REQUIRE(interp(t - 7.0)(0) == Catch::Approx(interp(t)(0)).margin(1e-13));
  }
}

TEST_CASE("trig interpolant derivatives are spectral") {
  const int K = 64;
  const double T = 2.0 * kPi;
  Eigen::MatrixXd samples(1, K);
  for (int k = 0; k < K; ++k) samples(0, k) = std::exp(std::sin(T * k / K));
  const auto interp = TrigInterpolant::fit(samples, T);
  for (double t : {0.0, 0.5, 1.9, 4.4}) {
    const double f = std::exp(std::sin(t));
    const double df = std::cos(t) * f;
    const double d2f = (-std::sin(t) + std::cos(t) * std::cos(t)) * f;
    REQUIRE(interp(t)(0) == Catch::Approx(f).margin(1e-11));
    REQUIRE(interp.derivative(t)(0) == Catch::Approx(df).margin(1e-9));
    REQUIRE(interp.second_derivative(t)(0) == Catch::Approx(d2f).margin(1e-7));
  }
}

TEST_CASE("periodic matrix round trip") {
  auto fn = [](double t) {
    Eigen::MatrixXd M(2, 2);
    M << std::sin(t), 1.0, 0.0, std::cos(2.0 * t);
    return M;
  };
  const auto pm = PeriodicMatrix::from_function(fn, 2, 2, 2.0 * kPi, 64);
  REQUIRE((pm(1.3) - fn(1.3)).norm() < 1e-12);
  Eigen::MatrixXd expected_deriv(2, 2);
  expected_deriv << std::cos(1.3), 0.0, 0.0, -2.0 * std::sin(2.6);
  REQUIRE((pm.derivative(1.3) - expected_deriv).norm() < 1e-10);
}

TEST_CASE("finite differences match analytic derivatives") {
  auto f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(2);
    y << std::sin(x(0)) * x(1), x(0) * x(0) + std::exp(x(1));
    return y;
  };
  Eigen::VectorXd x(2);
  x << 0.7, -0.4;
  const Eigen::MatrixXd J = jacobian_central4(f, x);
  Eigen::MatrixXd Jexact(2, 2);
  Jexact << std::cos(0.7) * (-0.4), std::sin(0.7), 1.4, std::exp(-0.4);
  REQUIRE((J - Jexact).norm() < 1e-9);

  auto q = [](const Eigen::VectorXd& v) { return std::sin(v(0)) * std::exp(v(1)); };
  const Eigen::MatrixXd H = hessian_central2(q, x);
  Eigen::MatrixXd Hexact(2, 2);
  Hexact << -std::sin(0.7) * std::exp(-0.4), std::cos(0.7) * std::exp(-0.4),
      std::cos(0.7) * std::exp(-0.4), std::sin(0.7) * std::exp(-0.4);
  REQUIRE((H - Hexact).norm() < 1e-6);
  REQUIRE((H - H.transpose()).norm() == 0.0);
}

TEST_CASE("dopri integrates the harmonic oscillator over many periods") {
  auto rhs = [](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd dy(2);
    dy << y(1), -y(0);
    return dy;
  };
  Eigen::VectorXd y0(2);
  y0 << 1.0, 0.0;
  const Eigen::VectorXd y = integrate_to(rhs, 0.0, y0, 20.0 * kPi);
  REQUIRE((y - y0).norm() < 1e-7);
}

TEST_CASE("dopri hits requested sample times and honors stop predicates") {
  auto rhs = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); };
  Eigen::VectorXd y0 = Eigen::VectorXd::Ones(1);

  const auto sol = integrate_dopri(rhs, 0.0, y0, {0.5, 1.0, 2.0});
  REQUIRE(sol.times.size() == 3);
  REQUIRE(sol.states[2](0) == Catch::Approx(std::exp(-2.0)).margin(1e-10));

  IntegrateOptions opts;
  opts.stop = [](double, const Eigen::VectorXd& y) { return y(0) < 0.1; };
  const auto stopped = integrate_dopri(rhs, 0.0, y0, {10.0}, opts);
  REQUIRE(stopped.stopped);
  REQUIRE(stopped.states.back()(0) < 0.1);
  REQUIRE(stopped.times.back() < 10.0);
}

TEST_CASE("finite-time blow-up raises IntegrationFailure") {
  auto rhs = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(y.array().square()); };
  Eigen::VectorXd y0 = Eigen::VectorXd::Ones(1);  // escapes at t = 1
  REQUIRE_THROWS_AS(integrate_to(rhs, 0.0, y0, 2.0), IntegrationFailure);
}

TEST_CASE("dopri integrates backward") {
  auto rhs = [](double t, const Eigen::VectorXd&) {
    return Eigen::VectorXd(Eigen::VectorXd::Constant(1, std::cos(t)));
  };
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd y = integrate_to(rhs, 2.0, y0, 0.5);
  REQUIRE(y(0) == Catch::Approx(std::sin(0.5) - std::sin(2.0)).margin(1e-10));
}

TEST_CASE("ordered schur puts the stable block first") {
  Eigen::MatrixXd M(2, 2);
  M << 0.0, 2.0, 0.125, 0.0;  // eigenvalues +-0.5
  const auto schur = ordered_schur_stable_first(M);
  REQUIRE(schur.n_stable == 2);

  Eigen::MatrixXd rot(2, 2);
  const double c = std::cos(0.3), s = std::sin(0.3);
  rot << c, -s, s, c;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 0.2;
  const Eigen::MatrixXd A = rot * D * rot.transpose();
  const auto os = ordered_schur_stable_first(A);
  REQUIRE(os.n_stable == 1);
  REQUIRE(os.T(0, 0) == Catch::Approx(0.2).margin(1e-12));
  // leading column of U spans the 0.2-eigenvector
  const Eigen::VectorXd v = os.U.col(0);
  REQUIRE((A * v - 0.2 * v).norm() < 1e-12);
  // reconstruction
  REQUIRE((os.U * os.T * os.U.transpose() - A).norm() < 1e-12);
}
