#include "orbitstab/model.hpp"

#include "orbitstab/derivatives.hpp"
#include "orbitstab/errors.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace orbitstab {

namespace {

void require_finite(const Eigen::MatrixXd& v, const std::string& what) {
  if (!v.allFinite()) throw EvaluatorFailure(what + " returned non-finite values");
}

/// Crude tube radius used only for validation probes: a quarter of the mean
/// orbit "radius" measured as |gammadot| * T / (2 pi).
double probe_radius(const PeriodicOrbit& orbit) {
  double min_speed = std::numeric_limits<double>::infinity();
  for (int k = 0; k < orbit.node_count(); ++k)
    min_speed = std::min(min_speed, orbit.velocity(orbit.node(k)).norm());
  return 0.25 * min_speed * orbit.period() / (2.0 * std::numbers::pi);
}

}  // namespace

Eigen::VectorXd ControlAffineSystem::eval_f(const Eigen::VectorXd& z) const {
  Eigen::VectorXd v = f(z);
  if (v.size() != n) throw EvaluatorFailure("f returned wrong dimension");
  require_finite(v, "f");
  return v;
}

Eigen::MatrixXd ControlAffineSystem::eval_g(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd v = g(z);
  if (v.rows() != n || v.cols() != m) throw EvaluatorFailure("g returned wrong dimensions");
  require_finite(v, "g");
  return v;
}

double CostSpec::eval_q(const Eigen::VectorXd& z) const {
  const double v = q(z);
  if (!std::isfinite(v)) throw EvaluatorFailure("q returned a non-finite value");
  return v;
}

PeriodicOrbit::PeriodicOrbit(const Eigen::MatrixXd& samples, double period)
    : samples_(samples), period_(period) {
  if (samples.rows() < 2)
    throw ValidationFailure("PeriodicOrbit: state dimension must be at least 2");
  if (samples.cols() < 8) throw ValidationFailure("PeriodicOrbit: need at least 8 orbit nodes");
  if (!(period > 0.0)) throw ValidationFailure("PeriodicOrbit: period must be positive");
  interp_ = TrigInterpolant::fit(samples, period);
}

const CheckResult* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ValidationReport validate_problem(const ControlAffineSystem& system, const CostSpec& cost,
                                  const PeriodicOrbit& orbit, const ValidationTolerances& tol) {
  ValidationReport report;
  auto add = [&report](const std::string& name, bool pass, double residual,
                       const std::string& detail = "") {
    report.checks.push_back({name, pass, residual, detail});
  };

  if (system.n != orbit.dim())
    throw ValidationFailure("validate_problem: system dimension does not match orbit");

  const int K = orbit.node_count();
  std::mt19937 rng(tol.seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double radius = probe_radius(orbit);

  auto tube_point = [&]() {
    const double theta = unif(rng) * orbit.period();
    Eigen::VectorXd dir(system.n);
    for (int i = 0; i < system.n; ++i) dir(i) = gauss(rng);
    dir.normalize();
    return Eigen::VectorXd(orbit.point(theta) + unif(rng) * radius * dir);
  };

  // Interpolant reproduces its samples and is periodic.
  {
    double worst = 0.0;
    for (int k = 0; k < K; ++k)
      worst = std::max(worst, (orbit.point(orbit.node(k)) - orbit.samples().col(k)).norm());
    worst = std::max(worst, (orbit.point(orbit.period()) - orbit.point(0.0)).norm());
    add("orbit-interpolation", worst < 1e-11, worst, "samples reproduced, gamma(T) = gamma(0)");
  }

  // gammadot = f(gamma) and no equilibria on the orbit.
  {
    double worst = 0.0;
    double min_speed = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double th = orbit.node(k);
      const Eigen::VectorXd v = orbit.velocity(th);
      worst = std::max(worst, (v - system.eval_f(orbit.point(th))).norm());
      min_speed = std::min(min_speed, v.norm());
    }
    add("orbit-residual", worst < tol.orbit_tol, worst, "max |gammadot - f(gamma)| over nodes");
    add("orbit-regular", min_speed > 1e-10, min_speed, "min |gammadot| over nodes");
  }

  // R symmetric positive definite.
  {
    const Eigen::MatrixXd& R = cost.R;
    bool ok = R.rows() == system.m && R.cols() == system.m;
    double min_eig = 0.0;
    if (ok) {
      ok = (R - R.transpose()).norm() < 1e-12 * std::max(1.0, R.norm());
      if (ok) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
        min_eig = es.eigenvalues().minCoeff();
        ok = min_eig > 0.0;
      }
    }
    add("input-weight-spd", ok, min_eig, "R symmetric with all eigenvalues > 0");
  }

  // q = 0 and grad q = 0 on the orbit.
  {
    double worst_q = 0.0, worst_dq = 0.0;
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd z = orbit.point(orbit.node(k));
      worst_q = std::max(worst_q, std::abs(cost.eval_q(z)));
      Eigen::VectorXd grad =
          cost.dq ? cost.dq(z) : gradient_central4([&](const Eigen::VectorXd& p) { return cost.q(p); }, z);
      require_finite(grad, "dq");
      worst_dq = std::max(worst_dq, grad.norm());
    }
    add("cost-on-orbit", worst_q < tol.orbit_tol, worst_q, "max |q(gamma)| over nodes");
    add("cost-gradient-on-orbit", worst_dq < tol.orbit_tol, worst_dq, "max |dq(gamma)| over nodes");
  }

  // q >= 0 in a tube around the orbit; evaluators finite there.
  {
    double min_q = std::numeric_limits<double>::infinity();
    for (int i = 0; i < tol.probe_points; ++i) {
      const Eigen::VectorXd z = tube_point();
      min_q = std::min(min_q, cost.eval_q(z));
      system.eval_f(z);
      system.eval_g(z);
    }
    add("cost-nonnegative", min_q >= -1e-12, min_q, "min q over tube samples");
  }

  // Analytic derivatives against central differences, when supplied.
  if (system.df || system.dg || cost.dq || cost.d2q) {
    double worst = 0.0;
    for (int i = 0; i < tol.probe_points; ++i) {
      const Eigen::VectorXd z = tube_point();
      if (system.df) {
        const Eigen::MatrixXd Ja = system.df(z);
        const Eigen::MatrixXd Jn = jacobian_central4([&](const Eigen::VectorXd& p) { return system.f(p); }, z);
        worst = std::max(worst, (Ja - Jn).norm() / std::max(1.0, Ja.norm()));
      }
      if (system.dg) {
        const auto Ga = system.dg(z);
        for (int c = 0; c < system.m; ++c) {
          const Eigen::MatrixXd Jn = jacobian_central4(
              [&](const Eigen::VectorXd& p) { return Eigen::VectorXd(system.g(p).col(c)); }, z);
          worst = std::max(worst, (Ga[static_cast<size_t>(c)] - Jn).norm() /
                                      std::max(1.0, Ga[static_cast<size_t>(c)].norm()));
        }
      }
      if (cost.dq) {
        const Eigen::VectorXd ga = cost.dq(z);
        const Eigen::VectorXd gn =
            gradient_central4([&](const Eigen::VectorXd& p) { return cost.q(p); }, z);
        worst = std::max(worst, (ga - gn).norm() / std::max(1.0, ga.norm()));
      }
      if (cost.d2q) {
        const Eigen::MatrixXd Ha = cost.d2q(z);
        const Eigen::MatrixXd Hn =
            hessian_central2([&](const Eigen::VectorXd& p) { return cost.q(p); }, z);
        worst = std::max(worst, (Ha - Hn).norm() / std::max(1.0, Ha.norm()));
      }
    }
    add("derivative-crosscheck", worst < tol.jac_tol, worst,
        "analytic vs central-difference derivatives, relative");
  }

  report.pass = true;
  for (const auto& c : report.checks) report.pass = report.pass && c.pass;
  return report;
}

ExampleProblem make_mass_spring(int orbit_nodes) {
  ExampleProblem p;
  p.name = "mass-spring";

  p.system.n = 2;
  p.system.m = 1;
  p.system.f = [](const Eigen::VectorXd& z) {
    Eigen::VectorXd v(2);
    v << z(1), -z(0);
    return v;
  };
  p.system.g = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd G(2, 1);
    G << 0.0, 1.0;
    return G;
  };
  p.system.df = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd J(2, 2);
    J << 0.0, 1.0, -1.0, 0.0;
    return J;
  };
  p.system.dg = [](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Zero(2, 2)};
  };

  p.cost.q = [](const Eigen::VectorXd& z) {
    const double e = z.squaredNorm() - 1.0;
    return e * e;
  };
  p.cost.dq = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd(4.0 * (z.squaredNorm() - 1.0) * z);
  };
  p.cost.d2q = [](const Eigen::VectorXd& z) {
    return Eigen::MatrixXd(4.0 * (z.squaredNorm() - 1.0) * Eigen::MatrixXd::Identity(2, 2) +
                           8.0 * z * z.transpose());
  };
  p.cost.R = Eigen::MatrixXd::Identity(1, 1);

  const double T = 2.0 * std::numbers::pi;
  Eigen::MatrixXd samples(2, orbit_nodes);
  for (int k = 0; k < orbit_nodes; ++k) {
    const double th = T * k / orbit_nodes;
    samples.col(k) << std::cos(th), -std::sin(th);
  }
  p.orbit = PeriodicOrbit(samples, T);

  // Published transformed dynamics, taken verbatim for reproduction mode:
  // x1dot = 1 - cos(x1) u,  x2dot = (2 x2 + 1) sin(x1) u,  cost x2^2.
  ClosedFormTransverse cf;
  cf.n = 2;
  cf.m = 1;
  cf.period = T;
  cf.drift = [](const Eigen::VectorXd&) {
    Eigen::VectorXd v(2);
    v << 1.0, 0.0;
    return v;
  };
  cf.input = [](const Eigen::VectorXd& x) {
    Eigen::MatrixXd G(2, 1);
    G << -std::cos(x(0)), (2.0 * x(1) + 1.0) * std::sin(x(0));
    return G;
  };
  cf.cost = [](const Eigen::VectorXd& x) { return x(1) * x(1); };
  cf.state_matrix = [](double) { return Eigen::MatrixXd::Zero(1, 1); };
  cf.cost_hessian = [](double) { return Eigen::MatrixXd::Constant(1, 1, 2.0); };
  cf.drift_jacobian = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 2); };
  cf.input_x_jacobians = [](const Eigen::VectorXd& x) {
    Eigen::MatrixXd d1(2, 1), d2(2, 1);
    d1 << std::sin(x(0)), (2.0 * x(1) + 1.0) * std::cos(x(0));
    d2 << 0.0, 2.0 * std::sin(x(0));
    return std::vector<Eigen::MatrixXd>{d1, d2};
  };
  cf.cost_gradient = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2);
    g << 0.0, 2.0 * x(1);
    return g;
  };
  cf.x2_bound = 0.5;  // the chart factor (2 x2 + 1) vanishes at x2 = -1/2
  p.closed_form = cf;

  return p;
}

ExampleProblem make_circular3(int orbit_nodes) {
  ExampleProblem p;
  p.name = "circular3";

  p.system.n = 3;
  p.system.m = 2;
  p.system.f = [](const Eigen::VectorXd& z) {
    Eigen::VectorXd v(3);
    v << z(1), -z(0), -z(2);
    return v;
  };
  p.system.g = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd G(3, 2);
    G << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
    return G;
  };
  p.system.df = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd J(3, 3);
    J << 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0;
    return J;
  };
  p.system.dg = [](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(3, 3)};
  };

  p.cost.q = [](const Eigen::VectorXd& z) {
    const double e = z(0) * z(0) + z(1) * z(1) - 1.0;
    return e * e + z(2) * z(2);
  };
  p.cost.dq = [](const Eigen::VectorXd& z) {
    const double e = z(0) * z(0) + z(1) * z(1) - 1.0;
    Eigen::VectorXd g(3);
    g << 4.0 * e * z(0), 4.0 * e * z(1), 2.0 * z(2);
    return g;
  };
  p.cost.d2q = [](const Eigen::VectorXd& z) {
    const double e = z(0) * z(0) + z(1) * z(1) - 1.0;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, 3);
    H(0, 0) = 4.0 * e + 8.0 * z(0) * z(0);
    H(1, 1) = 4.0 * e + 8.0 * z(1) * z(1);
    H(0, 1) = H(1, 0) = 8.0 * z(0) * z(1);
    H(2, 2) = 2.0;
    return H;
  };
  p.cost.R = Eigen::MatrixXd::Identity(2, 2);

  const double T = 2.0 * std::numbers::pi;
  Eigen::MatrixXd samples(3, orbit_nodes);
  for (int k = 0; k < orbit_nodes; ++k) {
    const double th = T * k / orbit_nodes;
    samples.col(k) << std::cos(th), -std::sin(th), 0.0;
  }
  p.orbit = PeriodicOrbit(samples, T);
  return p;
}

std::vector<std::string> example_names() { return {"mass-spring", "circular3"}; }

ExampleProblem make_example(const std::string& name, int orbit_nodes) {
  if (name == "mass-spring") return make_mass_spring(orbit_nodes);
  if (name == "circular3") return make_circular3(orbit_nodes);
  throw ValidationFailure("unknown example '" + name + "'");
}

namespace {

Eigen::MatrixXd parse_orbit_csv(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw ValidationFailure("cannot open orbit CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationFailure("orbit CSV is empty");

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (static_cast<int>(header.size()) != n + 1 || header[0] != "theta")
    throw ValidationFailure("orbit CSV header must be theta,z1,...,zn");

  std::vector<double> thetas;
  std::vector<Eigen::VectorXd> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != n + 1)
      throw ValidationFailure("orbit CSV row has wrong column count");
    thetas.push_back(vals[0]);
    rows.push_back(Eigen::Map<Eigen::VectorXd>(vals.data() + 1, n));
  }
  const int K = static_cast<int>(rows.size());
  if (K < 8) throw ValidationFailure("orbit CSV needs at least 8 rows");
  const double dt = thetas.back() / (K - 1);
  if (!(dt > 0.0)) throw ValidationFailure("orbit CSV thetas must increase from 0");
  for (int k = 0; k < K; ++k)
    if (std::abs(thetas[static_cast<size_t>(k)] - k * dt) > 1e-5 * dt * K)
      throw ValidationFailure("orbit CSV thetas must be uniformly spaced from 0");

  Eigen::MatrixXd samples(n, K);
  for (int k = 0; k < K; ++k) samples.col(k) = rows[static_cast<size_t>(k)];
  return samples;
}

}  // namespace

ExampleProblem load_problem_config(const std::string& json_text, const std::string& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    throw ValidationFailure(std::string("config parse error: ") + e.what());
  }
  if (!j.contains("example") || !j["example"].is_string())
    throw ValidationFailure("config must name a built-in 'example'");

  const int nodes = j.value("orbit_nodes", 256);
  ExampleProblem p = make_example(j["example"].get<std::string>(), nodes);
  if (j.contains("n") && j["n"].get<int>() != p.system.n)
    throw ValidationFailure("config dimension does not match the example");
  if (j.contains("R")) {
    const auto& jr = j["R"];
    Eigen::MatrixXd R(p.system.m, p.system.m);
    for (int r = 0; r < p.system.m; ++r)
      for (int c = 0; c < p.system.m; ++c) R(r, c) = jr.at(r).at(c).get<double>();
    p.cost.R = R;
  }

  if (j.contains("orbit")) {
    const auto& jo = j["orbit"];
    double period = jo.value("period", p.orbit.period());
    Eigen::MatrixXd samples;
    if (jo.contains("csv")) {
      samples = parse_orbit_csv(base_dir + "/" + jo["csv"].get<std::string>(), p.system.n);
    } else if (jo.contains("samples")) {
      const auto& js = jo["samples"];
      const int K = static_cast<int>(js.size());
      samples.resize(p.system.n, K);
      for (int k = 0; k < K; ++k)
        for (int i = 0; i < p.system.n; ++i) samples(i, k) = js.at(k).at(i).get<double>();
    } else {
      throw ValidationFailure("config orbit needs 'csv' or 'samples'");
    }
    p.orbit = PeriodicOrbit(samples, period);
  }
  return p;
}

}  // namespace orbitstab
