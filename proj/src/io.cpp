#include "orbitstab/io.hpp"

#include "orbitstab/errors.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace orbitstab {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_frame_csv(const std::string& path, const MovingFrame& frame) {
  const int n = frame.dim();
  const int d = frame.codim();
  std::ostringstream out;
  out << "theta";
  for (int i = 1; i <= n; ++i) out << ",e1_" << i;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= d; ++j) out << ",Z_" << i << j;
  out << "\n";
  for (int k = 0; k < frame.node_count(); ++k) {
    const double th = frame.node(k);
    const Eigen::VectorXd e1 = frame.tangent(th);
    const Eigen::MatrixXd Z = frame.complement(th);
    out << fmt(th);
    for (int i = 0; i < n; ++i) out << "," << fmt(e1(i));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) out << "," << fmt(Z(i, j));
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

void write_linearization_csv(const std::string& path, const PeriodicLinearization& lin) {
  const int d = lin.d;
  const int m = lin.m;
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) out << ",A_" << i << j;
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= m; ++j) out << ",B2_" << i << j;
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) out << ",Q_" << i << j;
  out << "\n";
  for (int k = 0; k < lin.A.node_count(); ++k) {
    const double t = lin.A.node_time(k);
    out << fmt(t);
    const Eigen::MatrixXd A = lin.A.node_value(k);
    const Eigen::MatrixXd B2 = lin.B2.node_value(k);
    const Eigen::MatrixXd Q = lin.Q.node_value(k);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out << "," << fmt(A(i, j));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < m; ++j) out << "," << fmt(B2(i, j));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out << "," << fmt(Q(i, j));
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

void write_riccati_csv(const std::string& path, const RiccatiSolution& sol) {
  const int d = sol.P.rows();
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) out << ",P_" << i << j;
  out << "\n";
  for (int k = 0; k < sol.P.node_count(); ++k) {
    out << fmt(sol.P.node_time(k));
    const Eigen::MatrixXd& P = sol.P.node_value(k);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out << "," << fmt(P(i, j));
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  const int n = static_cast<int>(traj.x.rows());
  const int m = static_cast<int>(traj.u.rows());
  std::ostringstream out;
  out << "t,x1";
  for (int i = 1; i < n; ++i) out << ",x2_" << i;
  out << ",p1";
  for (int i = 1; i < n; ++i) out << ",p2_" << i;
  for (int i = 1; i <= m; ++i) out << ",u_" << i;
  out << ",H,cost\n";
  for (int k = 0; k < traj.times.size(); ++k) {
    out << fmt(traj.times(k));
    for (int i = 0; i < n; ++i) out << "," << fmt(traj.x(i, k));
    for (int i = 0; i < n; ++i) out << "," << fmt(traj.p(i, k));
    for (int i = 0; i < m; ++i) out << "," << fmt(traj.u(i, k));
    out << "," << fmt(traj.hamiltonian(k)) << "," << fmt(traj.running_cost(k)) << "\n";
  }
  atomic_write_text(path, out.str());
}

void write_closed_loop_csv(const std::string& path, const ClosedLoopResult& run) {
  const int n = static_cast<int>(run.z.rows());
  const int d = static_cast<int>(run.x2.rows());
  const int m = static_cast<int>(run.u.rows());
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",z" << i;
  out << ",x1";
  for (int i = 1; i <= d; ++i) out << ",x2_" << i;
  out << ",dist";
  for (int i = 1; i <= m; ++i) out << ",u_" << i;
  out << ",cost\n";
  for (int k = 0; k < run.times.size(); ++k) {
    out << fmt(run.times(k));
    for (int i = 0; i < n; ++i) out << "," << fmt(run.z(i, k));
    out << "," << fmt(run.x1(k));
    for (int i = 0; i < d; ++i) out << "," << fmt(run.x2(i, k));
    out << "," << fmt(run.distance(k));
    for (int i = 0; i < m; ++i) out << "," << fmt(run.u(i, k));
    out << "," << fmt(run.running_cost(k)) << "\n";
  }
  atomic_write_text(path, out.str());
}

void write_value_table_csv(const std::string& path, const std::vector<ValueSample>& table) {
  std::ostringstream out;
  out << "x1,x2,V,loop_residual,converged\n";
  for (const auto& s : table) {
    out << fmt(s.x1) << "," << fmt(s.x2.size() ? s.x2(0) : 0.0) << "," << fmt(s.value) << ","
        << fmt(s.loop_residual) << "," << (s.converged ? 1 : 0) << "\n";
  }
  atomic_write_text(path, out.str());
}

nlohmann::json validation_to_json(const ValidationReport& report) {
  nlohmann::json j;
  j["pass"] = report.pass;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks)
    j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"residual", c.residual},
                           {"detail", c.detail}});
  return j;
}

nlohmann::json monodromy_to_json(const MonodromyReport& report) {
  nlohmann::json j;
  nlohmann::json mult = nlohmann::json::array();
  for (Eigen::Index i = 0; i < report.multipliers.size(); ++i)
    mult.push_back({{"re", report.multipliers(i).real()}, {"im", report.multipliers(i).imag()}});
  j["multipliers"] = mult;
  j["n_stable"] = report.n_stable;
  j["n_unit"] = report.n_unit;
  j["n_unstable"] = report.n_unstable;
  j["epsilon"] = report.epsilon;
  j["liouville_residual"] = report.liouville_residual;
  if (report.symplectic_residual) j["symplectic_residual"] = *report.symplectic_residual;
  if (report.reciprocal_residual) j["reciprocal_residual"] = *report.reciprocal_residual;
  return j;
}

nlohmann::json nhim_to_json(const NhimReport& report) {
  return nlohmann::json{{"pass", report.pass},
                        {"tangent_multiplier_deviation", report.tangent_multiplier_deviation},
                        {"unit_multiplicity", report.unit_multiplicity},
                        {"dim_stable", report.dim_stable},
                        {"dim_unstable", report.dim_unstable},
                        {"contraction_rate", report.contraction_rate},
                        {"expansion_rate", report.expansion_rate},
                        {"max_closed_loop_modulus", report.max_closed_loop_modulus},
                        {"detail", report.detail}};
}

nlohmann::json riccati_to_json(const RiccatiSolution& sol) {
  nlohmann::json j;
  nlohmann::json mult = nlohmann::json::array();
  for (Eigen::Index i = 0; i < sol.closed_loop_multipliers.size(); ++i)
    mult.push_back({{"re", sol.closed_loop_multipliers(i).real()},
                    {"im", sol.closed_loop_multipliers(i).imag()}});
  j["closed_loop_multipliers"] = mult;
  j["max_residual"] = sol.residuals.size() ? sol.residuals.maxCoeff() : 0.0;
  j["periodicity_error"] = sol.periodicity_error;
  j["min_eigenvalue"] = sol.min_eigenvalue;
  j["max_asymmetry"] = sol.max_asymmetry;
  j["gates_verified"] = sol.gates_verified;
  j["stabilizable_margin_B2"] = sol.stabilizable_margin_B2;
  j["stabilizable_margin_Rbar"] = sol.stabilizable_margin_Rbar;
  j["detectable_margin"] = sol.detectable_margin;
  j["method"] = sol.method;
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace orbitstab
