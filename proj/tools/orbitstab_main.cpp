#include "orbitstab/acceptance.hpp"
#include "orbitstab/errors.hpp"
#include "orbitstab/io.hpp"
#include "orbitstab/pipeline.hpp"
#include "orbitstab/riccati_oracle.hpp"
#include "orbitstab/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

using namespace orbitstab;

constexpr int kExitOk = 0;
constexpr int kExitCriterionFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;

struct CommonArgs {
  std::string example;
  std::string config;
  std::string out = "out";
  int grid = 256;
  double tol = 0.0;  // 0 keeps the documented defaults
  bool json = false;
  bool gnuplot = false;
  std::string mode = "auto";  // auto | generic | reproduction
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_mode = true) {
  cmd->add_option("--example", args.example, "built-in problem name (mass-spring, circular3)");
  cmd->add_option("--config", args.config, "JSON problem config path");
  cmd->add_option("--out", args.out, "output directory")->capture_default_str();
  cmd->add_option("--grid", args.grid, "discretization nodes per period")->capture_default_str();
  cmd->add_option("--tol", args.tol, "override the Riccati residual tolerance");
  cmd->add_flag("--json", args.json, "print a machine-readable summary to stdout");
  cmd->add_flag("--gnuplot-script", args.gnuplot, "also write a plot.gp next to the CSVs");
  if (with_mode)
    cmd->add_option("--mode", args.mode,
                    "transverse model: auto | generic | reproduction")
        ->capture_default_str();
}

ExampleProblem load_problem(const CommonArgs& args) {
  if (!args.example.empty() && !args.config.empty())
    throw ValidationFailure("give either --example or --config, not both");
  if (!args.config.empty()) {
    if (!std::filesystem::exists(args.config))
      throw Error("FileNotFound: config '" + args.config + "' does not exist");
    const auto dir = std::filesystem::path(args.config).parent_path().string();
    return load_problem_config(read_text_file(args.config), dir.empty() ? "." : dir);
  }
  return make_example(args.example.empty() ? "mass-spring" : args.example);
}

PipelineOptions pipeline_options(const CommonArgs& args, const ExampleProblem& problem) {
  PipelineOptions po;
  po.grid = args.grid;
  po.frame_nodes = args.grid;
  if (args.tol > 0.0) po.riccati.residual_tol = args.tol;
  if (args.mode == "reproduction" || (args.mode == "auto" && problem.closed_form))
    po.mode = PipelineOptions::Mode::reproduction;
  else if (args.mode == "generic" || args.mode == "auto")
    po.mode = PipelineOptions::Mode::generic;
  else
    throw ValidationFailure("unknown --mode '" + args.mode + "'");
  return po;
}

void maybe_gnuplot(const CommonArgs& args, const std::vector<std::string>& csvs) {
  if (!args.gnuplot) return;
  std::ostringstream gp;
  gp << "set datafile separator ','\nset key autotitle columnhead\n";
  for (const auto& f : csvs)
    gp << "plot '" << f << "' using 1:2 with lines\npause -1\n";
  atomic_write_text(args.out + "/plot.gp", gp.str());
}

int cmd_analyze(const CommonArgs& args) {
  const ExampleProblem problem = load_problem(args);
  const ValidationReport validation = validate_problem(problem.system, problem.cost, problem.orbit);
  write_json(args.out + "/validation.json", validation_to_json(validation));

  // Build the rest even when validation failed?  No: report and stop.
  if (!validation.pass) {
    if (args.json) std::cout << validation_to_json(validation).dump(2) << "\n";
    throw ValidationFailure("problem validation failed; see validation.json");
  }

  PipelineOptions po = pipeline_options(args, problem);
  Pipeline pl;
  pl.problem = problem;
  pl.mode = po.mode;
  pl.validation = validation;
  std::vector<std::string> csvs;
  // the frame depends only on the orbit; always part of the analysis output
  pl.frame = build_frame(problem.orbit, problem.system, po.frame_nodes);
  write_frame_csv(args.out + "/frame.csv", *pl.frame);
  csvs.push_back(args.out + "/frame.csv");
  if (po.mode == PipelineOptions::Mode::reproduction) {
    pl.tm = reproduction_model(problem);
  } else {
    pl.tm = transverse_dynamics(problem.system, problem.cost, *pl.frame, problem.orbit);
  }
  pl.lin = transverse_linearization(pl.tm, problem.cost, po.grid);
  original_linearization(problem.system, problem.cost, problem.orbit, po.grid, pl.lin);
  write_linearization_csv(args.out + "/linearization.csv", pl.lin);
  csvs.push_back(args.out + "/linearization.csv");

  FloquetOptions fo;
  fo.hamiltonian_structure = true;
  const MonodromyReport transverse =
      monodromy(pl.lin.hamiltonian_fn(), 2 * pl.lin.d, pl.lin.period, fo);
  write_json(args.out + "/monodromy.json", monodromy_to_json(transverse));

  const auto st = check_stabilizable(pl.lin.A.as_function(), pl.lin.B2.as_function(), pl.lin.d,
                                     pl.lin.period);
  const auto st0 = check_stabilizable(pl.lin.A0.as_function(), pl.lin.B0.as_function(), pl.lin.n,
                                      pl.lin.period);
  nlohmann::json gramians{{"transverse_stabilizable", st.verified},
                          {"transverse_margin", st.margin},
                          {"original_stabilizable", st0.verified},
                          {"original_margin", st0.margin}};
  write_json(args.out + "/gramians.json", gramians);
  maybe_gnuplot(args, csvs);

  nlohmann::json summary{{"validation", validation_to_json(validation)},
                         {"monodromy", monodromy_to_json(transverse)},
                         {"gramians", gramians}};
  if (args.json) std::cout << summary.dump(2) << "\n";

  const bool ok = validation.pass && st.verified && transverse.liouville_residual < 1e-5;
  return ok ? kExitOk : kExitCriterionFailure;
}

int cmd_riccati(const CommonArgs& args) {
  const ExampleProblem problem = load_problem(args);
  const Pipeline pl = build_pipeline(problem, pipeline_options(args, problem));
  write_riccati_csv(args.out + "/riccati.csv", pl.riccati);
  write_json(args.out + "/riccati.json", riccati_to_json(pl.riccati));
  maybe_gnuplot(args, {args.out + "/riccati.csv"});
  if (args.json) std::cout << riccati_to_json(pl.riccati).dump(2) << "\n";
  return kExitOk;
}

int cmd_manifold(const CommonArgs& args, const std::vector<double>& x2_list, int value_grid) {
  const ExampleProblem problem = load_problem(args);
  const Pipeline pl = build_pipeline(problem, pipeline_options(args, problem));

  nlohmann::json summary = nlohmann::json::array();
  std::vector<std::string> csvs;
  int index = 0;
  for (double x2 : x2_list) {
    const ManifoldTrajectory mt = stable_trajectory(
        pl.hs, 0.0, Eigen::VectorXd::Constant(pl.hs.state_dim() - 1, x2), pl.riccati);
    const std::string path = args.out + "/trajectory_" + std::to_string(index++) + ".csv";
    write_trajectory_csv(path, mt.trajectory);
    csvs.push_back(path);
    summary.push_back({{"x2", x2},
                       {"cost", mt.total_cost},
                       {"max_abs_h", mt.max_abs_h},
                       {"terminal_x2", mt.terminal_x2_norm},
                       {"fiber_residual", mt.terminal_fiber_residual},
                       {"horizon", mt.horizon},
                       {"file", path}});
  }

  if (value_grid > 0) {
    std::vector<double> x1g, x2g;
    for (int i = 0; i < value_grid; ++i) x1g.push_back(pl.period() * i / value_grid);
    for (int j = 0; j < value_grid; ++j)
      x2g.push_back(-0.3 + 0.6 * j / std::max(1, value_grid - 1));
    const auto table = value_and_lagrangian_diagnostic(pl.hs, pl.riccati, x1g, x2g, {});
    write_value_table_csv(args.out + "/value_table.csv", table);
    csvs.push_back(args.out + "/value_table.csv");
  }
  maybe_gnuplot(args, csvs);

  write_json(args.out + "/manifold.json", summary);
  if (args.json) std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args, const std::string& feedback,
                 std::vector<double> z0_values, double duration) {
  const ExampleProblem problem = load_problem(args);
  PipelineOptions po = pipeline_options(args, problem);
  // the z-space loop needs the chart
  po.mode = PipelineOptions::Mode::generic;
  const Pipeline pl = build_pipeline(problem, po);

  if (z0_values.empty()) {
    z0_values.assign(problem.system.n, 0.0);
    z0_values[0] = 1.2;
  }
  if (static_cast<int>(z0_values.size()) != problem.system.n)
    throw ValidationFailure("--z0 must have the state dimension");
  const Eigen::VectorXd z0 =
      Eigen::Map<const Eigen::VectorXd>(z0_values.data(), problem.system.n);
  if (duration <= 0.0) duration = 16.0 * pl.period();

  ExperimentPlan plan;
  plan.problem = problem.name;
  plan.feedbacks = {feedback};
  ExperimentPlan::InitialCondition ic;
  ic.value = z0;
  plan.initial_conditions = {ic};
  plan.duration = duration;
  plan.output_dir = args.out;
  const PlanReport report = run_plan(plan, pl);

  maybe_gnuplot(args, {args.out + "/run_0.csv"});
  if (args.json) std::cout << report.summary.dump(2) << "\n";
  if (report.runs.size() != 1 || !report.runs[0].ok)
    throw Error(report.runs.empty() ? "no run executed" : report.runs[0].status);
  return kExitOk;
}

int cmd_reproduce(const CommonArgs& args, double tol_scale) {
  AcceptanceOptions opts;
  opts.tol_scale = tol_scale;
  opts.grid = args.grid;
  const auto results = run_acceptance(opts);
  if (!args.out.empty()) write_json(args.out + "/acceptance.json", acceptance_to_json(results));
  return report_acceptance(std::cout, results, args.json);
}

int classify_error(const std::exception& e) {
  if (dynamic_cast<const ValidationFailure*>(&e)) return kExitValidation;
  if (dynamic_cast<const NonPSDHessian*>(&e)) return kExitValidation;
  if (dynamic_cast<const Error*>(&e)) {
    const std::string what = e.what();
    return what.rfind("FileNotFound", 0) == 0 ? kExitUsage : kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"periodic-orbit optimal stabilization toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<double> x2_list{0.3, -0.3};
  int value_grid = 0;
  std::string feedback = "linear";
  std::vector<double> z0_values;
  double duration = 0.0;
  double tol_scale = 1.0;

  CLI::App* analyze = app.add_subcommand(
      "analyze", "validate the problem and write frame/linearization/monodromy reports");
  add_common(analyze, args);

  CLI::App* riccati = app.add_subcommand(
      "riccati", "solve the periodic Riccati equation and write P(t) and the closed-loop data");
  add_common(riccati, args);

  CLI::App* manifold = app.add_subcommand(
      "manifold", "solve stable-manifold boundary value problems and optional value tables");
  add_common(manifold, args);
  manifold->add_option("--x2", x2_list, "initial transverse offsets")->delimiter(',');
  manifold->add_option("--value-grid", value_grid,
                       "N for an N x N value table with closedness diagnostics");

  CLI::App* simulate = app.add_subcommand("simulate", "closed-loop simulation from --z0");
  add_common(simulate, args);
  simulate->add_option("--feedback", feedback, "linear | bvp")->capture_default_str();
  simulate->add_option("--z0", z0_values, "initial state in original coordinates")->delimiter(',');
  simulate->add_option("--duration", duration, "simulation length in time units (0 = 16 periods)");

  CLI::App* reproduce = app.add_subcommand(
      "reproduce", "run the full acceptance suite for the mass-spring example");
  add_common(reproduce, args, false);
  reproduce->add_option("--tol-scale", tol_scale, "scale factor on every tolerance")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*analyze) return cmd_analyze(args);
    if (*riccati) return cmd_riccati(args);
    if (*manifold) return cmd_manifold(args, x2_list, value_grid);
    if (*simulate) return cmd_simulate(args, feedback, z0_values, duration);
    if (*reproduce) return cmd_reproduce(args, tol_scale);
  } catch (const std::exception& e) {
    const int code = classify_error(e);
    nlohmann::json err{{"error", code == kExitValidation ? "ValidationFailure"
                                 : code == kExitUsage    ? "UsageError"
                                                         : "NumericalFailure"},
                       {"message", e.what()},
                       {"exit_code", code}};
    std::cerr << err.dump() << "\n";
    return code;
  }
  return kExitUsage;
}
