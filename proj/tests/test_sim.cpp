#include "orbitstab/errors.hpp"
#include "orbitstab/pipeline.hpp"
#include "orbitstab/sim.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

using namespace orbitstab;

namespace {
const Pipeline& generic_pipeline() {
  static const Pipeline pl = build_pipeline(make_mass_spring(), PipelineOptions{});
  return pl;
}
}  // namespace

TEST_CASE("decay_rate recovers a synthetic exponent") {
  const int N = 200;
  Eigen::VectorXd t(N), d(N);
  for (int k = 0; k < N; ++k) {
    t(k) = 0.1 * k;
    d(k) = std::exp(-0.5 * t(k));
  }
  const DecayFit fit = decay_rate(t, d);
  REQUIRE(fit.exponent == Catch::Approx(-0.5).margin(1e-3));
  REQUIRE(fit.r_squared > 0.999);
}

TEST_CASE("decay_rate rejects flat and rising records") {
  Eigen::VectorXd t(50), d(50);
  for (int k = 0; k < 50; ++k) {
    t(k) = k;
    d(k) = 1.0;
  }
  REQUIRE_THROWS_AS(decay_rate(t, d), NonDecaying);
  for (int k = 0; k < 50; ++k) d(k) = std::exp(0.1 * k);
  REQUIRE_THROWS_AS(decay_rate(t, d), NonDecaying);
}

TEST_CASE("linear feedback plan: batch of transverse offsets converges") {
  ExperimentPlan plan;
  plan.problem = "mass-spring";
  for (double x2 : {-0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4}) {
    ExperimentPlan::InitialCondition ic;
    ic.value = Eigen::Vector2d(0.0, x2);
    ic.transverse = true;
    plan.initial_conditions.push_back(ic);
  }
  plan.duration = 12.0 * generic_pipeline().period();

  const PlanReport report = run_plan(plan, generic_pipeline());
  REQUIRE(report.runs.size() == 8);
  for (const auto& r : report.runs) {
    INFO("ic x2 = " << r.initial_condition(1) << " status " << r.status);
    REQUIRE(r.ok);
    REQUIRE(r.final_distance < 1e-3);
    REQUIRE(r.decay_exponent < 0.0);
  }
  REQUIRE(report.summary["aggregates"]["converged"] == 8);
}

TEST_CASE("empty plan yields an empty, valid report") {
  ExperimentPlan plan;
  plan.duration = 1.0;
  const PlanReport report = run_plan(plan, generic_pipeline());
  REQUIRE(report.runs.empty());
  REQUIRE(report.summary["aggregates"]["total"] == 0);
}

TEST_CASE("a failing run is isolated from the rest of the batch") {
  ExperimentPlan plan;
  ExperimentPlan::InitialCondition good;
  good.value = Eigen::Vector2d(1.1, 0.0);
  ExperimentPlan::InitialCondition out_of_tube;
  out_of_tube.value = Eigen::Vector2d(2.5, 0.0);
  plan.initial_conditions = {good, out_of_tube};
  plan.duration = 6.0 * generic_pipeline().period();

  const PlanReport report = run_plan(plan, generic_pipeline());
  REQUIRE(report.runs.size() == 2);
  REQUIRE(report.runs[0].ok);
  REQUIRE_FALSE(report.runs[1].ok);
  REQUIRE(report.runs[1].status.find("tube") != std::string::npos);
}

TEST_CASE("same seed reproduces the summary bit for bit") {
  ExperimentPlan plan;
  ExperimentPlan::InitialCondition ic;
  ic.value = Eigen::Vector2d(0.0, 0.2);
  ic.transverse = true;
  plan.initial_conditions = {ic};
  plan.feedbacks = {"linear", "bvp"};
  plan.duration = 8.0 * generic_pipeline().period();
  plan.seed = 42;

  const PlanReport a = run_plan(plan, generic_pipeline());
  const PlanReport b = run_plan(plan, generic_pipeline());
  REQUIRE(a.summary.dump() == b.summary.dump());
}

TEST_CASE("bvp runs report optimal cost below the linear loop") {
  ExperimentPlan plan;
  ExperimentPlan::InitialCondition ic;
  ic.value = Eigen::Vector2d(0.0, 0.25);
  ic.transverse = true;
  plan.initial_conditions = {ic};
  plan.feedbacks = {"linear", "bvp"};
  plan.duration = 10.0 * generic_pipeline().period();

  const PlanReport report = run_plan(plan, generic_pipeline());
  REQUIRE(report.runs.size() == 2);
  const RunResult* lin = nullptr;
  const RunResult* bvp = nullptr;
  for (const auto& r : report.runs) (r.feedback == "linear" ? lin : bvp) = &r;
  REQUIRE(lin->ok);
  REQUIRE(bvp->ok);
  REQUIRE(bvp->max_abs_h < 1e-6);
  REQUIRE(bvp->cost <= lin->cost + 1e-6);
}

TEST_CASE("plan files are written atomically under the output directory") {
  namespace fs = std::filesystem;
  const std::string dir = "plan_out_test";
  fs::remove_all(dir);
  ExperimentPlan plan;
  ExperimentPlan::InitialCondition ic;
  ic.value = Eigen::Vector2d(1.15, 0.0);
  plan.initial_conditions = {ic};
  plan.duration = 4.0 * generic_pipeline().period();
  plan.output_dir = dir;
  run_plan(plan, generic_pipeline());
  REQUIRE(fs::exists(dir + "/summary.json"));
  REQUIRE(fs::exists(dir + "/run_0.csv"));
  REQUIRE_FALSE(fs::exists(dir + "/summary.json.tmp"));
  fs::remove_all(dir);
}

TEST_CASE("plan parses from JSON") {
  const auto j = nlohmann::json::parse(R"({
    "problem": "mass-spring",
    "duration": 25.0,
    "feedbacks": ["linear"],
    "initial_conditions": [
      {"value": [1.2, 0.0]},
      {"value": [0.0, 0.3], "transverse": true}
    ],
    "seed": 7
  })");
  const ExperimentPlan plan = plan_from_json(j);
  REQUIRE(plan.problem == "mass-spring");
  REQUIRE(plan.initial_conditions.size() == 2);
  REQUIRE(plan.initial_conditions[1].transverse);
  REQUIRE(plan.seed == 7);
}
