#ifndef ORBITSTAB_SIM_HPP_
#define ORBITSTAB_SIM_HPP_

#include "orbitstab/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace orbitstab {

struct DecayFit {
  double exponent = 0.0;
  double r_squared = 0.0;
  int window_begin = 0;  // first sample index used in the fit
};

/// Least-squares slope of log d over the final half of the record after d
/// first drops below 0.5 * d(0).  Throws NonDecaying when the slope is >= 0.
DecayFit decay_rate(const Eigen::VectorXd& times, const Eigen::VectorXd& d);

struct ExperimentPlan {
  struct InitialCondition {
    Eigen::VectorXd value;  // z (original) or (x1, x2...) (transverse)
    bool transverse = false;
  };
  std::string problem = "mass-spring";
  std::vector<InitialCondition> initial_conditions;
  std::vector<std::string> feedbacks{"linear"};  // "linear" | "bvp"
  double duration = 0.0;                          // default: 16 periods
  std::string output_dir;                         // empty: no files written
  std::uint64_t seed = 0;
};

struct RunResult {
  int id = 0;
  std::string feedback;
  Eigen::VectorXd initial_condition;
  double final_distance = 0.0;
  double decay_exponent = 0.0;
  double decay_r_squared = 0.0;
  double cost = 0.0;
  double max_abs_h = 0.0;  // bvp runs only
  std::string status;      // "ok" or the error message
  bool ok = false;
};

struct PlanReport {
  std::vector<RunResult> runs;
  nlohmann::json summary;
};

/// Executes the plan against a built pipeline.  Per-run failures are recorded
/// in the report and never abort the batch; rerunning with the same seed
/// reproduces the summary bit for bit.
PlanReport run_plan(const ExperimentPlan& plan, const Pipeline& pipeline);

ExperimentPlan plan_from_json(const nlohmann::json& j);

}  // namespace orbitstab

#endif  // ORBITSTAB_SIM_HPP_
