#include "orbitstab/sim.hpp"

#include "orbitstab/errors.hpp"
#include "orbitstab/io.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

namespace orbitstab {

DecayFit decay_rate(const Eigen::VectorXd& times, const Eigen::VectorXd& d) {
  const int N = static_cast<int>(d.size());
  if (N < 4) throw std::invalid_argument("decay_rate: record too short");
  if (d.minCoeff() <= 0.0) throw std::invalid_argument("decay_rate: distances must be positive");

  int first_below = 0;
  const double threshold = 0.5 * d(0);
  while (first_below < N && d(first_below) >= threshold) ++first_below;
  if (first_below >= N - 2) first_below = 0;  // never crossed; fit the whole record

  const int begin = first_below + (N - first_below) / 2;  // final half after the crossing
  const int count = N - begin;
  if (count < 3) throw std::invalid_argument("decay_rate: fit window too short");

  double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
  for (int k = begin; k < N; ++k) {
    const double t = times(k);
    const double l = std::log(d(k));
    st += t;
    sl += l;
    stt += t * t;
    stl += t * l;
  }
  const double denom = count * stt - st * st;
  const double slope = (count * stl - st * sl) / denom;
  const double intercept = (sl - slope * st) / count;

  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_l = sl / count;
  for (int k = begin; k < N; ++k) {
    const double l = std::log(d(k));
    const double fit = intercept + slope * times(k);
    ss_res += (l - fit) * (l - fit);
    ss_tot += (l - mean_l) * (l - mean_l);
  }

  if (slope >= 0.0)
    throw NonDecaying("decay_rate: fitted slope " + std::to_string(slope) + " is not negative");
  DecayFit fit;
  fit.exponent = slope;
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.window_begin = begin;
  return fit;
}

namespace {

RunResult execute_run(const ExperimentPlan& plan, const Pipeline& pl, int id,
                      const ExperimentPlan::InitialCondition& ic, const std::string& feedback_kind,
                      double duration) {
  RunResult r;
  r.id = id;
  r.feedback = feedback_kind;
  r.initial_condition = ic.value;
  try {
    const double T = pl.period();
    FlowOptions fopts;
    fopts.samples_per_period = 64;
    fopts.stop_when_distance_below = 1e-9;

    if (feedback_kind == "bvp") {
      // optimal stable-manifold trajectory from the transverse offset
      double x1_0;
      Eigen::VectorXd x2_0;
      if (ic.transverse) {
        x1_0 = ic.value(0);
        x2_0 = ic.value.tail(ic.value.size() - 1);
      } else {
        if (!pl.frame) throw ValidationFailure("original-coordinate IC needs a chart");
        const TransverseCoords tc = to_transverse(ic.value, *pl.frame, pl.problem.orbit);
        x1_0 = tc.x1;
        x2_0 = tc.x2;
      }
      StableTrajectoryOptions sopts;
      if (duration > 0.0) sopts.max_horizon_periods = std::max(2.0, duration / T);
      const ManifoldTrajectory mt = stable_trajectory(pl.hs, x1_0, x2_0, pl.riccati, sopts);
      r.cost = mt.total_cost;
      r.max_abs_h = mt.max_abs_h;
      r.final_distance = mt.terminal_x2_norm;
      Eigen::VectorXd dist(mt.trajectory.times.size());
      for (int k = 0; k < dist.size(); ++k)
        dist(k) = mt.trajectory.x.col(k).tail(x2_0.size()).norm();
      if (x2_0.norm() > 0.0) {
        const DecayFit fit = decay_rate(mt.trajectory.times, dist.cwiseMax(1e-300));
        r.decay_exponent = fit.exponent;
        r.decay_r_squared = fit.r_squared;
      }
      if (!plan.output_dir.empty())
        write_trajectory_csv(plan.output_dir + "/run_" + std::to_string(id) + ".csv", mt.trajectory);
    } else if (feedback_kind == "linear") {
      const Feedback fb = make_linear_feedback(pl.gain);
      ClosedLoopResult run;
      if (ic.transverse) {
        run = closed_loop_simulate_transverse(pl.tm, pl.problem.cost, fb, ic.value(0),
                                              ic.value.tail(ic.value.size() - 1), duration, fopts);
      } else {
        if (!pl.frame) throw ValidationFailure("original-coordinate IC needs a chart");
        run = closed_loop_simulate(pl.problem.system, pl.problem.cost, pl.problem.orbit, *pl.frame,
                                   fb, ic.value, duration, fopts);
      }
      r.cost = run.total_cost;
      r.final_distance = run.final_distance;
      if (run.distance(0) > 0.0) {
        const DecayFit fit = decay_rate(run.times, run.distance.cwiseMax(1e-300));
        r.decay_exponent = fit.exponent;
        r.decay_r_squared = fit.r_squared;
      }
      if (!plan.output_dir.empty())
        write_closed_loop_csv(plan.output_dir + "/run_" + std::to_string(id) + ".csv", run);
    } else {
      throw ValidationFailure("unknown feedback kind '" + feedback_kind + "'");
    }
    r.ok = true;
    r.status = "ok";
  } catch (const std::exception& e) {
    r.ok = false;
    r.status = e.what();
  }
  return r;
}

}  // namespace

PlanReport run_plan(const ExperimentPlan& plan, const Pipeline& pl) {
  if (plan.duration < 0.0) throw ValidationFailure("plan duration must be positive");
  const double duration = plan.duration > 0.0 ? plan.duration : 16.0 * pl.period();

  struct Job {
    int id;
    const ExperimentPlan::InitialCondition* ic;
    const std::string* feedback;
  };
  std::vector<Job> jobs;
  int id = 0;
  for (const auto& fb : plan.feedbacks)
    for (const auto& ic : plan.initial_conditions) jobs.push_back({id++, &ic, &fb});

  PlanReport report;
  report.runs.resize(jobs.size());

  // Runs are independent; execute in parallel, assemble by index.
  const int threads =
      std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()),
                                static_cast<int>(jobs.size())));
  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      report.runs[i] = execute_run(plan, pl, jobs[i].id, *jobs[i].ic, *jobs[i].feedback, duration);
  };
  if (threads <= 1 || jobs.size() <= 1) {
    work(0, jobs.size());
  } else {
    std::vector<std::future<void>> futures;
    const size_t chunk = (jobs.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const size_t lo = static_cast<size_t>(t) * chunk;
      const size_t hi = std::min(jobs.size(), lo + chunk);
      if (lo >= hi) break;
      futures.push_back(std::async(std::launch::async, work, lo, hi));
    }
    for (auto& f : futures) f.get();
  }

  nlohmann::json runs = nlohmann::json::array();
  int ok_count = 0;
  for (const auto& r : report.runs) {
    std::vector<double> icv(r.initial_condition.data(),
                            r.initial_condition.data() + r.initial_condition.size());
    runs.push_back({{"id", r.id},
                    {"ic", icv},
                    {"feedback", r.feedback},
                    {"final_dist", r.final_distance},
                    {"decay_exp", r.decay_exponent},
                    {"cost", r.cost},
                    {"status", r.status}});
    if (r.ok) ++ok_count;
  }
  report.summary["runs"] = runs;
  report.summary["aggregates"] = {{"total", static_cast<int>(report.runs.size())},
                                  {"converged", ok_count},
                                  {"seed", plan.seed},
                                  {"problem", plan.problem}};
  if (!plan.output_dir.empty()) write_json(plan.output_dir + "/summary.json", report.summary);
  return report;
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan plan;
  plan.problem = j.value("problem", std::string("mass-spring"));
  plan.duration = j.value("duration", 0.0);
  plan.output_dir = j.value("output_dir", std::string());
  plan.seed = j.value("seed", 0ull);
  if (j.contains("feedbacks")) plan.feedbacks = j["feedbacks"].get<std::vector<std::string>>();
  if (j.contains("initial_conditions")) {
    for (const auto& je : j["initial_conditions"]) {
      ExperimentPlan::InitialCondition ic;
      const auto vals = je.at("value").get<std::vector<double>>();
      ic.value = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
      ic.transverse = je.value("transverse", false);
      plan.initial_conditions.push_back(ic);
    }
  }
  return plan;
}

}  // namespace orbitstab
