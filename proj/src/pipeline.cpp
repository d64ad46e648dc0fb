#include "orbitstab/pipeline.hpp"

#include "orbitstab/errors.hpp"

namespace orbitstab {

Pipeline build_pipeline(const ExampleProblem& problem, const PipelineOptions& opts) {
  Pipeline pl;
  pl.problem = problem;
  pl.mode = opts.mode;

  if (opts.validate) {
    pl.validation = validate_problem(problem.system, problem.cost, problem.orbit);
    if (!pl.validation.pass) {
      std::string failed;
      for (const auto& c : pl.validation.checks)
        if (!c.pass) failed += (failed.empty() ? "" : ", ") + c.name;
      throw ValidationFailure("problem validation failed: " + failed);
    }
  }

  if (opts.mode == PipelineOptions::Mode::reproduction) {
    pl.tm = reproduction_model(problem);
  } else {
    pl.frame = build_frame(problem.orbit, problem.system, opts.frame_nodes);
    pl.tm = transverse_dynamics(problem.system, problem.cost, *pl.frame, problem.orbit);
  }

  pl.lin = transverse_linearization(pl.tm, problem.cost, opts.grid);
  original_linearization(problem.system, problem.cost, problem.orbit, opts.grid, pl.lin);
  pl.riccati = solve_periodic_riccati(pl.lin, problem.cost.R, pl.lin.period, opts.riccati);
  pl.gain = linear_feedback(pl.riccati, pl.lin, problem.cost.R);
  pl.hs = assemble_hamiltonian(pl.tm, problem.cost);
  return pl;
}

}  // namespace orbitstab
