#ifndef ORBITSTAB_PIPELINE_HPP_
#define ORBITSTAB_PIPELINE_HPP_

#include "orbitstab/floquet.hpp"
#include "orbitstab/frame.hpp"
#include "orbitstab/hamilton.hpp"
#include "orbitstab/linearize.hpp"
#include "orbitstab/model.hpp"
#include "orbitstab/riccati.hpp"

#include <optional>
#include <string>

namespace orbitstab {

struct PipelineOptions {
  enum class Mode { generic, reproduction };
  Mode mode = Mode::generic;
  int frame_nodes = 256;
  int grid = 256;
  bool validate = true;
  RiccatiOptions riccati{};
};

/// Everything the downstream operations need, built in dependency order:
/// validation, frame, transverse model, linearization, Riccati solution,
/// feedback gain, Hamiltonian system.
struct Pipeline {
  ExampleProblem problem;
  PipelineOptions::Mode mode = PipelineOptions::Mode::generic;
  ValidationReport validation;
  std::optional<MovingFrame> frame;  // absent in reproduction mode
  TransverseModel tm;
  PeriodicLinearization lin;
  RiccatiSolution riccati;
  PeriodicMatrix gain;
  HamiltonianSystem hs;

  double period() const { return problem.orbit.period(); }
};

Pipeline build_pipeline(const ExampleProblem& problem, const PipelineOptions& opts = {});

}  // namespace orbitstab

#endif  // ORBITSTAB_PIPELINE_HPP_
