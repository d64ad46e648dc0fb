#ifndef ORBITSTAB_ACCEPTANCE_HPP_
#define ORBITSTAB_ACCEPTANCE_HPP_

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace orbitstab {

/// End-to-end acceptance criteria for the mass-spring energy-control problem
/// (plus the synthetic 3-state invariant sweep).  Every tolerance is pinned in
/// code; tol_scale multiplies allowed errors (and divides required margins),
/// so a tiny scale produces controlled failures rather than crashes.
struct AcceptanceOptions {
  double tol_scale = 1.0;
  int grid = 256;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts = {});

nlohmann::json acceptance_to_json(const std::vector<CriterionResult>& results);

/// Prints one pass/fail line per criterion (or the JSON table) and returns the
/// process exit code: 0 when everything passed, 1 otherwise.
int report_acceptance(std::ostream& out, const std::vector<CriterionResult>& results, bool json);

}  // namespace orbitstab

#endif  // ORBITSTAB_ACCEPTANCE_HPP_
