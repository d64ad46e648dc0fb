#ifndef ORBITSTAB_IO_HPP_
#define ORBITSTAB_IO_HPP_

#include "orbitstab/floquet.hpp"
#include "orbitstab/frame.hpp"
#include "orbitstab/hamilton.hpp"
#include "orbitstab/linearize.hpp"
#include "orbitstab/model.hpp"
#include "orbitstab/riccati.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace orbitstab {

/// Writes via a temp file plus rename so partial runs never leave corrupt
/// output behind.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

/// CSV dumps; headers follow the documented formats.
void write_frame_csv(const std::string& path, const MovingFrame& frame);
void write_linearization_csv(const std::string& path, const PeriodicLinearization& lin);
void write_riccati_csv(const std::string& path, const RiccatiSolution& sol);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
void write_closed_loop_csv(const std::string& path, const ClosedLoopResult& run);
void write_value_table_csv(const std::string& path, const std::vector<ValueSample>& table);

nlohmann::json validation_to_json(const ValidationReport& report);
nlohmann::json monodromy_to_json(const MonodromyReport& report);
nlohmann::json nhim_to_json(const NhimReport& report);
nlohmann::json riccati_to_json(const RiccatiSolution& sol);

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace orbitstab

#endif  // ORBITSTAB_IO_HPP_
