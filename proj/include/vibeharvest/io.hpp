#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vibeharvest/sweep.hpp"
#include "vibeharvest/transient.hpp"

namespace vibeharvest {

/// Scientific notation with 9 significant digits, independent of locale.
std::string format_scientific(double v);

/// Header `<independent>_<unit>,<column>,...` then one row per sweep row.
std::string sweep_to_csv(const SweepResult& sweep);

/// Columns t_s, x_m, xdot_mps, v_node_<i>..., v_store_V, p_inst_W,
/// work_in_J, e_diss_total_J. v_store_V is the output node voltage; p_inst_W
/// is d(C V^2 / 2)/dt over `window_s` for a storage capacitor (0 otherwise,
/// and within half a window of either end).
std::string trace_to_csv(const Trace& trace, double storage_capacitance, double window_s);

/// `key = value` lines.
std::string format_meta(const std::vector<std::pair<std::string, std::string>>& entries);

/// Writes the file, creating parent directories. Throws Error on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vibeharvest
