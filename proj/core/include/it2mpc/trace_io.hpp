#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/mpc_sim.hpp"

namespace it2mpc {

// Condition families that get a margin_<family> column, in column order.
const std::vector<std::string>& trace_margin_families();

// Column names for a system; subsystem and component indices are 1-based
// (x2_1 is the first state of the second subsystem).
std::vector<std::string> trace_columns(const LargeScaleSystem& sys);

// One row per step. Numbers use 17 significant digits so they read back
// bit-exactly; missing margins are written as "nan".
void write_trace(const SimulationTrace& trace, const LargeScaleSystem& sys, const std::filesystem::path& csv);
std::string format_trace(const SimulationTrace& trace, const LargeScaleSystem& sys);

// Final norms, violation counts and achieved xi as JSON.
std::string trace_summary(const SimulationTrace& trace, const LargeScaleSystem& sys);
void write_trace_summary(const SimulationTrace& trace, const LargeScaleSystem& sys,
                         const std::filesystem::path& json_path);

struct TraceTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    // Index of a column; throws Error when absent.
    std::size_t column(const std::string& name) const;
};

TraceTable parse_trace(const std::string& csv_text);
TraceTable read_trace(const std::filesystem::path& csv);

std::string format_double(double v);

}  // namespace it2mpc
