#pragma once

#include <string>

#include "rulopf/cell.hpp"
#include "rulopf/mc.hpp"

namespace rulopf {

/// Configuration of a health-indicator sweep: how many aging states to draw,
/// how many scenarios to simulate when rebuilding surfaces per state, and the
/// life target the resulting boxes must guarantee.
struct HiSweepConfig {
    SamplingSpec states;
    std::size_t n_rebuild = 1000;
    double t_hours = 120.0;
};

/// Named experiment presets, selectable from the CLI ("fig2", "fig3", "fig5").
///
/// fig2: 500-scenario scatter campaign at fixed currents (4.3 A charge,
///       11.7 A discharge) and fixed initial wear (500 EFC), randomizing the
///       SOC window; feeds the voltage-bound/RUL correlation table.
/// fig3: 10000-scenario campaign with soc_min pinned at 0, charge current
///       1C-2C, discharge current 1C-5C; feeds the RUL surface family used
///       for box construction.
/// fig5: 100 aging states with initial wear uniform over [0,1000] EFC; each
///       state rebuilds surfaces and sizes a box for a 120 h life target.
SamplingSpec preset_fig2(const CellParams& params);
SamplingSpec preset_fig3(const CellParams& params);
HiSweepConfig preset_fig5(const CellParams& params);

/// Lookup by preset name; throws ParamError for unknown names.
SamplingSpec preset_by_name(const std::string& name, const CellParams& params);

} // namespace rulopf
