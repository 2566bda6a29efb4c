#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rulopf/cell.hpp"
#include "rulopf/mc.hpp"
#include "rulopf/presets.hpp"
#include "rulopf/stats.hpp"

namespace rulopf {

/// Minimum remaining-useful-life requirement, in hours.
struct RulTarget {
    double t_hours = 0;
    void validate() const;
};

/// Family of life surfaces over (i_charge, i_discharge), one per voltage
/// level. Levels are a fixed grid over the SOC-ceiling domain of the
/// sampling spec (not over sample extremes), so families built for different
/// aging states share identical levels. v_levels[k] is the highest terminal
/// voltage reachable when cycling up to soc_levels[k] at the domain's
/// maximum charge current with end-of-life resistance.
struct SurfaceFamily {
    std::vector<double> soc_levels;   // ascending
    std::vector<double> v_levels;     // ascending, same length
    std::vector<FittedSurface> surfaces;
    double soc_min_ref = 0;           // lower SOC bound used by the campaign
    double i_charge_lo = 0, i_charge_hi = 0;
    double i_discharge_lo = 0, i_discharge_hi = 0;
};

/// Axis-aligned feasible box: currents in [i_*_min, i_*_max], terminal
/// voltage up to v_max_bound. Anchored at the domain's minimum currents;
/// only the upper bounds shrink. An infeasible target yields a zero-size
/// box (feasible = false).
struct BoxRegion {
    double i_charge_min = 0, i_charge_max = 0;
    double i_discharge_min = 0, i_discharge_max = 0;
    double v_max_bound = 0;
    double v_min_domain = 0;  // lowest selectable voltage level
    double soc_level = 0;     // SOC ceiling realizing v_max_bound
    double soc_min = 0;       // lower SOC bound of the operating window
    int level_index = -1;
    double scale = 0;         // binary-search result in [0,1]
    double hi = 0;
    double t_hours = 0;
    bool feasible = false;

    double v_width() const { return v_max_bound - v_min_domain; }
    double i_length() const { return i_discharge_max - i_discharge_min; }
    double i_charge_length() const { return i_charge_max - i_charge_min; }
};

/// One entry of the health-indicator sweep.
struct SweepEntry {
    std::size_t state_id = 0;
    double initial_efc = 0;
    double hi = 0;
    bool feasible = false;
    double scale = 0;
    double v_max_bound = 0;
    double v_width = 0;
    double i_length = 0;
    double i_charge_length = 0;
};

/// Per-pack limits handed to the grid OPF.
struct BatteryConstraints {
    double p_charge_max_kw = 0;
    double p_discharge_max_kw = 0;
    double v_bus_max_pu = 0;
};

/// Bins campaign records by nearest SOC-ceiling level and fits a log-life
/// surface per bin. Throws DegenerateInput if a bin is too thin to fit.
SurfaceFamily build_surface_family(const std::vector<ScenarioRecord>& records,
                                   const SamplingSpec& spec,
                                   const CellParams& params, int n_levels = 9,
                                   int degree = 2);

/// True iff the surface predicts life >= target at the given currents.
bool feasible_point(const FittedSurface& surface, double i_charge,
                    double i_discharge, const RulTarget& target);

/// True iff every point of an n x n grid over the box currents is feasible.
bool box_grid_feasible(const FittedSurface& surface, const BoxRegion& box,
                       const RulTarget& target, int n = 32);

/// Two-stage box construction: pick the highest voltage level whose
/// minimum-current anchor meets the target, then binary-search a single
/// scale in [0,1] for both current spans (32x32 validation grid, relative
/// tolerance 1e-3, at most 40 iterations). Throws Infeasible if no level
/// admits even the anchor.
BoxRegion build_box(const SurfaceFamily& family, const RulTarget& target,
                    double hi);

/// Shrinks the box scale until steady symmetric cycling at the discharge
/// bound, simulated from the given aging state, sustains the target. Never
/// grows the box; voltage level is preserved.
BoxRegion trim_box_to_simulation(const BoxRegion& box, const CellParams& params,
                                 double initial_efc, const RulTarget& target);

/// Rebuilds a campaign pinned at one aging state (n_rebuild samples drawn
/// with the sampling spec's master seed, EFC range collapsed to the given
/// state) and
/// sizes a box for it. Throws Infeasible when no voltage level admits the
/// target even at minimum currents.
BoxRegion box_for_state(const CellParams& params, SamplingSpec rebuild,
                        double initial_efc, const RulTarget& target,
                        std::size_t n_rebuild, unsigned n_threads = 1);

/// Simulated life under symmetric cycling at one current (charge =
/// discharge), from the given aging state, within the box SOC window.
double simulated_symmetric_rul(const CellParams& params, double initial_efc,
                               double soc_min, double soc_max, double current_a);

/// Draws aging states, rebuilds surfaces per state, sizes a box per state.
/// Infeasible states are recorded with a zero-size box, not an error.
std::vector<SweepEntry> hi_sweep(const CellParams& params,
                                 const HiSweepConfig& cfg,
                                 unsigned n_threads = 1);

/// Converts per-cell current/voltage bounds into pack power and per-unit
/// voltage limits. An infeasible box forces the pack idle (zero power).
BatteryConstraints box_to_grid_constraints(const BoxRegion& box,
                                           const CellParams& params,
                                           std::size_t n_cells);

std::string box_to_json(const BoxRegion& box);
BoxRegion box_from_json(const std::string& text);
std::string family_to_json(const SurfaceFamily& family);
SurfaceFamily family_from_json(const std::string& text);
std::string sweep_to_csv(const std::vector<SweepEntry>& entries);
/// Plot grid of predicted life over currents at one voltage level, with an
/// in-box flag per point.
std::string contour_csv(const SurfaceFamily& family, int level_index,
                        const BoxRegion& box, int n = 33);

} // namespace rulopf
