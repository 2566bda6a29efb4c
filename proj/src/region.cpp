#include "rulopf/region.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "rulopf/errors.hpp"

namespace rulopf {

void RulTarget::validate() const {
    if (!(t_hours > 0)) throw ParamError("RulTarget: t_hours must be positive");
}

SurfaceFamily build_surface_family(const std::vector<ScenarioRecord>& records,
                                   const SamplingSpec& spec,
                                   const CellParams& params, int n_levels,
                                   int degree) {
    spec.validate();
    params.validate();
    if (records.empty())
        throw DegenerateInput("build_surface_family: no records");
    if (n_levels < 1)
        throw ParamError("build_surface_family: n_levels must be >= 1");
    if (spec.soc_max_range.degenerate()) n_levels = 1;

    SurfaceFamily family;
    family.soc_min_ref =
        0.5 * (spec.soc_min_range.lo + spec.soc_min_range.hi);
    family.i_charge_lo = spec.i_charge_range_a.lo;
    family.i_charge_hi = spec.i_charge_range_a.hi;
    family.i_discharge_lo = spec.i_discharge_range_a.lo;
    family.i_discharge_hi = spec.i_discharge_range_a.hi;

    const double soc_lo = spec.soc_max_range.lo;
    const double soc_hi = spec.soc_max_range.hi;
    const double step =
        n_levels > 1 ? (soc_hi - soc_lo) / (n_levels - 1) : 0.0;
    for (int k = 0; k < n_levels; ++k) {
        const double soc_k = n_levels > 1 ? soc_lo + k * step : soc_lo;
        family.soc_levels.push_back(soc_k);
        family.v_levels.push_back(ocv(params, soc_k) +
                                  spec.i_charge_range_a.hi * params.r_eol_ohm);
    }

    // Nearest-level binning over the SOC ceiling.
    std::vector<std::vector<ScenarioRecord>> bins(
        static_cast<std::size_t>(n_levels));
    for (const auto& r : records) {
        int k = 0;
        if (n_levels > 1) {
            k = static_cast<int>(
                std::lround((r.limits.soc_max - soc_lo) / step));
            k = std::clamp(k, 0, n_levels - 1);
        }
        bins[static_cast<std::size_t>(k)].push_back(r);
    }

    for (int k = 0; k < n_levels; ++k) {
        auto& bin = bins[static_cast<std::size_t>(k)];
        FittedSurface s;
        try {
            s = fit_surface(bin, SurfaceInput::i_charge,
                            SurfaceInput::i_discharge, SurfaceResponse::ln_rul,
                            degree);
        } catch (const Error& e) {
            throw DegenerateInput("build_surface_family: level " +
                                  std::to_string(k) + ": " + e.what());
        }
        // Evaluate over the declared sampling domain, not the empirical
        // extremes, so validation grids can touch the exact corners.
        s.x_lo = family.i_charge_lo;
        s.x_hi = family.i_charge_hi;
        s.y_lo = family.i_discharge_lo;
        s.y_hi = family.i_discharge_hi;
        family.surfaces.push_back(std::move(s));
    }
    return family;
}

bool feasible_point(const FittedSurface& surface, double i_charge,
                    double i_discharge, const RulTarget& target) {
    target.validate();
    return predicted_rul(surface, i_charge, i_discharge) >= target.t_hours;
}

bool box_grid_feasible(const FittedSurface& surface, const BoxRegion& box,
                       const RulTarget& target, int n) {
    if (n < 2) throw ParamError("box_grid_feasible: need n >= 2");
    for (int i = 0; i < n; ++i) {
        const double fi = static_cast<double>(i) / (n - 1);
        const double ic =
            box.i_charge_min + fi * (box.i_charge_max - box.i_charge_min);
        for (int k = 0; k < n; ++k) {
            const double fk = static_cast<double>(k) / (n - 1);
            const double id = box.i_discharge_min +
                              fk * (box.i_discharge_max - box.i_discharge_min);
            if (!feasible_point(surface, ic, id, target)) return false;
        }
    }
    return true;
}

namespace {

constexpr int kValidationGrid = 32;
constexpr int kMaxBisection = 40;
constexpr double kScaleTol = 1e-3;

BoxRegion box_at_scale(const SurfaceFamily& family, int level, double scale,
                       const RulTarget& target, double hi) {
    BoxRegion box;
    box.i_charge_min = family.i_charge_lo;
    box.i_discharge_min = family.i_discharge_lo;
    box.i_charge_max =
        family.i_charge_lo + scale * (family.i_charge_hi - family.i_charge_lo);
    box.i_discharge_max =
        family.i_discharge_lo +
        scale * (family.i_discharge_hi - family.i_discharge_lo);
    box.v_max_bound = family.v_levels[static_cast<std::size_t>(level)];
    box.v_min_domain = family.v_levels.front();
    box.soc_level = family.soc_levels[static_cast<std::size_t>(level)];
    box.soc_min = family.soc_min_ref;
    box.level_index = level;
    box.scale = scale;
    box.hi = hi;
    box.t_hours = target.t_hours;
    box.feasible = true;
    return box;
}

BoxRegion zero_box(const SurfaceFamily& family, const RulTarget& target,
                   double hi) {
    BoxRegion box;
    box.i_charge_min = box.i_charge_max = family.i_charge_lo;
    box.i_discharge_min = box.i_discharge_max = family.i_discharge_lo;
    box.v_max_bound = box.v_min_domain = family.v_levels.front();
    box.soc_level = family.soc_levels.front();
    box.soc_min = family.soc_min_ref;
    box.level_index = -1;
    box.scale = 0;
    box.hi = hi;
    box.t_hours = target.t_hours;
    box.feasible = false;
    return box;
}

} // namespace

BoxRegion build_box(const SurfaceFamily& family, const RulTarget& target,
                    double hi) {
    target.validate();
    if (family.surfaces.empty())
        throw ParamError("build_box: empty surface family");

    // Stage 1: highest voltage level whose minimum-current anchor meets the
    // target. Voltage is never sacrificed for current span.
    int level = -1;
    for (int k = static_cast<int>(family.surfaces.size()) - 1; k >= 0; --k) {
        if (feasible_point(family.surfaces[static_cast<std::size_t>(k)],
                           family.i_charge_lo, family.i_discharge_lo, target)) {
            level = k;
            break;
        }
    }
    if (level < 0)
        throw Infeasible("build_box: target " + std::to_string(target.t_hours) +
                         " h unattainable at every voltage level");

    const FittedSurface& surface =
        family.surfaces[static_cast<std::size_t>(level)];
    auto grid_ok = [&](double scale) {
        return box_grid_feasible(surface,
                                 box_at_scale(family, level, scale, target, hi),
                                 target, kValidationGrid);
    };

    // Stage 2: one scale for both current spans, kept on the feasible side.
    double scale = 1.0;
    if (!grid_ok(1.0)) {
        double lo = 0.0, hi_s = 1.0;
        for (int it = 0; it < kMaxBisection && (hi_s - lo) > kScaleTol; ++it) {
            const double mid = 0.5 * (lo + hi_s);
            if (grid_ok(mid))
                lo = mid;
            else
                hi_s = mid;
        }
        scale = lo;
    }
    return box_at_scale(family, level, scale, target, hi);
}

double simulated_symmetric_rul(const CellParams& params, double initial_efc,
                               double soc_min, double soc_max,
                               double current_a) {
    OperatingLimits lim;
    lim.soc_min = soc_min;
    lim.soc_max = soc_max;
    lim.i_charge_a = current_a;
    lim.i_discharge_a = current_a;
    const CellState s0 = state_from_efc(initial_efc, params);
    return simulate_to_eol(s0, params, lim).rul_hours;
}

BoxRegion trim_box_to_simulation(const BoxRegion& box, const CellParams& params,
                                 double initial_efc, const RulTarget& target) {
    target.validate();
    if (!box.feasible) return box;

    auto sustains = [&](double fraction) {
        const double i_dis =
            box.i_discharge_min +
            fraction * (box.i_discharge_max - box.i_discharge_min);
        const double i_ch =
            box.i_charge_min +
            fraction * (box.i_charge_max - box.i_charge_min);
        const double rul_dis = simulated_symmetric_rul(
            params, initial_efc, box.soc_min, box.soc_level, i_dis);
        if (rul_dis < target.t_hours) return false;
        const double rul_ch = simulated_symmetric_rul(
            params, initial_efc, box.soc_min, box.soc_level, i_ch);
        return rul_ch >= target.t_hours;
    };

    BoxRegion trimmed = box;
    if (sustains(1.0)) return trimmed;
    if (!sustains(0.0)) {
        trimmed.i_charge_max = trimmed.i_charge_min;
        trimmed.i_discharge_max = trimmed.i_discharge_min;
        trimmed.scale = 0;
        trimmed.feasible = false;
        trimmed.v_max_bound = trimmed.v_min_domain;
        trimmed.level_index = -1;
        return trimmed;
    }
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < kMaxBisection && (hi - lo) > kScaleTol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sustains(mid))
            lo = mid;
        else
            hi = mid;
    }
    trimmed.i_charge_max =
        box.i_charge_min + lo * (box.i_charge_max - box.i_charge_min);
    trimmed.i_discharge_max =
        box.i_discharge_min + lo * (box.i_discharge_max - box.i_discharge_min);
    trimmed.scale = box.scale * lo;
    return trimmed;
}

BoxRegion box_for_state(const CellParams& params, SamplingSpec rebuild,
                        double initial_efc, const RulTarget& target,
                        std::size_t n_rebuild, unsigned n_threads) {
    rebuild.n_samples = n_rebuild;
    rebuild.initial_efc_range = {initial_efc, initial_efc};
    const auto records = run_campaign(rebuild, params, n_threads);
    const SurfaceFamily family = build_surface_family(records, rebuild, params);
    const double hi =
        health_indicator(state_from_efc(initial_efc, params), params);
    return build_box(family, target, hi);
}

std::vector<SweepEntry> hi_sweep(const CellParams& params,
                                 const HiSweepConfig& cfg, unsigned n_threads) {
    cfg.states.validate();
    params.validate();
    const RulTarget target{cfg.t_hours};
    target.validate();
    if (cfg.n_rebuild < 60)
        throw ParamError("hi_sweep: n_rebuild too small to fit surfaces");

    std::vector<SweepEntry> entries;
    entries.reserve(cfg.states.n_samples);
    for (std::size_t k = 0; k < cfg.states.n_samples; ++k) {
        const auto [ignored_limits, efc0] = sample_scenario(cfg.states, k);
        (void)ignored_limits;
        const double hi =
            health_indicator(state_from_efc(efc0, params), params);

        SamplingSpec rebuild = cfg.states;
        rebuild.master_seed =
            substream_seed(cfg.states.master_seed, 0x100000000ULL + k);

        SweepEntry entry;
        entry.state_id = k;
        entry.initial_efc = efc0;
        entry.hi = hi;
        try {
            const BoxRegion box = box_for_state(params, rebuild, efc0, target,
                                                cfg.n_rebuild, n_threads);
            entry.feasible = true;
            entry.scale = box.scale;
            entry.v_max_bound = box.v_max_bound;
            entry.v_width = box.v_width();
            entry.i_length = box.i_length();
            entry.i_charge_length = box.i_charge_length();
        } catch (const Infeasible&) {
            // Levels are a fixed grid of the sampling domain, so the lowest
            // one is known without rebuilding; report it as the voltage
            // coordinate of the empty entry.
            entry.feasible = false;
            entry.v_max_bound = ocv(params, rebuild.soc_max_range.lo) +
                                rebuild.i_charge_range_a.hi * params.r_eol_ohm;
        }
        entries.push_back(entry);
    }
    return entries;
}

BatteryConstraints box_to_grid_constraints(const BoxRegion& box,
                                           const CellParams& params,
                                           std::size_t n_cells) {
    if (n_cells < 1)
        throw ParamError("box_to_grid_constraints: n_cells must be >= 1");
    BatteryConstraints c;
    c.v_bus_max_pu = box.v_max_bound / params.nominal_voltage_v;
    if (!box.feasible) return c; // pack forced idle
    const double volts = params.nominal_voltage_v;
    c.p_charge_max_kw =
        static_cast<double>(n_cells) * volts * box.i_charge_max / 1000.0;
    c.p_discharge_max_kw =
        static_cast<double>(n_cells) * volts * box.i_discharge_max / 1000.0;
    return c;
}

namespace {

nlohmann::json box_json(const BoxRegion& b) {
    return nlohmann::json{{"i_charge_min", b.i_charge_min},
                          {"i_charge_max", b.i_charge_max},
                          {"i_discharge_min", b.i_discharge_min},
                          {"i_discharge_max", b.i_discharge_max},
                          {"v_max_bound", b.v_max_bound},
                          {"v_min_domain", b.v_min_domain},
                          {"soc_level", b.soc_level},
                          {"soc_min", b.soc_min},
                          {"level_index", b.level_index},
                          {"scale", b.scale},
                          {"hi", b.hi},
                          {"t_hours", b.t_hours},
                          {"feasible", b.feasible}};
}

BoxRegion box_from(const nlohmann::json& j) {
    BoxRegion b;
    b.i_charge_min = j.at("i_charge_min").get<double>();
    b.i_charge_max = j.at("i_charge_max").get<double>();
    b.i_discharge_min = j.at("i_discharge_min").get<double>();
    b.i_discharge_max = j.at("i_discharge_max").get<double>();
    b.v_max_bound = j.at("v_max_bound").get<double>();
    b.v_min_domain = j.at("v_min_domain").get<double>();
    b.soc_level = j.at("soc_level").get<double>();
    b.soc_min = j.at("soc_min").get<double>();
    b.level_index = j.at("level_index").get<int>();
    b.scale = j.at("scale").get<double>();
    b.hi = j.at("hi").get<double>();
    b.t_hours = j.at("t_hours").get<double>();
    b.feasible = j.at("feasible").get<bool>();
    return b;
}

} // namespace

std::string box_to_json(const BoxRegion& box) { return box_json(box).dump(2); }

BoxRegion box_from_json(const std::string& text) {
    try {
        return box_from(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad box JSON: ") + e.what());
    }
}

std::string family_to_json(const SurfaceFamily& family) {
    nlohmann::json j;
    j["soc_levels"] = family.soc_levels;
    j["v_levels"] = family.v_levels;
    j["soc_min_ref"] = family.soc_min_ref;
    j["i_charge_lo"] = family.i_charge_lo;
    j["i_charge_hi"] = family.i_charge_hi;
    j["i_discharge_lo"] = family.i_discharge_lo;
    j["i_discharge_hi"] = family.i_discharge_hi;
    j["surfaces"] = nlohmann::json::array();
    for (const auto& s : family.surfaces)
        j["surfaces"].push_back(nlohmann::json::parse(surface_to_json(s)));
    return j.dump(2);
}

SurfaceFamily family_from_json(const std::string& text) {
    SurfaceFamily family;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        family.soc_levels = j.at("soc_levels").get<std::vector<double>>();
        family.v_levels = j.at("v_levels").get<std::vector<double>>();
        family.soc_min_ref = j.at("soc_min_ref").get<double>();
        family.i_charge_lo = j.at("i_charge_lo").get<double>();
        family.i_charge_hi = j.at("i_charge_hi").get<double>();
        family.i_discharge_lo = j.at("i_discharge_lo").get<double>();
        family.i_discharge_hi = j.at("i_discharge_hi").get<double>();
        for (const auto& js : j.at("surfaces"))
            family.surfaces.push_back(surface_from_json(js.dump()));
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad surface family JSON: ") + e.what());
    }
    if (family.soc_levels.size() != family.v_levels.size() ||
        family.soc_levels.size() != family.surfaces.size() ||
        family.surfaces.empty())
        throw ParamError("bad surface family JSON: inconsistent level count");
    return family;
}

std::string sweep_to_csv(const std::vector<SweepEntry>& entries) {
    std::string out =
        "state_id,initial_efc,hi,feasible,scale,v_max_bound,v_width,"
        "i_length,i_charge_length\n";
    char buf[256];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf,
                      "%zu,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      e.state_id, e.initial_efc, e.hi, e.feasible ? 1 : 0,
                      e.scale, e.v_max_bound, e.v_width, e.i_length,
                      e.i_charge_length);
        out += buf;
    }
    return out;
}

std::string contour_csv(const SurfaceFamily& family, int level_index,
                        const BoxRegion& box, int n) {
    if (level_index < 0 ||
        level_index >= static_cast<int>(family.surfaces.size()))
        throw IndexError("contour_csv: level index out of range");
    if (n < 2) throw ParamError("contour_csv: need n >= 2");
    const FittedSurface& s =
        family.surfaces[static_cast<std::size_t>(level_index)];
    std::string out = "i_charge_A,i_discharge_A,predicted_rul_hours,in_box\n";
    char buf[160];
    for (int i = 0; i < n; ++i) {
        const double ic = family.i_charge_lo +
                          (family.i_charge_hi - family.i_charge_lo) * i / (n - 1);
        for (int k = 0; k < n; ++k) {
            const double id =
                family.i_discharge_lo +
                (family.i_discharge_hi - family.i_discharge_lo) * k / (n - 1);
            const bool inside = box.feasible && ic >= box.i_charge_min &&
                                ic <= box.i_charge_max &&
                                id >= box.i_discharge_min &&
                                id <= box.i_discharge_max;
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d\n", ic, id,
                          predicted_rul(s, ic, id), inside ? 1 : 0);
            out += buf;
        }
    }
    return out;
}

} // namespace rulopf
