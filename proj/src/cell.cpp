#include "rulopf/cell.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rulopf/errors.hpp"

namespace rulopf {

void CellParams::validate() const {
    if (nominal_capacity_ah <= 0 || nominal_voltage_v <= 0)
        throw ParamError("cell capacity and nominal voltage must be positive");
    if (!(0 < r_bol_ohm && r_bol_ohm < r_eol_ohm))
        throw ParamError("require 0 < r_bol < r_eol");
    if (!(0 < eol_capacity_fraction && eol_capacity_fraction < 1))
        throw ParamError("eol_capacity_fraction must be in (0,1)");
    if (rated_life_efc <= 0) throw ParamError("rated_life_efc must be positive");
    if (ocv_table.rows() < 2) throw ParamError("ocv table needs at least 2 points");
    if (ocv_table(0, 0) != 0.0 || ocv_table(ocv_table.rows() - 1, 0) != 1.0)
        throw ParamError("ocv table must span SOC [0,1]");
    for (Eigen::Index i = 1; i < ocv_table.rows(); ++i) {
        if (ocv_table(i, 0) <= ocv_table(i - 1, 0) ||
            ocv_table(i, 1) <= ocv_table(i - 1, 1))
            throw ParamError("ocv table must be strictly increasing in SOC and V");
    }
    if (ocv_table(0, 1) < cutoff_voltage_v)
        throw ParamError("ocv(0) must not be below the cutoff voltage");
    if (ocv_table(ocv_table.rows() - 1, 1) > max_cell_voltage_v)
        throw ParamError("ocv(1) must not exceed the cell voltage ceiling");
}

CellParams default_cell_params() {
    CellParams p;
    p.ocv_table.resize(11, 2);
    // LFP shape: steep knee below SOC 0.2, flat plateau to 0.9, rise at the top.
    p.ocv_table << 0.0, 2.60,  //
        0.1, 3.00,             //
        0.2, 3.20,             //
        0.3, 3.22,             //
        0.4, 3.25,             //
        0.5, 3.28,             //
        0.6, 3.30,             //
        0.7, 3.32,             //
        0.8, 3.33,             //
        0.9, 3.35,             //
        1.0, 3.45;
    return p;
}

double ocv(const CellParams& params, double soc) {
    const auto& t = params.ocv_table;
    const Eigen::Index n = t.rows();
    if (soc <= t(0, 0)) return t(0, 1);
    if (soc >= t(n - 1, 0)) return t(n - 1, 1);
    Eigen::Index hi = 1;
    while (t(hi, 0) < soc) ++hi;
    const double s0 = t(hi - 1, 0), s1 = t(hi, 0);
    const double v0 = t(hi - 1, 1), v1 = t(hi, 1);
    return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
}

void OperatingLimits::validate() const {
    if (!(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0))
        throw ParamError("require 0 <= soc_min < soc_max <= 1");
    if (soc_max - soc_min < 1e-3)
        throw ParamError("SOC window narrower than 1e-3 is not supported");
    if (i_charge_a <= 0 || i_discharge_a <= 0)
        throw ParamError("charge/discharge currents must be positive");
}

double terminal_voltage(const CellState& state, const CellParams& params,
                        double current_a) {
    return ocv(params, state.soc) + current_a * state.resistance_ohm;
}

double health_indicator(const CellState& state, const CellParams& params) {
    if (params.r_eol_ohm <= params.r_bol_ohm)
        throw ParamError("health indicator requires r_eol > r_bol");
    const double hi = (params.r_eol_ohm - state.resistance_ohm) /
                      (params.r_eol_ohm - params.r_bol_ohm);
    return std::clamp(hi, 0.0, 1.0);
}

namespace {

// Resistance mirrors state of health: linear in lost capacity, r_bol when
// fresh, r_eol at the EOL capacity fraction.
double resistance_from_capacity(double capacity_ah, const CellParams& p) {
    const double lost = (p.nominal_capacity_ah - capacity_ah) /
                        ((1.0 - p.eol_capacity_fraction) * p.nominal_capacity_ah);
    const double r = p.r_bol_ohm + (p.r_eol_ohm - p.r_bol_ohm) * lost;
    return std::clamp(r, p.r_bol_ohm, p.r_eol_ohm);
}

} // namespace

CellState state_from_efc(double efc, const CellParams& params) {
    params.validate();
    if (!(0.0 <= efc && efc <= params.rated_life_efc))
        throw RangeError("initial efc must lie in [0, rated_life_efc]");
    CellState s;
    s.soc = 0.5;
    s.capacity_ah = params.nominal_capacity_ah *
                    (1.0 - (1.0 - params.eol_capacity_fraction) * efc /
                               params.rated_life_efc);
    s.resistance_ohm = resistance_from_capacity(s.capacity_ah, params);
    s.efc = efc;
    s.elapsed_h = 0.0;
    return s;
}

CellState run_half_cycle(const CellState& state, const CellParams& params,
                         const OperatingLimits& limits,
                         HalfCycleDirection direction) {
    limits.validate();
    const bool charging = direction == HalfCycleDirection::Charge;
    const double current =
        charging ? limits.i_charge_a : limits.i_discharge_a;
    const double target = charging ? limits.soc_max : limits.soc_min;
    const double swing = std::abs(target - state.soc);

    CellState next = state;
    next.soc = target;
    if (swing == 0.0) return next;

    const double dt_h = swing * state.capacity_ah / current;
    const double defc =
        swing * state.capacity_ah / (2.0 * params.nominal_capacity_ah);

    const double c_rate = current / params.nominal_capacity_ah;
    const double soc_mean = 0.5 * (state.soc + target);
    const double dod_stress = std::pow(swing, params.stress.dod_exponent);
    const double rate_stress = std::exp(params.stress.k_rate * (c_rate - 1.0));
    const double soc_stress = 1.0 + params.stress.k_soc * (soc_mean - 0.5);

    const double loss_per_efc = (1.0 - params.eol_capacity_fraction) *
                                params.nominal_capacity_ah /
                                params.rated_life_efc;
    const double dc = loss_per_efc * defc * dod_stress * rate_stress * soc_stress;

    next.capacity_ah = std::max(state.capacity_ah - dc, 0.0);
    next.resistance_ohm = resistance_from_capacity(next.capacity_ah, params);
    next.efc = state.efc + defc;
    next.elapsed_h = state.elapsed_h + dt_h;
    return next;
}

RulResult simulate_to_eol(const CellState& state, const CellParams& params,
                          const OperatingLimits& limits) {
    params.validate();
    limits.validate();
    const double eol_capacity =
        params.eol_capacity_fraction * params.nominal_capacity_ah;
    if (state.capacity_ah <= eol_capacity)
        throw AlreadyDead("cell is already at or past end of life");

    CellState s = state;
    // Partial first half-cycle from wherever the cell happens to sit.
    HalfCycleDirection dir = s.soc < limits.soc_max ? HalfCycleDirection::Charge
                                                   : HalfCycleDirection::Discharge;
    while (s.capacity_ah > eol_capacity) {
        if (s.efc > 10.0 * params.rated_life_efc)
            throw NonTerminating(
                "EFC exceeded 10x rated life before reaching EOL; "
                "fade law configuration is suspect");
        s = run_half_cycle(s, params, limits, dir);
        dir = dir == HalfCycleDirection::Charge ? HalfCycleDirection::Discharge
                                                : HalfCycleDirection::Charge;
    }

    RulResult r;
    r.rul_hours = s.elapsed_h - state.elapsed_h;
    CellState at_max = s;
    at_max.soc = limits.soc_max;
    CellState at_min = s;
    at_min.soc = limits.soc_min;
    r.v_max_observed =
        std::min(terminal_voltage(at_max, params, limits.i_charge_a),
                 params.max_cell_voltage_v);
    r.v_min_observed =
        std::max(terminal_voltage(at_min, params, -limits.i_discharge_a),
                 params.cutoff_voltage_v);
    r.final_state = s;
    return r;
}

std::string cell_params_to_json(const CellParams& params) {
    nlohmann::json j;
    j["nominal_capacity_ah"] = params.nominal_capacity_ah;
    j["nominal_voltage_v"] = params.nominal_voltage_v;
    j["cutoff_voltage_v"] = params.cutoff_voltage_v;
    j["max_cell_voltage_v"] = params.max_cell_voltage_v;
    j["r_bol_ohm"] = params.r_bol_ohm;
    j["r_eol_ohm"] = params.r_eol_ohm;
    j["eol_capacity_fraction"] = params.eol_capacity_fraction;
    j["rated_life_efc"] = params.rated_life_efc;
    j["stress"] = {{"dod_exponent", params.stress.dod_exponent},
                   {"k_rate", params.stress.k_rate},
                   {"k_soc", params.stress.k_soc}};
    auto& t = j["ocv_soc_v"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < params.ocv_table.rows(); ++i)
        t.push_back({params.ocv_table(i, 0), params.ocv_table(i, 1)});
    return j.dump(2);
}

CellParams cell_params_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad cell params JSON: ") + e.what());
    }
    CellParams p = default_cell_params();
    try {
        if (j.contains("nominal_capacity_ah")) p.nominal_capacity_ah = j["nominal_capacity_ah"];
        if (j.contains("nominal_voltage_v")) p.nominal_voltage_v = j["nominal_voltage_v"];
        if (j.contains("cutoff_voltage_v")) p.cutoff_voltage_v = j["cutoff_voltage_v"];
        if (j.contains("max_cell_voltage_v")) p.max_cell_voltage_v = j["max_cell_voltage_v"];
        if (j.contains("r_bol_ohm")) p.r_bol_ohm = j["r_bol_ohm"];
        if (j.contains("r_eol_ohm")) p.r_eol_ohm = j["r_eol_ohm"];
        if (j.contains("eol_capacity_fraction")) p.eol_capacity_fraction = j["eol_capacity_fraction"];
        if (j.contains("rated_life_efc")) p.rated_life_efc = j["rated_life_efc"];
        if (j.contains("stress")) {
            const auto& s = j["stress"];
            if (s.contains("dod_exponent")) p.stress.dod_exponent = s["dod_exponent"];
            if (s.contains("k_rate")) p.stress.k_rate = s["k_rate"];
            if (s.contains("k_soc")) p.stress.k_soc = s["k_soc"];
        }
        if (j.contains("ocv_soc_v")) {
            const auto& t = j["ocv_soc_v"];
            p.ocv_table.resize(static_cast<Eigen::Index>(t.size()), 2);
            for (Eigen::Index i = 0; i < p.ocv_table.rows(); ++i) {
                p.ocv_table(i, 0) = t[static_cast<size_t>(i)][0];
                p.ocv_table(i, 1) = t[static_cast<size_t>(i)][1];
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad cell params JSON: ") + e.what());
    }
    p.validate();
    return p;
}

CellParams load_cell_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParamError("cannot open cell params file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return cell_params_from_json(ss.str());
}

} // namespace rulopf
