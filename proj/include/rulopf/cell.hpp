#pragma once

#include <Eigen/Core>
#include <string>

namespace rulopf {

/// Cycle-stress coefficients of the semi-empirical fade law.
///
/// Capacity loss is accumulated per unit of equivalent-full-cycle (EFC)
/// throughput, scaled by three stress multipliers that all equal 1 at the
/// reference condition (1C, full depth of discharge, mean SOC 0.5):
///
///   dC/dEFC = -(1 - eol_capacity_fraction) * C_I / rated_life_efc
///             * dod_stress * rate_stress * soc_stress
///
///   dod_stress  = DOD^dod_exponent
///   rate_stress = exp(k_rate * (c_rate - 1))
///   soc_stress  = 1 + k_soc * (soc_mean - 0.5)
///
/// With the defaults, cycling a fresh cell at 1C over the full SOC window
/// reaches 80% remaining capacity after exactly rated_life_efc cycles.
struct StressCoefficients {
    double dod_exponent = 0.5;
    double k_rate = 0.5;
    double k_soc = 0.45;
};

/// Static parameters of one LiFePO4 cell.
struct CellParams {
    double nominal_capacity_ah = 2.3;  // C_I
    double nominal_voltage_v = 3.3;
    double cutoff_voltage_v = 2.0;      // floor for the operating V lower bound
    double max_cell_voltage_v = 3.65;   // absolute ceiling
    double r_bol_ohm = 0.010;           // internal resistance, beginning of life
    double r_eol_ohm = 0.020;           // internal resistance, end of life
    double eol_capacity_fraction = 0.8; // EOL when C_R/C_I <= this
    double rated_life_efc = 1000.0;     // full cycles to EOL at reference stress
    StressCoefficients stress;

    // Open-circuit voltage table, column 0 = SOC in [0,1] (strictly
    // increasing), column 1 = volts. Linearly interpolated.
    Eigen::Matrix<double, Eigen::Dynamic, 2> ocv_table;

    /// Throws ParamError if any invariant is violated.
    void validate() const;
};

/// LFP-shaped defaults: 2.3 Ah / 3.3 V cell, 11-point OCV table with the
/// characteristic flat plateau between SOC 0.2 and 0.9.
CellParams default_cell_params();

/// Open-circuit voltage at the given SOC (clamped to the table range).
double ocv(const CellParams& params, double soc);

/// Mutable state of one cell.
struct CellState {
    double soc = 0.5;        // state of charge in [0,1]
    double capacity_ah = 0;  // remaining capacity C_R
    double resistance_ohm = 0;
    double efc = 0;          // accumulated equivalent full cycles
    double elapsed_h = 0;    // active cycling time since construction
};

/// Operating window one scenario confines the cell to.
struct OperatingLimits {
    double soc_min = 0.0;
    double soc_max = 1.0;
    double i_charge_a = 2.3;     // positive magnitude
    double i_discharge_a = 2.3;  // positive magnitude

    void validate() const;
};

enum class HalfCycleDirection { Charge, Discharge };

/// Terminal voltage under the given signed current (positive = charging).
double terminal_voltage(const CellState& state, const CellParams& params,
                        double current_a);

/// Health indicator in [0,1]: 1 at beginning of life, 0 at end of life,
/// linear in internal resistance.
double health_indicator(const CellState& state, const CellParams& params);

/// State a fresh cell reaches after `efc` full cycles of reference cycling
/// (1C, full DOD). elapsed_h restarts at zero. Throws RangeError outside
/// [0, rated_life_efc].
CellState state_from_efc(double efc, const CellParams& params);

/// Moves SOC analytically to the window bound in the given direction and
/// applies one fade update. Constant-current operation: the half-cycle
/// duration is |dSOC| * C_R / I, with no integration error.
CellState run_half_cycle(const CellState& state, const CellParams& params,
                         const OperatingLimits& limits,
                         HalfCycleDirection direction);

struct RulResult {
    double rul_hours = 0;
    double v_max_observed = 0;  // terminal V at soc_max under charge current, at EOL
    double v_min_observed = 0;  // terminal V at soc_min under discharge current, at EOL
    CellState final_state;
};

/// Alternates charge/discharge half-cycles until C_R/C_I falls to the EOL
/// fraction. Throws AlreadyDead if the cell starts at or past EOL and
/// NonTerminating if EFC exceeds 10x the rated life (fade law misconfigured).
RulResult simulate_to_eol(const CellState& state, const CellParams& params,
                          const OperatingLimits& limits);

/// JSON (de)serialization of CellParams; schema documented in the README.
std::string cell_params_to_json(const CellParams& params);
CellParams cell_params_from_json(const std::string& text);
CellParams load_cell_params(const std::string& path);

} // namespace rulopf
