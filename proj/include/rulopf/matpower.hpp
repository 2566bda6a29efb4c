#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rulopf/region.hpp"

namespace rulopf {

enum class BusType { pq = 1, pv = 2, slack = 3 };

struct Bus {
    int id = 0;
    BusType type = BusType::pq;
    double pd_mw = 0, qd_mvar = 0;
    double gs_mw = 0, bs_mvar = 0;  // shunt at V = 1 p.u.
    int area = 1;
    double vm_pu = 1, va_deg = 0;   // stored operating point (start values)
    double base_kv = 0;
    int zone = 1;
    double v_max_pu = 1.1, v_min_pu = 0.9;
};

struct Branch {
    int from_bus = 0, to_bus = 0;
    double r_pu = 0, x_pu = 0, b_pu = 0;
    double rate_a_mva = 0, rate_b_mva = 0, rate_c_mva = 0;  // 0 = unlimited
    double tap_ratio = 0;       // 0 means nominal (1.0)
    double phase_shift_deg = 0;
    bool in_service = true;
    double ang_min_deg = -360, ang_max_deg = 360;
};

struct Generator {
    int bus = 0;
    double pg_mw = 0, qg_mvar = 0;
    double q_max_mvar = 0, q_min_mvar = 0;
    double vg_pu = 1;
    double mbase_mva = 100;
    bool in_service = true;
    double p_max_mw = 0, p_min_mw = 0;
};

/// Polynomial cost: coeffs in descending degree, value in $/h at P in MW.
struct GenCost {
    int model = 2;  // 2 = polynomial (the only supported model)
    double startup = 0, shutdown = 0;
    std::vector<double> coeffs;
};

/// Battery pack co-located at a bus: aging state plus the operating limits
/// the OPF must respect. Case-1 limits are nameplate; Case-2 limits carry a
/// life-target box (has_box = true).
struct BatteryDevice {
    int bus = 0;
    std::size_t n_cells = 1;
    double initial_efc = 0;
    double hi = 1;
    BatteryConstraints constraints;
    double i_charge_max_a = 0, i_discharge_max_a = 0;
    double soc_min = 0, soc_max = 1;
    bool has_box = false;
    double p_b_kw = 0;  // dispatch, discharge positive
};

struct NetworkCase {
    std::string name;
    double base_mva = 100;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<GenCost> gencosts;
    std::vector<BatteryDevice> batteries;

    const Bus& bus_by_id(int id) const;
    std::size_t bus_index(int id) const;  // throws UnknownBus
    void validate() const;                // throws ValidationError
};

/// Parses MATLAB-syntax case text (function header, mpc.baseMVA scalar,
/// mpc.bus / mpc.branch / mpc.gen / mpc.gencost matrices; % comments).
/// Throws ParseError (with line/column), SchemaError, or ValidationError.
NetworkCase parse_matpower(const std::string& text);

/// Registers battery devices; tightens the host bus voltage ceiling when a
/// device carries a life-target box. Throws UnknownBus.
NetworkCase attach_batteries(const NetworkCase& net,
                             const std::vector<BatteryDevice>& devices);

std::string case_to_json(const NetworkCase& net);
NetworkCase case_from_json(const std::string& text);

} // namespace rulopf
