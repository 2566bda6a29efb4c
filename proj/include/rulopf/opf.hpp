#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rulopf/cell.hpp"
#include "rulopf/matpower.hpp"

namespace rulopf {

/// case1 = conventional dispatch limits (battery at nameplate rating);
/// case2 = life-target limits (battery power and host-bus voltage bounded
/// by its box-derived constraints).
enum class OpfMode { case1, case2 };

OpfMode opf_mode_from_string(const std::string& name);  // "case1" / "case2"
std::string to_string(OpfMode mode);

struct OpfProblem {
    NetworkCase net;  // devices attached; bus V ceilings already per-mode
    OpfMode mode = OpfMode::case1;
    std::vector<double> pb_min_kw;  // <= 0: maximum charging power
    std::vector<double> pb_max_kw;  // >= 0: maximum discharging power
    std::vector<bool> pb_fixed;     // zero-width bound: dispatch pinned at 0
};

struct OpfOptions {
    double tol = 1e-6;   // KKT residual (normalized infinity norm)
    int max_iter = 150;
    double sigma = 0.1;            // barrier reduction per iteration
    double step_scale = 0.99995;   // fraction-to-boundary factor
};

struct OpfSolution {
    Eigen::VectorXd vm_pu;
    Eigen::VectorXd va_rad;
    std::vector<double> pg_mw;    // per generator row (0 if out of service)
    std::vector<double> qg_mvar;
    std::vector<double> pb_kw;    // per battery, discharge positive
    double objective_per_hour = 0;
    double kkt_residual = 0;
    int iterations = 0;
    bool converged = false;

    // Inequality diagnostics, aligned: h(x) <= 0 values, multipliers, names.
    // Row order: vm_max per bus, vm_min per bus, then (max, min) pairs for
    // each in-service generator's P, then Q, then each free battery's power,
    // then (from, to) squared-flow limits for each in-service rated branch.
    std::vector<double> h_values;
    std::vector<double> h_multipliers;
    std::vector<std::string> h_labels;
    std::vector<std::size_t> binding;  // indices with h ~ 0 and multiplier > 0

    // Equality diagnostics: power-balance residuals [P; Q] p.u. and their
    // multipliers, ordered by bus.
    std::vector<double> eq_residuals;
    std::vector<double> eq_multipliers;
};

/// Assembles the dispatch problem. case1 derives battery power bounds from
/// the pack's nameplate current ratings and leaves bus voltage limits as in
/// the case; case2 uses each device's box-derived power bounds and tightens
/// the host bus ceiling to min(case limit, box limit). Throws
/// MissingConstraints if case2 is requested for a device without box data.
OpfProblem build_problem(const NetworkCase& base,
                         const std::vector<BatteryDevice>& devices,
                         OpfMode mode);

/// Primal-dual interior-point solve: log barrier on all inequalities,
/// Newton steps on the reduced KKT system, fraction-to-boundary step rule.
/// Hitting max_iter returns the final iterate flagged converged=false;
/// non-finite iterates raise Infeasible; SingularKkt on a rank-deficient
/// KKT matrix.
OpfSolution solve_opf(const OpfProblem& problem, const OpfOptions& opt = {});

/// Post-dispatch life check: per-cell current from |P_b| (clamped to the
/// device's current limits), then cycle simulation from the device's aging
/// state within its SOC window. An idle battery reports infinity.
std::vector<double> verify_rul(const OpfSolution& sol,
                               const std::vector<BatteryDevice>& batteries,
                               const CellParams& params);

std::string opf_solution_to_json(const NetworkCase& net,
                                 const OpfSolution& sol);
std::string opf_bus_csv(const NetworkCase& net, const OpfSolution& sol);
std::string opf_gen_csv(const NetworkCase& net, const OpfSolution& sol);

/// Side-by-side dispatch comparison: cost row, then per-battery power,
/// host-bus voltage (with its ceiling), and realized life.
std::string comparison_csv(const OpfProblem& p1, const OpfSolution& s1,
                           const std::vector<double>& rul1,
                           const OpfProblem& p2, const OpfSolution& s2,
                           const std::vector<double>& rul2);

} // namespace rulopf
