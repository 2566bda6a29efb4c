#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <complex>

#include "rulopf/matpower.hpp"

namespace rulopf {

struct PowerFlowOptions {
    double tol = 1e-8;     // convergence: max |P,Q mismatch| in p.u.
    int max_iter = 20;     // Newton step cap before Diverged
    bool flat_start = true;          // false: start from the case's stored Vm/Va
    bool enforce_q_limits = false;   // PV->PQ switching at generator Q limits
};

/// Bus indices split by role for the Newton solve. PV buses without an
/// in-service generator are treated as PQ.
struct BusPartition {
    std::size_t slack = 0;
    std::vector<std::size_t> pv;
    std::vector<std::size_t> pq;
};

struct BranchFlow {
    int from_bus = 0, to_bus = 0;
    double p_from_mw = 0, q_from_mvar = 0;  // into the branch at the from end
    double p_to_mw = 0, q_to_mvar = 0;      // into the branch at the to end
};

struct PowerFlowSolution {
    Eigen::VectorXd vm_pu;        // by bus index
    Eigen::VectorXd va_rad;       // referenced to the slack (slack angle 0)
    Eigen::VectorXd p_inj_mw;     // computed net injection per bus
    Eigen::VectorXd q_inj_mvar;
    std::vector<BranchFlow> flows;  // aligned with case branches; zero if open
    double slack_p_mw = 0;        // slack-bus total generation
    double slack_q_mvar = 0;
    int iterations = 0;           // mismatch evaluations (1 = converged at start)
    double max_mismatch_pu = 0;
    std::vector<int> q_limited_buses;  // PV buses pinned at a Q limit
};

/// Bus admittance matrix: pi-model branches with off-nominal taps and phase
/// shifts, line charging split half per end, bus shunts on the diagonal.
/// Out-of-service branches contribute nothing.
Eigen::MatrixXcd build_ybus(const NetworkCase& net);

BusPartition partition_buses(const NetworkCase& net);

/// Scheduled complex net injection per bus in p.u.: in-service generation
/// plus battery dispatch (active-only, discharge positive) minus load.
Eigen::VectorXcd scheduled_injection(const NetworkCase& net);

/// Newton mismatch vector at state (vm, va):
/// [ P_i(V) - P_i^sched  for i in pv then pq ;
///   Q_i(V) - Q_i^sched  for i in pq ]   (p.u.)
Eigen::VectorXd pf_mismatch(const Eigen::MatrixXcd& ybus,
                            const Eigen::VectorXcd& s_sched,
                            const BusPartition& parts,
                            const Eigen::VectorXd& vm,
                            const Eigen::VectorXd& va);

/// Analytic Jacobian of pf_mismatch with respect to the free coordinates
/// [ va at pv then pq ; vm at pq ], same row ordering as pf_mismatch.
Eigen::MatrixXd pf_jacobian(const Eigen::MatrixXcd& ybus,
                            const BusPartition& parts,
                            const Eigen::VectorXd& vm,
                            const Eigen::VectorXd& va);

/// Full Newton-Raphson power flow in polar coordinates.
/// Throws Diverged (with the final mismatch) or SingularJacobian.
PowerFlowSolution solve_powerflow(const NetworkCase& net,
                                  const PowerFlowOptions& options = {});

/// Per-bus results: id, vm_pu, va_deg, p_inj_mw, q_inj_mvar.
std::string solution_bus_csv(const NetworkCase& net,
                             const PowerFlowSolution& sol);
/// Per-branch results: endpoints, P/Q at both ends, active losses.
std::string solution_branch_csv(const NetworkCase& net,
                                const PowerFlowSolution& sol);

} // namespace rulopf
