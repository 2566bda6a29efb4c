#include "rulopf/powerflow.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rulopf/errors.hpp"

namespace rulopf {

namespace {

using Complex = std::complex<double>;

constexpr double kRadPerDeg = std::numbers::pi / 180.0;

// Two-port admittance of one branch in the pi model with an off-nominal tap
// (tau, shift) on the from side. tap_ratio 0 means nominal.
struct BranchAdmittance {
    Complex yff, yft, ytf, ytt;
};

BranchAdmittance branch_admittance(const Branch& br) {
    const Complex ys = 1.0 / Complex(br.r_pu, br.x_pu);
    const Complex charging(0.0, 0.5 * br.b_pu);
    const double tau = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
    const Complex tap = std::polar(tau, br.phase_shift_deg * kRadPerDeg);
    return {(ys + charging) / (tau * tau), -ys / std::conj(tap), -ys / tap,
            ys + charging};
}

Eigen::VectorXcd complex_voltage(const Eigen::VectorXd& vm,
                                 const Eigen::VectorXd& va) {
    Eigen::VectorXcd v(vm.size());
    for (Eigen::Index i = 0; i < vm.size(); ++i)
        v(i) = std::polar(vm(i), va(i));
    return v;
}

// S_i = V_i * conj((Y V)_i): computed complex net injection, p.u.
Eigen::VectorXcd bus_injection(const Eigen::MatrixXcd& ybus,
                               const Eigen::VectorXd& vm,
                               const Eigen::VectorXd& va) {
    const Eigen::VectorXcd v = complex_voltage(vm, va);
    return v.array() * (ybus * v).conjugate().array();
}

} // namespace

Eigen::MatrixXcd build_ybus(const NetworkCase& net) {
    const auto n = static_cast<Eigen::Index>(net.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        if (!br.in_service) continue;
        const auto f = static_cast<Eigen::Index>(net.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(net.bus_index(br.to_bus));
        const BranchAdmittance a = branch_admittance(br);
        y(f, f) += a.yff;
        y(f, t) += a.yft;
        y(t, f) += a.ytf;
        y(t, t) += a.ytt;
    }
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        const auto& b = net.buses[i];
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +=
            Complex(b.gs_mw, b.bs_mvar) / net.base_mva;
    }
    return y;
}

BusPartition partition_buses(const NetworkCase& net) {
    std::vector<char> has_gen(net.buses.size(), 0);
    for (const auto& g : net.generators)
        if (g.in_service) has_gen[net.bus_index(g.bus)] = 1;
    BusPartition parts;
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        switch (net.buses[i].type) {
        case BusType::slack:
            if (!has_gen[i])
                throw ValidationError("slack bus " +
                                      std::to_string(net.buses[i].id) +
                                      " has no in-service generator");
            parts.slack = i;
            break;
        case BusType::pv:
            // A PV bus with no live generator cannot hold its voltage.
            (has_gen[i] ? parts.pv : parts.pq).push_back(i);
            break;
        case BusType::pq:
            parts.pq.push_back(i);
            break;
        }
    }
    return parts;
}

Eigen::VectorXcd scheduled_injection(const NetworkCase& net) {
    Eigen::VectorXcd s =
        Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(net.buses.size()));
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        s(static_cast<Eigen::Index>(i)) -=
            Complex(net.buses[i].pd_mw, net.buses[i].qd_mvar);
    for (const auto& g : net.generators)
        if (g.in_service)
            s(static_cast<Eigen::Index>(net.bus_index(g.bus))) +=
                Complex(g.pg_mw, g.qg_mvar);
    for (const auto& d : net.batteries)
        s(static_cast<Eigen::Index>(net.bus_index(d.bus))) +=
            Complex(d.p_b_kw / 1000.0, 0.0);
    return s / net.base_mva;
}

Eigen::VectorXd pf_mismatch(const Eigen::MatrixXcd& ybus,
                            const Eigen::VectorXcd& s_sched,
                            const BusPartition& parts,
                            const Eigen::VectorXd& vm,
                            const Eigen::VectorXd& va) {
    const Eigen::VectorXcd s = bus_injection(ybus, vm, va);
    Eigen::VectorXd m(static_cast<Eigen::Index>(parts.pv.size() +
                                                2 * parts.pq.size()));
    Eigen::Index r = 0;
    for (const auto i : parts.pv)
        m(r++) = s(static_cast<Eigen::Index>(i)).real() -
                 s_sched(static_cast<Eigen::Index>(i)).real();
    for (const auto i : parts.pq)
        m(r++) = s(static_cast<Eigen::Index>(i)).real() -
                 s_sched(static_cast<Eigen::Index>(i)).real();
    for (const auto i : parts.pq)
        m(r++) = s(static_cast<Eigen::Index>(i)).imag() -
                 s_sched(static_cast<Eigen::Index>(i)).imag();
    return m;
}

Eigen::MatrixXd pf_jacobian(const Eigen::MatrixXcd& ybus,
                            const BusPartition& parts,
                            const Eigen::VectorXd& vm,
                            const Eigen::VectorXd& va) {
    const Eigen::VectorXcd s = bus_injection(ybus, vm, va);

    std::vector<std::size_t> ang(parts.pv);
    ang.insert(ang.end(), parts.pq.begin(), parts.pq.end());
    const std::vector<std::size_t>& mag = parts.pq;

    const auto at = [&](std::size_t i, std::size_t j) {
        return ybus(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    };
    const auto sv = [&](std::size_t i) {
        return s(static_cast<Eigen::Index>(i));
    };

    // Standard polar power-flow partial derivatives.
    const auto dp_dtheta = [&](std::size_t i, std::size_t j) {
        if (i == j) return -sv(i).imag() - at(i, i).imag() * vm(i) * vm(i);
        const Complex y = at(i, j);
        const double th = va(i) - va(j);
        return vm(i) * vm(j) * (y.real() * std::sin(th) - y.imag() * std::cos(th));
    };
    const auto dp_dv = [&](std::size_t i, std::size_t j) {
        if (i == j) return sv(i).real() / vm(i) + at(i, i).real() * vm(i);
        const Complex y = at(i, j);
        const double th = va(i) - va(j);
        return vm(i) * (y.real() * std::cos(th) + y.imag() * std::sin(th));
    };
    const auto dq_dtheta = [&](std::size_t i, std::size_t j) {
        if (i == j) return sv(i).real() - at(i, i).real() * vm(i) * vm(i);
        const Complex y = at(i, j);
        const double th = va(i) - va(j);
        return -vm(i) * vm(j) *
               (y.real() * std::cos(th) + y.imag() * std::sin(th));
    };
    const auto dq_dv = [&](std::size_t i, std::size_t j) {
        if (i == j) return sv(i).imag() / vm(i) - at(i, i).imag() * vm(i);
        const Complex y = at(i, j);
        const double th = va(i) - va(j);
        return vm(i) * (y.real() * std::sin(th) - y.imag() * std::cos(th));
    };

    const auto np = static_cast<Eigen::Index>(ang.size());
    const auto nq = static_cast<Eigen::Index>(mag.size());
    Eigen::MatrixXd jac(np + nq, np + nq);
    for (Eigen::Index r = 0; r < np; ++r) {
        for (Eigen::Index c = 0; c < np; ++c)
            jac(r, c) = dp_dtheta(ang[static_cast<std::size_t>(r)],
                                  ang[static_cast<std::size_t>(c)]);
        for (Eigen::Index c = 0; c < nq; ++c)
            jac(r, np + c) = dp_dv(ang[static_cast<std::size_t>(r)],
                                   mag[static_cast<std::size_t>(c)]);
    }
    for (Eigen::Index r = 0; r < nq; ++r) {
        for (Eigen::Index c = 0; c < np; ++c)
            jac(np + r, c) = dq_dtheta(mag[static_cast<std::size_t>(r)],
                                       ang[static_cast<std::size_t>(c)]);
        for (Eigen::Index c = 0; c < nq; ++c)
            jac(np + r, np + c) = dq_dv(mag[static_cast<std::size_t>(r)],
                                        mag[static_cast<std::size_t>(c)]);
    }
    return jac;
}

PowerFlowSolution solve_powerflow(const NetworkCase& net,
                                  const PowerFlowOptions& options) {
    net.validate();
    if (options.tol <= 0) throw ParamError("tol must be positive");
    if (options.max_iter < 1) throw ParamError("max_iter must be >= 1");

    const auto n = static_cast<Eigen::Index>(net.buses.size());
    const Eigen::MatrixXcd ybus = build_ybus(net);
    const BusPartition base_parts = partition_buses(net);
    const Eigen::VectorXcd base_sched = scheduled_injection(net);

    Eigen::VectorXd vm(n), va(n);
    if (options.flat_start) {
        vm.setOnes();
        va.setZero();
    } else {
        for (Eigen::Index i = 0; i < n; ++i) {
            vm(i) = net.buses[static_cast<std::size_t>(i)].vm_pu;
            va(i) = net.buses[static_cast<std::size_t>(i)].va_deg * kRadPerDeg;
        }
        va.array() -= va(static_cast<Eigen::Index>(base_parts.slack));
    }
    // Generator buses start (and PV/slack stay) at their voltage setpoints.
    for (const auto& g : net.generators)
        if (g.in_service)
            vm(static_cast<Eigen::Index>(net.bus_index(g.bus))) = g.vg_pu;

    PowerFlowSolution sol;
    sol.iterations = 0;

    const auto newton = [&](const BusPartition& parts,
                            const Eigen::VectorXcd& sched) {
        std::vector<std::size_t> ang(parts.pv);
        ang.insert(ang.end(), parts.pq.begin(), parts.pq.end());
        for (int step = 0;; ++step) {
            const Eigen::VectorXd m = pf_mismatch(ybus, sched, parts, vm, va);
            ++sol.iterations;
            sol.max_mismatch_pu = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
            if (sol.max_mismatch_pu <= options.tol) return;
            if (step >= options.max_iter) {
                char buf[160];
                std::snprintf(buf, sizeof buf,
                              "power flow stalled at max mismatch %.3e p.u. "
                              "after %d Newton steps",
                              sol.max_mismatch_pu, options.max_iter);
                throw Diverged(buf);
            }
            const Eigen::MatrixXd jac = pf_jacobian(ybus, parts, vm, va);
            Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
            if (!lu.isInvertible())
                throw SingularJacobian(
                    "power-flow Jacobian is singular (rank " +
                    std::to_string(lu.rank()) + " of " +
                    std::to_string(jac.rows()) + ")");
            const Eigen::VectorXd dx = lu.solve(-m);
            Eigen::Index r = 0;
            for (const auto i : ang) va(static_cast<Eigen::Index>(i)) += dx(r++);
            for (const auto i : parts.pq)
                vm(static_cast<Eigen::Index>(i)) += dx(r++);
        }
    };

    BusPartition parts = base_parts;
    Eigen::VectorXcd sched = base_sched;
    const int max_rounds =
        options.enforce_q_limits ? static_cast<int>(base_parts.pv.size()) + 1
                                 : 1;
    for (int round = 0; round < max_rounds; ++round) {
        newton(parts, sched);
        if (!options.enforce_q_limits) break;

        // Reactive capability per PV bus (summed over live generators there).
        const Eigen::VectorXcd s = bus_injection(ybus, vm, va);
        bool switched = false;
        std::vector<std::size_t> still_pv;
        for (const auto i : parts.pv) {
            const auto& bus = net.buses[i];
            double q_min = 0, q_max = 0;
            for (const auto& g : net.generators)
                if (g.in_service && net.bus_index(g.bus) == i) {
                    q_min += g.q_min_mvar;
                    q_max += g.q_max_mvar;
                }
            const double qg_mvar =
                s(static_cast<Eigen::Index>(i)).imag() * net.base_mva +
                bus.qd_mvar;
            double pin = qg_mvar;
            if (qg_mvar > q_max + 1e-6) pin = q_max;
            else if (qg_mvar < q_min - 1e-6) pin = q_min;
            if (pin != qg_mvar) {
                sched(static_cast<Eigen::Index>(i)).imag(
                    (pin - bus.qd_mvar) / net.base_mva);
                parts.pq.push_back(i);
                sol.q_limited_buses.push_back(bus.id);
                switched = true;
            } else {
                still_pv.push_back(i);
            }
        }
        if (!switched) break;
        parts.pv = std::move(still_pv);
    }

    sol.vm_pu = vm;
    sol.va_rad = va;
    const Eigen::VectorXcd s = bus_injection(ybus, vm, va);
    sol.p_inj_mw = s.real() * net.base_mva;
    sol.q_inj_mvar = s.imag() * net.base_mva;

    const auto& slack_bus = net.buses[base_parts.slack];
    double batt_mw = 0;
    for (const auto& d : net.batteries)
        if (net.bus_index(d.bus) == base_parts.slack) batt_mw += d.p_b_kw / 1000.0;
    sol.slack_p_mw = sol.p_inj_mw(static_cast<Eigen::Index>(base_parts.slack)) +
                     slack_bus.pd_mw - batt_mw;
    sol.slack_q_mvar =
        sol.q_inj_mvar(static_cast<Eigen::Index>(base_parts.slack)) +
        slack_bus.qd_mvar;

    const Eigen::VectorXcd v = complex_voltage(vm, va);
    sol.flows.reserve(net.branches.size());
    for (const auto& br : net.branches) {
        BranchFlow flow;
        flow.from_bus = br.from_bus;
        flow.to_bus = br.to_bus;
        if (br.in_service) {
            const auto f = static_cast<Eigen::Index>(net.bus_index(br.from_bus));
            const auto t = static_cast<Eigen::Index>(net.bus_index(br.to_bus));
            const BranchAdmittance a = branch_admittance(br);
            const Complex sf =
                v(f) * std::conj(a.yff * v(f) + a.yft * v(t)) * net.base_mva;
            const Complex st =
                v(t) * std::conj(a.ytf * v(f) + a.ytt * v(t)) * net.base_mva;
            flow.p_from_mw = sf.real();
            flow.q_from_mvar = sf.imag();
            flow.p_to_mw = st.real();
            flow.q_to_mvar = st.imag();
        }
        sol.flows.push_back(flow);
    }
    return sol;
}

std::string solution_bus_csv(const NetworkCase& net,
                             const PowerFlowSolution& sol) {
    std::string out = "bus,vm_pu,va_deg,p_inj_mw,q_inj_mvar\n";
    char buf[192];
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n",
                      net.buses[i].id, sol.vm_pu(k),
                      sol.va_rad(k) / kRadPerDeg, sol.p_inj_mw(k),
                      sol.q_inj_mvar(k));
        out += buf;
    }
    return out;
}

std::string solution_branch_csv(const NetworkCase& net,
                                const PowerFlowSolution& sol) {
    std::string out =
        "from_bus,to_bus,p_from_mw,q_from_mvar,p_to_mw,q_to_mvar,p_loss_mw\n";
    char buf[224];
    for (const auto& flow : sol.flows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      flow.from_bus, flow.to_bus, flow.p_from_mw,
                      flow.q_from_mvar, flow.p_to_mw, flow.q_to_mvar,
                      flow.p_from_mw + flow.p_to_mw);
        out += buf;
    }
    return out;
}

} // namespace rulopf
