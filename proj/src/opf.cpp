#include "rulopf/opf.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <json.hpp>

#include "rulopf/errors.hpp"
#include "rulopf/powerflow.hpp"

namespace rulopf {

namespace {

using Complex = std::complex<double>;

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// Polynomial with descending coefficients evaluated at p (MW): value and
// first two derivatives.
struct CostEval {
    double f = 0, df = 0, d2f = 0;
};

CostEval eval_cost(const std::vector<double>& coeffs, double p_mw) {
    CostEval out;
    for (const double c : coeffs) {
        out.d2f = out.d2f * p_mw + 2.0 * out.df;
        out.df = out.df * p_mw + out.f;
        out.f = out.f * p_mw + c;
    }
    return out;
}

// Hessian blocks of the scalar T(V) = conj(V)^T A V with respect to bus
// angles and magnitudes. Both the power-balance and the squared-flow
// Lagrangian terms reduce to this form, so one assembly serves both.
struct QuadFormHessian {
    Eigen::MatrixXcd tt, tv, vv;  // d2T/dtheta2, d2T/(dtheta dVm), d2T/dVm2
};

QuadFormHessian quad_form_hessian(const Eigen::MatrixXcd& a,
                                  const Eigen::VectorXcd& v,
                                  const Eigen::VectorXd& vm) {
    const auto n = v.size();
    const Eigen::VectorXcd p = a * v;
    const Eigen::VectorXcd q = a.transpose() * v.conjugate();
    Eigen::VectorXcd e(n);
    for (Eigen::Index i = 0; i < n; ++i) e(i) = v(i) / vm(i);

    Eigen::MatrixXcd b(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            b(i, j) = std::conj(v(i)) * a(i, j) * v(j);
    const Eigen::MatrixXcd bs = b + b.transpose();

    QuadFormHessian h;
    h.tt = bs;
    h.tv.resize(n, n);
    h.vv.resize(n, n);
    const Complex im(0, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        h.tt(i, i) -= q(i) * v(i) + std::conj(v(i)) * p(i);
        for (Eigen::Index j = 0; j < n; ++j) {
            h.tv(i, j) = im * (b(j, i) - b(i, j)) / vm(j);
            h.vv(i, j) = bs(i, j) / (vm(i) * vm(j));
        }
        h.tv(i, i) += im * (q(i) * e(i) - std::conj(e(i)) * p(i));
    }
    return h;
}

struct LimitedBranch {
    std::size_t branch_row;  // index into net.branches
    Eigen::Index f, t;       // bus indices
    Complex yff, yft, ytf, ytt;
    double rate_sq_pu;
};

// Gradient of one complex branch flow with respect to the four incident
// coordinates (theta_f, theta_t, vm_f, vm_t).
struct FlowGrad {
    Complex d_tf, d_tt, d_vf, d_vt;
};

// Interior-point solver state and problem evaluation on the reduced
// variable vector x = [va(free); vm; pg; qg; pb].
class IpmWorkspace {
public:
    IpmWorkspace(const OpfProblem& problem)
        : pb_(problem), net_(problem.net),
          n_(static_cast<Eigen::Index>(net_.buses.size())) {
        ybus_ = build_ybus(net_);
        const BusPartition parts = partition_buses(net_);
        slack_ = static_cast<Eigen::Index>(parts.slack);

        red_of_theta_.assign(static_cast<std::size_t>(n_), -1);
        Eigen::Index next = 0;
        for (Eigen::Index i = 0; i < n_; ++i)
            if (i != slack_) red_of_theta_[static_cast<std::size_t>(i)] = next++;
        nva_ = next;
        for (std::size_t g = 0; g < net_.generators.size(); ++g)
            if (net_.generators[g].in_service) gen_rows_.push_back(g);
        ng_ = static_cast<Eigen::Index>(gen_rows_.size());
        for (std::size_t b = 0; b < net_.batteries.size(); ++b)
            if (!pb_.pb_fixed[b]) batt_rows_.push_back(b);
        nbv_ = static_cast<Eigen::Index>(batt_rows_.size());
        nx_ = nva_ + n_ + 2 * ng_ + nbv_;
        neq_ = 2 * n_;

        // Loads and pinned battery dispatches are constant injections.
        s_const_ = Eigen::VectorXcd::Zero(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto& bus = net_.buses[static_cast<std::size_t>(i)];
            s_const_(i) -= Complex(bus.pd_mw, bus.qd_mvar) / net_.base_mva;
        }
        for (std::size_t b = 0; b < net_.batteries.size(); ++b)
            if (pb_.pb_fixed[b])
                s_const_(bus_of_battery(b)) +=
                    net_.batteries[b].p_b_kw / 1000.0 / net_.base_mva;

        for (std::size_t r = 0; r < net_.branches.size(); ++r) {
            const auto& br = net_.branches[r];
            if (!br.in_service || br.rate_a_mva <= 0) continue;
            LimitedBranch lb;
            lb.branch_row = r;
            lb.f = static_cast<Eigen::Index>(net_.bus_index(br.from_bus));
            lb.t = static_cast<Eigen::Index>(net_.bus_index(br.to_bus));
            const Complex ys = 1.0 / Complex(br.r_pu, br.x_pu);
            const Complex charging(0.0, 0.5 * br.b_pu);
            const double tau = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
            const Complex tap =
                std::polar(tau, br.phase_shift_deg * std::numbers::pi / 180.0);
            lb.yff = (ys + charging) / (tau * tau);
            lb.yft = -ys / std::conj(tap);
            lb.ytf = -ys / tap;
            lb.ytt = ys + charging;
            const double rate_pu = br.rate_a_mva / net_.base_mva;
            lb.rate_sq_pu = rate_pu * rate_pu;
            limited_.push_back(lb);
        }
        nflow_ = static_cast<Eigen::Index>(limited_.size());
        nh_ = 2 * n_ + 4 * ng_ + 2 * nbv_ + 2 * nflow_;
        build_labels();
    }

    Eigen::Index nx() const { return nx_; }
    Eigen::Index neq() const { return neq_; }
    Eigen::Index nh() const { return nh_; }
    const std::vector<std::string>& labels() const { return labels_; }

    Eigen::VectorXd initial_point() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nx_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto& bus = net_.buses[static_cast<std::size_t>(i)];
            x(nva_ + i) = 0.5 * (bus.v_min_pu + bus.v_max_pu);
        }
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const auto& g = net_.generators[gen_rows_[static_cast<std::size_t>(k)]];
            x(nva_ + n_ + k) =
                std::clamp(g.pg_mw, g.p_min_mw, g.p_max_mw) / net_.base_mva;
            x(nva_ + n_ + ng_ + k) =
                std::clamp(g.qg_mvar, g.q_min_mvar, g.q_max_mvar) /
                net_.base_mva;
        }
        for (Eigen::Index m = 0; m < nbv_; ++m) {
            const std::size_t b = batt_rows_[static_cast<std::size_t>(m)];
            x(nva_ + n_ + 2 * ng_ + m) =
                std::clamp(0.0, pb_.pb_min_kw[b] / 1000.0 / net_.base_mva,
                           pb_.pb_max_kw[b] / 1000.0 / net_.base_mva);
        }
        return x;
    }

    void unpack(const Eigen::VectorXd& x, Eigen::VectorXd& va,
                Eigen::VectorXd& vm) const {
        va.resize(n_);
        vm.resize(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto r = red_of_theta_[static_cast<std::size_t>(i)];
            va(i) = r < 0 ? 0.0 : x(r);
            vm(i) = x(nva_ + i);
        }
    }

    double objective(const Eigen::VectorXd& x) const {
        double f = 0;
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const std::size_t row = gen_rows_[static_cast<std::size_t>(k)];
            f += eval_cost(net_.gencosts[row].coeffs,
                           x(nva_ + n_ + k) * net_.base_mva)
                     .f;
        }
        return f;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(nx_);
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const std::size_t row = gen_rows_[static_cast<std::size_t>(k)];
            g(nva_ + n_ + k) = eval_cost(net_.gencosts[row].coeffs,
                                         x(nva_ + n_ + k) * net_.base_mva)
                                   .df *
                               net_.base_mva;
        }
        return g;
    }

    // Power-balance residuals [P; Q] p.u. and their Jacobian.
    void balance(const Eigen::VectorXd& x, Eigen::VectorXd& g,
                 Eigen::MatrixXd* jac) const {
        Eigen::VectorXd va, vm;
        unpack(x, va, vm);
        Eigen::VectorXcd v(n_);
        for (Eigen::Index i = 0; i < n_; ++i) v(i) = std::polar(vm(i), va(i));
        const Eigen::VectorXcd ibus = ybus_ * v;
        const Eigen::VectorXcd s = v.array() * ibus.conjugate().array();

        Eigen::VectorXcd resid = s - s_const_;
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const auto i = bus_of_gen(static_cast<std::size_t>(k));
            resid(i) -= Complex(x(nva_ + n_ + k), x(nva_ + n_ + ng_ + k));
        }
        for (Eigen::Index m = 0; m < nbv_; ++m)
            resid(bus_of_battery(batt_rows_[static_cast<std::size_t>(m)])) -=
                x(nva_ + n_ + 2 * ng_ + m);

        g.resize(neq_);
        g.head(n_) = resid.real();
        g.tail(n_) = resid.imag();
        if (!jac) return;

        // dS/dVa and dS/dVm in full bus coordinates.
        Eigen::MatrixXcd ds_dva(n_, n_), ds_dvm(n_, n_);
        const Complex im(0, 1);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index k = 0; k < n_; ++k) {
                if (i == k) {
                    ds_dva(i, k) = im * v(i) *
                                   std::conj(ibus(i) - ybus_(i, i) * v(i));
                    ds_dvm(i, k) = std::conj(ibus(i)) * (v(i) / vm(i)) +
                                   v(i) * std::conj(ybus_(i, i) * v(i) / vm(i));
                } else {
                    ds_dva(i, k) = -im * v(i) * std::conj(ybus_(i, k) * v(k));
                    ds_dvm(i, k) = v(i) * std::conj(ybus_(i, k) * v(k) / vm(k));
                }
            }

        jac->setZero(neq_, nx_);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index k = 0; k < n_; ++k) {
                const auto r = red_of_theta_[static_cast<std::size_t>(k)];
                if (r >= 0) {
                    (*jac)(i, r) = ds_dva(i, k).real();
                    (*jac)(n_ + i, r) = ds_dva(i, k).imag();
                }
                (*jac)(i, nva_ + k) = ds_dvm(i, k).real();
                (*jac)(n_ + i, nva_ + k) = ds_dvm(i, k).imag();
            }
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const auto i = bus_of_gen(static_cast<std::size_t>(k));
            (*jac)(i, nva_ + n_ + k) = -1.0;
            (*jac)(n_ + i, nva_ + n_ + ng_ + k) = -1.0;
        }
        for (Eigen::Index m = 0; m < nbv_; ++m)
            (*jac)(bus_of_battery(batt_rows_[static_cast<std::size_t>(m)]),
                   nva_ + n_ + 2 * ng_ + m) = -1.0;
    }

    // Inequalities h(x) <= 0 and their Jacobian.
    void inequalities(const Eigen::VectorXd& x, Eigen::VectorXd& h,
                      Eigen::MatrixXd* jac) const {
        Eigen::VectorXd va, vm;
        unpack(x, va, vm);
        h.resize(nh_);
        if (jac) jac->setZero(nh_, nx_);

        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < n_; ++i, ++r) {
            h(r) = vm(i) - net_.buses[static_cast<std::size_t>(i)].v_max_pu;
            if (jac) (*jac)(r, nva_ + i) = 1.0;
        }
        for (Eigen::Index i = 0; i < n_; ++i, ++r) {
            h(r) = net_.buses[static_cast<std::size_t>(i)].v_min_pu - vm(i);
            if (jac) (*jac)(r, nva_ + i) = -1.0;
        }
        const auto bound_pair = [&](Eigen::Index col, double lo, double hi) {
            h(r) = x(col) - hi;
            if (jac) (*jac)(r, col) = 1.0;
            ++r;
            h(r) = lo - x(col);
            if (jac) (*jac)(r, col) = -1.0;
            ++r;
        };
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const auto& g = net_.generators[gen_rows_[static_cast<std::size_t>(k)]];
            bound_pair(nva_ + n_ + k, g.p_min_mw / net_.base_mva,
                       g.p_max_mw / net_.base_mva);
        }
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const auto& g = net_.generators[gen_rows_[static_cast<std::size_t>(k)]];
            bound_pair(nva_ + n_ + ng_ + k, g.q_min_mvar / net_.base_mva,
                       g.q_max_mvar / net_.base_mva);
        }
        for (Eigen::Index m = 0; m < nbv_; ++m) {
            const std::size_t b = batt_rows_[static_cast<std::size_t>(m)];
            bound_pair(nva_ + n_ + 2 * ng_ + m,
                       pb_.pb_min_kw[b] / 1000.0 / net_.base_mva,
                       pb_.pb_max_kw[b] / 1000.0 / net_.base_mva);
        }

        Eigen::VectorXcd v(n_);
        for (Eigen::Index i = 0; i < n_; ++i) v(i) = std::polar(vm(i), va(i));
        for (const auto& lb : limited_) {
            Complex s_flow;
            FlowGrad grad;
            flow_and_grad(lb, v, vm, /*from_side=*/true, s_flow, grad);
            write_flow_row(h, jac, r++, lb, s_flow, grad, lb.f, lb.t);
            flow_and_grad(lb, v, vm, /*from_side=*/false, s_flow, grad);
            write_flow_row(h, jac, r++, lb, s_flow, grad, lb.t, lb.f);
        }
    }

    // Hessian of f + nu^T g + lam^T h with respect to x.
    Eigen::MatrixXd lagrangian_hessian(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& nu,
                                       const Eigen::VectorXd& lam) const {
        Eigen::VectorXd va, vm;
        unpack(x, va, vm);
        Eigen::VectorXcd v(n_);
        for (Eigen::Index i = 0; i < n_; ++i) v(i) = std::polar(vm(i), va(i));

        // Every voltage-dependent second-order term is conj(V)^T A V for a
        // suitable A; accumulate A, then expand once.
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n_, n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const Complex lam_c(nu(i), -nu(n_ + i));
            for (Eigen::Index j = 0; j < n_; ++j)
                a(j, i) += std::conj(ybus_(i, j)) * lam_c;
        }

        Eigen::MatrixXd h_vv = Eigen::MatrixXd::Zero(2 * n_, 2 * n_);
        const Eigen::Index flow_base = 2 * n_ + 4 * ng_ + 2 * nbv_;
        for (Eigen::Index b = 0; b < nflow_; ++b) {
            const auto& lb = limited_[static_cast<std::size_t>(b)];
            for (const bool from_side : {true, false}) {
                const double mu = lam(flow_base + 2 * b + (from_side ? 0 : 1));
                if (mu == 0.0) continue;
                Complex s_flow;
                FlowGrad grad;
                flow_and_grad(lb, v, vm, from_side, s_flow, grad);
                const Eigen::Index bf = from_side ? lb.f : lb.t;
                const Eigen::Index bt = from_side ? lb.t : lb.f;
                // First-order (outer-product) part of d2|S|^2.
                const Complex gvec[4] = {grad.d_tf, grad.d_tt, grad.d_vf,
                                         grad.d_vt};
                const Eigen::Index coord[4] = {bf, bt, n_ + bf, n_ + bt};
                for (int p = 0; p < 4; ++p)
                    for (int q = 0; q < 4; ++q)
                        h_vv(coord[p], coord[q]) +=
                            2.0 * mu *
                            (std::conj(gvec[p]) * gvec[q]).real();
                // Curvature of S itself, folded into the quadratic form.
                const Complex m_tilde = 2.0 * mu * std::conj(s_flow);
                const Complex yf1 = from_side ? lb.yff : lb.ytt;
                const Complex yf2 = from_side ? lb.yft : lb.ytf;
                a(bf, bf) += std::conj(yf1) * m_tilde;
                a(bt, bf) += std::conj(yf2) * m_tilde;
            }
        }

        const QuadFormHessian qf = quad_form_hessian(a, v, vm);
        h_vv.topLeftCorner(n_, n_) += qf.tt.real();
        h_vv.topRightCorner(n_, n_) += qf.tv.real();
        h_vv.bottomLeftCorner(n_, n_) += qf.tv.real().transpose();
        h_vv.bottomRightCorner(n_, n_) += qf.vv.real();

        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(nx_, nx_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto ri = red_of_theta_[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < n_; ++j) {
                const auto rj = red_of_theta_[static_cast<std::size_t>(j)];
                if (ri >= 0 && rj >= 0) hess(ri, rj) = h_vv(i, j);
                if (ri >= 0) hess(ri, nva_ + j) = h_vv(i, n_ + j);
                if (rj >= 0) hess(nva_ + i, rj) = h_vv(n_ + i, j);
                hess(nva_ + i, nva_ + j) = h_vv(n_ + i, n_ + j);
            }
        }
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const std::size_t row = gen_rows_[static_cast<std::size_t>(k)];
            hess(nva_ + n_ + k, nva_ + n_ + k) =
                eval_cost(net_.gencosts[row].coeffs,
                          x(nva_ + n_ + k) * net_.base_mva)
                    .d2f *
                net_.base_mva * net_.base_mva;
        }
        return hess;
    }

    void fill_solution(const Eigen::VectorXd& x, OpfSolution& sol) const {
        Eigen::VectorXd va, vm;
        unpack(x, va, vm);
        sol.vm_pu = vm;
        sol.va_rad = va;
        sol.pg_mw.assign(net_.generators.size(), 0.0);
        sol.qg_mvar.assign(net_.generators.size(), 0.0);
        for (Eigen::Index k = 0; k < ng_; ++k) {
            const std::size_t row = gen_rows_[static_cast<std::size_t>(k)];
            sol.pg_mw[row] = x(nva_ + n_ + k) * net_.base_mva;
            sol.qg_mvar[row] = x(nva_ + n_ + ng_ + k) * net_.base_mva;
        }
        sol.pb_kw.assign(net_.batteries.size(), 0.0);
        for (std::size_t b = 0; b < net_.batteries.size(); ++b)
            if (pb_.pb_fixed[b]) sol.pb_kw[b] = net_.batteries[b].p_b_kw;
        for (Eigen::Index m = 0; m < nbv_; ++m)
            sol.pb_kw[batt_rows_[static_cast<std::size_t>(m)]] =
                x(nva_ + n_ + 2 * ng_ + m) * net_.base_mva * 1000.0;
        sol.objective_per_hour = objective(x);
    }

private:
    Eigen::Index bus_of_gen(std::size_t k) const {
        return static_cast<Eigen::Index>(
            net_.bus_index(net_.generators[gen_rows_[k]].bus));
    }
    Eigen::Index bus_of_battery(std::size_t b) const {
        return static_cast<Eigen::Index>(
            net_.bus_index(net_.batteries[b].bus));
    }

    void flow_and_grad(const LimitedBranch& lb, const Eigen::VectorXcd& v,
                       const Eigen::VectorXd& vm, bool from_side,
                       Complex& s_flow, FlowGrad& grad) const {
        const Eigen::Index bf = from_side ? lb.f : lb.t;
        const Eigen::Index bt = from_side ? lb.t : lb.f;
        const Complex y1 = from_side ? lb.yff : lb.ytt;
        const Complex y2 = from_side ? lb.yft : lb.ytf;
        const Complex i_flow = y1 * v(bf) + y2 * v(bt);
        s_flow = v(bf) * std::conj(i_flow);
        const Complex im(0, 1);
        const Complex cross = v(bf) * std::conj(y2 * v(bt));
        grad.d_tf = im * cross;
        grad.d_tt = -im * cross;
        grad.d_vf = (v(bf) / vm(bf)) * std::conj(i_flow) +
                    v(bf) * std::conj(y1 * v(bf) / vm(bf));
        grad.d_vt = v(bf) * std::conj(y2 * v(bt) / vm(bt));
    }

    void write_flow_row(Eigen::VectorXd& h, Eigen::MatrixXd* jac,
                        Eigen::Index row, const LimitedBranch& lb,
                        Complex s_flow, const FlowGrad& grad, Eigen::Index bf,
                        Eigen::Index bt) const {
        h(row) = std::norm(s_flow) - lb.rate_sq_pu;
        if (!jac) return;
        const Complex sc = std::conj(s_flow);
        const auto add = [&](Eigen::Index full_theta, Complex ds) {
            const auto r = red_of_theta_[static_cast<std::size_t>(full_theta)];
            if (r >= 0) (*jac)(row, r) += 2.0 * (sc * ds).real();
        };
        add(bf, grad.d_tf);
        add(bt, grad.d_tt);
        (*jac)(row, nva_ + bf) += 2.0 * (sc * grad.d_vf).real();
        (*jac)(row, nva_ + bt) += 2.0 * (sc * grad.d_vt).real();
    }

    void build_labels() {
        labels_.reserve(static_cast<std::size_t>(nh_));
        for (const auto& b : net_.buses)
            labels_.push_back(fmt("vm_max[bus %d]", b.id));
        for (const auto& b : net_.buses)
            labels_.push_back(fmt("vm_min[bus %d]", b.id));
        const auto gen_pairs = [&](const char* hi_tag, const char* lo_tag) {
            for (const std::size_t row : gen_rows_) {
                labels_.push_back(
                    fmt("%s[gen%zu bus %d]", hi_tag, row,
                        net_.generators[row].bus));
                labels_.push_back(
                    fmt("%s[gen%zu bus %d]", lo_tag, row,
                        net_.generators[row].bus));
            }
        };
        gen_pairs("pg_max", "pg_min");
        gen_pairs("qg_max", "qg_min");
        for (const std::size_t b : batt_rows_) {
            labels_.push_back(fmt("pb_max[bus %d]", net_.batteries[b].bus));
            labels_.push_back(fmt("pb_min[bus %d]", net_.batteries[b].bus));
        }
        for (const auto& lb : limited_) {
            const auto& br = net_.branches[lb.branch_row];
            labels_.push_back(
                fmt("sf_max[%d-%d]", br.from_bus, br.to_bus));
            labels_.push_back(
                fmt("st_max[%d-%d]", br.from_bus, br.to_bus));
        }
    }

    const OpfProblem& pb_;
    const NetworkCase& net_;
    Eigen::Index n_, nva_ = 0, ng_ = 0, nbv_ = 0, nx_ = 0, neq_ = 0, nh_ = 0,
                 nflow_ = 0, slack_ = 0;
    Eigen::MatrixXcd ybus_;
    Eigen::VectorXcd s_const_;
    std::vector<Eigen::Index> red_of_theta_;
    std::vector<std::size_t> gen_rows_, batt_rows_;
    std::vector<LimitedBranch> limited_;
    std::vector<std::string> labels_;
};

} // namespace

OpfMode opf_mode_from_string(const std::string& name) {
    if (name == "case1") return OpfMode::case1;
    if (name == "case2") return OpfMode::case2;
    throw ParamError("unknown dispatch mode '" + name +
                     "' (expected case1 or case2)");
}

std::string to_string(OpfMode mode) {
    return mode == OpfMode::case1 ? "case1" : "case2";
}

OpfProblem build_problem(const NetworkCase& base,
                         const std::vector<BatteryDevice>& devices,
                         OpfMode mode) {
    OpfProblem p;
    p.mode = mode;
    std::vector<BatteryDevice> attach = devices;
    for (auto& d : attach) {
        if (mode == OpfMode::case1) {
            d.has_box = false;  // nameplate limits, no voltage tightening
        } else if (!d.has_box) {
            throw MissingConstraints(
                "case2 dispatch requires box-derived constraints for the "
                "battery at bus " +
                std::to_string(d.bus));
        }
    }
    NetworkCase bare = base;
    bare.batteries.clear();
    p.net = attach_batteries(bare, attach);

    for (const auto& d : p.net.batteries) {
        double lo_kw, hi_kw;
        if (mode == OpfMode::case1) {
            const double volts = static_cast<double>(d.n_cells) *
                                 default_cell_params().nominal_voltage_v;
            lo_kw = -volts * d.i_charge_max_a / 1000.0;
            hi_kw = volts * d.i_discharge_max_a / 1000.0;
        } else {
            lo_kw = -d.constraints.p_charge_max_kw;
            hi_kw = d.constraints.p_discharge_max_kw;
        }
        p.pb_min_kw.push_back(lo_kw);
        p.pb_max_kw.push_back(hi_kw);
        p.pb_fixed.push_back(hi_kw - lo_kw < 1e-12);
    }
    return p;
}

OpfSolution solve_opf(const OpfProblem& problem, const OpfOptions& opt) {
    if (opt.tol <= 0) throw ParamError("tol must be positive");
    if (opt.max_iter < 1) throw ParamError("max_iter must be >= 1");
    problem.net.validate();
    if (problem.pb_min_kw.size() != problem.net.batteries.size() ||
        problem.pb_max_kw.size() != problem.net.batteries.size() ||
        problem.pb_fixed.size() != problem.net.batteries.size())
        throw ParamError("battery bound arrays misaligned with devices");
    for (std::size_t b = 0; b < problem.net.batteries.size(); ++b) {
        if (problem.pb_fixed[b] &&
            std::abs(problem.net.batteries[b].p_b_kw) > 1e-12)
            throw ParamError("pinned battery carries nonzero dispatch");
        if (problem.pb_min_kw[b] > problem.pb_max_kw[b])
            throw ParamError("battery power bounds inverted");
    }

    const IpmWorkspace ws(problem);
    const Eigen::Index nx = ws.nx(), neq = ws.neq(), nh = ws.nh();

    Eigen::VectorXd x = ws.initial_point();
    Eigen::VectorXd g, h;
    Eigen::MatrixXd jg, jh;
    ws.balance(x, g, &jg);
    ws.inequalities(x, h, &jh);

    Eigen::VectorXd z(nh), lam(nh);
    for (Eigen::Index i = 0; i < nh; ++i) {
        z(i) = std::max(1.0, -h(i));
        lam(i) = std::max(1.0, 1.0 / z(i));
    }
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(neq);

    OpfSolution sol;
    double f_prev = ws.objective(x);
    const double ftb = opt.step_scale;

    for (int iter = 0;; ++iter) {
        ws.balance(x, g, &jg);
        ws.inequalities(x, h, &jh);
        const double f = ws.objective(x);
        const Eigen::VectorXd lx =
            ws.gradient(x) + jg.transpose() * nu + jh.transpose() * lam;

        const double feascond =
            std::max(g.cwiseAbs().maxCoeff(), std::max(0.0, h.maxCoeff())) /
            (1.0 + std::max(x.cwiseAbs().maxCoeff(), z.maxCoeff()));
        const double gradcond =
            lx.cwiseAbs().maxCoeff() /
            (1.0 + std::max(lam.maxCoeff(), nu.cwiseAbs().maxCoeff()));
        const double compcond = z.dot(lam) / (1.0 + x.cwiseAbs().maxCoeff());
        const double costcond = std::abs(f - f_prev) / (1.0 + std::abs(f_prev));
        f_prev = f;

        sol.iterations = iter;
        sol.kkt_residual = std::max({feascond, gradcond, compcond});
        if (feascond < opt.tol && gradcond < opt.tol && compcond < opt.tol &&
            costcond < opt.tol) {
            sol.converged = true;
            break;
        }
        if (iter >= opt.max_iter) break;  // flagged best iterate

        const double mu = opt.sigma * z.dot(lam) / static_cast<double>(nh);
        const Eigen::VectorXd r2 = h + z;
        const Eigen::VectorXd r3 =
            z.cwiseProduct(lam) - Eigen::VectorXd::Constant(nh, mu);

        const Eigen::VectorXd zinv_lam = lam.cwiseQuotient(z);
        const Eigen::MatrixXd m_mat =
            ws.lagrangian_hessian(x, nu, lam) +
            jh.transpose() * zinv_lam.asDiagonal() * jh;
        const Eigen::VectorXd n_vec =
            lx + jh.transpose() *
                     ((lam.cwiseProduct(r2) - r3).cwiseQuotient(z));

        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nx + neq, nx + neq);
        kkt.topLeftCorner(nx, nx) = m_mat;
        kkt.topRightCorner(nx, neq) = jg.transpose();
        kkt.bottomLeftCorner(neq, nx) = jg;
        Eigen::VectorXd rhs(nx + neq);
        rhs.head(nx) = -n_vec;
        rhs.tail(neq) = -g;

        // The KKT matrix becomes extremely ill-conditioned near convergence,
        // so rank detection by pivot threshold misfires; judge solvability by
        // the refined solve residual instead.
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        Eigen::VectorXd step = lu.solve(rhs);
        step += lu.solve(rhs - kkt * step);
        const double resid = (kkt * step - rhs).cwiseAbs().maxCoeff();
        if (!step.allFinite() ||
            resid > 1e-4 * (1.0 + rhs.cwiseAbs().maxCoeff()))
            throw SingularKkt("KKT matrix is singular at iteration " +
                              std::to_string(iter));
        const Eigen::VectorXd dx = step.head(nx);
        const Eigen::VectorXd dnu = step.tail(neq);
        const Eigen::VectorXd dz = -r2 - jh * dx;
        const Eigen::VectorXd dlam =
            (-r3 - lam.cwiseProduct(dz)).cwiseQuotient(z);

        double alpha_p = 1.0, alpha_d = 1.0;
        for (Eigen::Index i = 0; i < nh; ++i) {
            if (dz(i) < 0) alpha_p = std::min(alpha_p, -ftb * z(i) / dz(i));
            if (dlam(i) < 0)
                alpha_d = std::min(alpha_d, -ftb * lam(i) / dlam(i));
        }
        x += alpha_p * dx;
        z += alpha_p * dz;
        lam += alpha_d * dlam;
        nu += alpha_d * dnu;
        if (!x.allFinite() || !z.allFinite() || !lam.allFinite() ||
            !nu.allFinite())
            throw Infeasible("interior-point iterate became non-finite");
    }

    ws.fill_solution(x, sol);
    ws.inequalities(x, h, nullptr);
    ws.balance(x, g, nullptr);
    sol.h_values.assign(h.data(), h.data() + h.size());
    sol.h_multipliers.assign(lam.data(), lam.data() + lam.size());
    sol.eq_residuals.assign(g.data(), g.data() + g.size());
    sol.eq_multipliers.assign(nu.data(), nu.data() + nu.size());
    sol.h_labels = ws.labels();
    for (Eigen::Index i = 0; i < nh; ++i)
        if (h(i) > -1e-5 && lam(i) > 1e-4)
            sol.binding.push_back(static_cast<std::size_t>(i));
    return sol;
}

std::vector<double> verify_rul(const OpfSolution& sol,
                               const std::vector<BatteryDevice>& batteries,
                               const CellParams& params) {
    if (sol.pb_kw.size() != batteries.size())
        throw ParamError("dispatch entries misaligned with battery devices");
    std::vector<double> out;
    out.reserve(batteries.size());
    for (std::size_t b = 0; b < batteries.size(); ++b) {
        const auto& d = batteries[b];
        const double p_kw = std::abs(sol.pb_kw[b]);
        if (p_kw < 1e-12) {
            out.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        double amps = p_kw * 1000.0 /
                      (static_cast<double>(d.n_cells) *
                       params.nominal_voltage_v);
        OperatingLimits lim;
        lim.soc_min = d.soc_min;
        lim.soc_max = d.soc_max;
        lim.i_charge_a =
            d.i_charge_max_a > 0 ? std::min(amps, d.i_charge_max_a) : amps;
        lim.i_discharge_a = d.i_discharge_max_a > 0
                                ? std::min(amps, d.i_discharge_max_a)
                                : amps;
        const CellState state = state_from_efc(d.initial_efc, params);
        out.push_back(simulate_to_eol(state, params, lim).rul_hours);
    }
    return out;
}

std::string opf_solution_to_json(const NetworkCase& net,
                                 const OpfSolution& sol) {
    nlohmann::json j;
    j["objective_per_hour"] = sol.objective_per_hour;
    j["kkt_residual"] = sol.kkt_residual;
    j["iterations"] = sol.iterations;
    j["converged"] = sol.converged;
    j["bus"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < sol.vm_pu.size(); ++i)
        j["bus"].push_back(
            {{"id", net.buses[static_cast<std::size_t>(i)].id},
             {"vm_pu", sol.vm_pu(i)},
             {"va_rad", sol.va_rad(i)}});
    j["gen"] = nlohmann::json::array();
    for (std::size_t g = 0; g < net.generators.size(); ++g)
        j["gen"].push_back({{"bus", net.generators[g].bus},
                            {"pg_mw", sol.pg_mw[g]},
                            {"qg_mvar", sol.qg_mvar[g]}});
    j["battery"] = nlohmann::json::array();
    for (std::size_t b = 0; b < net.batteries.size(); ++b)
        j["battery"].push_back(
            {{"bus", net.batteries[b].bus}, {"p_b_kw", sol.pb_kw[b]}});
    j["binding"] = nlohmann::json::array();
    for (const std::size_t i : sol.binding)
        j["binding"].push_back(sol.h_labels[i]);
    return j.dump(2);
}

std::string opf_bus_csv(const NetworkCase& net, const OpfSolution& sol) {
    std::string out = "bus,vm_pu,va_deg\n";
    for (Eigen::Index i = 0; i < sol.vm_pu.size(); ++i)
        out += fmt("%d,%.10g,%.10g\n",
                   net.buses[static_cast<std::size_t>(i)].id, sol.vm_pu(i),
                   sol.va_rad(i) * 180.0 / std::numbers::pi);
    return out;
}

std::string opf_gen_csv(const NetworkCase& net, const OpfSolution& sol) {
    std::string out = "bus,pg_mw,qg_mvar\n";
    for (std::size_t g = 0; g < net.generators.size(); ++g)
        out += fmt("%d,%.10g,%.10g\n", net.generators[g].bus, sol.pg_mw[g],
                   sol.qg_mvar[g]);
    return out;
}

std::string comparison_csv(const OpfProblem& p1, const OpfSolution& s1,
                           const std::vector<double>& rul1,
                           const OpfProblem& p2, const OpfSolution& s2,
                           const std::vector<double>& rul2) {
    if (p1.net.batteries.size() != p2.net.batteries.size() ||
        rul1.size() != p1.net.batteries.size() ||
        rul2.size() != p2.net.batteries.size())
        throw ParamError("comparison inputs misaligned");
    std::string out = "metric,bus," + to_string(p1.mode) + "," +
                      to_string(p2.mode) + "\n";
    out += fmt("objective_per_hour,,%.10g,%.10g\n", s1.objective_per_hour,
               s2.objective_per_hour);
    for (std::size_t b = 0; b < p1.net.batteries.size(); ++b) {
        const int bus = p1.net.batteries[b].bus;
        const auto i1 = p1.net.bus_index(bus);
        const auto i2 = p2.net.bus_index(bus);
        out += fmt("p_b_kw,%d,%.10g,%.10g\n", bus, s1.pb_kw[b], s2.pb_kw[b]);
        out += fmt("p_discharge_bound_kw,%d,%.10g,%.10g\n", bus,
                   p1.pb_max_kw[b], p2.pb_max_kw[b]);
        out += fmt("vm_pu,%d,%.10g,%.10g\n", bus,
                   s1.vm_pu(static_cast<Eigen::Index>(i1)),
                   s2.vm_pu(static_cast<Eigen::Index>(i2)));
        out += fmt("v_max_pu,%d,%.10g,%.10g\n", bus,
                   p1.net.buses[i1].v_max_pu, p2.net.buses[i2].v_max_pu);
        out += fmt("rul_hours,%d,%.10g,%.10g\n", bus, rul1[b], rul2[b]);
    }
    return out;
}

} // namespace rulopf
