#include "rulopf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "rulopf/errors.hpp"

namespace rulopf {

namespace {

constexpr double kFpMin = 1e-300;

/// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 3e-16) break;
    }
    return h;
}

/// Regularized incomplete beta I_x(a, b).
double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                            std::lgamma(b) + a * std::log(x) +
                            b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::size_t coeff_count(int degree) {
    return static_cast<std::size_t>((degree + 1) * (degree + 2)) / 2;
}

/// Monomial basis at a standardized point, ordered 1, x, y, x^2, xy, y^2, ...
Eigen::RowVectorXd monomials(double x, double y, int degree) {
    Eigen::RowVectorXd row((degree + 1) * (degree + 2) / 2);
    Eigen::Index k = 0;
    for (int t = 0; t <= degree; ++t)
        for (int i = t; i >= 0; --i)
            row(k++) = std::pow(x, i) * std::pow(y, t - i);
    return row;
}

double record_field(const ScenarioRecord& r, SurfaceInput which) {
    switch (which) {
        case SurfaceInput::v_max: return r.v_max;
        case SurfaceInput::v_min: return r.v_min;
        case SurfaceInput::i_charge: return r.limits.i_charge_a;
        case SurfaceInput::i_discharge: return r.limits.i_discharge_a;
    }
    throw ParamError("unknown surface input");
}

const char* input_name(SurfaceInput which) {
    switch (which) {
        case SurfaceInput::v_max: return "v_max";
        case SurfaceInput::v_min: return "v_min";
        case SurfaceInput::i_charge: return "i_charge_A";
        case SurfaceInput::i_discharge: return "i_discharge_A";
    }
    return "?";
}

} // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw DegenerateInput("pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw DegenerateInput("pearson: need at least 3 samples");
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
        throw DegenerateInput("pearson: zero variance sample");
    return sxy / std::sqrt(sxx * syy);
}

double student_t_cdf(double t, double nu) {
    if (!(nu > 0)) throw DegenerateInput("student_t_cdf: nu must be positive");
    const double x = nu / (nu + t * t);
    const double tail_half = 0.5 * ibeta(0.5 * nu, 0.5, x);
    return t >= 0.0 ? 1.0 - tail_half : tail_half;
}

double p_value(double r, std::size_t n) {
    if (n < 3) throw DegenerateInput("p_value: need n >= 3");
    if (!(std::abs(r) < 1.0))
        throw DegenerateInput("p_value: |r| must be < 1");
    const double nu = static_cast<double>(n - 2);
    const double t2 = r * r * nu / (1.0 - r * r);
    // Two-sided tail mass of the t distribution beyond |t|.
    return ibeta(0.5 * nu, 0.5, nu / (nu + t2));
}

std::vector<CorrelationReport> correlation_table(
    const std::vector<ScenarioRecord>& records) {
    if (records.size() < 3)
        throw DegenerateInput("correlation_table: need at least 3 records");
    std::vector<double> rul, vmax, vmin, dv;
    rul.reserve(records.size());
    for (const auto& r : records) {
        rul.push_back(r.rul_hours);
        vmax.push_back(r.v_max);
        vmin.push_back(r.v_min);
        dv.push_back(r.v_max - r.v_min);
    }
    std::vector<CorrelationReport> table;
    const std::pair<const char*, const std::vector<double>*> rows[] = {
        {"v_max", &vmax}, {"v_min", &vmin}, {"delta_v", &dv}};
    for (const auto& [name, xs] : rows) {
        CorrelationReport rep;
        rep.variable = name;
        rep.n = records.size();
        rep.pearson_r = pearson(*xs, rul);
        rep.p_value = p_value(rep.pearson_r, rep.n);
        table.push_back(rep);
    }
    return table;
}

FittedSurface fit_surface_xyz(const std::vector<double>& xs,
                              const std::vector<double>& ys,
                              const std::vector<double>& zs, int degree,
                              const std::string& x_name,
                              const std::string& y_name,
                              const std::string& response_name) {
    if (degree < 0) throw ParamError("fit_surface: negative degree");
    if (xs.size() != ys.size() || xs.size() != zs.size())
        throw DegenerateInput("fit_surface: length mismatch");
    const std::size_t n = xs.size();
    const std::size_t m = coeff_count(degree);
    if (n < m)
        throw DegenerateInput("fit_surface: fewer samples than coefficients");

    FittedSurface s;
    s.x_name = x_name;
    s.y_name = y_name;
    s.response_name = response_name;
    s.degree = degree;

    s.x_mean = mean_of(xs);
    s.y_mean = mean_of(ys);
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += (xs[i] - s.x_mean) * (xs[i] - s.x_mean);
        sy += (ys[i] - s.y_mean) * (ys[i] - s.y_mean);
    }
    sx = std::sqrt(sx / static_cast<double>(n));
    sy = std::sqrt(sy / static_cast<double>(n));
    s.x_scale = sx > 0 ? sx : 1.0;
    s.y_scale = sy > 0 ? sy : 1.0;

    Eigen::MatrixXd design(n, m);
    Eigen::VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (xs[i] - s.x_mean) / s.x_scale;
        const double v = (ys[i] - s.y_mean) / s.y_scale;
        design.row(static_cast<Eigen::Index>(i)) = monomials(u, v, degree);
        z(static_cast<Eigen::Index>(i)) = zs[i];
    }

    const Eigen::MatrixXd ata = design.transpose() * design;
    const Eigen::VectorXd atz = design.transpose() * z;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ata);
    lu.setThreshold(1e-10);
    if (lu.rank() < static_cast<Eigen::Index>(m))
        throw RankDeficient("fit_surface: singular design matrix");
    s.coeffs = lu.solve(atz);

    const Eigen::VectorXd resid = design * s.coeffs - z;
    s.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n));

    s.x_lo = *std::min_element(xs.begin(), xs.end());
    s.x_hi = *std::max_element(xs.begin(), xs.end());
    s.y_lo = *std::min_element(ys.begin(), ys.end());
    s.y_hi = *std::max_element(ys.begin(), ys.end());
    return s;
}

FittedSurface fit_surface(const std::vector<ScenarioRecord>& records,
                          SurfaceInput x, SurfaceInput y,
                          SurfaceResponse response, int degree) {
    if (x == y) throw ParamError("fit_surface: inputs must be distinct");
    std::vector<double> xs, ys, zs;
    xs.reserve(records.size());
    ys.reserve(records.size());
    zs.reserve(records.size());
    for (const auto& r : records) {
        xs.push_back(record_field(r, x));
        ys.push_back(record_field(r, y));
        if (response == SurfaceResponse::ln_rul) {
            if (!(r.rul_hours > 0))
                throw DegenerateInput("fit_surface: ln of non-positive RUL");
            zs.push_back(std::log(r.rul_hours));
        } else {
            zs.push_back(r.rul_hours);
        }
    }
    return fit_surface_xyz(xs, ys, zs, degree, input_name(x), input_name(y),
                           response == SurfaceResponse::ln_rul ? "ln_rul" : "rul");
}

double evaluate(const FittedSurface& s, double x, double y) {
    const double tol_x = 1e-9 * (std::abs(s.x_hi - s.x_lo) + 1.0);
    const double tol_y = 1e-9 * (std::abs(s.y_hi - s.y_lo) + 1.0);
    if (x < s.x_lo - tol_x || x > s.x_hi + tol_x || y < s.y_lo - tol_y ||
        y > s.y_hi + tol_y)
        throw OutOfDomain("evaluate: point outside fitted domain");
    if (static_cast<std::size_t>(s.coeffs.size()) != coeff_count(s.degree))
        throw ParamError("evaluate: coefficient count mismatch");
    return monomials((x - s.x_mean) / s.x_scale, (y - s.y_mean) / s.y_scale,
                     s.degree) *
           s.coeffs;
}

double predicted_rul(const FittedSurface& s, double x, double y) {
    const double z = evaluate(s, x, y);
    return s.response_name == "ln_rul" ? std::exp(z) : z;
}

std::string correlation_table_to_csv(
    const std::vector<CorrelationReport>& table) {
    std::string out = "variable,pearson_r,p_value,n\n";
    char buf[128];
    for (const auto& rep : table) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%zu\n",
                      rep.variable.c_str(), rep.pearson_r, rep.p_value, rep.n);
        out += buf;
    }
    return out;
}

std::string surface_to_json(const FittedSurface& s) {
    nlohmann::json j;
    j["x_name"] = s.x_name;
    j["y_name"] = s.y_name;
    j["response_name"] = s.response_name;
    j["degree"] = s.degree;
    j["coeffs"] = std::vector<double>(s.coeffs.data(),
                                      s.coeffs.data() + s.coeffs.size());
    j["x_mean"] = s.x_mean;
    j["x_scale"] = s.x_scale;
    j["y_mean"] = s.y_mean;
    j["y_scale"] = s.y_scale;
    j["residual_rms"] = s.residual_rms;
    j["domain"] = {{"x_lo", s.x_lo},
                   {"x_hi", s.x_hi},
                   {"y_lo", s.y_lo},
                   {"y_hi", s.y_hi}};
    return j.dump(2);
}

FittedSurface surface_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad surface JSON: ") + e.what());
    }
    FittedSurface s;
    try {
        s.x_name = j.at("x_name").get<std::string>();
        s.y_name = j.at("y_name").get<std::string>();
        s.response_name = j.at("response_name").get<std::string>();
        s.degree = j.at("degree").get<int>();
        const auto coeffs = j.at("coeffs").get<std::vector<double>>();
        s.coeffs = Eigen::Map<const Eigen::VectorXd>(
            coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
        s.x_mean = j.at("x_mean").get<double>();
        s.x_scale = j.at("x_scale").get<double>();
        s.y_mean = j.at("y_mean").get<double>();
        s.y_scale = j.at("y_scale").get<double>();
        s.residual_rms = j.at("residual_rms").get<double>();
        s.x_lo = j.at("domain").at("x_lo").get<double>();
        s.x_hi = j.at("domain").at("x_hi").get<double>();
        s.y_lo = j.at("domain").at("y_lo").get<double>();
        s.y_hi = j.at("domain").at("y_hi").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad surface JSON: ") + e.what());
    }
    if (static_cast<std::size_t>(s.coeffs.size()) != coeff_count(s.degree))
        throw ParamError("bad surface JSON: coefficient count mismatch");
    return s;
}

} // namespace rulopf
