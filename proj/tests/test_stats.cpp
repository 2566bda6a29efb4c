#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rulopf/errors.hpp"
#include "rulopf/mc.hpp"
#include "rulopf/presets.hpp"
#include "rulopf/stats.hpp"

using namespace rulopf;

namespace {

// Student-t CDF by trapezoid integration of the density, independent of the
// incomplete-beta implementation under test.
double t_cdf_oracle(double t, double nu) {
    const double ln_norm = std::lgamma(0.5 * (nu + 1.0)) -
                           std::lgamma(0.5 * nu) -
                           0.5 * std::log(nu * M_PI);
    auto density = [&](double u) {
        return std::exp(ln_norm -
                        0.5 * (nu + 1.0) * std::log1p(u * u / nu));
    };
    const double hi = std::abs(t);
    const int steps = 200000;
    const double h = hi / steps;
    double integral = 0.5 * (density(0.0) + density(hi));
    for (int i = 1; i < steps; ++i) integral += density(i * h);
    integral *= h;
    return t >= 0.0 ? 0.5 + integral : 0.5 - integral;
}

std::vector<ScenarioRecord> synthetic_records(
    const std::vector<double>& vmax, const std::vector<double>& vmin,
    const std::vector<double>& rul) {
    std::vector<ScenarioRecord> recs(rul.size());
    for (std::size_t i = 0; i < rul.size(); ++i) {
        recs[i].scenario_id = i;
        recs[i].v_max = vmax[i];
        recs[i].v_min = vmin[i];
        recs[i].rul_hours = rul[i];
    }
    return recs;
}

} // namespace

TEST_CASE("pearson on exact linear relationships") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 1);
    CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    y.clear();
    for (double v : x) y.push_back(-v);
    CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-12));

    CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) ==
          doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("pearson symmetry and affine invariance") {
    std::mt19937_64 rng(1);
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::uniform_real_distribution<>(0, 1)(rng);
        y[i] = x[i] * 0.5 + std::uniform_real_distribution<>(0, 1)(rng);
    }
    const double r = pearson(x, y);
    CHECK(pearson(y, x) == doctest::Approx(r).epsilon(1e-12));

    std::vector<double> ax(x);
    for (double& v : ax) v = 3.7 * v - 2.0;
    CHECK(pearson(ax, y) == doctest::Approx(r).epsilon(1e-10));
    for (double& v : ax) v = -v;
    CHECK(pearson(ax, y) == doctest::Approx(-r).epsilon(1e-10));
}

TEST_CASE("pearson rejects degenerate inputs") {
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), DegenerateInput);
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), DegenerateInput);
    CHECK_THROWS_AS(pearson({1, 2, 3}, {5, 5, 5}), DegenerateInput);
    CHECK_THROWS_AS(pearson({1, 2, 3}, {1, 2}), DegenerateInput);
}

TEST_CASE("two-sided p-value frozen anchors") {
    // r = 0.8, n = 4: t = 1.8856, df = 2 which has the closed form
    // F(t) = 1/2 + t / (2 sqrt(t^2 + 2)); the tail mass is exactly 0.2.
    CHECK(p_value(0.8, 4) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p_value(0.0, 10) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p_value(-0.8, 4) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_THROWS_AS(p_value(1.0, 10), DegenerateInput);
    CHECK_THROWS_AS(p_value(0.5, 2), DegenerateInput);
}

TEST_CASE("t CDF matches trapezoid oracle to 1e-6") {
    const double nus[] = {1.0, 2.0, 5.0, 10.0, 30.0};
    const double ts[] = {0.5, 1.0, 2.0, 3.5};
    int points = 0;
    for (double nu : nus) {
        for (double t : ts) {
            CHECK(student_t_cdf(t, nu) ==
                  doctest::Approx(t_cdf_oracle(t, nu)).epsilon(1e-6));
            CHECK(student_t_cdf(-t, nu) ==
                  doctest::Approx(t_cdf_oracle(-t, nu)).epsilon(1e-6));
            ++points;
        }
    }
    CHECK(points == 20);
    // Closed forms for 1 and 2 degrees of freedom.
    CHECK(student_t_cdf(1.3, 1.0) ==
          doctest::Approx(0.5 + std::atan(1.3) / M_PI).epsilon(1e-12));
    CHECK(student_t_cdf(1.3, 2.0) ==
          doctest::Approx(0.5 + 1.3 / (2 * std::sqrt(1.3 * 1.3 + 2)))
              .epsilon(1e-12));
    CHECK(student_t_cdf(0.0, 7.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("p-value is monotone in |r| and in n") {
    double prev = 1.0;
    for (double r : {0.1, 0.2, 0.4, 0.6, 0.8, 0.95}) {
        const double p = p_value(r, 20);
        CHECK(p < prev);
        prev = p;
    }
    prev = 1.0;
    for (std::size_t n : {4u, 8u, 16u, 64u, 256u}) {
        const double p = p_value(0.3, n);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("correlation table flags zero-variance columns") {
    std::vector<double> rul = {10, 20, 30, 40};
    std::vector<double> vmax = {3.5, 3.5, 3.5, 3.5}; // constant
    std::vector<double> vmin = {2.4, 2.5, 2.6, 2.7};
    CHECK_THROWS_AS(correlation_table(synthetic_records(vmax, vmin, rul)),
                    DegenerateInput);
    CHECK_THROWS_AS(
        correlation_table(synthetic_records({3.5, 3.6}, {2.4, 2.5}, {10, 20})),
        DegenerateInput);
}

TEST_CASE("scatter campaign correlations: signs, significance, ordering") {
    const CellParams params = default_cell_params();
    const auto records = run_campaign(preset_fig2(params), params, 2);
    const auto table = correlation_table(records);
    REQUIRE(table.size() == 3);
    CHECK(table[0].variable == "v_max");
    CHECK(table[1].variable == "v_min");
    CHECK(table[2].variable == "delta_v");

    CHECK(table[0].pearson_r < 0.0); // higher charge-end voltage, shorter life
    CHECK(table[1].pearson_r > 0.0); // higher discharge-end voltage, longer life
    CHECK(table[2].pearson_r < 0.0); // wider voltage swing, shorter life
    for (const auto& rep : table) {
        CHECK(rep.p_value < 0.05);
        CHECK(rep.n == 500);
        CHECK(std::abs(rep.pearson_r) <= 1.0);
    }
    CHECK(std::abs(table[0].pearson_r) > std::abs(table[1].pearson_r));

    const std::string csv = correlation_table_to_csv(table);
    CHECK(csv.rfind("variable,pearson_r,p_value,n\n", 0) == 0);
    CHECK(csv.find("v_max,") != std::string::npos);
    CHECK(csv.find("delta_v,") != std::string::npos);
}

TEST_CASE("degree-2 surface is recovered exactly from polynomial data") {
    std::vector<double> xs, ys, zs;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<> ux(2.0, 5.0), uy(-1.0, 4.0);
    auto poly = [](double x, double y) {
        return 1.0 + 2.0 * x - 3.0 * y + 0.5 * x * x - x * y + 2.0 * y * y;
    };
    for (int i = 0; i < 200; ++i) {
        const double x = ux(rng), y = uy(rng);
        xs.push_back(x);
        ys.push_back(y);
        zs.push_back(poly(x, y));
    }
    const FittedSurface s = fit_surface_xyz(xs, ys, zs, 2);
    CHECK(s.residual_rms < 1e-9);
    for (int i = 0; i < 10; ++i)
        CHECK(evaluate(s, xs[i], ys[i]) ==
              doctest::Approx(zs[i]).epsilon(1e-9));
    // Interior points the fit never saw.
    CHECK(evaluate(s, 3.0, 1.0) == doctest::Approx(poly(3.0, 1.0)).epsilon(1e-9));
    CHECK(evaluate(s, 4.5, 2.5) == doctest::Approx(poly(4.5, 2.5)).epsilon(1e-9));
}

TEST_CASE("degree-0 surface is the mean; residual shrinks with degree") {
    std::vector<double> xs, ys, zs;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<> u(0.0, 1.0);
    double sum = 0;
    for (int i = 0; i < 100; ++i) {
        xs.push_back(u(rng));
        ys.push_back(u(rng));
        zs.push_back(std::sin(3 * xs.back()) + ys.back() * ys.back());
        sum += zs.back();
    }
    const FittedSurface s0 = fit_surface_xyz(xs, ys, zs, 0);
    CHECK(s0.coeffs(0) == doctest::Approx(sum / 100.0).epsilon(1e-12));
    CHECK(evaluate(s0, 0.5, 0.5) ==
          doctest::Approx(sum / 100.0).epsilon(1e-12));

    double prev_rms = s0.residual_rms;
    for (int d = 1; d <= 4; ++d) {
        const double rms = fit_surface_xyz(xs, ys, zs, d).residual_rms;
        CHECK(rms <= prev_rms + 1e-12);
        prev_rms = rms;
    }
}

TEST_CASE("surface fit error handling") {
    std::vector<double> xs = {1, 2, 3}, ys = {4, 5, 6}, zs = {7, 8, 9};
    // 3 samples cannot determine 6 degree-2 coefficients.
    CHECK_THROWS_AS(fit_surface_xyz(xs, ys, zs, 2), DegenerateInput);

    // Constant x makes the standardized design singular at degree >= 1.
    std::vector<double> cx(20, 1.0), cy, cz;
    for (int i = 0; i < 20; ++i) {
        cy.push_back(i * 0.1);
        cz.push_back(i * 0.2);
    }
    CHECK_THROWS_AS(fit_surface_xyz(cx, cy, cz, 2), RankDeficient);

    // y == x exactly: xy column collinear with x^2.
    std::vector<double> dx, dz;
    for (int i = 0; i < 20; ++i) {
        dx.push_back(i * 0.1);
        dz.push_back(i * 0.3);
    }
    CHECK_THROWS_AS(fit_surface_xyz(dx, dx, dz, 2), RankDeficient);

    // Out-of-domain evaluation.
    std::vector<double> ex, ey, ez;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<> u(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        ex.push_back(u(rng));
        ey.push_back(u(rng));
        ez.push_back(ex.back() + ey.back());
    }
    const FittedSurface s = fit_surface_xyz(ex, ey, ez, 1);
    CHECK_THROWS_AS(evaluate(s, 2.0, 0.5), OutOfDomain);
    CHECK_THROWS_AS(evaluate(s, 0.5, -1.0), OutOfDomain);
}

TEST_CASE("log-life surface from the big campaign stays in a narrow band") {
    const CellParams params = default_cell_params();
    SamplingSpec spec = preset_fig3(params);
    spec.n_samples = 2000; // prefix of the full campaign; same distribution
    const auto records = run_campaign(spec, params, 2);

    const FittedSurface s =
        fit_surface(records, SurfaceInput::i_charge, SurfaceInput::i_discharge,
                    SurfaceResponse::ln_rul, 2);
    CHECK(s.response_name == "ln_rul");
    CHECK(s.x_name == "i_charge_A");

    // Taking logs compresses a ~20x life spread into about three units.
    for (int i = 0; i <= 8; ++i) {
        for (int k = 0; k <= 8; ++k) {
            const double x = s.x_lo + (s.x_hi - s.x_lo) * i / 8.0;
            const double y = s.y_lo + (s.y_hi - s.y_lo) * k / 8.0;
            const double z = evaluate(s, x, y);
            CHECK(z > 4.0);
            CHECK(z < 7.5);
            CHECK(predicted_rul(s, x, y) == doctest::Approx(std::exp(z)));
        }
    }
    const double center = evaluate(s, 0.5 * (s.x_lo + s.x_hi),
                                   0.5 * (s.y_lo + s.y_hi));
    CHECK(center > 4.0);
    CHECK(center < 7.5);
}

TEST_CASE("surface JSON round-trips and evaluates identically") {
    std::vector<double> xs, ys, zs;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<> u(1.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        xs.push_back(u(rng));
        ys.push_back(u(rng) + 1.0);
        zs.push_back(xs.back() * ys.back() + 0.3 * xs.back());
    }
    const FittedSurface s = fit_surface_xyz(xs, ys, zs, 2, "a", "b", "c");
    const FittedSurface back = surface_from_json(surface_to_json(s));
    CHECK(back.x_name == "a");
    CHECK(back.response_name == "c");
    CHECK(back.degree == 2);
    for (int i = 0; i < 10; ++i)
        CHECK(evaluate(back, xs[i], ys[i]) == evaluate(s, xs[i], ys[i]));

    CHECK_THROWS_AS(surface_from_json("{"), ParamError);
    CHECK_THROWS_AS(surface_from_json("{\"x_name\":\"a\"}"), ParamError);
}
