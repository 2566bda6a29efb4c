#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rulopf/mc.hpp"

namespace rulopf {

/// One row of the correlation table: linear dependence of a voltage bound on
/// remaining useful life, with two-sided significance.
struct CorrelationReport {
    std::string variable;
    double pearson_r = 0;
    double p_value = 1;
    std::size_t n = 0;
};

/// Least-squares polynomial surface z = f(x, y). Inputs are standardized
/// (zero mean, unit variance) before the normal equations are formed, and
/// evaluation is only defined inside the fitted domain box.
struct FittedSurface {
    std::string x_name, y_name, response_name;
    int degree = 2;
    /// Coefficients over standardized monomials x^a y^b, b-major within total
    /// degree: 1, x, y, x^2, xy, y^2, ...
    Eigen::VectorXd coeffs;
    double x_mean = 0, x_scale = 1;
    double y_mean = 0, y_scale = 1;
    double residual_rms = 0;
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
};

/// Pearson correlation coefficient of two equal-length samples.
/// Throws DegenerateInput if n < 3 or either sample has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Two-sided p-value for the null hypothesis of zero correlation, using the
/// exact Student-t distribution of r*sqrt((n-2)/(1-r^2)) with n-2 degrees of
/// freedom. Throws DegenerateInput if |r| >= 1 or n < 3.
double p_value(double r, std::size_t n);

/// Student-t CDF with nu degrees of freedom (exposed for oracle testing).
double student_t_cdf(double t, double nu);

/// Correlation of v_max, v_min and delta_v = v_max - v_min against rul_hours.
std::vector<CorrelationReport> correlation_table(
    const std::vector<ScenarioRecord>& records);

/// Which scenario fields feed a surface fit.
enum class SurfaceInput { v_max, v_min, i_charge, i_discharge };
enum class SurfaceResponse { rul, ln_rul };

/// Fits z = poly(x, y) of the given total degree by least squares.
/// Throws DegenerateInput if there are fewer records than coefficients,
/// RankDeficient if the standardized design matrix is singular.
FittedSurface fit_surface(const std::vector<ScenarioRecord>& records,
                          SurfaceInput x, SurfaceInput y, SurfaceResponse response,
                          int degree = 2);

/// Same fit over raw coordinate triples (x_i, y_i, z_i).
FittedSurface fit_surface_xyz(const std::vector<double>& xs,
                              const std::vector<double>& ys,
                              const std::vector<double>& zs, int degree,
                              const std::string& x_name = "x",
                              const std::string& y_name = "y",
                              const std::string& response_name = "z");

/// Evaluates the surface at (x, y). Throws OutOfDomain outside the fitted
/// bounding box (with a small relative tolerance at the edges).
double evaluate(const FittedSurface& surface, double x, double y);

/// Predicted RUL in hours (exponentiates if the response is logarithmic).
double predicted_rul(const FittedSurface& surface, double x, double y);

std::string correlation_table_to_csv(const std::vector<CorrelationReport>& table);
std::string surface_to_json(const FittedSurface& surface);
FittedSurface surface_from_json(const std::string& text);

} // namespace rulopf
