#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/features.hpp"

namespace airphys::panel {

/// Fixed-effects polynomial OLS fit. Fixed-effect dummy coefficients are
/// reported separately from the substantive regressors.
struct PanelModelFit {
    std::map<std::string, double> coefficients;    // includes "(intercept)"
    std::map<std::string, double> standard_errors;
    std::map<std::string, double> t_stats;
    std::map<std::string, double> fixed_effects;   // level -> coefficient
    double r_squared = 0.0;
    Eigen::VectorXd residuals;
    std::size_t n = 0;
    std::size_t p = 0;  // fitted parameters incl. intercept and FE dummies

    std::string to_csv() const;  // feature,coefficient,std_error,t_stat
};

struct CorrelationMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    double at(const std::string& a, const std::string& b) const;
    std::string to_csv() const;
};

/// OLS with an implicit intercept, solved by rank-revealing column-pivoted
/// QR. Standard errors come from sigma^2 (X'X)^-1 with sigma^2 = RSS/(n-p).
/// Columns whose names start with "<fe_key>=" for a key in fe_keys land in
/// fixed_effects; everything else in coefficients.
PanelModelFit fit_panel_ols(const features::DesignMatrix& design, const Eigen::VectorXd& response,
                            const std::vector<std::string>& fe_keys = {});

/// Pairwise Pearson correlations over design columns.
CorrelationMatrix correlation_matrix(const features::DesignMatrix& design);

/// Panel overload: correlations between the 11 variables, pooled city-days;
/// rows with any missing value are dropped pairwise.
CorrelationMatrix correlation_matrix(const dataset::CityDailyPanel& panel);

/// Features ordered by descending |t|; ties alphabetical. Fixed effects and
/// the intercept are not ranked. k larger than the feature count truncates.
std::vector<std::string> rank_features_by_significance(const PanelModelFit& fit, std::size_t k);

}  // namespace airphys::panel
