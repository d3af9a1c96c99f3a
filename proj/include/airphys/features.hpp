#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/dataset.hpp"

namespace airphys::features {

enum class ColumnKind { Continuous, Dummy };

enum class FixedEffectKey { City, Year };

struct FeatureSpec {
    std::vector<Variable> base_variables;       // regressors, raw scale
    int polynomial_degree = 1;                  // 1..3
    bool include_time_dummies = false;          // DW, DM, MY
    std::vector<FixedEffectKey> fixed_effects;  // subset of {city, year}
    Pollutant target = Pollutant::NOx;

    void validate() const;  // throws SpecError
};

/// Row-indexed (city, date) feature matrix. Rows are city-major, dates
/// ascending within a city; this layout is what chronological_split assumes.
struct DesignMatrix {
    std::vector<std::string> row_city;
    std::vector<Date> row_date;
    std::vector<std::string> columns;
    std::vector<ColumnKind> kinds;
    Eigen::MatrixXd values;  // n x p
    std::vector<std::string> warnings;

    std::size_t n_rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_cols() const { return static_cast<std::size_t>(values.cols()); }
    int column_index(const std::string& name) const;  // -1 if absent

    std::string to_csv() const;
};

/// Per-column centering/scaling statistics, continuous columns only.
struct Standardizer {
    std::vector<std::string> columns;
    std::vector<ColumnKind> kinds;
    std::vector<double> mean;  // zeros for dummy columns
    std::vector<double> sd;    // ones for dummy columns

    bool operator==(const Standardizer&) const = default;
};

struct SplitIndex {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Heating degree days at the 17 degC base: max(0, 17 - tmean).
double compute_hdd(double tmean);

/// Expands the panel into the regression design: per base variable x the
/// columns x, x^2, x^3 up to the spec degree (powers taken on the raw
/// scale), plus optional day-of-week / day-of-month / month-of-year dummies
/// and fixed-effect dummies, each dropping its first level. Dummy levels
/// that never occur produce all-zero columns, which are dropped with a
/// warning. Also returns the response column for spec.target.
DesignMatrix build_design(const dataset::CityDailyPanel& panel, const FeatureSpec& spec);

/// Extracts the target pollutant aligned with build_design's row order.
Eigen::VectorXd response_vector(const dataset::CityDailyPanel& panel, Pollutant target);

/// Train-rows-only mean/sd (population, divisor n) for continuous columns.
Standardizer fit_standardizer(const DesignMatrix& matrix, const std::vector<std::size_t>& rows);

DesignMatrix apply_standardizer(const Standardizer& std, const DesignMatrix& matrix);

/// Inverse transform of one column value (tests use this for round-trips).
double destandardize(const Standardizer& std, std::size_t column, double value);

/// Per-city prefix split: first floor(fraction*n) rows of each city train,
/// remainder test (clamped so both sides stay non-empty). Row ids are global
/// over city-major blocks.
SplitIndex chronological_split(const std::vector<std::size_t>& rows_per_city, double fraction);

}  // namespace airphys::features
