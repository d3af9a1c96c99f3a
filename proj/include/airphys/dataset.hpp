#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "airphys/common.hpp"

namespace airphys::dataset {

// ============================================================================
// TYPES
// ============================================================================

/// One observation from a long-format source file: a (date, city, station,
/// variable) cell, possibly missing.
struct RawRecord {
    Date date;
    std::string city;
    std::string station;
    Variable variable = Variable::TV;
    double value = missing_value();  // NaN = missing
};

/// City-level daily grid: cities x gap-free day axis x the 11 variables.
/// Missing cells hold NaN; the imputed grid records which cells were filled.
class CityDailyPanel {
public:
    CityDailyPanel() = default;
    CityDailyPanel(std::vector<std::string> cities, Date first_day, std::size_t n_days);

    const std::vector<std::string>& cities() const { return cities_; }
    std::size_t n_cities() const { return cities_.size(); }
    std::size_t n_days() const { return n_days_; }
    Date day(std::size_t d) const { return first_day_ + static_cast<std::int64_t>(d); }
    Date first_day() const { return first_day_; }
    int city_index(const std::string& name) const;  // -1 if absent

    double get(std::size_t city, std::size_t day, Variable v) const {
        return values_[cell(city, day, v)];
    }
    void set(std::size_t city, std::size_t day, Variable v, double value) {
        values_[cell(city, day, v)] = value;
    }
    bool imputed(std::size_t city, std::size_t day, Variable v) const {
        return imputed_[cell(city, day, v)] != 0;
    }
    void mark_imputed(std::size_t city, std::size_t day, Variable v) {
        imputed_[cell(city, day, v)] = 1;
    }

    std::size_t missing_count() const;
    std::size_t cell_count() const { return values_.size(); }
    double missing_fraction() const;

    /// Throws if the non-negativity invariants are violated.
    void validate() const;

    /// Missing-aware equality: two missing cells compare equal.
    bool operator==(const CityDailyPanel& o) const;

private:
    std::size_t cell(std::size_t city, std::size_t day, Variable v) const {
        return (city * static_cast<std::size_t>(kVariableCount) + static_cast<std::size_t>(v)) *
                   n_days_ +
               day;
    }

    std::vector<std::string> cities_;
    Date first_day_;
    std::size_t n_days_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> imputed_;
};

struct ImputationReport {
    double missing_fraction_before = 0.0;
    double missing_fraction_after = 0.0;
    std::map<Variable, std::size_t> imputed_counts;
    std::size_t iterations_used = 0;

    std::size_t total_imputed() const;
};

/// Planted effect of one variable on one pollutant. Contributions enter as
/// coef_linear * z + coef_quadratic * z^2, where z is the variable's value
/// under its fixed nominal scaling (see nominal_stats).
struct PlantedEffect {
    double linear = 0.0;
    double quadratic = 0.0;
};

enum class SyntheticDynamics {
    StaticLevel,  // pollutant is a function of same-day features plus noise
    RateLaw,      // pollutant integrates a covariate-driven daily rate
};

struct SyntheticConfig {
    std::size_t cities = 3;
    std::size_t days = 365;
    std::uint64_t seed = 1;
    std::map<Pollutant, std::map<Variable, PlantedEffect>> effects;  // empty = defaults
    std::map<Pollutant, double> base_level;                          // empty = defaults
    double noise_sd = 1.3;
    double missing_rate = 0.0;
    SyntheticDynamics dynamics = SyntheticDynamics::StaticLevel;
    double rate_decay = 0.12;  // mean reversion toward base_level in RateLaw mode

    void validate() const;  // throws ArgumentError
};

/// Fixed scaling constants the generator uses to form z-scores of planted
/// regressors. Tests reconstruct planted contributions from these exactly.
struct NominalStats {
    double mean;
    double sd;
};
NominalStats nominal_stats(Variable v);

/// Default planted effect map / base levels (calibrated so the PM25 marginal
/// lands near the observed summary scale).
std::map<Pollutant, std::map<Variable, PlantedEffect>> default_effects();
std::map<Pollutant, double> default_base_levels();

// ============================================================================
// OPERATIONS
// ============================================================================

/// Maps logical record fields onto source column names.
struct CsvSchema {
    std::string date = "date";
    std::string city = "city";
    std::string station = "station";
    std::string variable = "variable";
    std::string value = "value";
};

/// Long-format CSV -> records. Unparseable value cells become missing;
/// malformed dates or unknown variables fail the row (1-based data row
/// numbers in messages); a missing mandatory column fails the file.
std::vector<RawRecord> parse_csv(std::istream& source, const CsvSchema& schema = {});
std::vector<RawRecord> parse_csv_file(const std::string& path, const CsvSchema& schema = {});

/// Station records -> city-day panel. Cell value is the unweighted mean over
/// stations reporting that day; the day axis is densified to min..max.
CityDailyPanel aggregate_city_daily(const std::vector<RawRecord>& records);

/// Iterative regression imputation, per city: seed missing cells with the
/// city-variable mean, then refit each incomplete variable on the other ten
/// by OLS and refill, until the largest refill change drops below tol.
std::pair<CityDailyPanel, ImputationReport> impute_missing(const CityDailyPanel& panel,
                                                           std::size_t max_iter = 20,
                                                           double tol = 1e-6);

CityDailyPanel generate_synthetic(const SyntheticConfig& config);

/// One-city view copy (per-city model training works on these).
CityDailyPanel single_city(const CityDailyPanel& panel, std::size_t city);

// ============================================================================
// IMPORT / EXPORT
// ============================================================================

/// Wide per-city CSV: date,TV,NOx,PM25,Tmean,HDD,VP,WS,WG,meanRH,SD,PP.
std::string export_city_csv(const CityDailyPanel& panel, std::size_t city);
/// Sidecar listing imputed cells for one city: date,variable.
std::string export_imputed_sidecar(const CityDailyPanel& panel, std::size_t city);

/// Rebuilds a panel from per-city wide CSVs (inverse of export_city_csv).
CityDailyPanel import_city_csvs(const std::vector<std::string>& cities,
                                const std::vector<std::string>& csv_texts,
                                const std::vector<std::string>& sidecar_texts = {});

}  // namespace airphys::dataset
