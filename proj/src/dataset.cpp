#include "airphys/dataset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "airphys/csv.hpp"

namespace airphys::dataset {

// ============================================================================
// CityDailyPanel
// ============================================================================

CityDailyPanel::CityDailyPanel(std::vector<std::string> cities, Date first_day,
                               std::size_t n_days)
    : cities_(std::move(cities)),
      first_day_(first_day),
      n_days_(n_days),
      values_(cities_.size() * kVariableCount * n_days, missing_value()),
      imputed_(cities_.size() * kVariableCount * n_days, 0) {}

int CityDailyPanel::city_index(const std::string& name) const {
    for (std::size_t i = 0; i < cities_.size(); ++i) {
        if (cities_[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::size_t CityDailyPanel::missing_count() const {
    std::size_t n = 0;
    for (double v : values_) {
        if (is_missing(v)) ++n;
    }
    return n;
}

double CityDailyPanel::missing_fraction() const {
    if (values_.empty()) return 0.0;
    return static_cast<double>(missing_count()) / static_cast<double>(values_.size());
}

void CityDailyPanel::validate() const {
    for (std::size_t c = 0; c < n_cities(); ++c) {
        for (Variable v : all_variables()) {
            if (!variable_non_negative(v)) continue;
            for (std::size_t d = 0; d < n_days_; ++d) {
                const double x = get(c, d, v);
                if (!is_missing(x) && x < 0.0) {
                    throw DataError(std::string("negative value for non-negative variable ") +
                                    variable_name(v) + " in city " + cities_[c] + " on " +
                                    day(d).to_string());
                }
            }
        }
    }
}

bool CityDailyPanel::operator==(const CityDailyPanel& o) const {
    if (cities_ != o.cities_ || first_day_ != o.first_day_ || n_days_ != o.n_days_ ||
        imputed_ != o.imputed_) {
        return false;
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const bool ma = is_missing(values_[i]);
        const bool mb = is_missing(o.values_[i]);
        if (ma != mb) return false;
        if (!ma && values_[i] != o.values_[i]) return false;
    }
    return true;
}

std::size_t ImputationReport::total_imputed() const {
    std::size_t n = 0;
    for (const auto& [v, c] : imputed_counts) n += c;
    return n;
}

// ============================================================================
// parse_csv
// ============================================================================

std::vector<RawRecord> parse_csv(std::istream& source, const CsvSchema& schema) {
    csv::Table table = csv::read(source);
    if (table.header.empty()) throw SchemaError("input has no header row");
    const int ci_date = table.require_column(schema.date);
    const int ci_city = table.require_column(schema.city);
    const int ci_station = table.require_column(schema.station);
    const int ci_variable = table.require_column(schema.variable);
    const int ci_value = table.require_column(schema.value);
    const int max_col = std::max({ci_date, ci_city, ci_station, ci_variable, ci_value});

    std::vector<RawRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string row_tag = "row " + std::to_string(r + 1);
        if (static_cast<int>(row.size()) <= max_col) {
            throw RowError(row_tag + ": expected at least " + std::to_string(max_col + 1) +
                           " fields, got " + std::to_string(row.size()));
        }
        RawRecord rec;
        auto date = Date::try_parse(row[ci_date]);
        if (!date) throw RowError(row_tag + ": malformed date '" + row[ci_date] + "'");
        rec.date = *date;
        rec.city = row[ci_city];
        rec.station = row[ci_station];
        auto var = parse_variable(row[ci_variable]);
        if (!var) throw RowError(row_tag + ": unknown variable '" + row[ci_variable] + "'");
        rec.variable = *var;

        const std::string& raw = row[ci_value];
        if (raw.empty()) {
            rec.value = missing_value();
        } else {
            try {
                std::size_t used = 0;
                double v = std::stod(raw, &used);
                rec.value = used == raw.size() ? v : missing_value();
            } catch (const std::exception&) {
                rec.value = missing_value();
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<RawRecord> parse_csv_file(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    return parse_csv(in, schema);
}

// ============================================================================
// aggregate_city_daily
// ============================================================================

CityDailyPanel aggregate_city_daily(const std::vector<RawRecord>& records) {
    if (records.empty()) throw EmptyInputError("no records to aggregate");

    std::set<std::string> city_set;
    Date lo = records.front().date;
    Date hi = records.front().date;
    for (const auto& r : records) {
        city_set.insert(r.city);
        lo = std::min(lo, r.date);
        hi = std::max(hi, r.date);
    }
    std::vector<std::string> cities(city_set.begin(), city_set.end());
    const std::size_t n_days = static_cast<std::size_t>(hi - lo) + 1;

    CityDailyPanel panel(cities, lo, n_days);

    // Running sum / count per cell; station order cannot matter.
    std::vector<double> sums(panel.cell_count(), 0.0);
    std::vector<std::uint32_t> counts(panel.cell_count(), 0);
    auto cell = [&](std::size_t c, std::size_t d, Variable v) {
        return (c * kVariableCount + static_cast<std::size_t>(v)) * n_days + d;
    };
    for (const auto& r : records) {
        if (is_missing(r.value)) continue;
        const std::size_t c = static_cast<std::size_t>(panel.city_index(r.city));
        const std::size_t d = static_cast<std::size_t>(r.date - lo);
        const std::size_t idx = cell(c, d, r.variable);
        sums[idx] += r.value;
        counts[idx] += 1;
    }
    for (std::size_t c = 0; c < cities.size(); ++c) {
        for (Variable v : all_variables()) {
            for (std::size_t d = 0; d < n_days; ++d) {
                const std::size_t idx = cell(c, d, v);
                if (counts[idx] > 0) panel.set(c, d, v, sums[idx] / counts[idx]);
            }
        }
    }
    return panel;
}

// ============================================================================
// impute_missing
// ============================================================================

namespace {

struct CityImputeResult {
    std::map<Variable, std::size_t> imputed_counts;
    std::size_t iterations = 0;
};

CityImputeResult impute_city(CityDailyPanel& panel, std::size_t city, std::size_t max_iter,
                             double tol) {
    const std::size_t n = panel.n_days();
    const auto vars = all_variables();

    std::map<Variable, std::vector<std::size_t>> missing;
    for (Variable v : vars) {
        std::vector<std::size_t> days;
        for (std::size_t d = 0; d < n; ++d) {
            if (is_missing(panel.get(city, d, v))) days.push_back(d);
        }
        if (days.size() == n) {
            throw UnimputableVariableError(std::string("variable ") + variable_name(v) +
                                           " entirely missing for city " +
                                           panel.cities()[city]);
        }
        if (!days.empty()) missing[v] = std::move(days);
    }

    CityImputeResult result;
    if (missing.empty()) return result;

    // Seed missing cells with the per-variable observed mean.
    for (const auto& [v, days] : missing) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t d = 0; d < n; ++d) {
            const double x = panel.get(city, d, v);
            if (!is_missing(x)) {
                sum += x;
                ++cnt;
            }
        }
        const double mean = sum / static_cast<double>(cnt);
        for (std::size_t d : days) {
            panel.set(city, d, v, mean);
            panel.mark_imputed(city, d, v);
        }
        result.imputed_counts[v] = days.size();
    }

    // Gauss-Seidel sweeps: refit each incomplete variable on the other ten
    // (rows where it was observed), refill its missing cells.
    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        double max_change = 0.0;
        for (Variable v : vars) {
            auto it = missing.find(v);
            if (it == missing.end()) continue;
            const auto& fill_days = it->second;

            const std::size_t n_obs = n - fill_days.size();
            Eigen::MatrixXd X(n_obs, kVariableCount);  // intercept + 10 covariates
            Eigen::VectorXd y(n_obs);
            std::size_t row = 0;
            std::size_t next_fill = 0;
            for (std::size_t d = 0; d < n; ++d) {
                if (next_fill < fill_days.size() && fill_days[next_fill] == d) {
                    ++next_fill;
                    continue;
                }
                X(row, 0) = 1.0;
                std::size_t col = 1;
                for (Variable u : vars) {
                    if (u == v) continue;
                    X(row, col++) = panel.get(city, d, u);
                }
                y(row) = panel.get(city, d, v);
                ++row;
            }
            Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);

            for (std::size_t d : fill_days) {
                Eigen::VectorXd x(kVariableCount);
                x(0) = 1.0;
                std::size_t col = 1;
                for (Variable u : vars) {
                    if (u == v) continue;
                    x(col++) = panel.get(city, d, u);
                }
                double pred = beta.dot(x);
                if (variable_non_negative(v)) pred = std::max(0.0, pred);
                max_change = std::max(max_change, std::abs(pred - panel.get(city, d, v)));
                panel.set(city, d, v, pred);
            }
        }
        result.iterations = iter;
        if (max_change < tol) break;
    }
    return result;
}

}  // namespace

std::pair<CityDailyPanel, ImputationReport> impute_missing(const CityDailyPanel& panel,
                                                           std::size_t max_iter, double tol) {
    CityDailyPanel out = panel;
    ImputationReport report;
    report.missing_fraction_before = panel.missing_fraction();

    std::vector<CityImputeResult> results(out.n_cities());
    std::vector<std::exception_ptr> errors(out.n_cities());
    parallel_for(out.n_cities(), [&](std::size_t c) {
        try {
            results[c] = impute_city(out, c, max_iter, tol);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    });
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    for (const auto& r : results) {
        report.iterations_used = std::max(report.iterations_used, r.iterations);
        for (const auto& [v, cnt] : r.imputed_counts) report.imputed_counts[v] += cnt;
    }
    report.missing_fraction_after = out.missing_fraction();
    return {std::move(out), report};
}

// ============================================================================
// generate_synthetic
// ============================================================================

void SyntheticConfig::validate() const {
    if (missing_rate < 0.0 || missing_rate >= 1.0) {
        throw ArgumentError("missing_rate must be in [0, 1)");
    }
    if (days < 30) throw ArgumentError("days must be >= 30");
    if (noise_sd < 0.0) throw ArgumentError("noise_sd must be >= 0");
    if (cities < 1) throw ArgumentError("cities must be >= 1");
}

NominalStats nominal_stats(Variable v) {
    switch (v) {
        case Variable::TV:     return {1065.0, 176.0};
        case Variable::NOx:    return {71.0, 30.0};
        case Variable::PM25:   return {10.0, 3.6};
        case Variable::Tmean:  return {5.8, 7.2};
        case Variable::HDD:    return {11.3, 7.1};
        case Variable::VP:     return {8.6, 3.2};
        case Variable::WS:     return {3.6, 1.5};
        case Variable::WG:     return {8.3, 3.9};
        case Variable::meanRH: return {74.0, 8.8};
        case Variable::SD:     return {5.3, 5.5};
        case Variable::PP:     return {3.1, 5.1};
    }
    throw ArgumentError("unknown variable");
}

std::map<Pollutant, std::map<Variable, PlantedEffect>> default_effects() {
    std::map<Pollutant, std::map<Variable, PlantedEffect>> e;
    e[Pollutant::PM25] = {
        {Variable::HDD, {1.6, 1.1}},
        {Variable::SD, {0.9, 0.0}},
        {Variable::TV, {1.0, 0.0}},
        {Variable::meanRH, {0.7, 0.0}},
    };
    e[Pollutant::NOx] = {
        {Variable::TV, {24.0, 0.0}},
        {Variable::HDD, {14.0, 0.0}},
        {Variable::WS, {-11.0, 0.0}},
        {Variable::meanRH, {5.0, 0.0}},
    };
    return e;
}

std::map<Pollutant, double> default_base_levels() {
    return {{Pollutant::PM25, 8.8}, {Pollutant::NOx, 72.0}};
}

namespace {

double city_temperature_offset(std::size_t city) {
    static constexpr double offsets[] = {0.0, 1.8, -0.9, 0.7, -1.5};
    return offsets[city % 5];
}

double weekday_traffic_factor(int day_of_week) {
    if (day_of_week == 6) return 0.83;  // Saturday
    if (day_of_week == 7) return 0.72;  // Sunday
    return 1.07;
}

double planted_rate(const std::map<Variable, PlantedEffect>& effects,
                    const CityDailyPanel& panel, std::size_t c, std::size_t d) {
    double g = 0.0;
    for (const auto& [v, eff] : effects) {
        const auto ns = nominal_stats(v);
        const double z = (panel.get(c, d, v) - ns.mean) / ns.sd;
        g += eff.linear * z + eff.quadratic * z * z;
    }
    return g;
}

}  // namespace

CityDailyPanel generate_synthetic(const SyntheticConfig& config) {
    config.validate();

    std::vector<std::string> cities;
    for (std::size_t i = 0; i < config.cities; ++i) {
        cities.push_back("City" + std::to_string(i + 1));
    }
    const Date start(2009, 1, 1);
    CityDailyPanel panel(cities, start, config.days);

    const SeedStreams streams(config.seed);
    const auto effects = config.effects.empty() ? default_effects() : config.effects;
    const auto bases = config.base_level.empty() ? default_base_levels() : config.base_level;

    for (std::size_t c = 0; c < config.cities; ++c) {
        Rng weather = streams.stream("synth/weather/" + cities[c]);
        const double t_off = city_temperature_offset(c);
        for (std::size_t d = 0; d < config.days; ++d) {
            const Date date = panel.day(d);
            const double season =
                std::cos(2.0 * M_PI * (date.day_of_year() - 15.0) / 365.25);  // +1 midwinter

            const double tmean = 5.5 + t_off - 9.5 * season + weather.normal(0.0, 2.6);
            const double hdd = std::max(0.0, 17.0 - tmean);
            const double vp = std::max(0.0, 6.2 + 0.42 * tmean + weather.normal(0.0, 1.1));
            const double ws = std::max(0.2, 3.6 + 0.7 * season + weather.normal(0.0, 1.4));
            const double wg = std::max(ws, 2.3 * ws + weather.normal(0.0, 2.2));
            const double rh =
                std::clamp(74.0 + 5.0 * season + weather.normal(0.0, 8.0), 15.0, 100.0);
            const double sd = std::max(0.0, 0.9 * (hdd - 7.0) + weather.normal(0.0, 3.2));
            const double pp = std::max(0.0, std::exp(weather.normal(1.1, 0.9)) - 1.6);
            const double tv = std::max(
                0.0, 1065.0 * weekday_traffic_factor(date.day_of_week()) / 0.9857 +
                         weather.normal(0.0, 95.0));

            panel.set(c, d, Variable::Tmean, tmean);
            panel.set(c, d, Variable::HDD, hdd);
            panel.set(c, d, Variable::VP, vp);
            panel.set(c, d, Variable::WS, ws);
            panel.set(c, d, Variable::WG, wg);
            panel.set(c, d, Variable::meanRH, rh);
            panel.set(c, d, Variable::SD, sd);
            panel.set(c, d, Variable::PP, pp);
            panel.set(c, d, Variable::TV, tv);
        }
    }

    for (Pollutant p : {Pollutant::NOx, Pollutant::PM25}) {
        const auto eff_it = effects.find(p);
        const std::map<Variable, PlantedEffect> empty;
        const auto& eff = eff_it == effects.end() ? empty : eff_it->second;
        const double base = bases.count(p) ? bases.at(p) : 10.0;
        const Variable pv = pollutant_variable(p);

        for (std::size_t c = 0; c < config.cities; ++c) {
            Rng noise = streams.stream(std::string("synth/noise/") + pollutant_name(p) + "/" +
                                       cities[c]);
            if (config.dynamics == SyntheticDynamics::StaticLevel) {
                for (std::size_t d = 0; d < config.days; ++d) {
                    const double level = base + planted_rate(eff, panel, c, d) +
                                         noise.normal(0.0, config.noise_sd);
                    panel.set(c, d, pv, std::max(0.0, level));
                }
            } else {
                double y = base;
                panel.set(c, 0, pv, y);
                for (std::size_t d = 0; d + 1 < config.days; ++d) {
                    const double g = planted_rate(eff, panel, c, d) -
                                     config.rate_decay * (y - base);
                    y = std::max(0.0, y + g + noise.normal(0.0, config.noise_sd));
                    panel.set(c, d + 1, pv, y);
                }
            }
        }
    }

    if (config.missing_rate > 0.0) {
        Rng mask_rng = streams.stream("synth/missing");
        std::vector<std::uint8_t> mask(panel.cell_count(), 0);
        std::size_t idx = 0;
        for (std::size_t c = 0; c < config.cities; ++c) {
            for (Variable v : all_variables()) {
                (void)v;
                for (std::size_t d = 0; d < config.days; ++d) {
                    mask[idx++] = mask_rng.uniform() < config.missing_rate ? 1 : 0;
                }
            }
        }
        // Keep every (city, variable) imputable: unmask one seeded day if a
        // whole series got masked.
        Rng repair = streams.stream("synth/missing-repair");
        idx = 0;
        for (std::size_t c = 0; c < config.cities; ++c) {
            for (Variable v : all_variables()) {
                (void)v;
                bool all = true;
                for (std::size_t d = 0; d < config.days; ++d) {
                    if (!mask[idx + d]) {
                        all = false;
                        break;
                    }
                }
                if (all) mask[idx + repair.uniform_index(config.days)] = 0;
                idx += config.days;
            }
        }
        idx = 0;
        for (std::size_t c = 0; c < config.cities; ++c) {
            for (Variable v : all_variables()) {
                for (std::size_t d = 0; d < config.days; ++d) {
                    if (mask[idx++]) panel.set(c, d, v, missing_value());
                }
            }
        }
    }
    return panel;
}

CityDailyPanel single_city(const CityDailyPanel& panel, std::size_t city) {
    if (city >= panel.n_cities()) throw ArgumentError("single_city: index out of range");
    CityDailyPanel out({panel.cities()[city]}, panel.first_day(), panel.n_days());
    for (Variable v : all_variables()) {
        for (std::size_t d = 0; d < panel.n_days(); ++d) {
            out.set(0, d, v, panel.get(city, d, v));
            if (panel.imputed(city, d, v)) out.mark_imputed(0, d, v);
        }
    }
    return out;
}

// ============================================================================
// IMPORT / EXPORT
// ============================================================================

namespace {
const std::vector<Variable>& export_order() {
    static const std::vector<Variable> order = {
        Variable::TV, Variable::NOx, Variable::PM25,   Variable::Tmean,
        Variable::HDD, Variable::VP, Variable::WS,     Variable::WG,
        Variable::meanRH, Variable::SD, Variable::PP,
    };
    return order;
}
}  // namespace

std::string export_city_csv(const CityDailyPanel& panel, std::size_t city) {
    std::vector<std::string> header = {"date"};
    for (Variable v : export_order()) header.push_back(variable_name(v));
    std::vector<std::vector<std::string>> rows;
    rows.reserve(panel.n_days());
    for (std::size_t d = 0; d < panel.n_days(); ++d) {
        std::vector<std::string> row = {panel.day(d).to_string()};
        for (Variable v : export_order()) {
            const double x = panel.get(city, d, v);
            row.push_back(is_missing(x) ? std::string() : format_double(x));
        }
        rows.push_back(std::move(row));
    }
    return csv::to_string(header, rows);
}

std::string export_imputed_sidecar(const CityDailyPanel& panel, std::size_t city) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t d = 0; d < panel.n_days(); ++d) {
        for (Variable v : export_order()) {
            if (panel.imputed(city, d, v)) {
                rows.push_back({panel.day(d).to_string(), variable_name(v)});
            }
        }
    }
    return csv::to_string({"date", "variable"}, rows);
}

CityDailyPanel import_city_csvs(const std::vector<std::string>& cities,
                                const std::vector<std::string>& csv_texts,
                                const std::vector<std::string>& sidecar_texts) {
    if (cities.empty() || cities.size() != csv_texts.size()) {
        throw ArgumentError("import_city_csvs: need one CSV per city");
    }

    std::vector<csv::Table> tables;
    std::optional<Date> lo, hi;
    for (const auto& text : csv_texts) {
        std::istringstream in(text);
        csv::Table t = csv::read(in);
        const int date_col = t.require_column("date");
        for (const auto& row : t.rows) {
            const Date d = Date::parse(row[date_col]);
            lo = lo ? std::min(*lo, d) : d;
            hi = hi ? std::max(*hi, d) : d;
        }
        tables.push_back(std::move(t));
    }
    if (!lo) throw EmptyInputError("no data rows in panel CSVs");

    const std::size_t n_days = static_cast<std::size_t>(*hi - *lo) + 1;
    CityDailyPanel panel(cities, *lo, n_days);

    for (std::size_t c = 0; c < cities.size(); ++c) {
        const csv::Table& t = tables[c];
        const int date_col = t.require_column("date");
        std::vector<int> var_cols;
        for (Variable v : export_order()) var_cols.push_back(t.require_column(variable_name(v)));
        for (const auto& row : t.rows) {
            const std::size_t d = static_cast<std::size_t>(Date::parse(row[date_col]) - *lo);
            for (std::size_t k = 0; k < export_order().size(); ++k) {
                const std::string& cell = row[var_cols[k]];
                if (!cell.empty()) {
                    panel.set(c, d, export_order()[k], std::stod(cell));
                }
            }
        }
        if (c < sidecar_texts.size() && !sidecar_texts[c].empty()) {
            std::istringstream in(sidecar_texts[c]);
            csv::Table side = csv::read(in);
            const int sd_date = side.require_column("date");
            const int sd_var = side.require_column("variable");
            for (const auto& row : side.rows) {
                const std::size_t d =
                    static_cast<std::size_t>(Date::parse(row[sd_date]) - *lo);
                auto v = parse_variable(row[sd_var]);
                if (!v) throw RowError("unknown variable in sidecar: " + row[sd_var]);
                panel.mark_imputed(c, d, *v);
            }
        }
    }
    return panel;
}

}  // namespace airphys::dataset
