#include "airphys/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "airphys/csv.hpp"

namespace airphys::features {

void FeatureSpec::validate() const {
    if (polynomial_degree < 1 || polynomial_degree > 3) {
        throw SpecError("polynomial degree must be 1, 2 or 3");
    }
    const Variable target_var = pollutant_variable(target);
    for (Variable v : base_variables) {
        if (v == target_var) {
            throw SpecError(std::string("target ") + variable_name(target_var) +
                            " cannot appear among regressors");
        }
    }
}

int DesignMatrix::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::string DesignMatrix::to_csv() const {
    std::vector<std::string> header = {"city", "date"};
    header.insert(header.end(), columns.begin(), columns.end());
    std::vector<std::vector<std::string>> rows;
    rows.reserve(n_rows());
    for (std::size_t r = 0; r < n_rows(); ++r) {
        std::vector<std::string> row = {row_city[r], row_date[r].to_string()};
        for (std::size_t c = 0; c < n_cols(); ++c) {
            row.push_back(format_double(values(static_cast<Eigen::Index>(r),
                                               static_cast<Eigen::Index>(c))));
        }
        rows.push_back(std::move(row));
    }
    return csv::to_string(header, rows);
}

double compute_hdd(double tmean) { return std::max(0.0, 17.0 - tmean); }

// ============================================================================
// build_design
// ============================================================================

namespace {

struct PendingColumn {
    std::string name;
    ColumnKind kind;
    Eigen::VectorXd values;
};

void add_dummy_group(std::vector<PendingColumn>& cols, const std::string& prefix,
                     const std::vector<int>& levels, const std::vector<int>& row_level) {
    // First level is the reference and gets no column.
    for (std::size_t li = 1; li < levels.size(); ++li) {
        PendingColumn col;
        col.name = prefix + "=" + std::to_string(levels[li]);
        col.kind = ColumnKind::Dummy;
        col.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(row_level.size()));
        for (std::size_t r = 0; r < row_level.size(); ++r) {
            if (row_level[r] == levels[li]) col.values(static_cast<Eigen::Index>(r)) = 1.0;
        }
        cols.push_back(std::move(col));
    }
}

}  // namespace

DesignMatrix build_design(const dataset::CityDailyPanel& panel, const FeatureSpec& spec) {
    spec.validate();

    const std::size_t n = panel.n_cities() * panel.n_days();
    DesignMatrix out;
    out.row_city.reserve(n);
    out.row_date.reserve(n);
    for (std::size_t c = 0; c < panel.n_cities(); ++c) {
        for (std::size_t d = 0; d < panel.n_days(); ++d) {
            out.row_city.push_back(panel.cities()[c]);
            out.row_date.push_back(panel.day(d));
        }
    }

    std::vector<PendingColumn> cols;

    for (Variable v : spec.base_variables) {
        Eigen::VectorXd base(static_cast<Eigen::Index>(n));
        std::size_t r = 0;
        for (std::size_t c = 0; c < panel.n_cities(); ++c) {
            for (std::size_t d = 0; d < panel.n_days(); ++d, ++r) {
                const double x = panel.get(c, d, v);
                if (is_missing(x)) {
                    throw SpecError(std::string("panel not fully imputed: missing ") +
                                    variable_name(v));
                }
                base(static_cast<Eigen::Index>(r)) = x;
            }
        }
        for (int power = 1; power <= spec.polynomial_degree; ++power) {
            PendingColumn col;
            col.name = variable_name(v);
            if (power > 1) col.name += "^" + std::to_string(power);
            col.kind = ColumnKind::Continuous;
            col.values = base.array().pow(power);
            cols.push_back(std::move(col));
        }
    }

    if (spec.include_time_dummies) {
        std::vector<int> dw(n), dm(n), my(n);
        for (std::size_t r = 0; r < n; ++r) {
            dw[r] = out.row_date[r].day_of_week();
            dm[r] = out.row_date[r].day();
            my[r] = out.row_date[r].month();
        }
        auto seq = [](int lo, int hi) {
            std::vector<int> v;
            for (int i = lo; i <= hi; ++i) v.push_back(i);
            return v;
        };
        add_dummy_group(cols, "DW", seq(1, 7), dw);
        add_dummy_group(cols, "DM", seq(1, 31), dm);
        add_dummy_group(cols, "MY", seq(1, 12), my);
    }

    for (FixedEffectKey key : spec.fixed_effects) {
        if (key == FixedEffectKey::City) {
            // Reference level = first city.
            for (std::size_t c = 1; c < panel.n_cities(); ++c) {
                PendingColumn col;
                col.name = "city=" + panel.cities()[c];
                col.kind = ColumnKind::Dummy;
                col.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
                for (std::size_t r = 0; r < n; ++r) {
                    if (out.row_city[r] == panel.cities()[c]) {
                        col.values(static_cast<Eigen::Index>(r)) = 1.0;
                    }
                }
                cols.push_back(std::move(col));
            }
        } else {
            std::vector<int> years(n);
            std::set<int> level_set;
            for (std::size_t r = 0; r < n; ++r) {
                years[r] = out.row_date[r].year();
                level_set.insert(years[r]);
            }
            std::vector<int> levels(level_set.begin(), level_set.end());
            add_dummy_group(cols, "year", levels, years);
        }
    }

    // Drop all-zero dummy columns (absent levels, e.g. day-of-month 31 on a
    // short axis) with a warning.
    std::vector<PendingColumn> kept;
    for (auto& col : cols) {
        if (col.kind == ColumnKind::Dummy && col.values.maxCoeff() == 0.0) {
            out.warnings.push_back("dropping all-zero dummy column " + col.name);
            continue;
        }
        kept.push_back(std::move(col));
    }

    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        out.columns.push_back(kept[j].name);
        out.kinds.push_back(kept[j].kind);
        out.values.col(static_cast<Eigen::Index>(j)) = kept[j].values;
    }
    return out;
}

Eigen::VectorXd response_vector(const dataset::CityDailyPanel& panel, Pollutant target) {
    const Variable pv = pollutant_variable(target);
    Eigen::VectorXd y(static_cast<Eigen::Index>(panel.n_cities() * panel.n_days()));
    std::size_t r = 0;
    for (std::size_t c = 0; c < panel.n_cities(); ++c) {
        for (std::size_t d = 0; d < panel.n_days(); ++d, ++r) {
            const double x = panel.get(c, d, pv);
            if (is_missing(x)) throw SpecError("panel not fully imputed: missing target");
            y(static_cast<Eigen::Index>(r)) = x;
        }
    }
    return y;
}

// ============================================================================
// Standardization
// ============================================================================

Standardizer fit_standardizer(const DesignMatrix& matrix, const std::vector<std::size_t>& rows) {
    if (rows.size() < 2) throw ArgumentError("fit_standardizer: need at least 2 train rows");

    Standardizer out;
    out.columns = matrix.columns;
    out.kinds = matrix.kinds;
    out.mean.assign(matrix.n_cols(), 0.0);
    out.sd.assign(matrix.n_cols(), 1.0);

    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < matrix.n_cols(); ++j) {
        if (matrix.kinds[j] == ColumnKind::Dummy) continue;
        double sum = 0.0;
        for (std::size_t r : rows) {
            sum += matrix.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t r : rows) {
            const double d =
                matrix.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);  // population sd
        if (sd <= 0.0) {
            throw DegenerateColumnError("zero-variance column: " + matrix.columns[j]);
        }
        out.mean[j] = mean;
        out.sd[j] = sd;
    }
    return out;
}

DesignMatrix apply_standardizer(const Standardizer& std_, const DesignMatrix& matrix) {
    if (std_.columns != matrix.columns) {
        throw ShapeError("standardizer columns do not match matrix columns");
    }
    DesignMatrix out = matrix;
    for (std::size_t j = 0; j < matrix.n_cols(); ++j) {
        if (matrix.kinds[j] == ColumnKind::Dummy) continue;
        out.values.col(static_cast<Eigen::Index>(j)) =
            (matrix.values.col(static_cast<Eigen::Index>(j)).array() - std_.mean[j]) /
            std_.sd[j];
    }
    return out;
}

double destandardize(const Standardizer& std_, std::size_t column, double value) {
    return value * std_.sd[column] + std_.mean[column];
}

// ============================================================================
// chronological_split
// ============================================================================

SplitIndex chronological_split(const std::vector<std::size_t>& rows_per_city, double fraction) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw ArgumentError("split fraction must be in (0, 1)");
    }
    SplitIndex out;
    std::size_t offset = 0;
    for (std::size_t n : rows_per_city) {
        if (n < 2) throw SplitError("chronological_split: every city needs at least 2 rows");
        std::size_t n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            (i < n_train ? out.train : out.test).push_back(offset + i);
        }
        offset += n;
    }
    return out;
}

}  // namespace airphys::features
