#include "airphys/panel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "airphys/csv.hpp"

namespace airphys::panel {

std::string PanelModelFit::to_csv() const {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, coef] : coefficients) {
        rows.push_back({name, format_double(coef), format_double(standard_errors.at(name)),
                        format_double(t_stats.at(name))});
    }
    for (const auto& [name, coef] : fixed_effects) {
        rows.push_back({name, format_double(coef), format_double(standard_errors.at(name)),
                        format_double(t_stats.at(name))});
    }
    return csv::to_string({"feature", "coefficient", "std_error", "t_stat"}, rows);
}

double CorrelationMatrix::at(const std::string& a, const std::string& b) const {
    auto idx = [this](const std::string& n) {
        auto it = std::find(names.begin(), names.end(), n);
        if (it == names.end()) throw ArgumentError("unknown variable: " + n);
        return static_cast<Eigen::Index>(it - names.begin());
    };
    return values(idx(a), idx(b));
}

std::string CorrelationMatrix::to_csv() const {
    std::vector<std::string> header = {""};
    header.insert(header.end(), names.begin(), names.end());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::vector<std::string> row = {names[i]};
        for (std::size_t j = 0; j < names.size(); ++j) {
            row.push_back(format_double(
                values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
        rows.push_back(std::move(row));
    }
    return csv::to_string(header, rows);
}

// ============================================================================
// fit_panel_ols
// ============================================================================

namespace {

bool is_fixed_effect_column(const std::string& column, const std::vector<std::string>& fe_keys) {
    for (const auto& key : fe_keys) {
        if (column.size() > key.size() && column.compare(0, key.size(), key) == 0 &&
            column[key.size()] == '=') {
            return true;
        }
    }
    return false;
}

}  // namespace

PanelModelFit fit_panel_ols(const features::DesignMatrix& design, const Eigen::VectorXd& response,
                            const std::vector<std::string>& fe_keys) {
    const Eigen::Index n = design.values.rows();
    const Eigen::Index p = design.values.cols() + 1;  // + intercept
    if (n <= p) throw ArgumentError("fit_panel_ols: need n > p");
    if (response.size() != n) throw ShapeError("response length does not match design rows");

    Eigen::MatrixXd X(n, p);
    X.col(0).setOnes();
    X.rightCols(design.values.cols()) = design.values;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) {
        const auto perm = qr.colsPermutation().indices();
        std::string dependent;
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            const Eigen::Index col = perm(k);
            if (!dependent.empty()) dependent += ", ";
            dependent += col == 0 ? "(intercept)" : design.columns[static_cast<std::size_t>(col - 1)];
        }
        throw CollinearityError("design matrix is rank deficient; dependent columns: " +
                                dependent);
    }

    const Eigen::VectorXd beta = qr.solve(response);
    const Eigen::VectorXd resid = response - X * beta;
    const double rss = resid.squaredNorm();
    const double sigma2 = rss / static_cast<double>(n - p);

    // (X'X)^-1 from the QR factors: P R^-1 R^-T P'.
    Eigen::MatrixXd r_inv =
        qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>().solve(
            Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd cov_unscaled = r_inv * r_inv.transpose();
    const Eigen::MatrixXd perm = qr.colsPermutation();
    cov_unscaled = perm * cov_unscaled * perm.transpose();

    const double y_mean = response.mean();
    const double tss = (response.array() - y_mean).square().sum();
    const double r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;

    PanelModelFit fit;
    fit.n = static_cast<std::size_t>(n);
    fit.p = static_cast<std::size_t>(p);
    fit.r_squared = std::clamp(r2, 0.0, 1.0);
    fit.residuals = resid;

    for (Eigen::Index j = 0; j < p; ++j) {
        const std::string name =
            j == 0 ? "(intercept)" : design.columns[static_cast<std::size_t>(j - 1)];
        const double se = std::sqrt(std::max(0.0, sigma2 * cov_unscaled(j, j)));
        const double t = se > 0.0 ? beta(j) / se : 0.0;
        if (j > 0 && is_fixed_effect_column(name, fe_keys)) {
            fit.fixed_effects[name] = beta(j);
        } else {
            fit.coefficients[name] = beta(j);
        }
        fit.standard_errors[name] = se;
        fit.t_stats[name] = t;
    }
    return fit;
}

// ============================================================================
// correlation_matrix
// ============================================================================

namespace {

CorrelationMatrix pearson(const std::vector<std::string>& names, const Eigen::MatrixXd& data) {
    const Eigen::Index n = data.rows();
    const Eigen::Index p = data.cols();
    if (n < 2) throw ArgumentError("correlation_matrix: need at least 2 rows");

    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    Eigen::VectorXd norms(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        norms(j) = centered.col(j).norm();
        if (norms(j) == 0.0) {
            throw DegenerateColumnError("constant column: " + names[static_cast<std::size_t>(j)]);
        }
    }

    CorrelationMatrix out;
    out.names = names;
    out.values.resize(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        out.values(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double r =
                centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j));
            out.values(i, j) = std::clamp(r, -1.0, 1.0);
            out.values(j, i) = out.values(i, j);
        }
    }
    return out;
}

}  // namespace

CorrelationMatrix correlation_matrix(const features::DesignMatrix& design) {
    return pearson(design.columns, design.values);
}

CorrelationMatrix correlation_matrix(const dataset::CityDailyPanel& panel) {
    // Pooled city-day rows; keep rows that are complete across all variables.
    const auto vars = all_variables();
    std::vector<Eigen::Index> keep;
    const std::size_t n_rows = panel.n_cities() * panel.n_days();
    Eigen::MatrixXd data(static_cast<Eigen::Index>(n_rows),
                         static_cast<Eigen::Index>(vars.size()));
    Eigen::Index out_row = 0;
    for (std::size_t c = 0; c < panel.n_cities(); ++c) {
        for (std::size_t d = 0; d < panel.n_days(); ++d) {
            bool complete = true;
            for (std::size_t j = 0; j < vars.size(); ++j) {
                const double x = panel.get(c, d, vars[j]);
                if (is_missing(x)) {
                    complete = false;
                    break;
                }
                data(out_row, static_cast<Eigen::Index>(j)) = x;
            }
            if (complete) ++out_row;
        }
    }
    data.conservativeResize(out_row, Eigen::NoChange);

    std::vector<std::string> names;
    for (Variable v : vars) names.push_back(variable_name(v));
    return pearson(names, data);
}

std::vector<std::string> rank_features_by_significance(const PanelModelFit& fit, std::size_t k) {
    std::vector<std::string> names;
    for (const auto& [name, coef] : fit.coefficients) {
        (void)coef;
        if (name != "(intercept)") names.push_back(name);
    }
    std::sort(names.begin(), names.end(), [&](const std::string& a, const std::string& b) {
        const double ta = std::abs(fit.t_stats.at(a));
        const double tb = std::abs(fit.t_stats.at(b));
        if (ta != tb) return ta > tb;
        return a < b;
    });
    if (k < names.size()) names.resize(k);
    return names;
}

}  // namespace airphys::panel
