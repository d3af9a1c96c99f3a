#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "airphys/dataset.hpp"
#include "airphys/forest.hpp"

using namespace airphys;
using namespace airphys::forest;

namespace {

features::DesignMatrix matrix_of(const std::vector<std::string>& names,
                                 const Eigen::MatrixXd& values) {
    features::DesignMatrix m;
    m.columns = names;
    m.kinds.assign(names.size(), features::ColumnKind::Continuous);
    m.values = values;
    m.row_city.assign(static_cast<std::size_t>(values.rows()), "X");
    m.row_date.assign(static_cast<std::size_t>(values.rows()), Date(2009, 1, 1));
    return m;
}

struct NoisyLinear {
    features::DesignMatrix X;
    Eigen::VectorXd y;
};

// y = 3 x1 + 0.1 x2 + N(0,1) over 5 standard normal features.
NoisyLinear noisy_linear(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 5);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) X(i, j) = rng.normal();
        y(i) = 3.0 * X(i, 0) + 0.1 * X(i, 1) + rng.normal();
    }
    NoisyLinear out;
    out.X = matrix_of({"x1", "x2", "x3", "x4", "x5"}, X);
    out.y = y;
    return out;
}

bool same_forest(const Forest& a, const Forest& b) {
    if (a.trees.size() != b.trees.size()) return false;
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        if (a.bootstrap_rows[t] != b.bootstrap_rows[t]) return false;
        if (a.trees[t].nodes.size() != b.trees[t].nodes.size()) return false;
        for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
            const auto& na = a.trees[t].nodes[k];
            const auto& nb = b.trees[t].nodes[k];
            if (na.split_feature != nb.split_feature || na.threshold != nb.threshold ||
                na.left != nb.left || na.right != nb.right || na.leaf_value != nb.leaf_value) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

// ============================================================================
// fit_forest / predict_forest
// ============================================================================

TEST_CASE("constant targets are degenerate") {
    Eigen::MatrixXd X(20, 2);
    Rng rng(1);
    for (Eigen::Index i = 0; i < 20; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
    }
    Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 4.0);
    CHECK_THROWS_AS(fit_forest(matrix_of({"a", "b"}, X), y, 10, 0, 2, 1),
                    DegenerateColumnError);
}

TEST_CASE("a step function of one feature is learned almost exactly") {
    Rng rng(3);
    const std::size_t n = 400;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
        y(i) = X(i, 0) > 0.0 ? 5.0 : -5.0;
    }
    auto m = matrix_of({"x1", "x2", "x3"}, X);
    auto forest = fit_forest(m, y, 50, 0, 5, 11);

    double mse = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        const double err = predict_forest(forest, X.row(i)) - y(i);
        mse += err * err;
    }
    mse /= static_cast<double>(n);
    const double var = (y.array() - y.mean()).square().mean();
    CHECK(mse < 0.01 * var);
}

TEST_CASE("fixed seed reproduces the forest exactly") {
    auto data = noisy_linear(200, 5);
    auto a = fit_forest(data.X, data.y, 30, 2, 5, 99);
    auto b = fit_forest(data.X, data.y, 30, 2, 5, 99);
    CHECK(same_forest(a, b));
    auto c = fit_forest(data.X, data.y, 30, 2, 5, 100);
    CHECK(!same_forest(a, c));
}

TEST_CASE("prediction is the mean of tree predictions") {
    // Hand-built single-leaf trees.
    Forest forest;
    forest.feature_names = {"x"};
    RegressionTree t1, t2;
    t1.nodes.push_back({-1, 0.0, -1, -1, 2.0});
    t2.nodes.push_back({-1, 0.0, -1, -1, 4.0});
    forest.trees = {t1, t2};
    Eigen::RowVectorXd x(1);
    x << 0.5;
    CHECK(predict_forest(forest, x) == 3.0);

    forest.trees = {t1, t1, t1};
    CHECK(predict_forest(forest, x) == 2.0);

    Eigen::RowVectorXd bad(2);
    bad << 0.5, 1.0;
    CHECK_THROWS_AS(predict_forest(forest, bad), ShapeError);
}

TEST_CASE("forest beats the mean predictor on planted-linear data") {
    auto data = noisy_linear(500, 7);
    auto forest = fit_forest(data.X, data.y, 100, 2, 5, 21);

    // Fresh draws from the same process as a test set.
    auto test = noisy_linear(300, 8);
    double forest_se = 0.0, mean_se = 0.0;
    const double train_mean = data.y.mean();
    for (Eigen::Index i = 0; i < test.y.size(); ++i) {
        const double p = predict_forest(forest, test.X.values.row(i));
        forest_se += (p - test.y(i)) * (p - test.y(i));
        mean_se += (train_mean - test.y(i)) * (train_mean - test.y(i));
    }
    CHECK(std::sqrt(forest_se) < std::sqrt(mean_se));
}

TEST_CASE("training MSE does not grow with tree count on a shared schedule") {
    // Per-tree seeds depend only on the tree index, so a T-tree forest is a
    // prefix of any larger forest under the same seed.
    auto data = noisy_linear(300, 19);
    double last = std::numeric_limits<double>::infinity();
    for (std::size_t trees : {1, 5, 25, 100, 250}) {
        auto forest = fit_forest(data.X, data.y, trees, 2, 5, 77);
        double mse = 0.0;
        for (Eigen::Index i = 0; i < data.y.size(); ++i) {
            const double err = predict_forest(forest, data.X.values.row(i)) - data.y(i);
            mse += err * err;
        }
        mse /= static_cast<double>(data.y.size());
        CHECK(mse <= last + 1e-12);
        last = mse;
    }
}

TEST_CASE("oob masks complement the bootstrap rows") {
    auto data = noisy_linear(100, 13);
    auto forest = fit_forest(data.X, data.y, 20, 2, 5, 3);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        std::vector<bool> in_bag(100, false);
        for (std::size_t r : forest.bootstrap_rows[t]) in_bag[r] = true;
        for (std::size_t i = 0; i < 100; ++i) {
            CHECK(forest.oob_mask[t][i] == static_cast<std::uint8_t>(!in_bag[i]));
        }
    }
}

// ============================================================================
// oob_permutation_importance
// ============================================================================

TEST_CASE("the dominant feature ranks first and noise features stay near zero") {
    auto data = noisy_linear(600, 17);
    auto forest = fit_forest(data.X, data.y, 150, 2, 5, 31);
    auto report = oob_permutation_importance(forest, data.X, data.y, 3, 5);
    CHECK(report.rank.at("x1") == 1);
    CHECK(report.pct_inc_mse.at("x1") > 50.0);
    std::size_t seen = 0;
    for (const auto& [name, r] : report.rank) {
        (void)name;
        ++seen;
        CHECK(r >= 1);
        CHECK(r <= 5);
    }
    CHECK(seen == 5);
}

TEST_CASE("pure-noise features average within five points of zero") {
    double acc3 = 0.0, acc4 = 0.0, acc5 = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto data = noisy_linear(300, 1000 + seed);
        auto forest = fit_forest(data.X, data.y, 60, 2, 5, seed);
        auto report = oob_permutation_importance(forest, data.X, data.y, 2, seed);
        acc3 += report.pct_inc_mse.at("x3");
        acc4 += report.pct_inc_mse.at("x4");
        acc5 += report.pct_inc_mse.at("x5");
    }
    CHECK(std::abs(acc3 / 20.0) < 5.0);
    CHECK(std::abs(acc4 / 20.0) < 5.0);
    CHECK(std::abs(acc5 / 20.0) < 5.0);
}

TEST_CASE("HDD planted as dominant driver ranks first") {
    dataset::SyntheticConfig cfg;
    cfg.cities = 1;
    cfg.days = 700;
    cfg.seed = 29;
    cfg.noise_sd = 1.0;
    cfg.effects[Pollutant::PM25] = {{Variable::HDD, {3.0, 0.0}},
                                    {Variable::TV, {0.8, 0.0}},
                                    {Variable::SD, {0.3, 0.0}}};
    cfg.base_level = {{Pollutant::PM25, 15.0}, {Pollutant::NOx, 50.0}};
    auto panel = dataset::generate_synthetic(cfg);

    const auto vars = covariate_order();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(panel.n_days()),
                      static_cast<Eigen::Index>(vars.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(panel.n_days()));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < vars.size(); ++j) {
        names.push_back(variable_name(vars[j]));
        for (std::size_t d = 0; d < panel.n_days(); ++d) {
            X(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) =
                panel.get(0, d, vars[j]);
        }
    }
    for (std::size_t d = 0; d < panel.n_days(); ++d) {
        y(static_cast<Eigen::Index>(d)) = panel.get(0, d, Variable::PM25);
    }
    auto m = matrix_of(names, X);
    auto forest = fit_forest(m, y, 150, 3, 5, 91);
    auto report = oob_permutation_importance(forest, m, y, 3, 91);
    // Tmean carries the same information as HDD by construction; both may
    // score high, but HDD must win.
    for (const auto& [name, score] : report.pct_inc_mse) {
        if (name != "HDD") CHECK(report.pct_inc_mse.at("HDD") >= score);
    }
    CHECK(report.rank.at("HDD") == 1);
}

TEST_CASE("permuting a feature no tree split on scores exactly zero") {
    Rng rng(23);
    const std::size_t n = 200;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        X(i, 0) = rng.uniform(-1, 1);
        X(i, 1) = rng.uniform(-1, 1);
        X(i, 2) = 0.0;  // constant: no split can use it
        y(i) = 4.0 * X(i, 0) + rng.normal();
    }
    auto m = matrix_of({"a", "b", "unused"}, X);
    auto forest = fit_forest(m, y, 40, 3, 5, 41);
    for (const auto& tree : forest.trees) {
        for (int f : tree.used_features()) CHECK(f != 2);
    }
    auto report = oob_permutation_importance(forest, m, y, 3, 17);
    CHECK(report.pct_inc_mse.at("unused") == 0.0);
}

TEST_CASE("importance export is ordered by rank") {
    auto data = noisy_linear(200, 27);
    auto forest = fit_forest(data.X, data.y, 40, 2, 5, 1);
    auto report = oob_permutation_importance(forest, data.X, data.y, 2, 2);
    const std::string text = report.to_csv();
    CHECK(text.rfind("feature,pct_inc_mse,rank\n", 0) == 0);
    CHECK(text.find(",1\n") != std::string::npos);
}
