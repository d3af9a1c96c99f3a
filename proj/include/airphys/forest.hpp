#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/features.hpp"

namespace airphys::forest {

/// CART regression tree stored as a flat node array; leaves carry the mean
/// of their training targets.
struct RegressionTree {
    struct Node {
        int split_feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double leaf_value = 0.0;
    };
    std::vector<Node> nodes;
    std::size_t min_leaf = 5;

    double predict(const Eigen::RowVectorXd& x) const;
    /// Feature ids this tree actually splits on.
    std::vector<int> used_features() const;
};

struct Forest {
    std::vector<RegressionTree> trees;
    std::vector<std::vector<std::size_t>> bootstrap_rows;  // per tree
    std::vector<std::vector<std::uint8_t>> oob_mask;       // per tree, per row
    std::size_t mtry = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> feature_names;
};

struct ImportanceReport {
    std::map<std::string, double> pct_inc_mse;
    std::map<std::string, std::size_t> rank;  // 1 = most important
    std::vector<std::string> warnings;

    std::string to_csv() const;  // feature,pct_inc_mse,rank
};

/// Bootstrap-aggregated CART regression. Each tree grows on n seeded draws
/// with replacement; at each node a seeded subset of mtry features is
/// scanned for the best variance-reducing midpoint split; splits leaving a
/// child below min_leaf rows are not considered. Tie splits resolve to the
/// lower feature index, then the lower threshold. mtry = 0 selects the
/// ceil(p/3) regression default.
Forest fit_forest(const features::DesignMatrix& X, const Eigen::VectorXd& y,
                  std::size_t trees = 500, std::size_t mtry = 0, std::size_t min_leaf = 5,
                  std::uint64_t seed = 0);

double predict_forest(const Forest& forest, const Eigen::RowVectorXd& x);

/// Out-of-bag permutation importance: each row is predicted only by trees
/// that never saw it; %IncMSE_j = 100 * (MSE with column j permuted - base
/// MSE) / base MSE, averaged over seeded permutation repeats.
ImportanceReport oob_permutation_importance(const Forest& forest,
                                            const features::DesignMatrix& X,
                                            const Eigen::VectorXd& y, std::size_t repeats = 5,
                                            std::uint64_t seed = 0);

}  // namespace airphys::forest
