#include "airphys/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "airphys/csv.hpp"

namespace airphys::forest {

double RegressionTree::predict(const Eigen::RowVectorXd& x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].split_feature >= 0) {
        const Node& nd = nodes[static_cast<std::size_t>(node)];
        node = x(nd.split_feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].leaf_value;
}

std::vector<int> RegressionTree::used_features() const {
    std::set<int> used;
    for (const auto& nd : nodes) {
        if (nd.split_feature >= 0) used.insert(nd.split_feature);
    }
    return {used.begin(), used.end()};
}

std::string ImportanceReport::to_csv() const {
    // Rows ordered by rank.
    std::vector<std::pair<std::size_t, std::string>> ordered;
    for (const auto& [name, r] : rank) ordered.emplace_back(r, name);
    std::sort(ordered.begin(), ordered.end());
    std::vector<std::vector<std::string>> rows;
    for (const auto& [r, name] : ordered) {
        rows.push_back({name, format_double(pct_inc_mse.at(name)), std::to_string(r)});
    }
    return csv::to_string({"feature", "pct_inc_mse", "rank"}, rows);
}

// ============================================================================
// Tree growing
// ============================================================================

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double score = std::numeric_limits<double>::infinity();  // weighted child SSE
};

// Best midpoint split of `rows` on feature j, or nullopt.
void consider_feature(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const std::vector<std::size_t>& rows, int feature, std::size_t min_leaf,
                      SplitChoice& best) {
    const std::size_t m = rows.size();
    std::vector<std::pair<double, double>> xy(m);  // (x, y) sorted by x
    for (std::size_t i = 0; i < m; ++i) {
        xy[i] = {X(static_cast<Eigen::Index>(rows[i]), feature),
                 y(static_cast<Eigen::Index>(rows[i]))};
    }
    std::sort(xy.begin(), xy.end());

    // Prefix sums let each candidate split evaluate in O(1).
    double total_sum = 0.0, total_sq = 0.0;
    for (const auto& [x, t] : xy) {
        total_sum += t;
        total_sq += t * t;
    }
    double left_sum = 0.0, left_sq = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        left_sum += xy[i].second;
        left_sq += xy[i].second * xy[i].second;
        if (xy[i].first == xy[i + 1].first) continue;  // no boundary here
        const std::size_t nl = i + 1;
        const std::size_t nr = m - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right_sum = total_sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                           (right_sq - right_sum * right_sum / static_cast<double>(nr));
        const double threshold = 0.5 * (xy[i].first + xy[i + 1].first);
        if (sse < best.score ||
            (sse == best.score &&
             (feature < best.feature || (feature == best.feature && threshold < best.threshold)))) {
            best = {feature, threshold, sse};
        }
    }
}

int grow_node(RegressionTree& tree, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
              std::vector<std::size_t>& rows, std::size_t mtry, std::size_t min_leaf, Rng& rng) {
    const std::size_t m = rows.size();
    double sum = 0.0;
    for (std::size_t r : rows) sum += y(static_cast<Eigen::Index>(r));
    const double mean = sum / static_cast<double>(m);

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.back().leaf_value = mean;

    if (m < 2 * min_leaf) return node_id;
    bool constant = true;
    for (std::size_t r : rows) {
        if (y(static_cast<Eigen::Index>(r)) != y(static_cast<Eigen::Index>(rows[0]))) {
            constant = false;
            break;
        }
    }
    if (constant) return node_id;

    // Seeded mtry-subset of features, drawn without replacement then scanned
    // in ascending order so tie-breaking is stable.
    const std::size_t p = static_cast<std::size_t>(X.cols());
    std::vector<int> pool(p);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<int> chosen;
    for (std::size_t i = 0; i < mtry && !pool.empty(); ++i) {
        const std::size_t pick = rng.uniform_index(pool.size());
        chosen.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(chosen.begin(), chosen.end());

    SplitChoice best;
    for (int f : chosen) consider_feature(X, y, rows, f, min_leaf, best);
    if (best.feature < 0) return node_id;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
        (X(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left_rows
                                                                         : right_rows)
            .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int left = grow_node(tree, X, y, left_rows, mtry, min_leaf, rng);
    const int right = grow_node(tree, X, y, right_rows, mtry, min_leaf, rng);
    tree.nodes[static_cast<std::size_t>(node_id)].split_feature = best.feature;
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = best.threshold;
    tree.nodes[static_cast<std::size_t>(node_id)].left = left;
    tree.nodes[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
}

}  // namespace

Forest fit_forest(const features::DesignMatrix& X, const Eigen::VectorXd& y, std::size_t trees,
                  std::size_t mtry, std::size_t min_leaf, std::uint64_t seed) {
    const std::size_t n = X.n_rows();
    const std::size_t p = X.n_cols();
    if (n < 10) throw ArgumentError("fit_forest: need at least 10 rows");
    if (trees < 1) throw ArgumentError("fit_forest: need at least 1 tree");
    if (mtry == 0) mtry = (p + 2) / 3;  // ceil(p/3)
    if (mtry > p) throw ArgumentError("fit_forest: mtry exceeds feature count");
    if (y.size() != static_cast<Eigen::Index>(n)) throw ShapeError("fit_forest: y length mismatch");
    if (y.maxCoeff() == y.minCoeff()) {
        throw DegenerateColumnError("fit_forest: constant target");
    }

    Forest forest;
    forest.mtry = mtry;
    forest.seed = seed;
    forest.feature_names = X.columns;
    forest.trees.resize(trees);
    forest.bootstrap_rows.resize(trees);
    forest.oob_mask.resize(trees);

    const SeedStreams streams(seed);
    parallel_for(trees, [&](std::size_t t) {
        Rng rng = streams.stream("forest/tree/" + std::to_string(t));
        std::vector<std::size_t> rows(n);
        std::vector<std::uint8_t> in_bag(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            rows[i] = rng.uniform_index(n);
            in_bag[rows[i]] = 1;
        }
        forest.bootstrap_rows[t] = rows;
        forest.oob_mask[t].resize(n);
        for (std::size_t i = 0; i < n; ++i) forest.oob_mask[t][i] = in_bag[i] ? 0 : 1;

        forest.trees[t].min_leaf = min_leaf;
        std::vector<std::size_t> work = rows;
        grow_node(forest.trees[t], X.values, y, work, mtry, min_leaf, rng);
    });
    return forest;
}

double predict_forest(const Forest& forest, const Eigen::RowVectorXd& x) {
    if (x.size() != static_cast<Eigen::Index>(forest.feature_names.size())) {
        throw ShapeError("predict_forest: feature dimension mismatch");
    }
    double sum = 0.0;
    for (const auto& tree : forest.trees) sum += tree.predict(x);
    return sum / static_cast<double>(forest.trees.size());
}

// ============================================================================
// OOB permutation importance
// ============================================================================

namespace {

// Mean over the trees for which each row is out of bag; rows covered by no
// tree are skipped via the `covered` mask.
double oob_mse(const Forest& forest, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const std::vector<std::uint8_t>& covered) {
    double se = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(X.rows()); ++i) {
        if (!covered[i]) continue;
        double sum = 0.0;
        std::size_t votes = 0;
        for (std::size_t t = 0; t < forest.trees.size(); ++t) {
            if (!forest.oob_mask[t][i]) continue;
            sum += forest.trees[t].predict(X.row(static_cast<Eigen::Index>(i)));
            ++votes;
        }
        const double pred = sum / static_cast<double>(votes);
        const double err = pred - y(static_cast<Eigen::Index>(i));
        se += err * err;
        ++count;
    }
    return se / static_cast<double>(count);
}

}  // namespace

ImportanceReport oob_permutation_importance(const Forest& forest,
                                            const features::DesignMatrix& X,
                                            const Eigen::VectorXd& y, std::size_t repeats,
                                            std::uint64_t seed) {
    const std::size_t n = X.n_rows();
    const std::size_t p = X.n_cols();
    if (repeats < 1) throw ArgumentError("importance: repeats must be >= 1");

    ImportanceReport report;
    std::vector<std::uint8_t> covered(n, 1);
    std::size_t n_covered = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t t = 0; t < forest.trees.size() && !any; ++t) {
            any = forest.oob_mask[t][i] != 0;
        }
        covered[i] = any ? 1 : 0;
        n_covered += covered[i];
    }
    if (n_covered < n) {
        report.warnings.push_back(std::to_string(n - n_covered) +
                                  " rows are in-bag for every tree and were excluded");
    }
    if (n_covered == 0) throw ArgumentError("importance: no out-of-bag coverage at all");

    const double base = oob_mse(forest, X.values, y, covered);
    const SeedStreams streams(seed);

    std::vector<double> scores(p, 0.0);
    parallel_for(p, [&](std::size_t j) {
        double acc = 0.0;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            Rng rng = streams.stream("importance/" + std::to_string(j) + "/" +
                                     std::to_string(rep));
            std::vector<std::size_t> covered_rows;
            for (std::size_t i = 0; i < n; ++i) {
                if (covered[i]) covered_rows.push_back(i);
            }
            std::vector<std::size_t> perm = covered_rows;
            rng.shuffle(perm);

            Eigen::MatrixXd Xp = X.values;
            for (std::size_t i = 0; i < covered_rows.size(); ++i) {
                Xp(static_cast<Eigen::Index>(covered_rows[i]), static_cast<Eigen::Index>(j)) =
                    X.values(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(j));
            }
            const double permuted = oob_mse(forest, Xp, y, covered);
            acc += 100.0 * (permuted - base) / base;
        }
        scores[j] = acc / static_cast<double>(repeats);
    });

    // Rank descending; ties keep column order.
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t r = 0; r < p; ++r) {
        const std::string& name = X.columns[order[r]];
        report.pct_inc_mse[name] = scores[order[r]];
        report.rank[name] = r + 1;
    }
    return report;
}

}  // namespace airphys::forest
