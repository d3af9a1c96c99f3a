#include "airphys/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "airphys/csv.hpp"

namespace airphys::cluster {

void VariablePointSet::validate() const {
    if (names.size() != points.size()) {
        throw ArgumentError("point set: names and points must align");
    }
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) throw ArgumentError("point set: duplicate names");
    for (const auto& p : points) {
        if (p.size() != dimension()) throw ArgumentError("point set: ragged dimensions");
    }
}

VariablePointSet points_from_design(const features::DesignMatrix& design) {
    VariablePointSet out;
    out.names = design.columns;
    out.points.resize(design.n_cols());
    for (std::size_t j = 0; j < design.n_cols(); ++j) {
        out.points[j].resize(design.n_rows());
        for (std::size_t r = 0; r < design.n_rows(); ++r) {
            out.points[j][r] =
                design.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        }
    }
    return out;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

// ============================================================================
// kmeans
// ============================================================================

KMeansResult kmeans(const VariablePointSet& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter) {
    points.validate();
    const std::size_t n = points.size();
    if (k < 1 || k > n) throw ArgumentError("kmeans: need 1 <= k <= point count");

    // Canonical point order (by coordinates, then name) makes initialization
    // independent of input order.
    std::vector<std::size_t> canon(n);
    std::iota(canon.begin(), canon.end(), 0);
    std::sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
        if (points.points[a] != points.points[b]) return points.points[a] < points.points[b];
        return points.names[a] < points.names[b];
    });

    Rng rng(seed);
    std::vector<std::size_t> pool = canon;
    std::vector<std::vector<double>> centroids;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t pick = rng.uniform_index(pool.size());
        centroids.push_back(points.points[pool[pick]]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    std::vector<std::size_t> assign(n, 0);
    KMeansResult result;
    result.k = k;
    result.seed = seed;

    auto assign_all = [&]() {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = sq_dist(points.points[i], centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        return changed;
    };

    auto repair_empty = [&]() {
        for (std::size_t c = 0; c < k; ++c) {
            if (std::count(assign.begin(), assign.end(), c) > 0) continue;
            // Move in the point farthest from its own centroid.
            std::size_t worst = 0;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::count(assign.begin(), assign.end(), assign[i]) <= 1) continue;
                const double d = sq_dist(points.points[i], centroids[assign[i]]);
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            assign[worst] = c;
            centroids[c] = points.points[worst];
        }
    };

    auto inertia_now = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += sq_dist(points.points[i], centroids[assign[i]]);
        return s;
    };

    assign_all();
    repair_empty();
    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        // Update step.
        const std::size_t dim = points.dimension();
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[assign[i]] += 1;
            for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += points.points[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t d = 0; d < dim; ++d) {
                centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
            }
        }
        result.iterations = iter;
        const bool changed = assign_all();
        repair_empty();
        result.inertia_trace.push_back(inertia_now());
        if (!changed) break;
    }

    result.centroids = centroids;
    result.inertia = inertia_now();
    for (std::size_t i = 0; i < n; ++i) result.assignments[points.names[i]] = assign[i];
    return result;
}

// ============================================================================
// hierarchical
// ============================================================================

Linkage parse_linkage(const std::string& name) {
    if (name == "single") return Linkage::Single;
    if (name == "complete") return Linkage::Complete;
    if (name == "average") return Linkage::Average;
    throw ArgumentError("unknown linkage: " + name);
}

const char* linkage_name(Linkage l) {
    switch (l) {
        case Linkage::Single: return "single";
        case Linkage::Complete: return "complete";
        case Linkage::Average: return "average";
    }
    return "?";
}

std::string Dendrogram::to_csv() const {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < merges.size(); ++i) {
        rows.push_back({std::to_string(i), std::to_string(merges[i].node_a),
                        std::to_string(merges[i].node_b), format_double(merges[i].height)});
    }
    return csv::to_string({"step", "node_a", "node_b", "height"}, rows);
}

Dendrogram hierarchical(const VariablePointSet& points, Linkage linkage) {
    points.validate();
    const std::size_t n = points.size();
    if (n < 2) throw ArgumentError("hierarchical: need at least 2 points");

    // Active cluster list; Lance-Williams distance updates.
    struct Cluster {
        std::size_t node_id;
        std::size_t size;
    };
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back({i, 1});

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dist[i][j] = dist[j][i] = std::sqrt(sq_dist(points.points[i], points.points[j]));
        }
    }

    Dendrogram out;
    out.leaf_names = points.names;
    std::size_t next_node = n;

    while (active.size() > 1) {
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                const double d = dist[i][j];
                const auto a = std::minmax(active[i].node_id, active[j].node_id);
                const auto b = std::minmax(active[bi].node_id, active[bj].node_id);
                if (d < best || (d == best && a < b)) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }

        const auto [na, nb] = std::minmax(active[bi].node_id, active[bj].node_id);
        out.merges.push_back({na, nb, best});

        // Merge bj into bi, then drop bj.
        const double size_a = static_cast<double>(active[bi].size);
        const double size_b = static_cast<double>(active[bj].size);
        for (std::size_t m = 0; m < active.size(); ++m) {
            if (m == bi || m == bj) continue;
            double d = 0.0;
            switch (linkage) {
                case Linkage::Single: d = std::min(dist[bi][m], dist[bj][m]); break;
                case Linkage::Complete: d = std::max(dist[bi][m], dist[bj][m]); break;
                case Linkage::Average:
                    d = (size_a * dist[bi][m] + size_b * dist[bj][m]) / (size_a + size_b);
                    break;
            }
            dist[bi][m] = dist[m][bi] = d;
        }
        active[bi] = {next_node++, active[bi].size + active[bj].size};
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
        for (auto& row : dist) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
        dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return out;
}

std::map<std::string, std::size_t> cut_dendrogram(const Dendrogram& d, std::size_t k) {
    const std::size_t n = d.leaf_names.size();
    if (k < 1 || k > n) throw ArgumentError("cut_dendrogram: need 1 <= k <= leaves");

    // Union-find over all nodes, applying all but the final k-1 merges.
    std::vector<std::size_t> parent(n + d.merges.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    const std::size_t kept = d.merges.size() - (k - 1);
    for (std::size_t i = 0; i < kept; ++i) {
        const std::size_t merged = n + i;
        parent[find(d.merges[i].node_a)] = merged;
        parent[find(d.merges[i].node_b)] = merged;
    }

    // Number clusters by smallest member leaf.
    std::map<std::size_t, std::size_t> root_to_id;
    for (std::size_t leaf = 0; leaf < n; ++leaf) {
        const std::size_t root = find(leaf);
        root_to_id.emplace(root, root_to_id.size());
    }
    std::map<std::string, std::size_t> out;
    for (std::size_t leaf = 0; leaf < n; ++leaf) {
        out[d.leaf_names[leaf]] = root_to_id.at(find(leaf));
    }
    return out;
}

std::string assignments_to_csv(const std::map<std::string, std::size_t>& assignments) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, cluster] : assignments) {
        rows.push_back({name, std::to_string(cluster)});
    }
    return csv::to_string({"variable", "cluster"}, rows);
}

}  // namespace airphys::cluster
