#pragma once

#include <map>
#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/features.hpp"

namespace airphys::cluster {

/// One point per variable; the point's coordinates are that variable's
/// standardized column across all rows, so Euclidean distance between two
/// points is a monotone function of 1 - Pearson correlation.
struct VariablePointSet {
    std::vector<std::string> names;
    std::vector<std::vector<double>> points;  // names.size() x dimension

    std::size_t size() const { return points.size(); }
    std::size_t dimension() const { return points.empty() ? 0 : points.front().size(); }

    void validate() const;  // throws ArgumentError on ragged/duplicate input
};

/// Builds the point set from a design matrix's standardized columns.
VariablePointSet points_from_design(const features::DesignMatrix& design);

struct KMeansResult {
    std::size_t k = 0;
    std::map<std::string, std::size_t> assignments;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // one entry per Lloyd iteration
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
};

enum class Linkage { Single, Complete, Average };

Linkage parse_linkage(const std::string& name);  // throws ArgumentError
const char* linkage_name(Linkage l);

/// Agglomerative merge history. Leaves are 0..n-1; merge i creates node n+i.
struct Dendrogram {
    struct Merge {
        std::size_t node_a;
        std::size_t node_b;
        double height;
    };
    std::vector<std::string> leaf_names;
    std::vector<Merge> merges;

    std::string to_csv() const;  // step,node_a,node_b,height
};

/// Lloyd's algorithm. Initial centroids are k distinct points sampled
/// (seeded, uniform) from the canonically ordered point set, so results do
/// not depend on input order. Empty clusters are repaired by moving in the
/// point farthest from its current centroid.
KMeansResult kmeans(const VariablePointSet& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100);

/// Agglomerative clustering on Euclidean distances. At each step the pair at
/// minimal linkage distance merges; ties break on the smaller (a, b) id pair.
Dendrogram hierarchical(const VariablePointSet& points, Linkage linkage = Linkage::Average);

/// Removes the k-1 final merges; remaining connected components are the
/// clusters, numbered by their smallest leaf index.
std::map<std::string, std::size_t> cut_dendrogram(const Dendrogram& d, std::size_t k);

std::string assignments_to_csv(const std::map<std::string, std::size_t>& assignments);

}  // namespace airphys::cluster
