#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "airphys/cluster.hpp"
#include "airphys/dataset.hpp"
#include "airphys/features.hpp"

using namespace airphys;
using namespace airphys::cluster;

namespace {

VariablePointSet line_points(const std::vector<double>& xs) {
    VariablePointSet ps;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ps.names.push_back("p" + std::to_string(i));
        ps.points.push_back({xs[i]});
    }
    return ps;
}

// Exhaustive best 2-partition by inertia (centroid = mean of its members).
double brute_force_best_inertia_k2(const VariablePointSet& ps,
                                   std::vector<std::size_t>* best_assign = nullptr) {
    const std::size_t n = ps.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask + 1 < (1u << n); ++mask) {
        double inertia = 0.0;
        for (int side = 0; side < 2; ++side) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i) {
                if (((mask >> i) & 1u) == static_cast<unsigned>(side)) members.push_back(i);
            }
            if (members.empty()) continue;
            std::vector<double> centroid(ps.dimension(), 0.0);
            for (std::size_t m : members) {
                for (std::size_t d = 0; d < centroid.size(); ++d) {
                    centroid[d] += ps.points[m][d];
                }
            }
            for (double& c : centroid) c /= static_cast<double>(members.size());
            for (std::size_t m : members) {
                for (std::size_t d = 0; d < centroid.size(); ++d) {
                    const double diff = ps.points[m][d] - centroid[d];
                    inertia += diff * diff;
                }
            }
        }
        if (inertia < best) {
            best = inertia;
            if (best_assign) {
                best_assign->assign(n, 0);
                for (std::size_t i = 0; i < n; ++i) (*best_assign)[i] = (mask >> i) & 1u;
            }
        }
    }
    return best;
}

bool same_cluster(const std::map<std::string, std::size_t>& assign, const std::string& a,
                  const std::string& b) {
    return assign.at(a) == assign.at(b);
}

}  // namespace

// ============================================================================
// kmeans
// ============================================================================

TEST_CASE("k equal to point count gives singletons with zero inertia") {
    auto ps = line_points({0.0, 1.0, 5.0, 9.0});
    auto result = kmeans(ps, 4, 1);
    CHECK(result.inertia == 0.0);
    std::set<std::size_t> ids;
    for (const auto& [name, id] : result.assignments) ids.insert(id);
    CHECK(ids.size() == 4);
}

TEST_CASE("four points on a line split at the gap with inertia exactly 1") {
    auto ps = line_points({0.0, 1.0, 10.0, 11.0});
    std::vector<std::size_t> oracle_assign;
    const double oracle = brute_force_best_inertia_k2(ps, &oracle_assign);
    CHECK(oracle == 1.0);

    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL, 3ULL, 4ULL}) {
        auto result = kmeans(ps, 2, seed);
        CHECK(result.inertia == 1.0);
        CHECK(same_cluster(result.assignments, "p0", "p1"));
        CHECK(same_cluster(result.assignments, "p2", "p3"));
        CHECK(!same_cluster(result.assignments, "p0", "p2"));
    }
}

TEST_CASE("well-separated planted groups are recovered exactly") {
    Rng rng(8);
    VariablePointSet ps;
    for (int g = 0; g < 2; ++g) {
        for (int i = 0; i < 6; ++i) {
            std::vector<double> point(5);
            for (double& x : point) x = g * 40.0 + rng.normal();
            ps.names.push_back("g" + std::to_string(g) + "_" + std::to_string(i));
            ps.points.push_back(std::move(point));
        }
    }
    auto result = kmeans(ps, 2, 17);
    for (int i = 1; i < 6; ++i) {
        CHECK(same_cluster(result.assignments, "g0_0", "g0_" + std::to_string(i)));
        CHECK(same_cluster(result.assignments, "g1_0", "g1_" + std::to_string(i)));
    }
    CHECK(!same_cluster(result.assignments, "g0_0", "g1_0"));
}

TEST_CASE("kmeans argument validation") {
    auto ps = line_points({1.0, 2.0});
    CHECK_THROWS_AS(kmeans(ps, 3, 0), ArgumentError);
    CHECK_THROWS_AS(kmeans(ps, 0, 0), ArgumentError);
}

TEST_CASE("inertia trace is non-increasing") {
    Rng rng(4);
    VariablePointSet ps;
    for (int i = 0; i < 40; ++i) {
        std::vector<double> p(3);
        for (double& x : p) x = rng.uniform(0.0, 10.0);
        ps.names.push_back("v" + std::to_string(i));
        ps.points.push_back(std::move(p));
    }
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto result = kmeans(ps, 4, seed);
        for (std::size_t i = 1; i < result.inertia_trace.size(); ++i) {
            CHECK(result.inertia_trace[i] <= result.inertia_trace[i - 1] + 1e-9);
        }
    }
}

TEST_CASE("kmeans is deterministic and input-order invariant") {
    Rng rng(14);
    VariablePointSet ps;
    for (int i = 0; i < 12; ++i) {
        std::vector<double> p(4);
        for (double& x : p) x = rng.normal();
        ps.names.push_back("v" + std::to_string(i));
        ps.points.push_back(std::move(p));
    }
    auto a = kmeans(ps, 3, 99);
    auto b = kmeans(ps, 3, 99);
    CHECK(a.assignments == b.assignments);
    CHECK(a.inertia == b.inertia);

    // Reverse the input order: same named partition up to label renaming.
    VariablePointSet reversed;
    reversed.names.assign(ps.names.rbegin(), ps.names.rend());
    reversed.points.assign(ps.points.rbegin(), ps.points.rend());
    auto c = kmeans(reversed, 3, 99);
    for (const auto& [n1, id1] : a.assignments) {
        for (const auto& [n2, id2] : a.assignments) {
            CHECK((id1 == id2) == (c.assignments.at(n1) == c.assignments.at(n2)));
        }
    }
}

// ============================================================================
// hierarchical
// ============================================================================

TEST_CASE("two points force a single merge at their distance") {
    auto ps = line_points({0.0, 3.0});
    auto d = hierarchical(ps, Linkage::Single);
    REQUIRE(d.merges.size() == 1);
    CHECK(d.merges[0].node_a == 0);
    CHECK(d.merges[0].node_b == 1);
    CHECK(d.merges[0].height == 3.0);
}

TEST_CASE("three-point single linkage merges the close pair first") {
    auto ps = line_points({0.0, 1.0, 10.0});
    auto d = hierarchical(ps, Linkage::Single);
    REQUIRE(d.merges.size() == 2);
    CHECK(d.merges[0].node_a == 0);
    CHECK(d.merges[0].node_b == 1);
    CHECK(d.merges[0].height == 1.0);
    CHECK(d.merges[1].node_a == 2);
    CHECK(d.merges[1].node_b == 3);  // the merged {0,1} node
    CHECK(d.merges[1].height == 9.0);
}

TEST_CASE("linkages differ as the hand-computed distance matrix says") {
    // Points 0, 2, 9, 10. After merging (0,2) and (9,10):
    //   single:   d = 7    complete: d = 10    average: d = 8.5
    auto ps = line_points({0.0, 2.0, 9.0, 10.0});

    auto single = hierarchical(ps, Linkage::Single);
    auto complete = hierarchical(ps, Linkage::Complete);
    auto average = hierarchical(ps, Linkage::Average);

    CHECK(single.merges[0].height == 1.0);   // (9,10)
    CHECK(single.merges[1].height == 2.0);   // (0,2)
    CHECK(single.merges[2].height == 7.0);
    CHECK(complete.merges[2].height == 10.0);
    CHECK(average.merges[2].height == 8.5);

    for (const auto& d : {single, complete, average}) {
        for (std::size_t i = 1; i < d.merges.size(); ++i) {
            CHECK(d.merges[i].height >= d.merges[i - 1].height);
        }
    }
}

TEST_CASE("single linkage merge order equals the MST edge order") {
    auto ps = line_points({0.0, 1.5, 4.0, 4.5, 9.0});
    auto d = hierarchical(ps, Linkage::Single);
    // MST edges sorted ascending: (2,3)=0.5, (0,1)=1.5, (1,2)=2.5, (3,4)=4.5.
    std::vector<double> heights;
    for (const auto& m : d.merges) heights.push_back(m.height);
    CHECK(heights == std::vector<double>{0.5, 1.5, 2.5, 4.5});
}

TEST_CASE("merge ties break on the smallest id pair") {
    auto ps = line_points({0.0, 1.0, 2.0});  // d(0,1) == d(1,2) == 1
    auto d = hierarchical(ps, Linkage::Single);
    CHECK(d.merges[0].node_a == 0);
    CHECK(d.merges[0].node_b == 1);
}

// ============================================================================
// cut_dendrogram
// ============================================================================

TEST_CASE("dendrogram cuts at the extremes") {
    auto ps = line_points({0.0, 1.0, 10.0});
    auto d = hierarchical(ps, Linkage::Single);

    auto one = cut_dendrogram(d, 1);
    CHECK(one.at("p0") == one.at("p1"));
    CHECK(one.at("p0") == one.at("p2"));

    auto all = cut_dendrogram(d, 3);
    std::set<std::size_t> ids = {all.at("p0"), all.at("p1"), all.at("p2")};
    CHECK(ids.size() == 3);

    auto two = cut_dendrogram(d, 2);
    CHECK(two.at("p0") == two.at("p1"));
    CHECK(two.at("p0") != two.at("p2"));

    CHECK_THROWS_AS(cut_dendrogram(d, 0), ArgumentError);
    CHECK_THROWS_AS(cut_dendrogram(d, 4), ArgumentError);
}

// ============================================================================
// variable clustering on a synthetic panel
// ============================================================================

TEST_CASE("pollutants cluster with their planted drivers") {
    // Pollutants, HDD, meanRH, SD and TV share a heating-demand factor;
    // VP/PP/WG/Tmean (and WS) load on an unrelated weather factor.
    const std::size_t n = 1500;
    Rng rng(41);
    dataset::CityDailyPanel panel({"City1"}, Date(2009, 1, 1), n);
    for (std::size_t d = 0; d < n; ++d) {
        const double f_heat = rng.normal();
        const double f_other = rng.normal();
        auto heat = [&](double load) { return load * f_heat + std::sqrt(1.0 - load * load) * rng.normal(); };
        auto other = [&](double load) { return load * f_other + std::sqrt(1.0 - load * load) * rng.normal(); };
        panel.set(0, d, Variable::NOx, std::max(0.0, 50.0 + 10.0 * heat(0.92)));
        panel.set(0, d, Variable::PM25, std::max(0.0, 10.0 + 3.0 * heat(0.92)));
        panel.set(0, d, Variable::HDD, std::max(0.0, 11.0 + 3.0 * heat(0.88)));
        panel.set(0, d, Variable::SD, std::max(0.0, 6.0 + 2.0 * heat(0.88)));
        panel.set(0, d, Variable::TV, std::max(0.0, 1000.0 + 100.0 * heat(0.88)));
        panel.set(0, d, Variable::meanRH, std::max(0.0, 70.0 + 5.0 * heat(0.88)));
        panel.set(0, d, Variable::Tmean, 5.0 + 5.0 * other(0.7));
        panel.set(0, d, Variable::VP, 8.0 + 2.0 * other(0.7));
        panel.set(0, d, Variable::WG, std::max(0.0, 8.0 + 3.0 * other(0.7)));
        panel.set(0, d, Variable::PP, std::max(0.0, 3.0 + 1.5 * other(0.7)));
        panel.set(0, d, Variable::WS, std::max(0.0, 4.0 + 1.5 * other(0.7)));
    }

    // Standardized variable columns as points.
    features::DesignMatrix m;
    const auto vars = all_variables();
    m.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(vars.size()));
    for (std::size_t j = 0; j < vars.size(); ++j) {
        m.columns.push_back(variable_name(vars[j]));
        m.kinds.push_back(features::ColumnKind::Continuous);
        for (std::size_t d = 0; d < n; ++d) {
            m.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) =
                panel.get(0, d, vars[j]);
        }
    }
    m.row_city.resize(n);
    m.row_date.resize(n);
    std::vector<std::size_t> rows(m.n_rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    auto z = features::apply_standardizer(features::fit_standardizer(m, rows), m);
    auto points = points_from_design(z);

    auto dendro = hierarchical(points, Linkage::Average);
    const std::vector<std::string> drivers = {"HDD", "meanRH", "SD", "TV"};
    const std::vector<std::string> bystanders = {"VP", "PP", "WG", "Tmean"};
    for (std::size_t k : {2, 3, 4}) {
        auto cut = cut_dendrogram(dendro, k);
        CHECK(cut.at("NOx") == cut.at("PM25"));
        for (const auto& d : drivers) CHECK(same_cluster(cut, "PM25", d));
        for (const auto& b : bystanders) CHECK(!same_cluster(cut, "PM25", b));
    }

    // K-means at k=2 finds the same driver blob.
    auto km = kmeans(points, 2, 7);
    for (const auto& d : drivers) CHECK(same_cluster(km.assignments, "PM25", d));
    for (const auto& b : bystanders) CHECK(!same_cluster(km.assignments, "PM25", b));
}

TEST_CASE("exports carry the documented headers") {
    auto ps = line_points({0.0, 1.0, 10.0});
    auto d = hierarchical(ps, Linkage::Single);
    CHECK(d.to_csv().rfind("step,node_a,node_b,height\n", 0) == 0);
    auto assign = cut_dendrogram(d, 2);
    CHECK(assignments_to_csv(assign).rfind("variable,cluster\n", 0) == 0);
}
