#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "airphys/dataset.hpp"
#include "airphys/eval.hpp"

using namespace airphys;
using namespace airphys::eval;

namespace {

MetricsRow row(const std::string& city, Pollutant pol, const std::string& model, double rmse,
               double mean = 10.88, double mx = 53.0) {
    MetricsRow r;
    r.city = city;
    r.pollutant = pol;
    r.model = model;
    r.rmse_standardized = rmse;
    r.rmse_raw = rmse;
    r.target_mean_raw = mean;
    r.target_max_raw = mx;
    return r;
}

}  // namespace

// ============================================================================
// rmse
// ============================================================================

TEST_CASE("rmse basics") {
    CHECK(rmse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK(rmse({1.0, 2.0}, {3.0, 4.0}) == 2.0);
    CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(rmse({}, {}), ShapeError);
}

TEST_CASE("constant predictor at the mean scores the population sd") {
    Rng rng(4);
    std::vector<double> actual(500);
    for (double& a : actual) a = rng.normal(5.0, 2.5);
    double mean = 0.0;
    for (double a : actual) mean += a;
    mean /= actual.size();
    std::vector<double> constant(actual.size(), mean);

    double ss = 0.0;
    for (double a : actual) ss += (a - mean) * (a - mean);
    const double pop_sd = std::sqrt(ss / actual.size());
    CHECK(rmse(constant, actual) == doctest::Approx(pop_sd).epsilon(1e-12));
}

TEST_CASE("rmse is symmetric and translation-covariant") {
    Rng rng(9);
    std::vector<double> p(100), a(100), pc(100), ac(100);
    for (std::size_t i = 0; i < 100; ++i) {
        p[i] = rng.normal();
        a[i] = rng.normal();
        pc[i] = p[i] + 7.5;
        ac[i] = a[i] + 7.5;
    }
    CHECK(rmse(p, a) == rmse(a, p));
    CHECK(rmse(pc, ac) == doctest::Approx(rmse(p, a)).epsilon(1e-12));
}

// ============================================================================
// compare_models
// ============================================================================

TEST_CASE("winner per cell follows the smaller standardized rmse") {
    MetricsReport lstm, pbdl;
    lstm.rows = {row("Trondheim", Pollutant::PM25, "lstm", 1.0320),
                 row("Bergen", Pollutant::NOx, "lstm", 1.0190)};
    pbdl.rows = {row("Trondheim", Pollutant::PM25, "pbdl", 0.4448),
                 row("Bergen", Pollutant::NOx, "pbdl", 1.0442)};
    auto table = compare_models({lstm, pbdl});
    REQUIRE(table.rows.size() == 2);
    for (const auto& r : table.rows) {
        if (r.city == "Trondheim") {
            CHECK(r.winner == "pbdl");
            CHECK(r.gain_mean_ugm3 == doctest::Approx(10.88 * (1.0320 - 0.4448)).epsilon(1e-12));
            CHECK(r.gain_max_ugm3 == doctest::Approx(53.0 * (1.0320 - 0.4448)).epsilon(1e-12));
        } else {
            CHECK(r.winner == "lstm");
            CHECK(r.gain_mean_ugm3 < 0.0);
        }
    }
}

TEST_CASE("exact ties are reported as such") {
    MetricsReport lstm, pbdl;
    lstm.rows = {row("Oslo", Pollutant::NOx, "lstm", 0.75)};
    pbdl.rows = {row("Oslo", Pollutant::NOx, "pbdl", 0.75)};
    auto table = compare_models({lstm, pbdl});
    CHECK(table.rows[0].winner == "tie");
    CHECK(table.rows[0].gain_mean_ugm3 == 0.0);
}

TEST_CASE("comparison is invariant to report order") {
    MetricsReport lstm, pbdl;
    lstm.rows = {row("Oslo", Pollutant::NOx, "lstm", 0.7640),
                 row("Oslo", Pollutant::PM25, "lstm", 1.0970)};
    pbdl.rows = {row("Oslo", Pollutant::NOx, "pbdl", 0.7458),
                 row("Oslo", Pollutant::PM25, "pbdl", 1.0866)};
    auto a = compare_models({lstm, pbdl});
    auto b = compare_models({pbdl, lstm});
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].city == b.rows[i].city);
        CHECK(a.rows[i].winner == b.rows[i].winner);
        CHECK(a.rows[i].lstm_rmse == b.rows[i].lstm_rmse);
    }
    CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("coverage mismatches are alignment errors") {
    MetricsReport lstm, pbdl;
    lstm.rows = {row("Oslo", Pollutant::NOx, "lstm", 0.764)};
    pbdl.rows = {row("Bergen", Pollutant::NOx, "pbdl", 1.044)};
    CHECK_THROWS_AS(compare_models({lstm, pbdl}), AlignmentError);

    MetricsReport duplicate = lstm;
    CHECK_THROWS_AS(compare_models({lstm, duplicate, pbdl}), AlignmentError);
}

// ============================================================================
// export_plot_data
// ============================================================================

TEST_CASE("plot-data export writes trace and prediction files of the right size") {
    namespace fs = std::filesystem;
    dataset::SyntheticConfig cfg;
    cfg.cities = 1;
    cfg.days = 160;
    cfg.seed = 8;
    cfg.dynamics = dataset::SyntheticDynamics::RateLaw;
    auto panel = dataset::generate_synthetic(cfg);
    std::vector<std::size_t> rows = {160};
    auto split = features::chronological_split(rows, 0.8);
    auto scaling = forecaster::fit_sequence_scaling(panel, Pollutant::PM25, split);
    auto [train, test] = forecaster::build_sequences(panel, Pollutant::PM25, 5, split, scaling);

    forecaster::PbdlConfig mc;
    mc.units = 8;
    mc.epochs = 12;
    mc.learning_rate = 5e-3;
    mc.seed = 2;
    auto model = forecaster::train_pbdl(train, mc);

    const fs::path dir = fs::temp_directory_path() / "airphys_eval_test";
    fs::create_directories(dir);
    const std::string prefix = (dir / "oslo_pm25_pbdl").string();
    export_plot_data(model, test, prefix);

    auto count_lines = [](const std::string& path) {
        std::ifstream in(path);
        REQUIRE(in.good());
        std::size_t n = 0;
        std::string line;
        while (std::getline(in, line)) ++n;
        return n;
    };
    CHECK(count_lines(prefix + "_trace.csv") == 1 + 12);
    CHECK(count_lines(prefix + "_predictions.csv") == 1 + test.size());

    // Re-export is byte-identical.
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string first = slurp(prefix + "_predictions.csv");
    export_plot_data(model, test, prefix);
    CHECK(slurp(prefix + "_predictions.csv") == first);

    CHECK_THROWS_AS(export_plot_data(model, test, "/nonexistent_dir_zz/out"), IoError);
    fs::remove_all(dir);
}
