#include "airphys/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "airphys/cluster.hpp"
#include "airphys/common.hpp"
#include "airphys/csv.hpp"
#include "airphys/dataset.hpp"
#include "airphys/eval.hpp"
#include "airphys/features.hpp"
#include "airphys/forecaster.hpp"
#include "airphys/forest.hpp"
#include "airphys/neural.hpp"
#include "airphys/panel.hpp"
#include "airphys/tune.hpp"

namespace airphys::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ============================================================================
// Config handling
// ============================================================================

json default_config() {
    return json{
        {"seed", 42},
        {"out", "out"},
        {"synthetic",
         {{"cities", 3},
          {"days", 730},
          {"missing_rate", 0.03},
          {"noise_sd", 1.3},
          {"dynamics", "rate_law"},
          {"rate_decay", 0.12}}},
        {"impute", {{"max_iter", 25}, {"tol", 1e-7}}},
        {"features",
         {{"degree", 3},
          {"time_dummies", true},
          {"fixed_effects", {"city", "year"}},
          {"train_fraction", 0.8}}},
        {"cluster", {{"k", {2, 3, 4}}, {"linkage", "average"}, {"degree", 1}}},
        {"forest", {{"trees", 200}, {"mtry", 0}, {"min_leaf", 5}, {"repeats", 3}}},
        {"forecast",
         {{"window", 7},
          {"targets", {"NOx", "PM25"}},
          {"use_tuned", true},
          {"lstm",
           {{"units", {32}},
            {"dropout", {0.2}},
            {"learning_rate", 1e-3},
            {"epochs", 60},
            {"batch_size", 32}}},
          {"pbdl",
           {{"layers", 1},
            {"units", 64},
            {"l2", 0.01},
            {"learning_rate", 5e-3},
            {"epochs", 150},
            {"batch_size", 32},
            {"ode_weight", 1.0}}}}},
        {"tune",
         {{"trials", 10},
          {"runs_per_trial", 2},
          {"epochs", 15},
          {"batch_size", 32},
          {"models", {"lstm", "pbdl"}}}},
    };
}

void deep_merge(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (base.contains(it.key())) {
            deep_merge(base[it.key()], it.value());
        } else {
            base[it.key()] = it.value();
        }
    }
}

void apply_override(json& config, const std::string& key_value) {
    const std::size_t eq = key_value.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("--set needs key=value, got '" + key_value + "'");
    }
    std::string key = key_value.substr(0, eq);
    const std::string raw = key_value.substr(eq + 1);
    for (char& c : key) {
        if (c == '.') c = '/';
    }
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string
    try {
        config[json::json_pointer("/" + key)] = value;
    } catch (const json::exception& e) {
        throw ConfigError("bad --set key '" + key_value + "': " + e.what());
    }
}

json load_config(const std::string& path, const std::vector<std::string>& overrides,
                 std::optional<long long> seed_override, const std::string& out_override) {
    json config = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        json user = json::parse(in, nullptr, false);
        if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
        if (user.contains("data") && user.contains("synthetic")) {
            throw ConfigError("config must name exactly one of data/synthetic");
        }
        if (user.contains("data")) config.erase("synthetic");
        deep_merge(config, user);
    }
    for (const auto& kv : overrides) apply_override(config, kv);
    if (seed_override) config["seed"] = *seed_override;
    if (!out_override.empty()) config["out"] = out_override;
    return config;
}

// ============================================================================
// Filesystem / manifest helpers
// ============================================================================

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing artifact: " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct Context {
    json config;
    fs::path out;
    SeedStreams streams{0};
    json manifest_inputs = json::object();
    json manifest_outputs = json::object();

    fs::path artifact(const std::string& rel) const { return out / rel; }

    std::string read_artifact(const std::string& rel) {
        std::string text = read_text(artifact(rel));
        manifest_inputs[rel] = fnv1a_hex(text);
        return text;
    }
    void write_artifact(const std::string& rel, const std::string& text) {
        write_text(artifact(rel), text);
        manifest_outputs[rel] = fnv1a_hex(text);
    }
    void write_manifest(const std::string& stage) {
        json m;
        m["command"] = stage;
        m["version"] = kVersion;
        m["timestamp"] = timestamp_now();
        m["seed"] = config.at("seed");
        m["config_digest"] = fnv1a_hex(config.dump());
        m["inputs"] = manifest_inputs;
        m["outputs"] = manifest_outputs;
        write_text(artifact(stage + "/manifest.json"), m.dump(2) + "\n");
    }
};

// ============================================================================
// Shared stage plumbing
// ============================================================================

void write_panel_artifacts(Context& ctx, const dataset::CityDailyPanel& panel,
                           const dataset::ImputationReport& report) {
    std::vector<std::vector<std::string>> city_rows;
    for (const auto& c : panel.cities()) city_rows.push_back({c});
    ctx.write_artifact("panel/cities.csv", csv::to_string({"city"}, city_rows));

    for (std::size_t c = 0; c < panel.n_cities(); ++c) {
        ctx.write_artifact("panel/" + panel.cities()[c] + ".csv",
                           dataset::export_city_csv(panel, c));
        ctx.write_artifact("panel/" + panel.cities()[c] + ".imputed.csv",
                           dataset::export_imputed_sidecar(panel, c));
    }

    json rep;
    rep["missing_fraction_before"] = report.missing_fraction_before;
    rep["missing_fraction_after"] = report.missing_fraction_after;
    rep["iterations_used"] = report.iterations_used;
    json counts = json::object();
    for (const auto& [v, n] : report.imputed_counts) counts[variable_name(v)] = n;
    rep["imputed_counts"] = counts;
    ctx.write_artifact("panel/imputation.json", rep.dump(2) + "\n");
}

dataset::CityDailyPanel load_panel(Context& ctx) {
    std::istringstream cities_in(ctx.read_artifact("panel/cities.csv"));
    csv::Table cities_table = csv::read(cities_in);
    std::vector<std::string> cities;
    for (const auto& row : cities_table.rows) cities.push_back(row.at(0));
    if (cities.empty()) throw DataError("panel/cities.csv lists no cities; run ingest or synth");

    std::vector<std::string> texts, sidecars;
    for (const auto& c : cities) {
        texts.push_back(ctx.read_artifact("panel/" + c + ".csv"));
        sidecars.push_back(ctx.read_artifact("panel/" + c + ".imputed.csv"));
    }
    return dataset::import_city_csvs(cities, texts, sidecars);
}

std::vector<Pollutant> configured_targets(const json& config) {
    std::vector<Pollutant> out;
    for (const auto& t : config.at("forecast").at("targets")) {
        auto p = parse_pollutant(t.get<std::string>());
        if (!p) throw ConfigError("unknown target pollutant: " + t.get<std::string>());
        out.push_back(*p);
    }
    if (out.empty()) throw ConfigError("forecast.targets is empty");
    return out;
}

features::FeatureSpec feature_spec_from_config(const json& config, Pollutant target) {
    const json& f = config.at("features");
    features::FeatureSpec spec;
    spec.base_variables = covariate_order();
    spec.polynomial_degree = f.at("degree").get<int>();
    spec.include_time_dummies = f.at("time_dummies").get<bool>();
    for (const auto& k : f.at("fixed_effects")) {
        const std::string key = k.get<std::string>();
        if (key == "city") {
            spec.fixed_effects.push_back(features::FixedEffectKey::City);
        } else if (key == "year") {
            spec.fixed_effects.push_back(features::FixedEffectKey::Year);
        } else {
            throw ConfigError("unknown fixed effect key: " + key);
        }
    }
    spec.target = target;
    return spec;
}

// Raw-scale matrix over chosen variables with optional powers; used by the
// cluster and forest stages where pollutants are legitimate columns.
features::DesignMatrix variable_matrix(const dataset::CityDailyPanel& panel,
                                       const std::vector<Variable>& vars, int degree) {
    features::DesignMatrix out;
    const std::size_t n = panel.n_cities() * panel.n_days();
    out.row_city.reserve(n);
    out.row_date.reserve(n);
    for (std::size_t c = 0; c < panel.n_cities(); ++c) {
        for (std::size_t d = 0; d < panel.n_days(); ++d) {
            out.row_city.push_back(panel.cities()[c]);
            out.row_date.push_back(panel.day(d));
        }
    }
    const std::size_t p = vars.size() * static_cast<std::size_t>(degree);
    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    std::size_t j = 0;
    for (Variable v : vars) {
        for (int power = 1; power <= degree; ++power, ++j) {
            std::string name = variable_name(v);
            if (power > 1) name += "^" + std::to_string(power);
            out.columns.push_back(name);
            out.kinds.push_back(features::ColumnKind::Continuous);
            std::size_t r = 0;
            for (std::size_t c = 0; c < panel.n_cities(); ++c) {
                for (std::size_t d = 0; d < panel.n_days(); ++d, ++r) {
                    const double x = panel.get(c, d, v);
                    if (is_missing(x)) throw DataError("panel has missing cells; impute first");
                    out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                        std::pow(x, power);
                }
            }
        }
    }
    return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

// ============================================================================
// Commands
// ============================================================================

void cmd_ingest(Context& ctx) {
    if (!ctx.config.contains("data") || !ctx.config["data"].contains("csv")) {
        throw ConfigError("ingest needs config key data.csv");
    }
    const std::string path = ctx.config["data"]["csv"].get<std::string>();
    auto records = dataset::parse_csv_file(path);
    {
        std::string text = read_text(path);
        ctx.manifest_inputs[path] = fnv1a_hex(text);
    }
    auto panel = dataset::aggregate_city_daily(records);
    const json& imp = ctx.config.at("impute");
    auto [imputed, report] = dataset::impute_missing(panel, imp.at("max_iter").get<std::size_t>(),
                                                     imp.at("tol").get<double>());
    imputed.validate();
    write_panel_artifacts(ctx, imputed, report);
    ctx.write_manifest("panel");
}

void cmd_synth(Context& ctx) {
    if (!ctx.config.contains("synthetic")) {
        throw ConfigError("synth needs config key synthetic");
    }
    const json& s = ctx.config["synthetic"];
    dataset::SyntheticConfig cfg;
    cfg.cities = s.value("cities", std::size_t{3});
    cfg.days = s.value("days", std::size_t{730});
    cfg.seed = s.contains("seed") ? s["seed"].get<std::uint64_t>()
                                  : ctx.streams.stream_seed("synth");
    cfg.noise_sd = s.value("noise_sd", 1.3);
    cfg.missing_rate = s.value("missing_rate", 0.0);
    cfg.rate_decay = s.value("rate_decay", 0.12);
    const std::string dynamics = s.value("dynamics", std::string("rate_law"));
    if (dynamics == "rate_law") {
        cfg.dynamics = dataset::SyntheticDynamics::RateLaw;
    } else if (dynamics == "static") {
        cfg.dynamics = dataset::SyntheticDynamics::StaticLevel;
    } else {
        throw ConfigError("synthetic.dynamics must be rate_law or static");
    }

    auto panel = dataset::generate_synthetic(cfg);
    dataset::ImputationReport report;
    if (cfg.missing_rate > 0.0) {
        const json& imp = ctx.config.at("impute");
        std::tie(panel, report) = dataset::impute_missing(
            panel, imp.at("max_iter").get<std::size_t>(), imp.at("tol").get<double>());
    }
    panel.validate();
    write_panel_artifacts(ctx, panel, report);
    ctx.write_manifest("panel");
}

void cmd_features(Context& ctx) {
    auto panel = load_panel(ctx);
    auto spec = feature_spec_from_config(ctx.config, configured_targets(ctx.config).front());
    auto design = features::build_design(panel, spec);
    ctx.write_artifact("features/design.csv", design.to_csv());
    if (!design.warnings.empty()) {
        json w = design.warnings;
        ctx.write_artifact("features/warnings.json", w.dump(2) + "\n");
    }
    ctx.write_manifest("features");
}

void cmd_panel(Context& ctx) {
    auto panel = load_panel(ctx);
    ctx.write_artifact("panel_model/correlation.csv", panel::correlation_matrix(panel).to_csv());

    std::vector<std::string> fe_keys;
    for (const auto& k : ctx.config.at("features").at("fixed_effects")) {
        fe_keys.push_back(k.get<std::string>());
    }
    for (Pollutant target : configured_targets(ctx.config)) {
        auto spec = feature_spec_from_config(ctx.config, target);
        auto design = features::build_design(panel, spec);
        auto std = features::fit_standardizer(design, all_rows(design.n_rows()));
        auto z = features::apply_standardizer(std, design);
        auto y = features::response_vector(panel, target);
        auto fit = panel::fit_panel_ols(z, y, fe_keys);
        ctx.write_artifact(std::string("panel_model/fit_") + pollutant_name(target) + ".csv",
                           fit.to_csv());
        auto ranked = panel::rank_features_by_significance(fit, 20);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            rows.push_back({std::to_string(i + 1), ranked[i],
                            format_double(std::abs(fit.t_stats.at(ranked[i])))});
        }
        ctx.write_artifact(std::string("panel_model/ranking_") + pollutant_name(target) + ".csv",
                           csv::to_string({"rank", "feature", "abs_t"}, rows));
    }
    ctx.write_manifest("panel_model");
}

void cmd_cluster(Context& ctx) {
    auto panel = load_panel(ctx);
    const json& cc = ctx.config.at("cluster");
    const int degree = cc.value("degree", 1);
    auto matrix = variable_matrix(panel, all_variables(), degree);
    auto std = features::fit_standardizer(matrix, all_rows(matrix.n_rows()));
    auto z = features::apply_standardizer(std, matrix);
    auto points = cluster::points_from_design(z);

    const auto linkage = cluster::parse_linkage(cc.value("linkage", std::string("average")));
    auto dendro = cluster::hierarchical(points, linkage);
    ctx.write_artifact("cluster/dendrogram.csv", dendro.to_csv());

    for (const auto& kj : cc.at("k")) {
        const std::size_t k = kj.get<std::size_t>();
        auto km = cluster::kmeans(points, k,
                                  ctx.streams.stream_seed("cluster/kmeans/" + std::to_string(k)));
        ctx.write_artifact("cluster/kmeans_k" + std::to_string(k) + ".csv",
                           cluster::assignments_to_csv(km.assignments));
        ctx.write_artifact("cluster/cut_k" + std::to_string(k) + ".csv",
                           cluster::assignments_to_csv(cluster::cut_dendrogram(dendro, k)));
    }
    ctx.write_manifest("cluster");
}

void cmd_forest(Context& ctx) {
    auto panel = load_panel(ctx);
    const json& fc = ctx.config.at("forest");
    for (Pollutant target : configured_targets(ctx.config)) {
        auto X = variable_matrix(panel, covariate_order(), 1);
        auto y = features::response_vector(panel, target);
        auto forest = forest::fit_forest(
            X, y, fc.at("trees").get<std::size_t>(), fc.at("mtry").get<std::size_t>(),
            fc.at("min_leaf").get<std::size_t>(),
            ctx.streams.stream_seed(std::string("forest/") + pollutant_name(target)));
        auto importance = forest::oob_permutation_importance(
            forest, X, y, fc.at("repeats").get<std::size_t>(),
            ctx.streams.stream_seed(std::string("importance/") + pollutant_name(target)));
        ctx.write_artifact(std::string("forest/importance_") + pollutant_name(target) + ".csv",
                           importance.to_csv());
    }
    ctx.write_manifest("forest");
}

// Pooled sequences over all cities for tuning.
forecaster::SequenceDataset pooled_train_sequences(Context& ctx,
                                                   const dataset::CityDailyPanel& panel,
                                                   Pollutant target) {
    const double fraction = ctx.config.at("features").at("train_fraction").get<double>();
    const std::size_t window = ctx.config.at("forecast").at("window").get<std::size_t>();
    std::vector<std::size_t> rows_per_city(panel.n_cities(), panel.n_days());
    auto split = features::chronological_split(rows_per_city, fraction);
    auto scaling = forecaster::fit_sequence_scaling(panel, target, split);
    auto [train, test] = forecaster::build_sequences(panel, target, window, split, scaling);
    (void)test;
    return train;
}

tune::LstmSearchSpace lstm_space_from_config(const json& tune_cfg) {
    tune::LstmSearchSpace space = tune::LstmSearchSpace::standard();
    if (tune_cfg.contains("lstm_space")) {
        const json& s = tune_cfg["lstm_space"];
        if (s.contains("units")) space.units = s["units"].get<std::vector<std::size_t>>();
        if (s.contains("dropout")) space.dropout = s["dropout"].get<std::vector<double>>();
        if (s.contains("layers")) space.layers = s["layers"].get<std::vector<std::size_t>>();
        if (s.contains("learning_rate")) {
            space.learning_rate = s["learning_rate"].get<std::vector<double>>();
        }
    }
    return space;
}

tune::PbdlSearchSpace pbdl_space_from_config(const json& tune_cfg) {
    tune::PbdlSearchSpace space = tune::PbdlSearchSpace::standard();
    if (tune_cfg.contains("pbdl_space")) {
        const json& s = tune_cfg["pbdl_space"];
        if (s.contains("learning_rate")) {
            space.learning_rate = s["learning_rate"].get<std::vector<double>>();
        }
        if (s.contains("units_min")) space.units_min = s["units_min"].get<std::size_t>();
        if (s.contains("units_max")) space.units_max = s["units_max"].get<std::size_t>();
        if (s.contains("layers")) space.layers = s["layers"].get<std::vector<std::size_t>>();
        if (s.contains("l2")) space.l2 = s["l2"].get<std::vector<double>>();
        if (s.contains("ode_weight")) {
            space.ode_weight = s["ode_weight"].get<std::vector<double>>();
        }
    }
    return space;
}

void cmd_tune(Context& ctx) {
    auto panel = load_panel(ctx);
    const json& tc = ctx.config.at("tune");
    const std::size_t trials = tc.at("trials").get<std::size_t>();
    const std::size_t runs = tc.at("runs_per_trial").get<std::size_t>();
    const std::size_t epochs = tc.at("epochs").get<std::size_t>();
    const std::size_t batch = tc.at("batch_size").get<std::size_t>();

    for (Pollutant target : configured_targets(ctx.config)) {
        auto train = pooled_train_sequences(ctx, panel, target);
        for (const auto& mj : tc.at("models")) {
            const std::string model = mj.get<std::string>();
            const std::uint64_t seed =
                ctx.streams.stream_seed("tune/" + model + "/" + pollutant_name(target));
            tune::TuneReport report;
            if (model == "lstm") {
                report = tune::random_search_lstm(lstm_space_from_config(tc), train, trials,
                                                  runs, seed, epochs, batch);
            } else if (model == "pbdl") {
                report = tune::random_search_pbdl(pbdl_space_from_config(tc), train, trials,
                                                  runs, seed, epochs, batch);
            } else {
                throw ConfigError("unknown model in tune.models: " + model);
            }
            const std::string tag = model + "_" + pollutant_name(target);
            ctx.write_artifact("tune/report_" + tag + ".csv", report.to_csv());
            ctx.write_artifact("tune/best_" + tag + ".json",
                               report.best_config_json + "\n");
        }
    }
    ctx.write_manifest("tune");
}

struct CityData {
    forecaster::SequenceDataset train;
    forecaster::SequenceDataset test;
};

CityData city_sequences(Context& ctx, const dataset::CityDailyPanel& panel, std::size_t city,
                        Pollutant target) {
    const double fraction = ctx.config.at("features").at("train_fraction").get<double>();
    const std::size_t window = ctx.config.at("forecast").at("window").get<std::size_t>();
    auto one = dataset::single_city(panel, city);
    auto split = features::chronological_split({one.n_days()}, fraction);
    auto scaling = forecaster::fit_sequence_scaling(one, target, split);
    auto [train, test] = forecaster::build_sequences(one, target, window, split, scaling);
    return {std::move(train), std::move(test)};
}

std::vector<std::string> model_filter(const Context& ctx) {
    if (ctx.config.contains("cli_model_filter")) {
        return {ctx.config.at("cli_model_filter").get<std::string>()};
    }
    return {"lstm", "pbdl"};
}

void cmd_train(Context& ctx) {
    auto panel = load_panel(ctx);
    const json& fc = ctx.config.at("forecast");
    const bool use_tuned = fc.value("use_tuned", true);

    for (Pollutant target : configured_targets(ctx.config)) {
        for (const std::string& model_name : model_filter(ctx)) {
            // Tuned hyperparameters (if present) override the config block;
            // final-epoch counts always come from the forecast block.
            std::string tuned_json;
            const std::string tag = model_name + "_" + std::string(pollutant_name(target));
            const fs::path tuned_path = ctx.artifact("tune/best_" + tag + ".json");
            if (use_tuned && fs::exists(tuned_path)) {
                tuned_json = ctx.read_artifact("tune/best_" + tag + ".json");
            }
            for (std::size_t c = 0; c < panel.n_cities(); ++c) {
                const std::string& city = panel.cities()[c];
                CityData data = city_sequences(ctx, panel, c, target);
                const std::uint64_t seed = ctx.streams.stream_seed(
                    "train/" + model_name + "/" + city + "/" + pollutant_name(target));

                forecaster::TrainedModel model;
                if (model_name == "lstm") {
                    forecaster::LstmConfig cfg;
                    cfg.units = fc.at("lstm").at("units").get<std::vector<std::size_t>>();
                    cfg.dropout = fc.at("lstm").at("dropout").get<std::vector<double>>();
                    cfg.learning_rate = fc.at("lstm").at("learning_rate").get<double>();
                    cfg.epochs = fc.at("lstm").at("epochs").get<std::size_t>();
                    cfg.batch_size = fc.at("lstm").at("batch_size").get<std::size_t>();
                    if (!tuned_json.empty()) {
                        auto tuned = tune::lstm_config_from_json(tuned_json);
                        cfg.units = tuned.units;
                        cfg.dropout = tuned.dropout;
                        cfg.learning_rate = tuned.learning_rate;
                    }
                    cfg.seed = seed;
                    model = forecaster::train_lstm(data.train, cfg);
                } else {
                    forecaster::PbdlConfig cfg;
                    cfg.layers = fc.at("pbdl").at("layers").get<std::size_t>();
                    cfg.units = fc.at("pbdl").at("units").get<std::size_t>();
                    cfg.l2 = fc.at("pbdl").at("l2").get<double>();
                    cfg.learning_rate = fc.at("pbdl").at("learning_rate").get<double>();
                    cfg.epochs = fc.at("pbdl").at("epochs").get<std::size_t>();
                    cfg.batch_size = fc.at("pbdl").at("batch_size").get<std::size_t>();
                    cfg.ode_weight = fc.at("pbdl").at("ode_weight").get<double>();
                    if (!tuned_json.empty()) {
                        auto tuned = tune::pbdl_config_from_json(tuned_json);
                        cfg.layers = tuned.layers;
                        cfg.units = tuned.units;
                        cfg.l2 = tuned.l2;
                        cfg.learning_rate = tuned.learning_rate;
                        cfg.ode_weight = tuned.ode_weight;
                    }
                    cfg.seed = seed;
                    model = forecaster::train_pbdl(data.train, cfg);
                }
                const std::string stem = city + "_" + pollutant_name(target) + "_" + model_name;
                ctx.write_artifact("train/model_" + stem + ".json", model.to_json() + "\n");
                ctx.write_artifact("train/trace_" + stem + ".csv",
                                   forecaster::trace_to_csv(model.trace));
            }
        }
    }
    ctx.write_manifest("train");
}

void cmd_evaluate(Context& ctx) {
    auto panel = load_panel(ctx);
    eval::MetricsReport metrics;
    std::vector<std::vector<std::string>> stats_rows;
    bool any = false;

    for (Pollutant target : configured_targets(ctx.config)) {
        for (std::size_t c = 0; c < panel.n_cities(); ++c) {
            const std::string& city = panel.cities()[c];
            CityData data = city_sequences(ctx, panel, c, target);

            double mean_raw = 0.0, max_raw = 0.0;
            for (std::size_t i = 0; i < data.test.size(); ++i) {
                const double actual = data.test.targets[i] * data.test.scaling.target_sd +
                                      data.test.scaling.target_mean;
                mean_raw += actual;
                max_raw = std::max(max_raw, actual);
            }
            mean_raw /= static_cast<double>(data.test.size());
            stats_rows.push_back({city, pollutant_name(target), format_double(mean_raw),
                                  format_double(max_raw),
                                  format_double(data.test.scaling.target_sd)});

            for (const std::string& model_name : model_filter(ctx)) {
                const std::string stem = city + "_" + pollutant_name(target) + "_" + model_name;
                const fs::path model_path = ctx.artifact("train/model_" + stem + ".json");
                if (!fs::exists(model_path)) continue;
                auto model =
                    forecaster::TrainedModel::from_json(ctx.read_artifact("train/model_" + stem + ".json"));
                any = true;

                const std::vector<double> pred_std =
                    forecaster::predict_standardized(model, data.test);
                std::vector<double> pred_raw(pred_std.size());
                std::vector<double> actual_raw(pred_std.size());
                for (std::size_t i = 0; i < pred_std.size(); ++i) {
                    pred_raw[i] =
                        pred_std[i] * model.scaling.target_sd + model.scaling.target_mean;
                    actual_raw[i] = data.test.targets[i] * model.scaling.target_sd +
                                    model.scaling.target_mean;
                }
                eval::MetricsRow row;
                row.city = city;
                row.pollutant = target;
                row.model = model_name;
                row.rmse_standardized = eval::rmse(pred_std, data.test.targets);
                row.rmse_raw = eval::rmse(pred_raw, actual_raw);
                row.target_mean_raw = mean_raw;
                row.target_max_raw = max_raw;
                metrics.rows.push_back(row);

                ctx.write_artifact("eval/" + stem + "_predictions.csv",
                                   eval::predictions_to_csv(data.test, pred_raw));
                ctx.write_artifact("eval/" + stem + "_trace.csv",
                                   forecaster::trace_to_csv(model.trace));
            }
        }
    }
    if (!any) throw DataError("no trained models found; run train first");
    ctx.write_artifact("eval/metrics.csv", metrics.to_csv());
    ctx.write_artifact(
        "eval/target_stats.csv",
        csv::to_string({"city", "pollutant", "target_mean_raw", "target_max_raw", "target_sd_train"},
                       stats_rows));
    ctx.write_manifest("eval");
}

void cmd_report(Context& ctx) {
    // Target statistics per (city, pollutant).
    std::istringstream stats_in(ctx.read_artifact("eval/target_stats.csv"));
    csv::Table stats = csv::read(stats_in);
    struct Stat {
        double mean, max, sd;
    };
    std::map<std::pair<std::string, std::string>, Stat> stat_map;
    {
        const int ci_city = stats.require_column("city");
        const int ci_pol = stats.require_column("pollutant");
        const int ci_mean = stats.require_column("target_mean_raw");
        const int ci_max = stats.require_column("target_max_raw");
        const int ci_sd = stats.require_column("target_sd_train");
        for (const auto& row : stats.rows) {
            stat_map[{row[ci_city], row[ci_pol]}] = {std::stod(row[ci_mean]),
                                                     std::stod(row[ci_max]),
                                                     std::stod(row[ci_sd])};
        }
    }

    // Recompute RMSE from the stored prediction CSVs.
    eval::MetricsReport lstm_report, pbdl_report;
    for (const auto& [key, stat] : stat_map) {
        for (const std::string& model_name : {std::string("lstm"), std::string("pbdl")}) {
            const std::string stem = key.first + "_" + key.second + "_" + model_name;
            std::istringstream pred_in(ctx.read_artifact("eval/" + stem + "_predictions.csv"));
            csv::Table preds = csv::read(pred_in);
            const int ci_actual = preds.require_column("actual");
            const int ci_pred = preds.require_column("predicted");
            std::vector<double> actual, predicted;
            for (const auto& row : preds.rows) {
                actual.push_back(std::stod(row[ci_actual]));
                predicted.push_back(std::stod(row[ci_pred]));
            }
            eval::MetricsRow row;
            row.city = key.first;
            auto pol = parse_pollutant(key.second);
            if (!pol) throw DataError("bad pollutant in target_stats.csv: " + key.second);
            row.pollutant = *pol;
            row.model = model_name;
            row.rmse_raw = eval::rmse(predicted, actual);
            row.rmse_standardized = row.rmse_raw / stat.sd;
            row.target_mean_raw = stat.mean;
            row.target_max_raw = stat.max;
            (model_name == "lstm" ? lstm_report : pbdl_report).rows.push_back(row);
        }
    }

    auto table = eval::compare_models({lstm_report, pbdl_report});
    ctx.write_artifact("report/comparison.csv", table.to_csv());

    // Feature-selection summary from whatever selection stages have run.
    std::vector<std::vector<std::string>> summary;
    for (Pollutant target : configured_targets(ctx.config)) {
        const std::string pol = pollutant_name(target);
        for (const auto& [stage, file, score_col] :
             {std::tuple{"panel", "panel_model/ranking_" + pol + ".csv", "abs_t"},
              std::tuple{"forest", "forest/importance_" + pol + ".csv", "pct_inc_mse"}}) {
            if (!fs::exists(ctx.artifact(file))) continue;
            std::istringstream in(ctx.read_artifact(file));
            csv::Table t = csv::read(in);
            const int ci_feature = t.require_column("feature");
            const int ci_score = t.require_column(score_col);
            for (std::size_t i = 0; i < std::min<std::size_t>(t.rows.size(), 5); ++i) {
                summary.push_back({pol, stage, std::to_string(i + 1), t.rows[i][ci_feature],
                                   t.rows[i][ci_score]});
            }
        }
    }
    if (!summary.empty()) {
        ctx.write_artifact(
            "report/feature_selection.csv",
            csv::to_string({"pollutant", "source", "rank", "feature", "score"}, summary));
    }
    ctx.write_manifest("report");
}

}  // namespace

// ============================================================================
// Entry point
// ============================================================================

int run(const std::vector<std::string>& args) {
    CLI::App app{"air-quality feature selection and forecasting pipeline"};
    app.set_version_flag("--version", kVersion);
    app.fallthrough();

    std::string config_path, out_override, model_flag;
    long long seed_flag = -1;
    bool seed_set = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "configuration JSON document");
    app.add_option("--out", out_override, "output directory (overrides config)");
    app.add_option("--seed", seed_flag, "master seed (overrides config)")
        ->check(CLI::NonNegativeNumber)
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--set", overrides, "dotted-key config override, key=value");

    std::map<std::string, void (*)(Context&)> commands = {
        {"ingest", cmd_ingest},     {"synth", cmd_synth},   {"features", cmd_features},
        {"panel", cmd_panel},       {"cluster", cmd_cluster}, {"forest", cmd_forest},
        {"tune", cmd_tune},         {"train", cmd_train},   {"evaluate", cmd_evaluate},
        {"report", cmd_report},
    };
    for (const auto& [name, fn] : commands) {
        (void)fn;
        auto* sub = app.add_subcommand(name);
        if (name == "train" || name == "evaluate") {
            sub->add_option("--model", model_flag, "restrict to one model (lstm|pbdl)")
                ->check(CLI::IsMember({"lstm", "pbdl"}));
        }
    }
    app.require_subcommand(1);

    std::vector<const char*> argv = {"airphys"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        Context ctx;
        ctx.config = load_config(config_path, overrides,
                                 seed_set ? std::optional<long long>(seed_flag) : std::nullopt,
                                 out_override);
        if (!model_flag.empty()) ctx.config["cli_model_filter"] = model_flag;
        ctx.out = fs::path(ctx.config.at("out").get<std::string>());
        ctx.streams = SeedStreams(ctx.config.at("seed").get<std::uint64_t>());
        fs::create_directories(ctx.out);

        const std::string command = app.get_subcommands().front()->get_name();
        commands.at(command)(ctx);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace airphys::cli
