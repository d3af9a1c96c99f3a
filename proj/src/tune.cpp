#include "airphys/tune.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "airphys/csv.hpp"

namespace airphys::tune {

// ============================================================================
// Search spaces
// ============================================================================

LstmSearchSpace LstmSearchSpace::standard() {
    LstmSearchSpace s;
    for (std::size_t u = 32; u <= 512; u += 16) s.units.push_back(u);
    s.dropout = {0.2, 0.4, 0.6, 0.8};
    s.layers = {1, 2, 3, 4};
    s.learning_rate = {1e-2, 1e-3, 1e-4};
    return s;
}

void LstmSearchSpace::validate() const {
    if (units.empty() || dropout.empty() || layers.empty() || learning_rate.empty()) {
        throw ArgumentError("lstm search space has an empty domain");
    }
}

PbdlSearchSpace PbdlSearchSpace::standard() {
    PbdlSearchSpace s;
    s.learning_rate = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
    s.units_min = 50;
    s.units_max = 200;
    s.layers = {1, 2, 3, 4};
    s.l2 = {0.0, 1e-2, 1e-3};
    s.ode_weight = {0.1, 1.0, 10.0};
    return s;
}

void PbdlSearchSpace::validate() const {
    if (learning_rate.empty() || layers.empty() || l2.empty() || ode_weight.empty()) {
        throw ArgumentError("pbdl search space has an empty domain");
    }
    if (units_min < 1 || units_max < units_min) {
        throw ArgumentError("pbdl search space: bad units range");
    }
}

namespace {

template <typename T>
T pick(Rng& rng, const std::vector<T>& domain) {
    return domain[rng.uniform_index(domain.size())];
}

}  // namespace

forecaster::LstmConfig sample_config(const LstmSearchSpace& space, std::uint64_t seed) {
    space.validate();
    Rng rng(seed);
    forecaster::LstmConfig cfg;
    const std::size_t layers = pick(rng, space.layers);
    cfg.units.clear();
    cfg.dropout.clear();
    for (std::size_t l = 0; l < layers; ++l) {
        cfg.units.push_back(pick(rng, space.units));
        cfg.dropout.push_back(pick(rng, space.dropout));
    }
    cfg.learning_rate = pick(rng, space.learning_rate);
    return cfg;
}

forecaster::PbdlConfig sample_config(const PbdlSearchSpace& space, std::uint64_t seed) {
    space.validate();
    Rng rng(seed);
    forecaster::PbdlConfig cfg;
    cfg.learning_rate = pick(rng, space.learning_rate);
    cfg.units = space.units_min + rng.uniform_index(space.units_max - space.units_min + 1);
    cfg.layers = pick(rng, space.layers);
    cfg.l2 = pick(rng, space.l2);
    cfg.ode_weight = pick(rng, space.ode_weight);
    return cfg;
}

// ============================================================================
// Config JSON
// ============================================================================

std::string to_json(const forecaster::LstmConfig& config) {
    nlohmann::json j = {{"model", "lstm"},
                        {"units", config.units},
                        {"dropout", config.dropout},
                        {"learning_rate", config.learning_rate},
                        {"epochs", config.epochs},
                        {"batch_size", config.batch_size}};
    return j.dump();
}

std::string to_json(const forecaster::PbdlConfig& config) {
    nlohmann::json j = {{"model", "pbdl"},
                        {"layers", config.layers},
                        {"units", config.units},
                        {"l2", config.l2},
                        {"learning_rate", config.learning_rate},
                        {"epochs", config.epochs},
                        {"batch_size", config.batch_size},
                        {"ode_weight", config.ode_weight}};
    return j.dump();
}

forecaster::LstmConfig lstm_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    forecaster::LstmConfig cfg;
    cfg.units = j.at("units").get<std::vector<std::size_t>>();
    cfg.dropout = j.at("dropout").get<std::vector<double>>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    return cfg;
}

forecaster::PbdlConfig pbdl_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    forecaster::PbdlConfig cfg;
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.units = j.at("units").get<std::size_t>();
    cfg.l2 = j.at("l2").get<double>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.ode_weight = j.at("ode_weight").get<double>();
    return cfg;
}

// ============================================================================
// Search engine
// ============================================================================

std::string TuneReport::to_csv() const {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        rows.push_back({std::to_string(i), trials[i].config_json,
                        trials[i].failed ? "inf" : format_double(trials[i].mean_val_loss),
                        trials[i].failed ? "failed" : "ok"});
    }
    return csv::to_string({"trial", "config_json", "mean_val_loss", "status"}, rows);
}

TuneReport random_search(const SampleFn& sample, const RunFn& run, std::size_t trials,
                         std::size_t runs_per_trial, std::uint64_t seed) {
    if (trials < 1 || runs_per_trial < 1) {
        throw ArgumentError("random_search: trials and runs must be >= 1");
    }
    const SeedStreams streams(seed);
    TuneReport report;
    for (std::size_t t = 0; t < trials; ++t) {
        Trial trial;
        trial.config_json = sample(streams.stream_seed("tune/sample/" + std::to_string(t)));
        double sum = 0.0;
        for (std::size_t r = 0; r < runs_per_trial; ++r) {
            const std::uint64_t run_seed =
                streams.stream_seed("tune/run/" + std::to_string(t) + "/" + std::to_string(r));
            trial.run_seeds.push_back(run_seed);
            try {
                const double loss = run(trial.config_json, run_seed);
                if (!std::isfinite(loss)) throw DivergenceError("non-finite validation loss");
                trial.run_losses.push_back(loss);
                sum += loss;
            } catch (const DivergenceError&) {
                trial.failed = true;
                break;
            }
        }
        if (!trial.failed) {
            trial.mean_val_loss = sum / static_cast<double>(runs_per_trial);
        }
        report.trials.push_back(std::move(trial));
    }

    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t t = 0; t < report.trials.size(); ++t) {
        const Trial& trial = report.trials[t];
        if (trial.failed) continue;
        if (trial.mean_val_loss < best) {
            best = trial.mean_val_loss;
            report.best_trial = t;
            found = true;
        }
    }
    if (!found) throw DivergenceError("random_search: every trial failed");
    report.best_config_json = report.trials[report.best_trial].config_json;
    return report;
}

// ============================================================================
// Forecaster-backed searches
// ============================================================================

std::pair<forecaster::SequenceDataset, forecaster::SequenceDataset> carve_validation(
    const forecaster::SequenceDataset& train, double fraction) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw ArgumentError("validation fraction must be in (0, 1)");
    }
    // Per-city window counts (samples are city-major, dates ascending).
    std::map<std::string, std::size_t> counts;
    for (const auto& c : train.city) counts[c] += 1;
    std::map<std::string, std::size_t> train_quota;
    for (const auto& [c, n] : counts) {
        if (n < 2) throw InsufficientDataError("city " + c + " has too few windows to validate");
        const std::size_t keep = std::clamp<std::size_t>(
            n - static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))), 1,
            n - 1);
        train_quota[c] = keep;
    }

    forecaster::SequenceDataset fit, val;
    for (forecaster::SequenceDataset* ds : {&fit, &val}) {
        ds->window = train.window;
        ds->channels = train.channels;
        ds->scaling = train.scaling;
    }
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::string& c = train.city[i];
        forecaster::SequenceDataset& ds = seen[c] < train_quota[c] ? fit : val;
        seen[c] += 1;
        const double* src = train.sample(i);
        ds.inputs.insert(ds.inputs.end(), src, src + train.window * train.channels);
        ds.targets.push_back(train.targets[i]);
        ds.target_prev.push_back(train.target_prev[i]);
        ds.city.push_back(c);
        ds.date.push_back(train.date[i]);
    }
    if (val.size() == 0) throw InsufficientDataError("validation carve-out is empty");
    return {std::move(fit), std::move(val)};
}

namespace {

double validation_mse(const forecaster::TrainedModel& model,
                      const forecaster::SequenceDataset& val) {
    const std::vector<double> pred = forecaster::predict_standardized(model, val);
    double acc = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
        const double d = pred[i] - val.targets[i];
        acc += d * d;
    }
    return acc / static_cast<double>(val.size());
}

}  // namespace

TuneReport random_search_lstm(const LstmSearchSpace& space,
                              const forecaster::SequenceDataset& train, std::size_t trials,
                              std::size_t runs_per_trial, std::uint64_t seed, std::size_t epochs,
                              std::size_t batch_size) {
    auto [fit, val] = carve_validation(train);
    SampleFn sample = [&space, epochs, batch_size](std::uint64_t s) {
        forecaster::LstmConfig cfg = sample_config(space, s);
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        return to_json(cfg);
    };
    RunFn run = [&fit, &val](const std::string& config_json, std::uint64_t s) {
        forecaster::LstmConfig cfg = lstm_config_from_json(config_json);
        cfg.seed = s;
        return validation_mse(forecaster::train_lstm(fit, cfg), val);
    };
    return random_search(sample, run, trials, runs_per_trial, seed);
}

TuneReport random_search_pbdl(const PbdlSearchSpace& space,
                              const forecaster::SequenceDataset& train, std::size_t trials,
                              std::size_t runs_per_trial, std::uint64_t seed, std::size_t epochs,
                              std::size_t batch_size) {
    auto [fit, val] = carve_validation(train);
    SampleFn sample = [&space, epochs, batch_size](std::uint64_t s) {
        forecaster::PbdlConfig cfg = sample_config(space, s);
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        return to_json(cfg);
    };
    RunFn run = [&fit, &val](const std::string& config_json, std::uint64_t s) {
        forecaster::PbdlConfig cfg = pbdl_config_from_json(config_json);
        cfg.seed = s;
        return validation_mse(forecaster::train_pbdl(fit, cfg), val);
    };
    TuneReport report = random_search(sample, run, trials, runs_per_trial, seed);
    report.notes.push_back("ode_weight domain is a search-space extension");
    return report;
}

}  // namespace airphys::tune
