#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/forecaster.hpp"

namespace airphys::tune {

/// Search domains. LSTM units/dropout are drawn per layer after the layer
/// count; PBDL carries the ode-weight domain as an extension flagged in the
/// report.
struct LstmSearchSpace {
    std::vector<std::size_t> units;       // 32, 48, ..., 512
    std::vector<double> dropout;          // 0.2, 0.4, 0.6, 0.8
    std::vector<std::size_t> layers;      // 1..4
    std::vector<double> learning_rate;    // 1e-2, 1e-3, 1e-4

    static LstmSearchSpace standard();
    void validate() const;
};

struct PbdlSearchSpace {
    std::vector<double> learning_rate;    // 1e-4, 5e-4, 1e-3, 5e-3, 1e-2
    std::size_t units_min = 50;
    std::size_t units_max = 200;
    std::vector<std::size_t> layers;      // 1..4
    std::vector<double> l2;               // 0 (none), 1e-2, 1e-3
    std::vector<double> ode_weight;       // 0.1, 1, 10 (extension)

    static PbdlSearchSpace standard();
    void validate() const;
};

forecaster::LstmConfig sample_config(const LstmSearchSpace& space, std::uint64_t seed);
forecaster::PbdlConfig sample_config(const PbdlSearchSpace& space, std::uint64_t seed);

struct Trial {
    std::string config_json;
    std::vector<double> run_losses;
    double mean_val_loss = std::numeric_limits<double>::infinity();
    std::vector<std::uint64_t> run_seeds;
    bool failed = false;
};

struct TuneReport {
    std::vector<Trial> trials;
    std::size_t best_trial = 0;
    std::string best_config_json;
    std::vector<std::string> notes;  // e.g. the ode-weight domain extension

    std::string to_csv() const;  // trial,config_json,mean_val_loss,status
};

/// Generic engine: `sample` draws a config from a trial seed, `run` trains
/// it under a run seed and returns the validation loss. A run that throws
/// DivergenceError marks the trial failed (infinite loss); the search
/// continues. Ties go to the earliest trial; all-failed searches throw.
using SampleFn = std::function<std::string(std::uint64_t seed)>;
using RunFn = std::function<double(const std::string& config_json, std::uint64_t seed)>;
TuneReport random_search(const SampleFn& sample, const RunFn& run, std::size_t trials,
                         std::size_t runs_per_trial, std::uint64_t seed);

/// Chronological tail of the training windows: the last fraction per city
/// becomes the validation set.
std::pair<forecaster::SequenceDataset, forecaster::SequenceDataset> carve_validation(
    const forecaster::SequenceDataset& train, double fraction = 0.2);

/// Concrete searches over the forecaster trainers (validation MSE,
/// standardized).
TuneReport random_search_lstm(const LstmSearchSpace& space, const forecaster::SequenceDataset& train,
                              std::size_t trials, std::size_t runs_per_trial, std::uint64_t seed,
                              std::size_t epochs, std::size_t batch_size);
TuneReport random_search_pbdl(const PbdlSearchSpace& space, const forecaster::SequenceDataset& train,
                              std::size_t trials, std::size_t runs_per_trial, std::uint64_t seed,
                              std::size_t epochs, std::size_t batch_size);

forecaster::LstmConfig lstm_config_from_json(const std::string& text);
forecaster::PbdlConfig pbdl_config_from_json(const std::string& text);
std::string to_json(const forecaster::LstmConfig& config);
std::string to_json(const forecaster::PbdlConfig& config);

}  // namespace airphys::tune
