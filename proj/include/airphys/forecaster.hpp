#pragma once

#include <string>
#include <utility>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/dataset.hpp"
#include "airphys/features.hpp"
#include "airphys/neural.hpp"

namespace airphys::forecaster {

// ============================================================================
// SEQUENCES
// ============================================================================

/// Standardization statistics for sequence features and the target. The
/// lagged-pollutant input channel shares the target's scaling so rate
/// differences stay on one scale.
struct SequenceScaling {
    std::vector<double> feature_mean;  // per input channel
    std::vector<double> feature_sd;
    double target_mean = 0.0;
    double target_sd = 1.0;

    bool operator==(const SequenceScaling&) const = default;
};

/// Supervised windows: each sample is a (window x channel) block of
/// standardized features whose target is the standardized next-day
/// pollutant. target_prev carries the pollutant at the window's last day for
/// the finite-difference rate target.
struct SequenceDataset {
    std::size_t window = 0;
    std::size_t channels = 0;          // 9 covariates + lagged pollutant
    std::vector<double> inputs;        // size() * window * channels, row-major
    std::vector<double> targets;       // standardized
    std::vector<double> target_prev;   // standardized
    std::vector<std::string> city;     // provenance
    std::vector<Date> date;            // target date
    SequenceScaling scaling;

    std::size_t size() const { return targets.size(); }
    const double* sample(std::size_t i) const { return inputs.data() + i * window * channels; }

    /// Stacks the chosen samples into a (rows x window*channels) tensor.
    neural::Tensor input_tensor(const std::vector<std::size_t>& indices) const;
    neural::Tensor input_tensor_all() const;
};

/// Input channel order per timestep: the nine covariates then the lagged
/// target pollutant.
std::vector<Variable> sequence_channels(Pollutant target);

/// Train-rows-only scaling statistics (population sd).
SequenceScaling fit_sequence_scaling(const dataset::CityDailyPanel& panel, Pollutant target,
                                     const features::SplitIndex& split);

/// Sliding windows per city. A window's inputs are the `window` days ending
/// at t; its target is day t+1. Windows whose target day is in the test
/// split go to test (their inputs may reach back into train); everything
/// else must lie fully in train. The split must be a clean per-city
/// chronological prefix, otherwise this throws LeakageError.
std::pair<SequenceDataset, SequenceDataset> build_sequences(const dataset::CityDailyPanel& panel,
                                                            Pollutant target, std::size_t window,
                                                            const features::SplitIndex& split,
                                                            const SequenceScaling& scaling);

// ============================================================================
// MODELS
// ============================================================================

enum class Architecture { Lstm, Pbdl };

struct LstmConfig {
    std::vector<std::size_t> units = {64};  // per layer
    std::vector<double> dropout = {0.2};    // per layer, applied to its outputs
    double learning_rate = 0.001;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PbdlConfig {
    std::size_t layers = 1;
    std::size_t units = 107;
    double l2 = 0.01;
    double learning_rate = 0.01;
    std::size_t epochs = 1000;
    std::size_t batch_size = 32;
    double ode_weight = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossTraceEntry {
    double total = 0.0;
    double data = 0.0;
    double ode = 0.0;
};

struct TrainedModel {
    Architecture architecture = Architecture::Pbdl;
    LstmConfig lstm_config;
    PbdlConfig pbdl_config;
    bool rate_head = false;
    std::size_t window = 0;
    std::size_t channels = 0;
    neural::NetworkParams params;
    SequenceScaling scaling;
    std::vector<LossTraceEntry> trace;

    std::string to_json() const;
    static TrainedModel from_json(const std::string& text);
};

/// Mean squared mismatch between the rate head and the one-day forward
/// difference of the standardized target.
double ode_residual(const TrainedModel& model, const SequenceDataset& batch);

/// total = data + lambda * ode.
double pbdl_total_loss(double data_loss, double ode_loss, double lambda);

/// Dense trunk (units wide, batch-normalized, ELU) with a prediction head
/// and a rate head; Nadam minimizes data + lambda*ode + L2. Per-epoch loss
/// components are recorded on the trace.
TrainedModel train_pbdl(const SequenceDataset& train, const PbdlConfig& config);

/// Same trunk and prediction head with the rate head left out entirely; the
/// reference for the lambda = 0 ablation.
TrainedModel train_plain(const SequenceDataset& train, const PbdlConfig& config);

/// Stacked LSTM with per-layer dropout, dense head, MSE loss.
TrainedModel train_lstm(const SequenceDataset& train, const LstmConfig& config);

/// Eval-mode predictions mapped back to the raw pollutant scale.
std::vector<double> predict(const TrainedModel& model, const SequenceDataset& data);

/// Eval-mode predictions on the standardized scale.
std::vector<double> predict_standardized(const TrainedModel& model, const SequenceDataset& data);

std::string trace_to_csv(const std::vector<LossTraceEntry>& trace);

}  // namespace airphys::forecaster
