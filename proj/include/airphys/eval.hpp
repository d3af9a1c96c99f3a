#pragma once

#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/forecaster.hpp"

namespace airphys::eval {

struct MetricsRow {
    std::string city;
    Pollutant pollutant = Pollutant::NOx;
    std::string model;  // "lstm" | "pbdl"
    double rmse_standardized = 0.0;
    double rmse_raw = 0.0;
    double target_mean_raw = 0.0;  // over the evaluated actuals
    double target_max_raw = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;

    std::string to_csv() const;
};

struct ComparisonRow {
    std::string city;
    Pollutant pollutant = Pollutant::NOx;
    double lstm_rmse = 0.0;
    double pbdl_rmse = 0.0;
    std::string winner;       // "lstm" | "pbdl" | "tie"
    double gain_mean_ugm3 = 0.0;  // target mean * (lstm - pbdl)
    double gain_max_ugm3 = 0.0;   // target max  * (lstm - pbdl)
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;

    std::string to_csv() const;
};

double rmse(const std::vector<double>& predicted, const std::vector<double>& actual);

/// Merges per-model metric reports into one table, one row per
/// (city, pollutant). Every report must cover the same cells; the winner is
/// the model with the smaller standardized RMSE. Gains follow the
/// mean/max-scaled difference of standardized RMSEs.
ComparisonTable compare_models(const std::vector<MetricsReport>& reports);

/// Writes <prefix>_trace.csv and <prefix>_predictions.csv for a trained
/// model on a test set. No graphics, data only.
void export_plot_data(const forecaster::TrainedModel& model,
                      const forecaster::SequenceDataset& test, const std::string& path_prefix);

/// Prediction CSV text: city,date,actual,predicted (raw scale).
std::string predictions_to_csv(const forecaster::SequenceDataset& test,
                               const std::vector<double>& predicted_raw);

}  // namespace airphys::eval
