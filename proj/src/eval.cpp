#include "airphys/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "airphys/csv.hpp"

namespace airphys::eval {

std::string MetricsReport::to_csv() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        out.push_back({r.city, pollutant_name(r.pollutant), r.model,
                       format_double(r.rmse_standardized), format_double(r.rmse_raw),
                       format_double(r.target_mean_raw), format_double(r.target_max_raw)});
    }
    return csv::to_string({"city", "pollutant", "model", "rmse_standardized", "rmse_raw",
                           "target_mean_raw", "target_max_raw"},
                          out);
}

std::string ComparisonTable::to_csv() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        out.push_back({r.city, pollutant_name(r.pollutant), format_double(r.lstm_rmse),
                       format_double(r.pbdl_rmse), r.winner, format_double(r.gain_mean_ugm3),
                       format_double(r.gain_max_ugm3)});
    }
    return csv::to_string({"city", "pollutant", "lstm_rmse", "pbdl_rmse", "winner",
                           "gain_mean_ugm3", "gain_max_ugm3"},
                          out);
}

double rmse(const std::vector<double>& predicted, const std::vector<double>& actual) {
    if (predicted.size() != actual.size()) throw ShapeError("rmse: length mismatch");
    if (predicted.empty()) throw ShapeError("rmse: empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - actual[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(predicted.size()));
}

ComparisonTable compare_models(const std::vector<MetricsReport>& reports) {
    // Cell -> model -> row.
    std::map<std::pair<std::string, int>, std::map<std::string, MetricsRow>> cells;
    for (const auto& report : reports) {
        for (const auto& row : report.rows) {
            const auto key = std::make_pair(row.city, static_cast<int>(row.pollutant));
            if (cells[key].count(row.model)) {
                throw AlignmentError("duplicate metrics for " + row.city + "/" +
                                     pollutant_name(row.pollutant) + "/" + row.model);
            }
            cells[key][row.model] = row;
        }
    }

    ComparisonTable table;
    for (const auto& [key, models] : cells) {
        if (!models.count("lstm") || !models.count("pbdl")) {
            throw AlignmentError("metrics coverage mismatch at " + key.first + "/" +
                                 pollutant_name(static_cast<Pollutant>(key.second)));
        }
        const MetricsRow& lstm = models.at("lstm");
        const MetricsRow& pbdl = models.at("pbdl");
        ComparisonRow row;
        row.city = key.first;
        row.pollutant = static_cast<Pollutant>(key.second);
        row.lstm_rmse = lstm.rmse_standardized;
        row.pbdl_rmse = pbdl.rmse_standardized;
        if (row.lstm_rmse == row.pbdl_rmse) {
            row.winner = "tie";
        } else {
            row.winner = row.pbdl_rmse < row.lstm_rmse ? "pbdl" : "lstm";
        }
        const double diff = row.lstm_rmse - row.pbdl_rmse;
        row.gain_mean_ugm3 = lstm.target_mean_raw * diff;
        row.gain_max_ugm3 = lstm.target_max_raw * diff;
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string predictions_to_csv(const forecaster::SequenceDataset& test,
                               const std::vector<double>& predicted_raw) {
    if (predicted_raw.size() != test.size()) throw ShapeError("predictions: length mismatch");
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const double actual =
            test.targets[i] * test.scaling.target_sd + test.scaling.target_mean;
        rows.push_back({test.city[i], test.date[i].to_string(), format_double(actual),
                        format_double(predicted_raw[i])});
    }
    return csv::to_string({"city", "date", "actual", "predicted"}, rows);
}

void export_plot_data(const forecaster::TrainedModel& model,
                      const forecaster::SequenceDataset& test, const std::string& path_prefix) {
    const std::vector<double> pred = forecaster::predict(model, test);
    auto write = [](const std::string& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write file: " + path);
        out << text;
        if (!out) throw IoError("write failed: " + path);
    };
    write(path_prefix + "_trace.csv", forecaster::trace_to_csv(model.trace));
    write(path_prefix + "_predictions.csv", predictions_to_csv(test, pred));
}

}  // namespace airphys::eval
