#include "airphys/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "airphys/csv.hpp"

namespace airphys::forecaster {

using neural::Graph;
using neural::NetworkParams;
using neural::ParamBlock;
using neural::Tensor;

// ============================================================================
// Sequences
// ============================================================================

std::vector<Variable> sequence_channels(Pollutant target) {
    std::vector<Variable> channels = covariate_order();
    channels.push_back(pollutant_variable(target));
    return channels;
}

Tensor SequenceDataset::input_tensor(const std::vector<std::size_t>& indices) const {
    Tensor t = Tensor::zeros({indices.size(), window * channels});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const double* src = sample(indices[r]);
        std::copy(src, src + window * channels, t.values.begin() + r * window * channels);
    }
    return t;
}

Tensor SequenceDataset::input_tensor_all() const {
    std::vector<std::size_t> all(size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return input_tensor(all);
}

namespace {

// Per-city day sets of a split, validated as a clean chronological prefix.
std::vector<std::size_t> train_prefix_lengths(const dataset::CityDailyPanel& panel,
                                              const features::SplitIndex& split) {
    const std::size_t n_cities = panel.n_cities();
    const std::size_t n_days = panel.n_days();
    std::vector<std::vector<int>> flag(n_cities, std::vector<int>(n_days, 0));
    auto mark = [&](const std::vector<std::size_t>& rows, int value) {
        for (std::size_t row : rows) {
            if (row >= n_cities * n_days) throw LeakageError("split row out of range");
            const std::size_t c = row / n_days;
            const std::size_t d = row % n_days;
            if (flag[c][d] != 0) throw LeakageError("split assigns a row twice");
            flag[c][d] = value;
        }
    };
    mark(split.train, 1);
    mark(split.test, 2);

    std::vector<std::size_t> prefix(n_cities, 0);
    for (std::size_t c = 0; c < n_cities; ++c) {
        std::size_t k = 0;
        while (k < n_days && flag[c][k] == 1) ++k;
        for (std::size_t d = k; d < n_days; ++d) {
            if (flag[c][d] == 1) {
                throw LeakageError("train day " + panel.day(d).to_string() + " in city " +
                                   panel.cities()[c] + " follows a test day");
            }
            if (flag[c][d] == 0) {
                throw LeakageError("split does not cover city " + panel.cities()[c]);
            }
        }
        if (k == 0 || k == n_days) {
            throw LeakageError("split leaves city " + panel.cities()[c] +
                               " without both train and test days");
        }
        prefix[c] = k;
    }
    return prefix;
}

}  // namespace

SequenceScaling fit_sequence_scaling(const dataset::CityDailyPanel& panel, Pollutant target,
                                     const features::SplitIndex& split) {
    const auto prefix = train_prefix_lengths(panel, split);
    const auto channels = sequence_channels(target);

    SequenceScaling out;
    out.feature_mean.assign(channels.size(), 0.0);
    out.feature_sd.assign(channels.size(), 1.0);

    for (std::size_t j = 0; j < channels.size(); ++j) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t c = 0; c < panel.n_cities(); ++c) {
            for (std::size_t d = 0; d < prefix[c]; ++d) {
                const double x = panel.get(c, d, channels[j]);
                if (is_missing(x)) throw SpecError("panel not fully imputed");
                sum += x;
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t c = 0; c < panel.n_cities(); ++c) {
            for (std::size_t d = 0; d < prefix[c]; ++d) {
                const double dev = panel.get(c, d, channels[j]) - mean;
                ss += dev * dev;
            }
        }
        const double sd = std::sqrt(ss / static_cast<double>(count));
        if (sd <= 0.0) {
            throw DegenerateColumnError(std::string("constant training series: ") +
                                        variable_name(channels[j]));
        }
        out.feature_mean[j] = mean;
        out.feature_sd[j] = sd;
    }
    // The lagged pollutant is the last channel; its statistics double as the
    // target scaling.
    out.target_mean = out.feature_mean.back();
    out.target_sd = out.feature_sd.back();
    return out;
}

std::pair<SequenceDataset, SequenceDataset> build_sequences(const dataset::CityDailyPanel& panel,
                                                            Pollutant target, std::size_t window,
                                                            const features::SplitIndex& split,
                                                            const SequenceScaling& scaling) {
    if (window < 1) throw ArgumentError("window must be >= 1");
    const auto prefix = train_prefix_lengths(panel, split);
    const auto channels = sequence_channels(target);
    if (scaling.feature_mean.size() != channels.size()) {
        throw ContractError("scaling does not match channel count");
    }
    const Variable pv = pollutant_variable(target);

    SequenceDataset train, test;
    for (SequenceDataset* ds : {&train, &test}) {
        ds->window = window;
        ds->channels = channels.size();
        ds->scaling = scaling;
    }

    for (std::size_t c = 0; c < panel.n_cities(); ++c) {
        const std::size_t n = panel.n_days();
        if (n < window + 1) {
            throw InsufficientDataError("city " + panel.cities()[c] + " has " +
                                        std::to_string(n) + " days; need window+1 = " +
                                        std::to_string(window + 1));
        }
        for (std::size_t t = window - 1; t + 1 < n; ++t) {
            const std::size_t target_day = t + 1;
            SequenceDataset& ds = target_day >= prefix[c] ? test : train;
            for (std::size_t back = 0; back < window; ++back) {
                const std::size_t d = t + 1 - window + back;
                for (std::size_t j = 0; j < channels.size(); ++j) {
                    const double x = panel.get(c, d, channels[j]);
                    if (is_missing(x)) throw SpecError("panel not fully imputed");
                    ds.inputs.push_back((x - scaling.feature_mean[j]) / scaling.feature_sd[j]);
                }
            }
            const double y = panel.get(c, target_day, pv);
            const double y_prev = panel.get(c, t, pv);
            if (is_missing(y) || is_missing(y_prev)) throw SpecError("panel not fully imputed");
            ds.targets.push_back((y - scaling.target_mean) / scaling.target_sd);
            ds.target_prev.push_back((y_prev - scaling.target_mean) / scaling.target_sd);
            ds.city.push_back(panel.cities()[c]);
            ds.date.push_back(panel.day(target_day));
        }
    }
    return {std::move(train), std::move(test)};
}

// ============================================================================
// Configs / model serialization
// ============================================================================

void LstmConfig::validate() const {
    if (units.empty()) throw ArgumentError("lstm: need at least one layer");
    if (units.size() != dropout.size()) {
        throw ArgumentError("lstm: dropout rates must match layer count");
    }
    for (std::size_t u : units) {
        if (u < 1) throw ArgumentError("lstm: units must be >= 1");
    }
    for (double d : dropout) {
        if (d < 0.0 || d >= 1.0) throw ArgumentError("lstm: dropout must be in [0, 1)");
    }
    if (learning_rate <= 0.0) throw ArgumentError("lstm: learning rate must be > 0");
    if (epochs < 1) throw ArgumentError("lstm: epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("lstm: batch size must be >= 1");
}

void PbdlConfig::validate() const {
    if (layers < 1) throw ArgumentError("pbdl: need at least one layer");
    if (units < 1) throw ArgumentError("pbdl: units must be >= 1");
    if (l2 < 0.0) throw ArgumentError("pbdl: l2 must be >= 0");
    if (learning_rate <= 0.0) throw ArgumentError("pbdl: learning rate must be > 0");
    if (epochs < 1) throw ArgumentError("pbdl: epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("pbdl: batch size must be >= 1");
    if (ode_weight < 0.0) throw ArgumentError("pbdl: ode weight must be >= 0");
}

namespace {

nlohmann::json scaling_to_json(const SequenceScaling& s) {
    return {{"feature_mean", s.feature_mean},
            {"feature_sd", s.feature_sd},
            {"target_mean", s.target_mean},
            {"target_sd", s.target_sd}};
}

SequenceScaling scaling_from_json(const nlohmann::json& j) {
    SequenceScaling s;
    s.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    s.feature_sd = j.at("feature_sd").get<std::vector<double>>();
    s.target_mean = j.at("target_mean").get<double>();
    s.target_sd = j.at("target_sd").get<double>();
    return s;
}

}  // namespace

std::string TrainedModel::to_json() const {
    nlohmann::json doc;
    doc["architecture"] = architecture == Architecture::Lstm ? "lstm" : "pbdl";
    doc["rate_head"] = rate_head;
    doc["window"] = window;
    doc["channels"] = channels;
    doc["scaling"] = scaling_to_json(scaling);
    if (architecture == Architecture::Lstm) {
        doc["config"] = {{"units", lstm_config.units},
                         {"dropout", lstm_config.dropout},
                         {"learning_rate", lstm_config.learning_rate},
                         {"epochs", lstm_config.epochs},
                         {"batch_size", lstm_config.batch_size},
                         {"seed", lstm_config.seed}};
    } else {
        doc["config"] = {{"layers", pbdl_config.layers},
                         {"units", pbdl_config.units},
                         {"l2", pbdl_config.l2},
                         {"learning_rate", pbdl_config.learning_rate},
                         {"epochs", pbdl_config.epochs},
                         {"batch_size", pbdl_config.batch_size},
                         {"ode_weight", pbdl_config.ode_weight},
                         {"seed", pbdl_config.seed}};
    }
    auto& tr = doc["trace"] = nlohmann::json::array();
    for (const auto& e : trace) tr.push_back({e.total, e.data, e.ode});
    doc["params"] = nlohmann::json::parse(params.to_checkpoint());
    return doc.dump();
}

TrainedModel TrainedModel::from_json(const std::string& text) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw DataError("model document is not valid JSON");
    TrainedModel m;
    m.architecture = doc.at("architecture") == "lstm" ? Architecture::Lstm : Architecture::Pbdl;
    m.rate_head = doc.value("rate_head", false);
    m.window = doc.at("window").get<std::size_t>();
    m.channels = doc.at("channels").get<std::size_t>();
    m.scaling = scaling_from_json(doc.at("scaling"));
    const auto& cfg = doc.at("config");
    if (m.architecture == Architecture::Lstm) {
        m.lstm_config.units = cfg.at("units").get<std::vector<std::size_t>>();
        m.lstm_config.dropout = cfg.at("dropout").get<std::vector<double>>();
        m.lstm_config.learning_rate = cfg.at("learning_rate").get<double>();
        m.lstm_config.epochs = cfg.at("epochs").get<std::size_t>();
        m.lstm_config.batch_size = cfg.at("batch_size").get<std::size_t>();
        m.lstm_config.seed = cfg.at("seed").get<std::uint64_t>();
    } else {
        m.pbdl_config.layers = cfg.at("layers").get<std::size_t>();
        m.pbdl_config.units = cfg.at("units").get<std::size_t>();
        m.pbdl_config.l2 = cfg.at("l2").get<double>();
        m.pbdl_config.learning_rate = cfg.at("learning_rate").get<double>();
        m.pbdl_config.epochs = cfg.at("epochs").get<std::size_t>();
        m.pbdl_config.batch_size = cfg.at("batch_size").get<std::size_t>();
        m.pbdl_config.ode_weight = cfg.at("ode_weight").get<double>();
        m.pbdl_config.seed = cfg.at("seed").get<std::uint64_t>();
    }
    for (const auto& e : doc.at("trace")) {
        m.trace.push_back({e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()});
    }
    m.params = NetworkParams::from_checkpoint(doc.at("params").dump());
    return m;
}

// ============================================================================
// PBDL network
// ============================================================================

namespace {

void init_pbdl_params(NetworkParams& params, std::size_t input_dim, const PbdlConfig& config,
                      bool rate_head) {
    const SeedStreams streams(config.seed);
    params.init_seed = config.seed;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string tag = std::to_string(l);
        params.add("dense" + tag + "/w",
                   neural::he_normal_init({in, config.units},
                                          streams.stream_seed("init/dense" + tag + "/w")));
        params.add("dense" + tag + "/b", Tensor::matrix(1, config.units));
        params.add("bn" + tag + "/gamma", Tensor::matrix(1, config.units, 1.0));
        params.add("bn" + tag + "/beta", Tensor::matrix(1, config.units));
        params.add("bn" + tag + "/mean", Tensor::matrix(1, config.units), false);
        params.add("bn" + tag + "/var", Tensor::matrix(1, config.units, 1.0), false);
        in = config.units;
    }
    params.add("head/pred/w",
               neural::he_normal_init({in, 1}, streams.stream_seed("init/head/pred/w")));
    params.add("head/pred/b", Tensor::matrix(1, 1));
    if (rate_head) {
        params.add("head/rate/w",
                   neural::he_normal_init({in, 1}, streams.stream_seed("init/head/rate/w")));
        params.add("head/rate/b", Tensor::matrix(1, 1));
    }
}

struct PbdlOutputs {
    Graph::NodeId pred = -1;
    Graph::NodeId rate = -1;
};

PbdlOutputs forward_pbdl(Graph& g, NetworkParams& params, Graph::NodeId x, std::size_t layers,
                         bool rate_head, bool train) {
    Graph::NodeId h = x;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string tag = std::to_string(l);
        h = g.add_row(g.matmul(h, g.param(*params.find("dense" + tag + "/w"))),
                      g.param(*params.find("dense" + tag + "/b")));
        h = g.batch_norm(h, *params.find("bn" + tag + "/gamma"),
                         *params.find("bn" + tag + "/beta"), *params.find("bn" + tag + "/mean"),
                         *params.find("bn" + tag + "/var"), train);
        h = g.elu(h);
    }
    PbdlOutputs out;
    out.pred = g.add_row(g.matmul(h, g.param(*params.find("head/pred/w"))),
                         g.param(*params.find("head/pred/b")));
    if (rate_head) {
        out.rate = g.add_row(g.matmul(h, g.param(*params.find("head/rate/w"))),
                             g.param(*params.find("head/rate/b")));
    }
    return out;
}

std::vector<ParamBlock*> pbdl_kernels(NetworkParams& params) {
    std::vector<ParamBlock*> ws;
    for (auto& b : params.blocks) {
        if (b.name.size() > 2 && b.name.substr(b.name.size() - 2) == "/w") ws.push_back(&b);
    }
    return ws;
}

Tensor column_tensor(const std::vector<double>& values, const std::vector<std::size_t>& idx) {
    Tensor t = Tensor::zeros({idx.size(), 1});
    for (std::size_t i = 0; i < idx.size(); ++i) t.values[i] = values[idx[i]];
    return t;
}

TrainedModel train_pbdl_impl(const SequenceDataset& train, const PbdlConfig& config,
                             bool rate_head) {
    config.validate();
    if (train.size() == 0) throw InsufficientDataError("training set is empty");
    if (rate_head && train.target_prev.size() != train.size()) {
        throw ContractError("training set lacks target_prev for the rate target");
    }

    TrainedModel model;
    model.architecture = Architecture::Pbdl;
    model.pbdl_config = config;
    model.rate_head = rate_head;
    model.window = train.window;
    model.channels = train.channels;
    model.scaling = train.scaling;
    init_pbdl_params(model.params, train.window * train.channels, config, rate_head);

    neural::OptimizerState opt;
    opt.learning_rate = config.learning_rate;

    const SeedStreams streams(config.seed);
    Rng shuffle_rng = streams.stream("shuffle");
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const double n = static_cast<double>(train.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double sum_data = 0.0, sum_ode = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);

            Graph g;
            const Graph::NodeId x = g.input(train.input_tensor(batch));
            const Graph::NodeId y = g.input(column_tensor(train.targets, batch));
            const PbdlOutputs heads =
                forward_pbdl(g, model.params, x, config.layers, rate_head, true);

            const Graph::NodeId data = g.mean_squared_error(heads.pred, y);
            Graph::NodeId total = data;
            double ode_value = 0.0;
            if (rate_head) {
                Tensor rate_target = Tensor::zeros({batch.size(), 1});
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    rate_target.values[i] =
                        train.targets[batch[i]] - train.target_prev[batch[i]];
                }
                const Graph::NodeId ode =
                    g.mean_square(g.sub(heads.rate, g.input(std::move(rate_target))));
                ode_value = g.scalar_value(ode);
                total = g.add_scaled(data, ode, config.ode_weight);
            }
            Graph::NodeId loss = total;
            if (config.l2 > 0.0) {
                loss = g.add(total, g.l2_penalty(config.l2, pbdl_kernels(model.params)));
            }
            const double loss_value = g.scalar_value(loss);
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("pbdl training diverged at epoch " +
                                      std::to_string(epoch));
            }
            model.params.zero_grad();
            g.backward(loss);
            neural::nadam_step(model.params, opt);

            const double b = static_cast<double>(batch.size());
            sum_data += g.scalar_value(data) * b;
            sum_ode += ode_value * b;
        }
        LossTraceEntry entry;
        entry.data = sum_data / n;
        entry.ode = sum_ode / n;
        entry.total = entry.data + config.ode_weight * entry.ode;
        model.trace.push_back(entry);
    }
    return model;
}

}  // namespace

double pbdl_total_loss(double data_loss, double ode_loss, double lambda) {
    if (lambda < 0.0) throw ArgumentError("ode weight must be >= 0");
    if (!std::isfinite(data_loss) || !std::isfinite(ode_loss) || data_loss < 0.0 ||
        ode_loss < 0.0) {
        throw ArgumentError("loss components must be finite and non-negative");
    }
    return data_loss + lambda * ode_loss;
}

TrainedModel train_pbdl(const SequenceDataset& train, const PbdlConfig& config) {
    return train_pbdl_impl(train, config, true);
}

TrainedModel train_plain(const SequenceDataset& train, const PbdlConfig& config) {
    return train_pbdl_impl(train, config, false);
}

// ============================================================================
// LSTM network
// ============================================================================

namespace {

void init_lstm_params(NetworkParams& params, std::size_t channels, const LstmConfig& config) {
    const SeedStreams streams(config.seed);
    params.init_seed = config.seed;
    std::size_t in = channels;
    for (std::size_t l = 0; l < config.units.size(); ++l) {
        neural::add_lstm_params(params, "lstm" + std::to_string(l), in, config.units[l],
                                streams.stream_seed("init/lstm" + std::to_string(l)));
        in = config.units[l];
    }
    params.add("head/w", neural::he_normal_init({in, 1}, streams.stream_seed("init/head/w")));
    params.add("head/b", Tensor::matrix(1, 1));
}

Graph::NodeId forward_lstm(Graph& g, NetworkParams& params, const SequenceDataset& data,
                           const std::vector<std::size_t>& batch, const LstmConfig& config,
                           bool train, Rng* dropout_rng) {
    const std::size_t b = batch.size();
    const std::size_t window = data.window;
    const std::size_t channels = data.channels;

    // Timestep input nodes.
    std::vector<Graph::NodeId> seq(window);
    for (std::size_t t = 0; t < window; ++t) {
        Tensor xt = Tensor::zeros({b, channels});
        for (std::size_t i = 0; i < b; ++i) {
            const double* src = data.sample(batch[i]) + t * channels;
            std::copy(src, src + channels, xt.values.begin() + i * channels);
        }
        seq[t] = g.input(std::move(xt));
    }

    for (std::size_t l = 0; l < config.units.size(); ++l) {
        const std::string prefix = "lstm" + std::to_string(l);
        Graph::NodeId h = g.input(Tensor::zeros({b, config.units[l]}));
        Graph::NodeId c = g.input(Tensor::zeros({b, config.units[l]}));
        std::vector<Graph::NodeId> next(window);
        for (std::size_t t = 0; t < window; ++t) {
            const neural::LstmGraphStep step = neural::lstm_graph_step(g, seq[t], h, c, params, prefix);
            h = step.h;
            c = step.c;
            next[t] = train && dropout_rng
                          ? g.dropout(step.h, config.dropout[l], *dropout_rng, true)
                          : step.h;
        }
        seq = std::move(next);
    }
    return g.add_row(g.matmul(seq.back(), g.param(*params.find("head/w"))),
                     g.param(*params.find("head/b")));
}

}  // namespace

TrainedModel train_lstm(const SequenceDataset& train, const LstmConfig& config) {
    config.validate();
    if (train.size() == 0) throw InsufficientDataError("training set is empty");

    TrainedModel model;
    model.architecture = Architecture::Lstm;
    model.lstm_config = config;
    model.window = train.window;
    model.channels = train.channels;
    model.scaling = train.scaling;
    init_lstm_params(model.params, train.channels, config);

    neural::OptimizerState opt;
    opt.learning_rate = config.learning_rate;

    const SeedStreams streams(config.seed);
    Rng shuffle_rng = streams.stream("shuffle");
    Rng dropout_rng = streams.stream("dropout");
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const double n = static_cast<double>(train.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double sum_data = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);

            Graph g;
            const Graph::NodeId pred =
                forward_lstm(g, model.params, train, batch, config, true, &dropout_rng);
            const Graph::NodeId y = g.input(column_tensor(train.targets, batch));
            const Graph::NodeId loss = g.mean_squared_error(pred, y);
            const double loss_value = g.scalar_value(loss);
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("lstm training diverged at epoch " +
                                      std::to_string(epoch));
            }
            model.params.zero_grad();
            g.backward(loss);
            neural::nadam_step(model.params, opt);
            sum_data += loss_value * static_cast<double>(batch.size());
        }
        LossTraceEntry entry;
        entry.data = sum_data / n;
        entry.ode = 0.0;
        entry.total = entry.data;
        model.trace.push_back(entry);
    }
    return model;
}

// ============================================================================
// Prediction / residuals
// ============================================================================

namespace {

void check_compatible(const TrainedModel& model, const SequenceDataset& data) {
    if (!(model.scaling == data.scaling)) {
        throw ContractError("model and dataset standardizers differ");
    }
    if (model.window != data.window || model.channels != data.channels) {
        throw ContractError("model and dataset window shapes differ");
    }
}

// Eval-mode forward over the whole dataset, in chunks.
std::vector<double> eval_outputs(const TrainedModel& model, const SequenceDataset& data,
                                 bool rate_output) {
    std::vector<double> out(data.size());
    constexpr std::size_t kChunk = 512;
    NetworkParams params = model.params;  // running stats stay untouched per call
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t stop = std::min(data.size(), start + kChunk);
        std::vector<std::size_t> batch(stop - start);
        for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = start + i;

        Graph g;
        Graph::NodeId node;
        if (model.architecture == Architecture::Pbdl) {
            const Graph::NodeId x = g.input(data.input_tensor(batch));
            const PbdlOutputs heads = forward_pbdl(g, params, x, model.pbdl_config.layers,
                                                   model.rate_head, false);
            node = rate_output ? heads.rate : heads.pred;
        } else {
            node = forward_lstm(g, params, data, batch, model.lstm_config, false, nullptr);
        }
        const Tensor& t = g.value(node);
        for (std::size_t i = 0; i < batch.size(); ++i) out[start + i] = t.values[i];
    }
    return out;
}

}  // namespace

std::vector<double> predict_standardized(const TrainedModel& model, const SequenceDataset& data) {
    check_compatible(model, data);
    return eval_outputs(model, data, false);
}

std::vector<double> predict(const TrainedModel& model, const SequenceDataset& data) {
    std::vector<double> out = predict_standardized(model, data);
    for (double& v : out) v = v * model.scaling.target_sd + model.scaling.target_mean;
    return out;
}

double ode_residual(const TrainedModel& model, const SequenceDataset& batch) {
    if (model.architecture != Architecture::Pbdl || !model.rate_head) {
        throw ContractError("ode_residual needs a model with a rate head");
    }
    check_compatible(model, batch);
    if (batch.target_prev.size() != batch.size()) {
        throw ContractError("dataset lacks target_prev values");
    }
    if (batch.size() == 0) throw ContractError("ode_residual on an empty batch");

    const std::vector<double> rate = eval_outputs(model, batch, true);
    double acc = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double r = rate[i] - (batch.targets[i] - batch.target_prev[i]);
        acc += r * r;
    }
    return acc / static_cast<double>(batch.size());
}

std::string trace_to_csv(const std::vector<LossTraceEntry>& trace) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        rows.push_back({std::to_string(i + 1), format_double(trace[i].total),
                        format_double(trace[i].data), format_double(trace[i].ode)});
    }
    return csv::to_string({"epoch", "total", "data", "ode"}, rows);
}

}  // namespace airphys::forecaster
