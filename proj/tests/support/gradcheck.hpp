#pragma once

// Finite-difference gradient checking against the autodiff engine, plus a
// randomized small-network builder used by both the unit tests and the
// acceptance suite.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "airphys/common.hpp"
#include "airphys/neural.hpp"

namespace gradcheck {

using airphys::Rng;
using airphys::SeedStreams;
using airphys::neural::Graph;
using airphys::neural::NetworkParams;
using airphys::neural::ParamBlock;
using airphys::neural::Tensor;

/// Loss as a function of the current parameter values; when want_grad is
/// set, gradients must be accumulated into the blocks before returning.
using ForwardFn = std::function<double(NetworkParams&, bool want_grad)>;

struct CheckResult {
    double max_rel_err = 0.0;   // relative with absolute floor
    std::string worst_block;
};

inline CheckResult check_gradients(NetworkParams& params, const ForwardFn& forward,
                                   double h = 1e-5, double abs_floor = 1e-6) {
    params.zero_grad();
    forward(params, true);

    CheckResult result;
    for (auto& block : params.blocks) {
        if (!block.trainable) continue;
        for (std::size_t i = 0; i < block.tensor.size(); ++i) {
            const double saved = block.tensor.values[i];
            block.tensor.values[i] = saved + h;
            const double up = forward(params, false);
            block.tensor.values[i] = saved - h;
            const double down = forward(params, false);
            block.tensor.values[i] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = block.tensor.grad.empty() ? 0.0 : block.tensor.grad[i];
            const double diff = std::abs(numeric - analytic);
            if (diff <= abs_floor) continue;
            const double rel = diff / std::max(std::abs(numeric), std::abs(analytic));
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_block = block.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

/// Random small network: up to 3 dense layers of up to 16 units with mixed
/// ELU/tanh/sigmoid activations and per-layer coin-flip batch norm, ending
/// in an MSE loss against a fixed random target.
struct RandomNet {
    NetworkParams params;
    ForwardFn forward;
};

inline RandomNet make_random_net(std::uint64_t seed) {
    Rng arch(seed);
    const std::size_t batch = 4 + arch.uniform_index(5);
    const std::size_t in_dim = 2 + arch.uniform_index(5);
    const std::size_t n_layers = 1 + arch.uniform_index(3);

    struct LayerSpec {
        std::size_t units;
        int activation;  // 0 elu, 1 tanh, 2 sigmoid
        bool batch_norm;
    };
    std::vector<LayerSpec> layers(n_layers);
    for (auto& l : layers) {
        l.units = 2 + arch.uniform_index(15);
        l.activation = static_cast<int>(arch.uniform_index(3));
        l.batch_norm = arch.uniform() < 0.5;
    }

    RandomNet net;
    const SeedStreams streams(seed);
    std::size_t prev = in_dim;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::string tag = std::to_string(l);
        net.params.add("w" + tag, airphys::neural::he_normal_init(
                                      {prev, layers[l].units}, streams.stream_seed("w" + tag)));
        net.params.add("b" + tag, airphys::neural::he_normal_init(
                                      {1, layers[l].units}, streams.stream_seed("b" + tag)));
        if (layers[l].batch_norm) {
            net.params.add("gamma" + tag, Tensor::matrix(1, layers[l].units, 1.0));
            net.params.add("beta" + tag, Tensor::matrix(1, layers[l].units));
            net.params.add("rm" + tag, Tensor::matrix(1, layers[l].units), false);
            net.params.add("rv" + tag, Tensor::matrix(1, layers[l].units, 1.0), false);
        }
        prev = layers[l].units;
    }
    net.params.add("w_out", airphys::neural::he_normal_init({prev, 1},
                                                            streams.stream_seed("w_out")));
    net.params.add("b_out", Tensor::matrix(1, 1));

    Tensor x = Tensor::zeros({batch, in_dim});
    Tensor y = Tensor::zeros({batch, 1});
    Rng data(streams.stream_seed("data"));
    for (double& v : x.values) v = data.normal();
    for (double& v : y.values) v = data.normal();

    net.forward = [x, y, layers](NetworkParams& params, bool want_grad) {
        Graph g;
        Graph::NodeId h = g.input(x);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string tag = std::to_string(l);
            h = g.add_row(g.matmul(h, g.param(*params.find("w" + tag))),
                          g.param(*params.find("b" + tag)));
            if (layers[l].batch_norm) {
                h = g.batch_norm(h, *params.find("gamma" + tag), *params.find("beta" + tag),
                                 *params.find("rm" + tag), *params.find("rv" + tag), true);
            }
            switch (layers[l].activation) {
                case 0: h = g.elu(h); break;
                case 1: h = g.tanh(h); break;
                default: h = g.sigmoid(h); break;
            }
        }
        const Graph::NodeId pred = g.add_row(g.matmul(h, g.param(*params.find("w_out"))),
                                             g.param(*params.find("b_out")));
        const Graph::NodeId loss = g.mean_squared_error(pred, g.input(y));
        const double value = g.scalar_value(loss);
        if (want_grad) g.backward(loss);
        return value;
    };
    return net;
}

}  // namespace gradcheck
