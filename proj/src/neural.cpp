#include "airphys/neural.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace airphys::neural {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

namespace {

ConstMapMat as_matrix(const Tensor& t) {
    return ConstMapMat(t.values.data(), static_cast<Eigen::Index>(t.rows()),
                       static_cast<Eigen::Index>(t.cols()));
}

MapMat as_matrix_grad(std::vector<double>& grad, std::size_t rows, std::size_t cols) {
    return MapMat(grad.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMapMat as_matrix(const std::vector<double>& data, std::size_t rows, std::size_t cols) {
    return ConstMapMat(data.data(), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
}

}  // namespace

// ============================================================================
// Tensor / parameters
// ============================================================================

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    t.shape = std::move(shape);
    t.values.assign(n, 0.0);
    return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
    Tensor t = zeros({rows, cols});
    std::fill(t.values.begin(), t.values.end(), fill);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t = zeros({1, 1});
    t.values[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t;
    t.shape = {1, values.size()};
    t.values = std::move(values);
    return t;
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

Tensor he_normal_init(const std::vector<std::size_t>& shape, std::uint64_t seed) {
    Tensor t = Tensor::zeros(shape);
    if (t.size() == 0) return t;
    const std::size_t fan_in = shape.empty() ? 1 : shape[0];
    if (fan_in < 1) throw ArgumentError("he_normal_init: fan_in must be >= 1");
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    Rng rng(seed);
    for (double& v : t.values) v = rng.normal(0.0, sd);
    return t;
}

ParamBlock& NetworkParams::add(const std::string& name, Tensor t, bool trainable) {
    if (find(name)) throw ArgumentError("duplicate parameter block: " + name);
    blocks.push_back({name, std::move(t), trainable});
    return blocks.back();
}

ParamBlock* NetworkParams::find(const std::string& name) {
    for (auto& b : blocks) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

const ParamBlock* NetworkParams::find(const std::string& name) const {
    for (const auto& b : blocks) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

void NetworkParams::zero_grad() {
    for (auto& b : blocks) {
        if (!b.tensor.grad.empty()) std::fill(b.tensor.grad.begin(), b.tensor.grad.end(), 0.0);
    }
}

std::string NetworkParams::to_checkpoint() const {
    nlohmann::json doc;
    doc["magic"] = "AIRPHYS-CKPT-1";
    doc["init_seed"] = init_seed;
    auto& arr = doc["blocks"] = nlohmann::json::array();
    for (const auto& b : blocks) {
        nlohmann::json jb;
        jb["name"] = b.name;
        jb["shape"] = b.tensor.shape;
        jb["values"] = b.tensor.values;
        jb["trainable"] = b.trainable;
        arr.push_back(std::move(jb));
    }
    return doc.dump();
}

NetworkParams NetworkParams::from_checkpoint(const std::string& json_text) {
    nlohmann::json doc = nlohmann::json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw DataError("checkpoint is not valid JSON");
    if (!doc.contains("magic") || doc["magic"] != "AIRPHYS-CKPT-1") {
        throw DataError("checkpoint magic mismatch; expected AIRPHYS-CKPT-1");
    }
    NetworkParams out;
    out.init_seed = doc.value("init_seed", std::uint64_t{0});
    for (const auto& jb : doc["blocks"]) {
        ParamBlock b;
        b.name = jb.at("name").get<std::string>();
        b.tensor.shape = jb.at("shape").get<std::vector<std::size_t>>();
        b.tensor.values = jb.at("values").get<std::vector<double>>();
        b.trainable = jb.value("trainable", true);
        std::size_t n = 1;
        for (std::size_t d : b.tensor.shape) n *= d;
        if (n != b.tensor.values.size()) throw DataError("checkpoint block shape mismatch");
        out.blocks.push_back(std::move(b));
    }
    return out;
}

// ============================================================================
// Graph
// ============================================================================

Graph::NodeId Graph::push(Tensor value,
                          std::function<void(Graph&, const std::vector<double>&)> backprop,
                          ParamBlock* bound) {
    Node n;
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw StateError("graph: node id out of range");
    }
}

std::vector<double>& Graph::grad_of(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

const Tensor& Graph::value(NodeId id) const {
    check(id);
    return nodes_[static_cast<std::size_t>(id)].value;
}

double Graph::scalar_value(NodeId id) const {
    const Tensor& t = value(id);
    if (t.size() != 1) throw ShapeError("graph: node is not a scalar");
    return t.values[0];
}

Graph::NodeId Graph::input(Tensor t) { return push(std::move(t), nullptr); }

Graph::NodeId Graph::param(ParamBlock& block) {
    auto it = param_nodes_.find(&block);
    if (it != param_nodes_.end()) return it->second;
    NodeId id = push(block.tensor, nullptr, &block);
    param_nodes_[&block] = id;
    return id;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    check(a);
    check(b);
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.cols() != tb.rows()) throw ShapeError("matmul: inner dimensions differ");
    Tensor out = Tensor::zeros({ta.rows(), tb.cols()});
    as_matrix_grad(out.values, out.rows(), out.cols()) = as_matrix(ta) * as_matrix(tb);
    return push(std::move(out), [a, b](Graph& g, const std::vector<double>& dC) {
        const Tensor& A = g.value(a);
        const Tensor& B = g.value(b);
        auto dCm = as_matrix(dC, A.rows(), B.cols());
        as_matrix_grad(g.grad_of(a), A.rows(), A.cols()) += dCm * as_matrix(B).transpose();
        as_matrix_grad(g.grad_of(b), B.rows(), B.cols()) += as_matrix(A).transpose() * dCm;
    });
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    check(a);
    check(b);
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape != tb.shape) throw ShapeError("add: shapes differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += tb.values[i];
    return push(std::move(out), [a, b](Graph& g, const std::vector<double>& dC) {
        auto& da = g.grad_of(a);
        auto& db = g.grad_of(b);
        for (std::size_t i = 0; i < dC.size(); ++i) {
            da[i] += dC[i];
            db[i] += dC[i];
        }
    });
}

Graph::NodeId Graph::add_row(NodeId x, NodeId bias) {
    check(x);
    check(bias);
    const Tensor& tx = value(x);
    const Tensor& tb = value(bias);
    if (tb.rows() != 1 || tb.cols() != tx.cols()) {
        throw ShapeError("add_row: bias must be (1 x cols)");
    }
    Tensor out = tx;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += tb.values[c];
    }
    return push(std::move(out), [x, bias](Graph& g, const std::vector<double>& dC) {
        const Tensor& tx2 = g.value(x);
        auto& dx = g.grad_of(x);
        auto& db = g.grad_of(bias);
        const std::size_t cols = tx2.cols();
        for (std::size_t i = 0; i < dC.size(); ++i) {
            dx[i] += dC[i];
            db[i % cols] += dC[i];
        }
    });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    check(a);
    check(b);
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape != tb.shape) throw ShapeError("sub: shapes differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= tb.values[i];
    return push(std::move(out), [a, b](Graph& g, const std::vector<double>& dC) {
        auto& da = g.grad_of(a);
        auto& db = g.grad_of(b);
        for (std::size_t i = 0; i < dC.size(); ++i) {
            da[i] += dC[i];
            db[i] -= dC[i];
        }
    });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    check(a);
    check(b);
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape != tb.shape) throw ShapeError("mul: shapes differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= tb.values[i];
    return push(std::move(out), [a, b](Graph& g, const std::vector<double>& dC) {
        const auto& va = g.value(a).values;
        const auto& vb = g.value(b).values;
        auto& da = g.grad_of(a);
        auto& db = g.grad_of(b);
        for (std::size_t i = 0; i < dC.size(); ++i) {
            da[i] += dC[i] * vb[i];
            db[i] += dC[i] * va[i];
        }
    });
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    check(a);
    Tensor out = value(a);
    for (double& v : out.values) v *= s;
    return push(std::move(out), [a, s](Graph& g, const std::vector<double>& dC) {
        auto& da = g.grad_of(a);
        for (std::size_t i = 0; i < dC.size(); ++i) da[i] += s * dC[i];
    });
}

Graph::NodeId Graph::add_scaled(NodeId a, NodeId b, double s) {
    check(a);
    check(b);
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape != tb.shape) throw ShapeError("add_scaled: shapes differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += s * tb.values[i];
    return push(std::move(out), [a, b, s](Graph& g, const std::vector<double>& dC) {
        auto& da = g.grad_of(a);
        auto& db = g.grad_of(b);
        for (std::size_t i = 0; i < dC.size(); ++i) {
            da[i] += dC[i];
            db[i] += s * dC[i];
        }
    });
}

Graph::NodeId Graph::elu(NodeId x) {
    check(x);
    Tensor out = value(x);
    for (double& v : out.values) v = v > 0.0 ? v : std::expm1(v);
    return push(std::move(out), [x](Graph& g, const std::vector<double>& dC) {
        const auto& vx = g.value(x).values;
        auto& dx = g.grad_of(x);
        for (std::size_t i = 0; i < dC.size(); ++i) {
            dx[i] += dC[i] * (vx[i] > 0.0 ? 1.0 : std::exp(vx[i]));
        }
    });
}

Graph::NodeId Graph::sigmoid(NodeId x) {
    check(x);
    Tensor out = value(x);
    for (double& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
    NodeId id = push(std::move(out), nullptr);
    nodes_.back().backprop = [x, id](Graph& g, const std::vector<double>& dC) {
        const auto& vy = g.value(id).values;
        auto& dx = g.grad_of(x);
        for (std::size_t i = 0; i < dC.size(); ++i) dx[i] += dC[i] * vy[i] * (1.0 - vy[i]);
    };
    return id;
}

Graph::NodeId Graph::tanh(NodeId x) {
    check(x);
    Tensor out = value(x);
    for (double& v : out.values) v = std::tanh(v);
    NodeId id = push(std::move(out), nullptr);
    nodes_.back().backprop = [x, id](Graph& g, const std::vector<double>& dC) {
        const auto& vy = g.value(id).values;
        auto& dx = g.grad_of(x);
        for (std::size_t i = 0; i < dC.size(); ++i) dx[i] += dC[i] * (1.0 - vy[i] * vy[i]);
    };
    return id;
}

Graph::NodeId Graph::dropout(NodeId x, double rate, Rng& rng, bool train) {
    check(x);
    if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout rate must be in [0, 1)");
    if (!train || rate == 0.0) return x;  // identity in eval mode
    const Tensor& tx = value(x);
    std::vector<double> mask(tx.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = tx;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= mask[i];
    return push(std::move(out), [x, mask = std::move(mask)](Graph& g,
                                                            const std::vector<double>& dC) {
        auto& dx = g.grad_of(x);
        for (std::size_t i = 0; i < dC.size(); ++i) dx[i] += dC[i] * mask[i];
    });
}

Graph::NodeId Graph::batch_norm(NodeId x, ParamBlock& gamma, ParamBlock& beta,
                                ParamBlock& running_mean, ParamBlock& running_var, bool train) {
    check(x);
    const Tensor& tx = value(x);
    const std::size_t m = tx.rows();
    const std::size_t c = tx.cols();
    if (gamma.tensor.size() != c || beta.tensor.size() != c ||
        running_mean.tensor.size() != c || running_var.tensor.size() != c) {
        throw ShapeError("batch_norm: parameter blocks must have one entry per column");
    }
    NodeId g_id = param(gamma);
    NodeId b_id = param(beta);

    if (train) {
        if (m < 1) throw ShapeError("batch_norm: empty batch");
        std::vector<double> mean(c, 0.0), var(c, 0.0), inv_std(c);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < c; ++j) mean[j] += tx.at(r, j);
        }
        for (double& v : mean) v /= static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                const double d = tx.at(r, j) - mean[j];
                var[j] += d * d;
            }
        }
        for (double& v : var) v /= static_cast<double>(m);
        for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEpsilon);

        for (std::size_t j = 0; j < c; ++j) {
            running_mean.tensor.values[j] =
                kBatchNormMomentum * running_mean.tensor.values[j] +
                (1.0 - kBatchNormMomentum) * mean[j];
            running_var.tensor.values[j] = kBatchNormMomentum * running_var.tensor.values[j] +
                                           (1.0 - kBatchNormMomentum) * var[j];
        }

        Tensor xhat = Tensor::zeros({m, c});
        Tensor out = Tensor::zeros({m, c});
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                const double xh = (tx.at(r, j) - mean[j]) * inv_std[j];
                xhat.at(r, j) = xh;
                out.at(r, j) = gamma.tensor.values[j] * xh + beta.tensor.values[j];
            }
        }
        return push(std::move(out),
                    [x, g_id, b_id, m, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                        Graph& g, const std::vector<double>& dY) {
                        const auto& gam = g.value(g_id).values;
                        auto& dx = g.grad_of(x);
                        auto& dgamma = g.grad_of(g_id);
                        auto& dbeta = g.grad_of(b_id);
                        const double dm = static_cast<double>(m);
                        for (std::size_t j = 0; j < c; ++j) {
                            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                            for (std::size_t r = 0; r < m; ++r) {
                                const double dy = dY[r * c + j];
                                const double xh = xhat.at(r, j);
                                dgamma[j] += dy * xh;
                                dbeta[j] += dy;
                                const double dxh = dy * gam[j];
                                sum_dxhat += dxh;
                                sum_dxhat_xhat += dxh * xh;
                            }
                            for (std::size_t r = 0; r < m; ++r) {
                                const double dxh = dY[r * c + j] * gam[j];
                                dx[r * c + j] += (inv_std[j] / dm) *
                                                 (dm * dxh - sum_dxhat -
                                                  xhat.at(r, j) * sum_dxhat_xhat);
                            }
                        }
                    });
    }

    // Eval mode: normalize by the running statistics.
    std::vector<double> inv_std(c);
    for (std::size_t j = 0; j < c; ++j) {
        inv_std[j] = 1.0 / std::sqrt(running_var.tensor.values[j] + kBatchNormEpsilon);
    }
    std::vector<double> rmean = running_mean.tensor.values;
    Tensor out = Tensor::zeros({m, c});
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            out.at(r, j) = gamma.tensor.values[j] * (tx.at(r, j) - rmean[j]) * inv_std[j] +
                           beta.tensor.values[j];
        }
    }
    return push(std::move(out),
                [x, g_id, b_id, m, c, inv_std = std::move(inv_std), rmean = std::move(rmean)](
                    Graph& g, const std::vector<double>& dY) {
                    const auto& gam = g.value(g_id).values;
                    const auto& vx = g.value(x).values;
                    auto& dx = g.grad_of(x);
                    auto& dgamma = g.grad_of(g_id);
                    auto& dbeta = g.grad_of(b_id);
                    for (std::size_t r = 0; r < m; ++r) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const double dy = dY[r * c + j];
                            dx[r * c + j] += dy * gam[j] * inv_std[j];
                            dgamma[j] += dy * (vx[r * c + j] - rmean[j]) * inv_std[j];
                            dbeta[j] += dy;
                        }
                    }
                });
}

Graph::NodeId Graph::mean_squared_error(NodeId pred, NodeId target) {
    check(pred);
    check(target);
    const Tensor& tp = value(pred);
    const Tensor& tt = value(target);
    if (tp.shape != tt.shape) throw ShapeError("mse: shapes differ");
    if (tp.size() == 0) throw ShapeError("mse: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        const double d = tp.values[i] - tt.values[i];
        acc += d * d;
    }
    const double n = static_cast<double>(tp.size());
    return push(Tensor::scalar(acc / n),
                [pred, target, n](Graph& g, const std::vector<double>& dL) {
                    const auto& vp = g.value(pred).values;
                    const auto& vt = g.value(target).values;
                    auto& dp = g.grad_of(pred);
                    auto& dt = g.grad_of(target);
                    for (std::size_t i = 0; i < vp.size(); ++i) {
                        const double d = 2.0 / n * (vp[i] - vt[i]) * dL[0];
                        dp[i] += d;
                        dt[i] -= d;
                    }
                });
}

Graph::NodeId Graph::mean_square(NodeId x) {
    check(x);
    const Tensor& tx = value(x);
    if (tx.size() == 0) throw ShapeError("mean_square: empty tensor");
    double acc = 0.0;
    for (double v : tx.values) acc += v * v;
    const double n = static_cast<double>(tx.size());
    return push(Tensor::scalar(acc / n), [x, n](Graph& g, const std::vector<double>& dL) {
        const auto& vx = g.value(x).values;
        auto& dx = g.grad_of(x);
        for (std::size_t i = 0; i < vx.size(); ++i) dx[i] += 2.0 / n * vx[i] * dL[0];
    });
}

Graph::NodeId Graph::sum_squares(NodeId x) {
    check(x);
    const Tensor& tx = value(x);
    double acc = 0.0;
    for (double v : tx.values) acc += v * v;
    return push(Tensor::scalar(acc), [x](Graph& g, const std::vector<double>& dL) {
        const auto& vx = g.value(x).values;
        auto& dx = g.grad_of(x);
        for (std::size_t i = 0; i < vx.size(); ++i) dx[i] += 2.0 * vx[i] * dL[0];
    });
}

Graph::NodeId Graph::l2_penalty(double lambda, const std::vector<ParamBlock*>& weights) {
    if (lambda < 0.0) throw ArgumentError("l2_penalty: lambda must be >= 0");
    NodeId total = input(Tensor::scalar(0.0));
    for (ParamBlock* w : weights) {
        total = add(total, sum_squares(param(*w)));
    }
    return scale(total, lambda);
}

void Graph::backward(NodeId loss) {
    if (nodes_.empty()) throw StateError("backward without a recorded forward pass");
    if (consumed_) throw StateError("backward already ran; call reset() first");
    check(loss);
    if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar");

    for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
    nodes_[static_cast<std::size_t>(loss)].grad[0] = 1.0;

    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backprop) n.backprop(*this, n.grad);
    }
    for (auto& n : nodes_) {
        if (!n.bound) continue;
        n.bound->tensor.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->tensor.grad[i] += n.grad[i];
    }
    consumed_ = true;
}

void Graph::reset() {
    nodes_.clear();
    param_nodes_.clear();
    consumed_ = false;
}

// ============================================================================
// LSTM
// ============================================================================

void LstmCellParams::validate() const {
    const std::size_t in = input_size();
    const std::size_t hid = hidden_size();
    auto check_gate = [&](const Tensor& w, const Tensor& u, const Tensor& b, const char* gate) {
        if (w.rows() != in || w.cols() != hid || u.rows() != hid || u.cols() != hid ||
            b.rows() != 1 || b.cols() != hid) {
            throw ShapeError(std::string("lstm: inconsistent shapes in ") + gate + " gate");
        }
    };
    check_gate(w_input, u_input, b_input, "input");
    check_gate(w_forget, u_forget, b_forget, "forget");
    check_gate(w_output, u_output, b_output, "output");
    check_gate(w_cell, u_cell, b_cell, "candidate");
}

LstmCellParams lstm_init(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed) {
    const SeedStreams streams(seed);
    LstmCellParams p;
    auto w = [&](const char* n) {
        return he_normal_init({input_size, hidden_size}, streams.stream_seed(n));
    };
    auto u = [&](const char* n) {
        return he_normal_init({hidden_size, hidden_size}, streams.stream_seed(n));
    };
    p.w_input = w("w_i");
    p.u_input = u("u_i");
    p.b_input = Tensor::matrix(1, hidden_size);
    p.w_forget = w("w_f");
    p.u_forget = u("u_f");
    p.b_forget = Tensor::matrix(1, hidden_size, 1.0);  // forget bias 1, standard
    p.w_output = w("w_o");
    p.u_output = u("u_o");
    p.b_output = Tensor::matrix(1, hidden_size);
    p.w_cell = w("w_g");
    p.u_cell = u("u_g");
    p.b_cell = Tensor::matrix(1, hidden_size);
    return p;
}

LstmStepResult lstm_cell_step(const std::vector<double>& x, const std::vector<double>& h,
                              const std::vector<double>& c, const LstmCellParams& p) {
    p.validate();
    const std::size_t in = p.input_size();
    const std::size_t hid = p.hidden_size();
    if (x.size() != in || h.size() != hid || c.size() != hid) {
        throw ShapeError("lstm_cell_step: vector sizes inconsistent with parameters");
    }
    auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b, std::size_t j) {
        double z = b.values[j];
        for (std::size_t k = 0; k < in; ++k) z += x[k] * w.at(k, j);
        for (std::size_t k = 0; k < hid; ++k) z += h[k] * u.at(k, j);
        return z;
    };
    auto sigm = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };

    LstmStepResult out;
    out.h.resize(hid);
    out.c.resize(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        const double i = sigm(gate(p.w_input, p.u_input, p.b_input, j));
        const double f = sigm(gate(p.w_forget, p.u_forget, p.b_forget, j));
        const double o = sigm(gate(p.w_output, p.u_output, p.b_output, j));
        const double g = std::tanh(gate(p.w_cell, p.u_cell, p.b_cell, j));
        out.c[j] = f * c[j] + i * g;
        out.h[j] = o * std::tanh(out.c[j]);
    }
    return out;
}

std::vector<std::string> lstm_block_names(const std::string& prefix) {
    std::vector<std::string> names;
    for (const char* gate : {"i", "f", "o", "g"}) {
        names.push_back(prefix + "/w_" + gate);
        names.push_back(prefix + "/u_" + gate);
        names.push_back(prefix + "/b_" + gate);
    }
    return names;
}

void add_lstm_params(NetworkParams& params, const std::string& prefix, std::size_t input_size,
                     std::size_t hidden_size, std::uint64_t seed) {
    LstmCellParams cell = lstm_init(input_size, hidden_size, seed);
    params.add(prefix + "/w_i", std::move(cell.w_input));
    params.add(prefix + "/u_i", std::move(cell.u_input));
    params.add(prefix + "/b_i", std::move(cell.b_input));
    params.add(prefix + "/w_f", std::move(cell.w_forget));
    params.add(prefix + "/u_f", std::move(cell.u_forget));
    params.add(prefix + "/b_f", std::move(cell.b_forget));
    params.add(prefix + "/w_o", std::move(cell.w_output));
    params.add(prefix + "/u_o", std::move(cell.u_output));
    params.add(prefix + "/b_o", std::move(cell.b_output));
    params.add(prefix + "/w_g", std::move(cell.w_cell));
    params.add(prefix + "/u_g", std::move(cell.u_cell));
    params.add(prefix + "/b_g", std::move(cell.b_cell));
}

LstmGraphStep lstm_graph_step(Graph& g, Graph::NodeId x, Graph::NodeId h, Graph::NodeId c,
                              NetworkParams& params, const std::string& prefix) {
    auto block = [&](const std::string& suffix) -> ParamBlock& {
        ParamBlock* b = params.find(prefix + suffix);
        if (!b) throw StateError("missing LSTM block: " + prefix + suffix);
        return *b;
    };
    auto gate_pre = [&](const char* gate) {
        Graph::NodeId z = g.add(g.matmul(x, g.param(block(std::string("/w_") + gate))),
                                g.matmul(h, g.param(block(std::string("/u_") + gate))));
        return g.add_row(z, g.param(block(std::string("/b_") + gate)));
    };
    const Graph::NodeId i = g.sigmoid(gate_pre("i"));
    const Graph::NodeId f = g.sigmoid(gate_pre("f"));
    const Graph::NodeId o = g.sigmoid(gate_pre("o"));
    const Graph::NodeId cand = g.tanh(gate_pre("g"));

    LstmGraphStep out;
    out.c = g.add(g.mul(f, c), g.mul(i, cand));
    out.h = g.mul(o, g.tanh(out.c));
    return out;
}

// ============================================================================
// Nadam
// ============================================================================

void nadam_step(NetworkParams& params, OptimizerState& state) {
    const std::size_t t = state.step + 1;
    const double beta1 = state.beta1;
    const double beta2 = state.beta2;
    auto mu = [&](std::size_t step) {
        return beta1 * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(step) *
                                                       state.schedule_decay));
    };
    const double mu_t = mu(t);
    const double mu_next = mu(t + 1);
    const double m_schedule_new = state.mu_product * mu_t;
    const double m_schedule_next = state.mu_product * mu_t * mu_next;
    const double v_correction = 1.0 - std::pow(beta2, static_cast<double>(t));

    for (auto& block : params.blocks) {
        if (!block.trainable || block.tensor.grad.empty()) continue;
        auto& m = state.first_moment[block.name];
        auto& v = state.second_moment[block.name];
        if (m.size() != block.tensor.size()) m.assign(block.tensor.size(), 0.0);
        if (v.size() != block.tensor.size()) v.assign(block.tensor.size(), 0.0);

        for (std::size_t i = 0; i < block.tensor.size(); ++i) {
            const double grad = block.tensor.grad[i];
            const double g_prime = grad / (1.0 - m_schedule_new);
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
            const double m_prime = m[i] / (1.0 - m_schedule_next);
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
            const double v_prime = v[i] / v_correction;
            const double m_bar = (1.0 - mu_t) * g_prime + mu_next * m_prime;
            block.tensor.values[i] -=
                state.learning_rate * m_bar / (std::sqrt(v_prime) + state.epsilon);
        }
    }
    state.mu_product = m_schedule_new;
    state.step = t;
}

}  // namespace airphys::neural
