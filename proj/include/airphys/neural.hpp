#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "airphys/common.hpp"

namespace airphys::neural {

// ============================================================================
// TENSORS AND PARAMETERS
// ============================================================================

/// Dense row-major tensor. Rank 2 everywhere in practice (batch x features);
/// the gradient slot stays empty until a backward pass populates it.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);

    std::size_t size() const { return values.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    void ensure_grad();  // allocate zeros if absent
};

/// Entries drawn from Normal(0, 2/fan_in), fan_in = first dimension.
Tensor he_normal_init(const std::vector<std::size_t>& shape, std::uint64_t seed);

struct ParamBlock {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

/// Ordered, named parameter blocks plus the seed they were initialized from.
/// Batch-norm running statistics travel here as non-trainable blocks.
/// Deque storage keeps references from add()/find() valid while more blocks
/// are added.
struct NetworkParams {
    std::deque<ParamBlock> blocks;
    std::uint64_t init_seed = 0;

    ParamBlock& add(const std::string& name, Tensor t, bool trainable = true);
    ParamBlock* find(const std::string& name);
    const ParamBlock* find(const std::string& name) const;
    void zero_grad();

    /// Versioned JSON checkpoint, magic "AIRPHYS-CKPT-1".
    std::string to_checkpoint() const;
    static NetworkParams from_checkpoint(const std::string& json_text);
};

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-3;

// ============================================================================
// COMPUTATION GRAPH
// ============================================================================

/// Eager tape: every op computes its value on creation and records a
/// backward closure. One backward() per graph; parameters referenced via
/// param() receive accumulated gradients in their blocks.
class Graph {
public:
    using NodeId = std::int32_t;

    NodeId input(Tensor t);
    NodeId param(ParamBlock& block);  // same block maps to the same node

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);          // same shape
    NodeId add_row(NodeId x, NodeId bias);   // bias (1 x c) broadcast over rows
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);          // elementwise
    NodeId scale(NodeId a, double s);
    NodeId add_scaled(NodeId a, NodeId b, double s);  // a + s*b

    NodeId elu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId tanh(NodeId x);

    /// Inverted dropout: train mode scales kept entries by 1/(1-rate) so
    /// evaluation is the identity. rate in [0, 1).
    NodeId dropout(NodeId x, double rate, Rng& rng, bool train);

    /// Train mode normalizes by batch statistics and folds them into the
    /// running blocks (momentum 0.99); eval mode uses the running blocks.
    NodeId batch_norm(NodeId x, ParamBlock& gamma, ParamBlock& beta, ParamBlock& running_mean,
                      ParamBlock& running_var, bool train);

    NodeId mean_squared_error(NodeId pred, NodeId target);  // scalar
    NodeId mean_square(NodeId x);                           // scalar, mean of x^2
    NodeId sum_squares(NodeId x);                           // scalar

    /// lambda * sum of squared entries over the given blocks.
    NodeId l2_penalty(double lambda, const std::vector<ParamBlock*>& weights);

    const Tensor& value(NodeId id) const;
    double scalar_value(NodeId id) const;

    /// Reverse accumulation from a scalar loss. Throws StateError if the
    /// graph is empty or backward already ran (reset() re-arms it).
    void backward(NodeId loss);
    void reset();

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::function<void(Graph&, const std::vector<double>&)> backprop;
        ParamBlock* bound = nullptr;
    };

    NodeId push(Tensor value, std::function<void(Graph&, const std::vector<double>&)> backprop,
                ParamBlock* bound = nullptr);
    std::vector<double>& grad_of(NodeId id);
    void check(NodeId id) const;

    // Deque keeps value() references stable while later ops are recorded.
    std::deque<Node> nodes_;
    std::map<const ParamBlock*, NodeId> param_nodes_;
    bool consumed_ = false;
};

// ============================================================================
// LSTM CELL
// ============================================================================

/// Gate parameters: W* act on the input, U* on the recurrent state.
struct LstmCellParams {
    Tensor w_input, u_input, b_input;     // i
    Tensor w_forget, u_forget, b_forget;  // f
    Tensor w_output, u_output, b_output;  // o
    Tensor w_cell, u_cell, b_cell;        // g

    std::size_t input_size() const { return w_input.rows(); }
    std::size_t hidden_size() const { return u_input.rows(); }
    void validate() const;  // throws ShapeError
};

LstmCellParams lstm_init(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed);

/// One cell step:
///   i = sigm(W_i x + U_i h + b_i)   f = sigm(W_f x + U_f h + b_f)
///   o = sigm(W_o x + U_o h + b_o)   g = tanh(W_g x + U_g h + b_g)
///   c' = f.c + i.g                  h' = o.tanh(c')
struct LstmStepResult {
    std::vector<double> h;
    std::vector<double> c;
};
LstmStepResult lstm_cell_step(const std::vector<double>& x, const std::vector<double>& h,
                              const std::vector<double>& c, const LstmCellParams& p);

/// Graph-embedded batched step; x (batch x in), h/c (batch x hidden).
/// Gate blocks are the ParamBlocks whose names use the given prefix, as laid
/// out by add_lstm_params.
struct LstmGraphStep {
    Graph::NodeId h;
    Graph::NodeId c;
};
std::vector<std::string> lstm_block_names(const std::string& prefix);
void add_lstm_params(NetworkParams& params, const std::string& prefix, std::size_t input_size,
                     std::size_t hidden_size, std::uint64_t seed);
LstmGraphStep lstm_graph_step(Graph& g, Graph::NodeId x, Graph::NodeId h, Graph::NodeId c,
                              NetworkParams& params, const std::string& prefix);

// ============================================================================
// NADAM
// ============================================================================

/// Nesterov-Adam state: bias-corrected first/second moments plus the
/// momentum-schedule product used by the lookahead term.
struct OptimizerState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    double schedule_decay = 0.004;
    std::size_t step = 0;
    double mu_product = 1.0;
    std::map<std::string, std::vector<double>> first_moment;
    std::map<std::string, std::vector<double>> second_moment;
};

/// Applies one update from the gradients currently stored in the blocks;
/// non-trainable blocks and blocks without gradients are untouched.
void nadam_step(NetworkParams& params, OptimizerState& state);

}  // namespace airphys::neural
