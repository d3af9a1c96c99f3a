#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "airphys/neural.hpp"
#include "support/gradcheck.hpp"

using namespace airphys;
using namespace airphys::neural;

// ============================================================================
// he_normal_init
// ============================================================================

TEST_CASE("he-normal draws have variance 2/fan_in") {
    auto t = he_normal_init({2, 50000}, 7);
    double sum = 0.0, sq = 0.0;
    for (double v : t.values) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(t.size());
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));  // 2 / fan_in = 1
    CHECK(std::abs(mean) < 0.02);
}

TEST_CASE("he-normal is seeded and handles empty shapes") {
    auto a = he_normal_init({3, 4}, 11);
    auto b = he_normal_init({3, 4}, 11);
    CHECK(a.values == b.values);
    auto c = he_normal_init({3, 4}, 12);
    CHECK(a.values != c.values);

    auto empty = he_normal_init({0, 5}, 1);
    CHECK(empty.size() == 0);
}

// ============================================================================
// forward ops
// ============================================================================

TEST_CASE("elu matches its definition") {
    Graph g;
    Tensor x = Tensor::row({0.0, 1.0, -30.0, -0.5});
    const auto y = g.value(g.elu(g.input(x)));
    CHECK(y.values[0] == 0.0);
    CHECK(y.values[1] == 1.0);
    CHECK(y.values[2] == doctest::Approx(-1.0).epsilon(1e-10));  // asymptote
    CHECK(y.values[3] == doctest::Approx(std::expm1(-0.5)).epsilon(1e-14));
}

TEST_CASE("sigmoid and tanh basics") {
    Graph g;
    Tensor x = Tensor::row({0.0, 100.0, -100.0});
    const auto s = g.value(g.sigmoid(g.input(x)));
    CHECK(s.values[0] == 0.5);
    CHECK(s.values[1] == doctest::Approx(1.0));
    CHECK(s.values[2] == doctest::Approx(0.0).scale(1.0));
    const auto t = g.value(g.tanh(g.input(x)));
    CHECK(t.values[0] == 0.0);
    CHECK(t.values[1] == doctest::Approx(1.0));
}

TEST_CASE("batch norm train mode normalizes a (1,3) column") {
    Graph g;
    NetworkParams p;
    auto& gamma = p.add("gamma", Tensor::matrix(1, 1, 1.0));
    auto& beta = p.add("beta", Tensor::matrix(1, 1));
    auto& rm = p.add("rm", Tensor::matrix(1, 1), false);
    auto& rv = p.add("rv", Tensor::matrix(1, 1, 1.0), false);

    Tensor x = Tensor::zeros({2, 1});
    x.values = {1.0, 3.0};
    const auto y = g.value(g.batch_norm(g.input(x), gamma, beta, rm, rv, true));
    // Hand normalization gives (-1, 1); epsilon = 1e-3 shades it slightly.
    const double expected = 1.0 / std::sqrt(1.0 + kBatchNormEpsilon);
    CHECK(y.values[0] == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(y.values[1] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(y.values[0] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(y.values[1] == doctest::Approx(1.0).epsilon(1e-3));

    // Running statistics absorbed one momentum step.
    CHECK(rm.tensor.values[0] == doctest::Approx(0.01 * 2.0));
    CHECK(rv.tensor.values[0] == doctest::Approx(0.99 * 1.0 + 0.01 * 1.0));
}

TEST_CASE("batch norm train output has near-unit variance for real batches") {
    Rng rng(3);
    const std::size_t batch = 64;
    Tensor x = Tensor::zeros({batch, 4});
    for (double& v : x.values) v = rng.normal(3.0, 6.0);

    NetworkParams p;
    auto& gamma = p.add("gamma", Tensor::matrix(1, 4, 1.0));
    auto& beta = p.add("beta", Tensor::matrix(1, 4));
    auto& rm = p.add("rm", Tensor::matrix(1, 4), false);
    auto& rv = p.add("rv", Tensor::matrix(1, 4, 1.0), false);
    Graph g;
    const auto y = g.value(g.batch_norm(g.input(x), gamma, beta, rm, rv, true));
    for (std::size_t j = 0; j < 4; ++j) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t r = 0; r < batch; ++r) {
            sum += y.at(r, j);
            sq += y.at(r, j) * y.at(r, j);
        }
        const double mean = sum / batch;
        const double var = sq / batch - mean * mean;
        CHECK(std::abs(mean) <= 1e-6);
        CHECK(std::abs(var - 1.0) <= 1e-4);
    }
}

TEST_CASE("batch norm eval mode uses running statistics") {
    NetworkParams p;
    auto& gamma = p.add("gamma", Tensor::matrix(1, 1, 2.0));
    auto& beta = p.add("beta", Tensor::matrix(1, 1, 0.5));
    auto& rm = p.add("rm", Tensor::matrix(1, 1, 1.0), false);
    auto& rv = p.add("rv", Tensor::matrix(1, 1, 4.0), false);
    Graph g;
    Tensor x = Tensor::zeros({1, 1});
    x.values = {3.0};
    const auto y = g.value(g.batch_norm(g.input(x), gamma, beta, rm, rv, false));
    CHECK(y.values[0] ==
          doctest::Approx(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + kBatchNormEpsilon) + 0.5));
    CHECK(rm.tensor.values[0] == 1.0);  // eval never updates
}

TEST_CASE("dropout rate zero is the identity in both modes") {
    Rng rng(1);
    Graph g;
    Tensor x = Tensor::row({1.0, 2.0, 3.0});
    const Graph::NodeId in = g.input(x);
    CHECK(g.dropout(in, 0.0, rng, true) == in);
    CHECK(g.dropout(in, 0.5, rng, false) == in);
    CHECK_THROWS_AS(g.dropout(in, 1.0, rng, true), ArgumentError);
}

TEST_CASE("inverted dropout preserves the expectation") {
    const double rate = 0.4;
    Tensor x = Tensor::row(std::vector<double>(50, 2.0));
    double acc = 0.0;
    Rng rng(202);
    const int reps = 10000;
    for (int i = 0; i < reps; ++i) {
        Graph g;
        const auto& y = g.value(g.dropout(g.input(x), rate, rng, true));
        for (double v : y.values) acc += v;
    }
    const double mean = acc / (reps * 50.0);
    CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
}

// ============================================================================
// backward
// ============================================================================

TEST_CASE("gradient of sum of squares is 2w exactly") {
    NetworkParams p;
    auto& w = p.add("w", Tensor::row({1.5, -2.0, 0.25}));
    Graph g;
    const auto loss = g.sum_squares(g.param(w));
    g.backward(loss);
    CHECK(w.tensor.grad == std::vector<double>{3.0, -4.0, 0.5});
}

TEST_CASE("disconnected parameters get exactly zero gradient") {
    NetworkParams p;
    auto& w = p.add("w", Tensor::row({1.0}));
    auto& unused = p.add("unused", Tensor::row({5.0}));
    Graph g;
    g.param(unused);
    const auto loss = g.sum_squares(g.param(w));
    g.backward(loss);
    CHECK(unused.tensor.grad == std::vector<double>{0.0});
}

TEST_CASE("backward demands a recorded forward pass and one call") {
    Graph empty;
    CHECK_THROWS_AS(empty.backward(0), StateError);

    NetworkParams p;
    auto& w = p.add("w", Tensor::row({1.0}));
    Graph g;
    const auto loss = g.sum_squares(g.param(w));
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), StateError);
    g.reset();
    const auto loss2 = g.sum_squares(g.param(w));
    g.backward(loss2);  // re-armed after reset
}

TEST_CASE("two-layer network matches central finite differences") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto net = gradcheck::make_random_net(seed);
        auto result = gradcheck::check_gradients(net.params, net.forward);
        CAPTURE(result.worst_block);
        CHECK(result.max_rel_err < 1e-4);
    }
}

TEST_CASE("dropout backward matches finite differences under a fixed mask") {
    NetworkParams p;
    const SeedStreams streams(5);
    p.add("w", he_normal_init({3, 4}, streams.stream_seed("w")));
    p.add("b", Tensor::matrix(1, 4));
    Tensor x = Tensor::zeros({6, 3});
    Rng data(streams.stream_seed("x"));
    for (double& v : x.values) v = data.normal();

    auto forward = [x](NetworkParams& params, bool want_grad) {
        Rng mask_rng(999);  // same mask on every call
        Graph g;
        Graph::NodeId h = g.add_row(g.matmul(g.input(x), g.param(*params.find("w"))),
                                    g.param(*params.find("b")));
        h = g.dropout(h, 0.3, mask_rng, true);
        const auto loss = g.mean_square(g.elu(h));
        const double v = g.scalar_value(loss);
        if (want_grad) g.backward(loss);
        return v;
    };
    auto result = gradcheck::check_gradients(p, forward);
    CHECK(result.max_rel_err < 1e-4);
}

// ============================================================================
// LSTM cell
// ============================================================================

TEST_CASE("zero-weight cell hits the closed form") {
    LstmCellParams p;
    p.w_input = Tensor::matrix(1, 1);
    p.u_input = Tensor::matrix(1, 1);
    p.b_input = Tensor::matrix(1, 1);
    p.w_forget = p.w_input;
    p.u_forget = p.u_input;
    p.b_forget = p.b_input;
    p.w_output = p.w_input;
    p.u_output = p.u_input;
    p.b_output = p.b_input;
    p.w_cell = p.w_input;
    p.u_cell = p.u_input;
    p.b_cell = p.b_input;

    const double c0 = 0.8;
    auto out = lstm_cell_step({0.3}, {0.1}, {c0}, p);
    CHECK(out.c[0] == doctest::Approx(0.5 * c0).epsilon(1e-12));
    CHECK(out.h[0] == doctest::Approx(0.5 * std::tanh(0.5 * c0)).epsilon(1e-12));
}

TEST_CASE("hand-executed scalar cell step to 1e-10") {
    LstmCellParams p;
    auto scalar = [](double v) { return Tensor::matrix(1, 1, v); };
    p.w_input = scalar(0.5);
    p.u_input = scalar(-0.3);
    p.b_input = scalar(0.1);
    p.w_forget = scalar(0.8);
    p.u_forget = scalar(0.2);
    p.b_forget = scalar(-0.4);
    p.w_output = scalar(-0.6);
    p.u_output = scalar(0.7);
    p.b_output = scalar(0.05);
    p.w_cell = scalar(1.1);
    p.u_cell = scalar(-0.9);
    p.b_cell = scalar(0.2);

    const double x = 0.4, h = -0.2, c = 0.3;
    auto sigm = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double i = sigm(0.5 * x + (-0.3) * h + 0.1);
    const double f = sigm(0.8 * x + 0.2 * h + (-0.4));
    const double o = sigm((-0.6) * x + 0.7 * h + 0.05);
    const double g = std::tanh(1.1 * x + (-0.9) * h + 0.2);
    const double c_next = f * c + i * g;
    const double h_next = o * std::tanh(c_next);

    auto out = lstm_cell_step({x}, {h}, {c}, p);
    CHECK(std::abs(out.c[0] - c_next) < 1e-10);
    CHECK(std::abs(out.h[0] - h_next) < 1e-10);
}

TEST_CASE("large forget bias preserves the cell state") {
    LstmCellParams p;
    p.w_input = Tensor::matrix(1, 1);
    p.u_input = Tensor::matrix(1, 1);
    p.b_input = Tensor::matrix(1, 1);
    p.w_forget = p.w_input;
    p.u_forget = p.u_input;
    p.b_forget = Tensor::matrix(1, 1, 10.0);
    p.w_output = p.w_input;
    p.u_output = p.u_input;
    p.b_output = p.b_input;
    p.w_cell = p.w_input;
    p.u_cell = p.u_input;
    p.b_cell = p.b_input;

    for (double c : {-2.0, -0.5, 0.1, 1.0, 2.0}) {
        auto out = lstm_cell_step({1.0}, {0.5}, {c}, p);
        CHECK(std::abs(out.c[0] - c) < 1e-3);
    }
}

TEST_CASE("cell rejects inconsistent shapes") {
    LstmCellParams p;
    p.w_input = Tensor::matrix(2, 3);
    p.u_input = Tensor::matrix(3, 3);
    p.b_input = Tensor::matrix(1, 3);
    p.w_forget = p.w_input;
    p.u_forget = p.u_input;
    p.b_forget = p.b_input;
    p.w_output = p.w_input;
    p.u_output = p.u_input;
    p.b_output = p.b_input;
    p.w_cell = p.w_input;
    p.u_cell = p.u_input;
    p.b_cell = p.b_input;
    CHECK_THROWS_AS(lstm_cell_step({1.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, p), ShapeError);

    auto bad = p;
    bad.u_cell = Tensor::matrix(2, 3);
    CHECK_THROWS_AS(lstm_cell_step({1.0, 2.0}, {0, 0, 0}, {0, 0, 0}, bad), ShapeError);
}

TEST_CASE("two-step LSTM unroll matches finite differences") {
    NetworkParams p;
    add_lstm_params(p, "lstm", 3, 4, 21);
    const SeedStreams streams(22);
    p.add("head/w", he_normal_init({4, 1}, streams.stream_seed("head")));
    p.add("head/b", Tensor::matrix(1, 1));

    Tensor x1 = Tensor::zeros({5, 3}), x2 = Tensor::zeros({5, 3}), y = Tensor::zeros({5, 1});
    Rng data(streams.stream_seed("data"));
    for (double& v : x1.values) v = data.normal();
    for (double& v : x2.values) v = data.normal();
    for (double& v : y.values) v = data.normal();

    auto forward = [x1, x2, y](NetworkParams& params, bool want_grad) {
        Graph g;
        Graph::NodeId h = g.input(Tensor::zeros({5, 4}));
        Graph::NodeId c = g.input(Tensor::zeros({5, 4}));
        auto s1 = lstm_graph_step(g, g.input(x1), h, c, params, "lstm");
        auto s2 = lstm_graph_step(g, g.input(x2), s1.h, s1.c, params, "lstm");
        const auto pred = g.add_row(g.matmul(s2.h, g.param(*params.find("head/w"))),
                                    g.param(*params.find("head/b")));
        const auto loss = g.mean_squared_error(pred, g.input(y));
        const double v = g.scalar_value(loss);
        if (want_grad) g.backward(loss);
        return v;
    };
    auto result = gradcheck::check_gradients(p, forward);
    CAPTURE(result.worst_block);
    CHECK(result.max_rel_err < 1e-4);
}

// ============================================================================
// Nadam
// ============================================================================

TEST_CASE("zero gradient leaves parameters unchanged from a fresh state") {
    NetworkParams p;
    auto& w = p.add("w", Tensor::row({1.0, -2.0}));
    w.tensor.ensure_grad();
    OptimizerState state;
    nadam_step(p, state);
    CHECK(w.tensor.values == std::vector<double>{1.0, -2.0});
    CHECK(state.step == 1);
}

TEST_CASE("one step from fresh state matches the hand-evaluated update") {
    NetworkParams p;
    auto& w = p.add("w", Tensor::row({0.0}));
    w.tensor.ensure_grad();
    const double g = 2.0;
    w.tensor.grad[0] = g;

    OptimizerState state;
    state.learning_rate = 0.01;
    nadam_step(p, state);

    // Hand evaluation of the schedule at t = 1.
    const double mu1 = 0.9 * (1.0 - 0.5 * std::pow(0.96, 0.004));
    const double mu2 = 0.9 * (1.0 - 0.5 * std::pow(0.96, 0.008));
    const double g_prime = g / (1.0 - mu1);
    const double m_prime = (0.1 * g) / (1.0 - mu1 * mu2);
    const double m_bar = (1.0 - mu1) * g_prime + mu2 * m_prime;
    const double v_prime = (0.001 * g * g) / (1.0 - 0.999);
    const double expected = -0.01 * m_bar / (std::sqrt(v_prime) + 1e-7);
    CHECK(w.tensor.values[0] == doctest::Approx(expected).epsilon(1e-12));

    // Magnitude is about one learning rate, direction opposes the gradient.
    CHECK(std::abs(w.tensor.values[0]) == doctest::Approx(0.01).epsilon(0.12));
    CHECK(w.tensor.values[0] < 0.0);
}

TEST_CASE("nadam minimizes a quadratic") {
    NetworkParams p;
    auto& w = p.add("w", Tensor::row({0.0}));
    OptimizerState state;
    state.learning_rate = 0.01;
    for (int step = 0; step < 2000; ++step) {
        w.tensor.ensure_grad();
        w.tensor.grad[0] = 2.0 * (w.tensor.values[0] - 3.0);
        nadam_step(p, state);
        if (std::abs(w.tensor.values[0] - 3.0) < 1e-3) break;
    }
    CHECK(std::abs(w.tensor.values[0] - 3.0) < 1e-3);
}

// ============================================================================
// checkpoints
// ============================================================================

TEST_CASE("checkpoints round-trip parameters") {
    NetworkParams p;
    p.init_seed = 99;
    p.add("w", he_normal_init({3, 2}, 4));
    p.add("stats", Tensor::row({1.0, 2.0}), false);
    const std::string doc = p.to_checkpoint();
    CHECK(doc.find("AIRPHYS-CKPT-1") != std::string::npos);

    auto back = NetworkParams::from_checkpoint(doc);
    CHECK(back.init_seed == 99);
    REQUIRE(back.blocks.size() == 2);
    CHECK(back.blocks[0].tensor.values == p.blocks[0].tensor.values);
    CHECK(back.blocks[1].trainable == false);

    CHECK_THROWS_AS(NetworkParams::from_checkpoint("{\"magic\":\"OTHER\"}"), DataError);
    CHECK_THROWS_AS(NetworkParams::from_checkpoint("not json"), DataError);
}
