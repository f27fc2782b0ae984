#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"

#include "flowlens/flow.hpp"
#include "flowlens/grid.hpp"
#include "flowlens/rng.hpp"

using namespace flowlens;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    static int counter = 0;
    return fs::temp_directory_path() / ("flowlens_flow_" + std::to_string(counter++) + "_" + name);
}

Image2D random_image(int w, int h, std::uint64_t seed) {
    Pcg32 rng(seed);
    std::vector<double> px(static_cast<std::size_t>(w) * h);
    for (double& v : px) v = rng.gaussian();
    return Image2D(w, h, std::move(px));
}

FlowPair random_pair(int w, int h, std::uint64_t seed) {
    return FlowPair{random_image(w, h, seed), random_image(w, h, seed + 1)};
}

// A training set a small model can actually fit: every pair differs by the
// same constant shift, so the target velocity field is a constant.
std::vector<FlowPair> shift_pairs(int w, int h, int n, double shift) {
    std::vector<FlowPair> pairs;
    for (int i = 0; i < n; ++i) {
        Image2D x0 = random_image(w, h, 100 + static_cast<std::uint64_t>(i));
        std::vector<double> px(x0.pixels().begin(), x0.pixels().end());
        for (double& v : px) v += shift;
        Image2D x1(w, h, std::move(px));
        pairs.push_back(FlowPair{std::move(x0), std::move(x1)});
    }
    return pairs;
}

} // namespace

TEST_CASE("parameter count follows the dense layer layout") {
    // (4*6+4) + (2*4+2) = 38
    CHECK(FlowModel({6, 4, 2}, 1).param_count() == 38);
    // (10*11+10) + (9*10+9) = 219
    CHECK(FlowModel({11, 10, 9}, 1).param_count() == 219);
    CHECK(FlowModel({3, 1}, 1).param_count() == 4);
}

TEST_CASE("model construction rejects bad shapes") {
    CHECK_THROWS_AS(FlowModel({5}, 0), ParameterError);          // single layer
    CHECK_THROWS_AS(FlowModel({5, 0, 5}, 0), ParameterError);    // zero width
    CHECK_THROWS_AS(FlowModel({5, -3, 5}, 0), ParameterError);   // negative width
    CHECK_THROWS_AS(FlowModel({5, 5}, -1), ParameterError);      // negative time pairs
    // input layer must leave room for at least one pixel
    CHECK_THROWS_AS(FlowModel({8, 8}, 4), ParameterError);
    CHECK_NOTHROW(FlowModel({9, 8}, 4));
    CHECK(FlowModel({9, 8}, 4).pixel_input() == 1);
}

TEST_CASE("forward pass matches a hand-evaluated two-layer network") {
    FlowModel model({2, 2, 2}, 0);
    // layer 1: W = [[0.5, -0.25], [0.1, 0.3]], b = (0.1, -0.2)
    // layer 2: W = [[1, 2], [-1, 0.5]],        b = (0, 0.05)
    model.set_params(std::vector<double>{0.5, -0.25, 0.1, 0.3, 0.1, -0.2,
                                         1.0, 2.0, -1.0, 0.5, 0.0, 0.05});
    const std::vector<double> x{1.0, 0.0};
    const auto out = model.forward(x, 0.3);
    REQUIRE(out.size() == 2);
    const double a0 = std::tanh(0.6);  // 0.5*1 - 0.25*0 + 0.1
    const double a1 = std::tanh(-0.1); // 0.1*1 + 0.3*0 - 0.2
    CHECK(out[0] == a0 + 2.0 * a1);
    CHECK(out[1] == -a0 + 0.5 * a1 + 0.05);
}

TEST_CASE("time features are sin/cos pairs with doubling frequency") {
    const double pi = std::numbers::pi;

    // One pair: input = [x, sin(pi t), cos(pi t)]. Weights select features.
    FlowModel probe({3, 1}, 1);
    probe.set_params(std::vector<double>{0.0, 3.0, 5.0, 0.0});
    const std::vector<double> x{0.42};
    CHECK(probe.forward(x, 0.0)[0] == 5.0); // sin(0) = 0, cos(0) = 1
    CHECK(probe.forward(x, 0.5)[0] == 3.0 * std::sin(pi * 0.5) + 5.0 * std::cos(pi * 0.5));
    CHECK(probe.forward(x, 1.0)[0] == 3.0 * std::sin(pi) + 5.0 * std::cos(pi));

    // Two pairs: the second runs at twice the angle.
    FlowModel doubled({5, 1}, 2);
    doubled.set_params(std::vector<double>{0.0, 0.0, 0.0, 0.0, 1.0, 0.0});
    CHECK(doubled.forward(x, 0.5)[0] == std::cos(pi)); // cos(2 pi t) at t = 0.5
    CHECK(doubled.forward(x, 0.25)[0] == std::cos(pi * 0.5));
}

TEST_CASE("zero-initialized model outputs exactly zero") {
    FlowModel model({10, 6, 8}, 1);
    const auto out = model.forward(std::vector<double>(8, 1.7), 0.5);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward validates input shape and time") {
    FlowModel model({6, 4, 4}, 1);
    const std::vector<double> ok(4, 0.0);
    CHECK_NOTHROW(model.forward(ok, 0.0));
    CHECK_NOTHROW(model.forward(ok, 1.0));
    CHECK_THROWS_AS(model.forward(std::vector<double>(5, 0.0), 0.5), ShapeError);
    CHECK_THROWS_AS(model.forward(std::vector<double>(3, 0.0), 0.5), ShapeError);
    CHECK_THROWS_AS(model.forward(ok, -0.01), ParameterError);
    CHECK_THROWS_AS(model.forward(ok, 1.01), ParameterError);
    CHECK_THROWS_AS(model.forward(ok, std::nan("")), ParameterError);
}

TEST_CASE("set_params validates count and finiteness") {
    FlowModel model({3, 2}, 1);
    REQUIRE(model.param_count() == 8);
    CHECK_THROWS_AS(model.set_params(std::vector<double>(7, 0.0)), ShapeError);
    CHECK_THROWS_AS(model.set_params(std::vector<double>(9, 0.0)), ShapeError);
    std::vector<double> bad(8, 0.0);
    bad[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(model.set_params(bad), ParameterError);

    std::vector<double> good{1, 2, 3, 4, 5, 6, 7, 8};
    model.set_params(good);
    const auto p = model.params();
    CHECK(std::vector<double>(p.begin(), p.end()) == good);
}

TEST_CASE("randomize is deterministic, scale-bounded, and zeros the biases") {
    FlowModel a({6, 5, 4}, 1);
    FlowModel b({6, 5, 4}, 1);
    a.randomize(42);
    b.randomize(42);
    const auto pa = a.params();
    const auto pb = b.params();
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));

    // layer 1: 30 weights bounded by 1/sqrt(6), 5 zero biases; layer 2:
    // 20 weights bounded by 1/sqrt(5), 4 zero biases.
    std::size_t pos = 0;
    for (int layer = 0; layer < 2; ++layer) {
        const int fan_in = layer == 0 ? 6 : 5;
        const int fan_out = layer == 0 ? 5 : 4;
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < fan_in * fan_out; ++i) {
            CHECK(std::abs(pa[pos]) <= scale);
            ++pos;
        }
        for (int i = 0; i < fan_out; ++i) {
            CHECK(pa[pos] == 0.0);
            ++pos;
        }
    }
    CHECK(pos == a.param_count());

    b.randomize(43);
    CHECK_FALSE(std::equal(pa.begin(), pa.end(), b.params().begin()));
}

TEST_CASE("velocity is locally Lipschitz in t") {
    FlowModel model({12, 10, 8}, 2);
    model.randomize(7);
    const Image2D img = random_image(4, 2, 9);
    const double t0 = 0.4;
    const auto base = model.forward(img.pixels(), t0);

    auto max_diff = [&](double eps) {
        const auto moved = model.forward(img.pixels(), t0 + eps);
        double d = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) d = std::max(d, std::abs(moved[i] - base[i]));
        return d;
    };
    const double slope3 = max_diff(1e-3) / 1e-3;
    const double slope4 = max_diff(1e-4) / 1e-4;
    // finite-difference slopes at nearby scales agree -> |dv/dt| is bounded
    CHECK(slope4 <= 2.0 * slope3 + 1e-9);
    CHECK(slope3 <= 2.0 * slope4 + 1e-9);
}

TEST_CASE("loss of the zero model is the squared pair difference") {
    FlowModel model({4, 3, 2}, 1);
    const FlowPair pair = random_pair(2, 1, 21);
    const auto lg = rf_loss(model, pair, 0.6);

    double expected = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        const double u = pair.x1.pixels()[i] - pair.x0.pixels()[i];
        expected += u * u;
    }
    CHECK(lg.loss == expected);

    // v = 0 everywhere, so the only nonzero gradient is the output bias,
    // which carries 2*(v - u) = -2u. Everything else sits behind tanh(0) = 0
    // activations or zero weights.
    REQUIRE(lg.grads.size() == model.param_count());
    const std::size_t out_bias = model.param_count() - 2;
    for (std::size_t i = 0; i < out_bias; ++i) CHECK(lg.grads[i] == 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
        const double u = pair.x1.pixels()[i] - pair.x0.pixels()[i];
        CHECK(lg.grads[out_bias + i] == -2.0 * u);
    }
}

TEST_CASE("loss interpolates the pair at t before evaluating") {
    // 1x1 image, single linear layer: v = w*xt + b.
    FlowModel model({1, 1}, 0);
    model.set_params(std::vector<double>{0.5, 0.1});
    const FlowPair pair{Image2D(1, 1, {2.0}), Image2D(1, 1, {5.0})};

    const double t = 0.25;
    const double xt = t * 5.0 + (1.0 - t) * 2.0;
    const double r = (0.5 * xt + 0.1) - 3.0;
    const auto lg = rf_loss(model, pair, t);
    CHECK(lg.loss == r * r);
    CHECK(lg.grads[0] == 2.0 * r * xt);
    CHECK(lg.grads[1] == 2.0 * r);

    // endpoints are valid time draws
    CHECK_NOTHROW(rf_loss(model, pair, 0.0));
    CHECK_NOTHROW(rf_loss(model, pair, 1.0));
    CHECK_THROWS_AS(rf_loss(model, pair, 1.5), ParameterError);
}

TEST_CASE("loss rejects mismatched pairs") {
    FlowModel model({6, 4}, 1); // expects 4 pixels
    CHECK_THROWS_AS(rf_loss(model, random_pair(3, 1, 1), 0.5), ShapeError);
    CHECK_THROWS_AS(
        rf_loss(model, FlowPair{random_image(2, 2, 1), random_image(4, 1, 2)}, 0.5),
        ShapeError);
}

TEST_CASE("analytic gradients match central differences") {
    FlowModel model({6, 5, 4}, 1);
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        model.randomize(seed);
        const FlowPair pair = random_pair(2, 2, 50 + seed);
        for (double t : {0.0, 0.37, 1.0}) {
            const auto lg = rf_loss(model, pair, t);
            const auto fd = oracle::fd_grads(model, pair, t, 1e-6);
            REQUIRE(fd.size() == lg.grads.size());
            for (std::size_t i = 0; i < fd.size(); ++i) {
                const double denom = std::max({std::abs(lg.grads[i]), std::abs(fd[i]), 1e-4});
                CHECK(std::abs(lg.grads[i] - fd[i]) / denom <= 1e-4);
            }
        }
    }
}

TEST_CASE("training reduces the loss on a learnable problem") {
    const auto pairs = shift_pairs(3, 3, 8, 0.8);
    FlowModel model({17, 12, 9}, 4);
    model.randomize(1);

    TrainConfig cfg;
    cfg.epochs = 80;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 4;
    cfg.seed = 5;

    SUBCASE("with momentum") {}
    SUBCASE("plain sgd") {
        cfg.optimizer = Optimizer::Sgd;
        cfg.learning_rate = 0.05;
    }

    const TrainResult result = train(model, pairs, cfg);
    REQUIRE(result.history.size() == 80);
    CHECK(result.history.back() < 0.2 * result.history.front());
    for (double v : result.history) CHECK(std::isfinite(v));
}

TEST_CASE("training with zero epochs is the identity") {
    const auto pairs = shift_pairs(2, 2, 3, 0.5);
    FlowModel model({12, 6, 4}, 4);
    model.randomize(11);
    const std::vector<double> before(model.params().begin(), model.params().end());

    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult result = train(model, pairs, cfg);
    CHECK(result.history.empty());
    const auto after = result.model.params();
    CHECK(std::equal(before.begin(), before.end(), after.begin(), after.end()));
}

TEST_CASE("training is deterministic per seed") {
    const auto pairs = shift_pairs(2, 2, 5, 0.3);
    FlowModel model({12, 8, 4}, 4);
    model.randomize(2);

    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 2;
    cfg.seed = 9;

    const TrainResult a = train(model, pairs, cfg);
    const TrainResult b = train(model, pairs, cfg);
    CHECK(a.history == b.history);
    const auto pa = a.model.params();
    const auto pb = b.model.params();
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));

    cfg.seed = 10;
    const TrainResult c = train(model, pairs, cfg);
    CHECK(a.history != c.history);
}

TEST_CASE("training validates its configuration") {
    const auto pairs = shift_pairs(2, 2, 3, 0.3);
    const FlowModel model({12, 4}, 4);

    TrainConfig cfg;
    cfg.epochs = 1;

    TrainConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(model, pairs, bad), ParameterError);
    bad = cfg;
    bad.epochs = -1;
    CHECK_THROWS_AS(train(model, pairs, bad), ParameterError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(model, pairs, bad), ParameterError);
    bad = cfg;
    bad.t_samples = 0;
    CHECK_THROWS_AS(train(model, pairs, bad), ParameterError);
    bad = cfg;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(train(model, pairs, bad), ParameterError);
    bad.optimizer = Optimizer::Sgd; // momentum ignored for plain sgd
    CHECK_NOTHROW(train(model, pairs, bad));

    CHECK_THROWS_WITH_AS(train(model, std::vector<FlowPair>{}, cfg),
                         doctest::Contains("at least one pair"), ParameterError);
    CHECK_THROWS_AS(train(model, shift_pairs(3, 3, 2, 0.3), cfg), ShapeError);
}

TEST_CASE("training reports divergence with the failing epoch") {
    const auto pairs = shift_pairs(2, 2, 3, 0.5);
    FlowModel model({12, 8, 4}, 4);
    model.randomize(3);

    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 1e6;
    CHECK_THROWS_WITH_AS(train(model, pairs, cfg), doctest::Contains("epoch"), NumericError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    FlowModel model({12, 10, 8}, 2);
    model.randomize(17);
    const fs::path path = temp_file("model.aflw");
    save_model(path.string(), model);

    const FlowModel loaded = load_model(path.string());
    CHECK(loaded.widths() == model.widths());
    CHECK(loaded.time_pairs() == model.time_pairs());
    const auto pa = model.params();
    const auto pb = loaded.params();
    REQUIRE(pa.size() == pb.size());
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));

    // same parameters, same arithmetic: forward passes agree bit for bit
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Image2D img = random_image(4, 2, 200 + seed);
        const double t = 0.1 * static_cast<double>(seed);
        CHECK(model.forward(img.pixels(), t) == loaded.forward(img.pixels(), t));
    }
    fs::remove(path);
}

TEST_CASE("checkpoint loading rejects damaged files") {
    FlowModel model({4, 3}, 1);
    model.randomize(5);
    const fs::path path = temp_file("model.aflw");
    save_model(path.string(), model);
    const auto valid_size = fs::file_size(path);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_model((path.parent_path() / "absent.aflw").string()), IoError);
    }
    SUBCASE("wrong magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
        f.close();
        CHECK_THROWS_AS(load_model(path.string()), FormatError);
    }
    SUBCASE("truncated header") {
        fs::resize_file(path, 7);
        CHECK_THROWS_AS(load_model(path.string()), FormatError);
    }
    SUBCASE("truncated parameters") {
        fs::resize_file(path, valid_size - 5);
        CHECK_THROWS_AS(load_model(path.string()), FormatError);
    }
    SUBCASE("trailing garbage") {
        std::ofstream f(path, std::ios::binary | std::ios::app);
        f.put('\0');
        f.close();
        CHECK_THROWS_AS(load_model(path.string()), FormatError);
    }
    SUBCASE("implausible layer count") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(5);
        for (int i = 0; i < 4; ++i) f.put(static_cast<char>(0xFF));
        f.close();
        CHECK_THROWS_WITH_AS(load_model(path.string()), doctest::Contains("layer count"),
                             FormatError);
    }
    SUBCASE("non-finite parameter") {
        // params start after magic(5) + count(4) + widths(8) + time pairs(4)
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(21);
        for (int i = 0; i < 8; ++i) f.put(static_cast<char>(0xFF));
        f.close();
        CHECK_THROWS_WITH_AS(load_model(path.string()), doctest::Contains("non-finite"),
                             FormatError);
    }
    fs::remove(path);
}
