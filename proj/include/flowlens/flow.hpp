#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowlens/grid.hpp"

namespace flowlens {

/// Fully-connected velocity-field network v(x, t). Hidden layers use tanh,
/// the output layer is linear. The input vector is the flattened image
/// followed by time_pairs sinusoidal pairs sin(2^k pi t), cos(2^k pi t) for
/// k = 0..time_pairs-1, so widths.front() = pixel_input() + 2*time_pairs.
/// Parameters live in one flat vector, per layer: row-major weight matrix
/// (fan_out x fan_in), then bias.
class FlowModel {
public:
    /// Zero-initialized model. widths lists every layer size including input
    /// and output; widths.front() must exceed 2*time_pairs.
    FlowModel(std::vector<int> widths, int time_pairs = 4);

    const std::vector<int>& widths() const { return widths_; }
    int time_pairs() const { return time_pairs_; }
    /// Length of the image vector forward() accepts.
    int pixel_input() const { return widths_.front() - 2 * time_pairs_; }
    int output_size() const { return widths_.back(); }

    std::size_t param_count() const { return params_.size(); }
    std::span<const double> params() const { return params_; }
    /// Replaces all parameters; count and finiteness are validated.
    void set_params(std::span<const double> p);

    /// Scaled uniform init, per layer in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    /// Deterministic per seed; biases start at zero.
    void randomize(std::uint64_t seed);

    /// Velocity at (x, t). x holds pixel_input() values; 0 <= t <= 1.
    std::vector<double> forward(std::span<const double> x, double t) const;

private:
    std::vector<int> widths_;
    int time_pairs_;
    std::vector<double> params_;

    friend struct FlowModelAccess;
};

/// Supervision pair: x0 is the pathological image, x1 its healthy original.
struct FlowPair {
    Image2D x0;
    Image2D x1;
};

enum class Optimizer { Sgd, SgdMomentum };

struct TrainConfig {
    double learning_rate = 0.003;
    int epochs = 300;
    int batch_size = 30;
    int t_samples = 1;   // time draws per pair per visit
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::SgdMomentum;
    double momentum = 0.9;
};

/// Squared-error rectified-flow objective at one time draw:
/// loss = |(x1 - x0) - v(xt, t)|^2 summed over pixels, xt = t*x1 + (1-t)*x0.
/// grads matches the model's flat parameter layout.
struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grads;
};

LossAndGrad rf_loss(const FlowModel& model, const FlowPair& pair, double t);

struct TrainResult {
    FlowModel model;
    std::vector<double> history; // mean sample loss per epoch
};

/// Minibatch SGD over uniformly drawn t. Pairs are reshuffled every epoch;
/// everything is deterministic per config.seed. Throws NumericError naming
/// the epoch when the mean loss exceeds 1e6 or turns non-finite.
TrainResult train(FlowModel model, std::span<const FlowPair> pairs, const TrainConfig& config);

/// Binary checkpoint: magic "AFLW1", layer count and widths as 32-bit
/// little-endian unsigned, time pair count, then the flat parameters as
/// 64-bit little-endian floats. Round-trips bit-exactly.
void save_model(const std::string& path, const FlowModel& model);
FlowModel load_model(const std::string& path);

} // namespace flowlens
