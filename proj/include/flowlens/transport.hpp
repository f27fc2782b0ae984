#pragma once

#include "flowlens/flow.hpp"
#include "flowlens/grid.hpp"

namespace flowlens {

struct TransportConfig {
    int steps = 5; // explicit Euler steps from t=0 to t=1
};

/// Integrates the learned velocity field from the input toward the healthy
/// distribution: x <- x + (1/steps) * v(x, k/steps) for k = 0..steps-1.
/// Throws NumericError naming the step if the state turns non-finite.
Image2D reconstruct(const FlowModel& model, const Image2D& img, const TransportConfig& cfg = {});

/// Per-pixel absolute difference |input - recon|; symmetric in its arguments.
AnomalyMap anomaly_map(const Image2D& input, const Image2D& recon);

} // namespace flowlens
