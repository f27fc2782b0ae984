#include "flowlens/transport.hpp"

#include <cmath>

namespace flowlens {

Image2D reconstruct(const FlowModel& model, const Image2D& img, const TransportConfig& cfg) {
    if (cfg.steps < 1) throw ParameterError("steps must be at least 1");
    if (static_cast<int>(img.size()) != model.pixel_input()) {
        throw ShapeError("image has " + std::to_string(img.size()) +
                         " pixels but the model expects " + std::to_string(model.pixel_input()));
    }
    std::vector<double> x(img.pixels().begin(), img.pixels().end());
    const double dt = 1.0 / cfg.steps;
    for (int k = 0; k < cfg.steps; ++k) {
        const double t = static_cast<double>(k) / cfg.steps;
        std::vector<double> v = model.forward(x, t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += dt * v[i];
            if (!std::isfinite(x[i])) {
                throw NumericError("non-finite state at integration step " + std::to_string(k));
            }
        }
    }
    return Image2D(img.width(), img.height(), img.spacing(), std::move(x));
}

AnomalyMap anomaly_map(const Image2D& input, const Image2D& recon) {
    require_same_geometry(input, recon, "anomaly_map");
    auto a = input.pixels();
    auto b = recon.pixels();
    std::vector<double> scores(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) scores[i] = std::abs(a[i] - b[i]);
    return AnomalyMap(input.width(), input.height(), input.spacing(), std::move(scores));
}

} // namespace flowlens
