#include "flowlens/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bytes.hpp"
#include "flowlens/rng.hpp"

namespace flowlens {

namespace {

constexpr char kMagic[5] = {'A', 'F', 'L', 'W', '1'};

std::size_t count_params(const std::vector<int>& widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        n += static_cast<std::size_t>(widths[l + 1]) * widths[l] + widths[l + 1];
    }
    return n;
}

void append_time_features(std::vector<double>& x, double t, int pairs) {
    double angle = std::numbers::pi * t;
    for (int k = 0; k < pairs; ++k) {
        x.push_back(std::sin(angle));
        x.push_back(std::cos(angle));
        angle *= 2.0;
    }
}

} // namespace

FlowModel::FlowModel(std::vector<int> widths, int time_pairs)
    : widths_(std::move(widths)), time_pairs_(time_pairs) {
    if (widths_.size() < 2) throw ParameterError("model needs at least an input and output layer");
    for (std::size_t i = 0; i < widths_.size(); ++i) {
        if (widths_[i] <= 0) {
            throw ParameterError("layer width " + std::to_string(i) + " must be positive");
        }
    }
    if (time_pairs_ < 0) throw ParameterError("time_pairs must be non-negative");
    if (widths_.front() <= 2 * time_pairs_) {
        throw ParameterError("input layer leaves no room for pixels after " +
                             std::to_string(time_pairs_) + " time feature pairs");
    }
    params_.assign(count_params(widths_), 0.0);
}

void FlowModel::set_params(std::span<const double> p) {
    if (p.size() != params_.size()) {
        throw ShapeError("expected " + std::to_string(params_.size()) + " parameters, got " +
                         std::to_string(p.size()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i])) {
            throw ParameterError("non-finite parameter at index " + std::to_string(i));
        }
    }
    params_.assign(p.begin(), p.end());
}

void FlowModel::randomize(std::uint64_t seed) {
    Pcg32 rng(seed);
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
        const std::size_t n_weights = static_cast<std::size_t>(widths_[l + 1]) * widths_[l];
        for (std::size_t i = 0; i < n_weights; ++i) params_[pos++] = rng.uniform(-scale, scale);
        for (int i = 0; i < widths_[l + 1]; ++i) params_[pos++] = 0.0;
    }
}

namespace {

/// Per-layer activations of one forward pass; acts[0] is the input vector
/// with time features appended, acts.back() the linear output.
struct ForwardTrace {
    std::vector<std::vector<double>> acts;
};

ForwardTrace run_forward(const std::vector<int>& widths, std::span<const double> params,
                         std::vector<double> input) {
    ForwardTrace trace;
    trace.acts.reserve(widths.size());
    trace.acts.push_back(std::move(input));
    std::size_t pos = 0;
    const std::size_t n_layers = widths.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int fan_in = widths[l];
        const int fan_out = widths[l + 1];
        const std::vector<double>& a = trace.acts.back();
        std::vector<double> z(static_cast<std::size_t>(fan_out));
        for (int j = 0; j < fan_out; ++j) {
            const double* row = params.data() + pos + static_cast<std::size_t>(j) * fan_in;
            double sum = 0.0;
            for (int i = 0; i < fan_in; ++i) sum += row[i] * a[i];
            z[static_cast<std::size_t>(j)] = sum;
        }
        pos += static_cast<std::size_t>(fan_out) * fan_in;
        for (int j = 0; j < fan_out; ++j) z[static_cast<std::size_t>(j)] += params[pos + j];
        pos += static_cast<std::size_t>(fan_out);
        if (l + 1 < n_layers) {
            for (double& v : z) v = std::tanh(v);
        }
        trace.acts.push_back(std::move(z));
    }
    return trace;
}

std::vector<double> model_input(std::span<const double> x, double t, int pixel_input,
                                int time_pairs) {
    if (static_cast<int>(x.size()) != pixel_input) {
        throw ShapeError("expected " + std::to_string(pixel_input) + " pixel values, got " +
                         std::to_string(x.size()));
    }
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("t must lie in [0,1]");
    std::vector<double> input(x.begin(), x.end());
    input.reserve(x.size() + 2 * static_cast<std::size_t>(time_pairs));
    append_time_features(input, t, time_pairs);
    return input;
}

} // namespace

std::vector<double> FlowModel::forward(std::span<const double> x, double t) const {
    ForwardTrace trace =
        run_forward(widths_, params_, model_input(x, t, pixel_input(), time_pairs_));
    std::vector<double> out = std::move(trace.acts.back());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!std::isfinite(out[i])) {
            throw NumericError("non-finite velocity at output index " + std::to_string(i));
        }
    }
    return out;
}

LossAndGrad rf_loss(const FlowModel& model, const FlowPair& pair, double t) {
    require_same_geometry(pair.x0, pair.x1, "rf_loss pair");
    const auto p0 = pair.x0.pixels();
    const auto p1 = pair.x1.pixels();
    const int n_px = static_cast<int>(p0.size());
    if (n_px != model.pixel_input()) {
        throw ShapeError("pair has " + std::to_string(n_px) + " pixels but the model expects " +
                         std::to_string(model.pixel_input()));
    }
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("t must lie in [0,1]");

    std::vector<double> input(static_cast<std::size_t>(n_px));
    for (int i = 0; i < n_px; ++i) input[static_cast<std::size_t>(i)] = t * p1[i] + (1.0 - t) * p0[i];
    append_time_features(input, t, model.time_pairs());

    const std::vector<int>& widths = model.widths();
    std::span<const double> params = model.params();
    ForwardTrace trace = run_forward(widths, params, std::move(input));

    const std::vector<double>& v = trace.acts.back();
    LossAndGrad out;
    std::vector<double> delta(v.size());
    for (int i = 0; i < n_px; ++i) {
        const double r = v[static_cast<std::size_t>(i)] - (p1[i] - p0[i]);
        out.loss += r * r;
        delta[static_cast<std::size_t>(i)] = 2.0 * r;
    }
    if (!std::isfinite(out.loss)) throw NumericError("non-finite loss value");

    // Backward pass, deepest layer first. Parameter layout per layer is the
    // row-major weight matrix followed by the bias, matching run_forward.
    out.grads.assign(params.size(), 0.0);
    std::vector<std::size_t> offsets(widths.size() - 1);
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        offsets[l] = pos;
        pos += static_cast<std::size_t>(widths[l + 1]) * widths[l] + widths[l + 1];
    }
    for (std::size_t l = widths.size() - 1; l-- > 0;) {
        const int fan_in = widths[l];
        const int fan_out = widths[l + 1];
        const std::vector<double>& a = trace.acts[l];
        const std::size_t w_off = offsets[l];
        const std::size_t b_off = w_off + static_cast<std::size_t>(fan_out) * fan_in;
        for (int j = 0; j < fan_out; ++j) {
            const double d = delta[static_cast<std::size_t>(j)];
            double* wg = out.grads.data() + w_off + static_cast<std::size_t>(j) * fan_in;
            for (int i = 0; i < fan_in; ++i) wg[i] += d * a[static_cast<std::size_t>(i)];
            out.grads[b_off + static_cast<std::size_t>(j)] += d;
        }
        if (l == 0) break;
        std::vector<double> prev(static_cast<std::size_t>(fan_in), 0.0);
        for (int j = 0; j < fan_out; ++j) {
            const double d = delta[static_cast<std::size_t>(j)];
            const double* row = params.data() + w_off + static_cast<std::size_t>(j) * fan_in;
            for (int i = 0; i < fan_in; ++i) prev[static_cast<std::size_t>(i)] += row[i] * d;
        }
        // a = tanh(z) on hidden layers, so dz = da * (1 - a^2)
        for (int i = 0; i < fan_in; ++i) {
            prev[static_cast<std::size_t>(i)] *= 1.0 - a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
        }
        delta = std::move(prev);
    }
    return out;
}

TrainResult train(FlowModel model, std::span<const FlowPair> pairs, const TrainConfig& config) {
    if (pairs.empty()) throw ParameterError("training needs at least one pair");
    if (!(config.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (config.epochs < 0) throw ParameterError("epochs must be non-negative");
    if (config.batch_size < 1) throw ParameterError("batch size must be positive");
    if (config.t_samples < 1) throw ParameterError("t_samples must be positive");
    if (config.optimizer == Optimizer::SgdMomentum &&
        !(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw ParameterError("momentum must lie in [0,1)");
    }
    for (const FlowPair& pair : pairs) {
        require_same_geometry(pair.x0, pair.x1, "training pair");
        if (static_cast<int>(pair.x0.size()) != model.pixel_input()) {
            throw ShapeError("training pair does not match the model input size");
        }
    }

    TrainResult result{std::move(model), {}};
    result.history.reserve(static_cast<std::size_t>(config.epochs));
    Pcg32 rng(config.seed);

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> params(result.model.params().begin(), result.model.params().end());
    std::vector<double> velocity;
    if (config.optimizer == Optimizer::SgdMomentum) velocity.assign(params.size(), 0.0);
    std::vector<double> batch_grad(params.size());

    const std::size_t samples_per_pair = static_cast<std::size_t>(config.t_samples);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t epoch_samples = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            std::size_t n_samples = 0;
            for (std::size_t bi = start; bi < end; ++bi) {
                for (std::size_t s = 0; s < samples_per_pair; ++s) {
                    const double t = rng.uniform();
                    LossAndGrad lg;
                    try {
                        lg = rf_loss(result.model, pairs[order[bi]], t);
                    } catch (const NumericError& e) {
                        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                           ": " + e.what());
                    }
                    epoch_loss += lg.loss;
                    for (std::size_t k = 0; k < params.size(); ++k) batch_grad[k] += lg.grads[k];
                    ++n_samples;
                }
            }
            epoch_samples += n_samples;
            const double inv = 1.0 / static_cast<double>(n_samples);
            if (config.optimizer == Optimizer::SgdMomentum) {
                for (std::size_t k = 0; k < params.size(); ++k) {
                    velocity[k] = config.momentum * velocity[k] -
                                  config.learning_rate * batch_grad[k] * inv;
                    params[k] += velocity[k];
                }
            } else {
                for (std::size_t k = 0; k < params.size(); ++k) {
                    params[k] -= config.learning_rate * batch_grad[k] * inv;
                }
            }
            for (double p : params) {
                if (!std::isfinite(p)) {
                    throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                       " (non-finite parameter)");
                }
            }
            result.model.set_params(params);
        }
        const double mean_loss = epoch_loss / static_cast<double>(epoch_samples);
        if (!std::isfinite(mean_loss) || mean_loss > 1e6) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               " (mean loss " + std::to_string(mean_loss) + ")");
        }
        result.history.push_back(mean_loss);
    }
    return result;
}

void save_model(const std::string& path, const FlowModel& model) {
    std::string bytes;
    bytes.append(kMagic, 5);
    const std::vector<int>& widths = model.widths();
    detail::put_u32le(bytes, static_cast<std::uint32_t>(widths.size()));
    for (int w : widths) detail::put_u32le(bytes, static_cast<std::uint32_t>(w));
    detail::put_u32le(bytes, static_cast<std::uint32_t>(model.time_pairs()));
    for (double v : model.params()) detail::put_f64le(bytes, v);
    detail::write_bytes(path, bytes);
}

FlowModel load_model(const std::string& path) {
    detail::ByteReader r(detail::read_bytes(path), path);
    r.expect_magic(kMagic, 5);
    const std::uint32_t n_widths = r.u32le("layer count");
    if (n_widths < 2 || n_widths > 64) {
        throw FormatError("implausible layer count " + std::to_string(n_widths) + " in '" + path +
                          "'");
    }
    std::vector<int> widths(n_widths);
    for (std::uint32_t i = 0; i < n_widths; ++i) {
        const std::uint32_t w = r.u32le("layer width");
        if (w == 0 || w > (1u << 24)) {
            throw FormatError("bad layer width in '" + path + "'");
        }
        widths[i] = static_cast<int>(w);
    }
    const std::uint32_t time_pairs = r.u32le("time pair count");
    if (time_pairs > 64 || static_cast<int>(2 * time_pairs) >= widths.front()) {
        throw FormatError("bad time pair count in '" + path + "'");
    }

    FlowModel model(std::move(widths), static_cast<int>(time_pairs));
    std::vector<double> params(model.param_count());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double v = r.f64le("parameter");
        if (!std::isfinite(v)) {
            throw FormatError("non-finite parameter at index " + std::to_string(i) + " in '" +
                              path + "'");
        }
        params[i] = v;
    }
    r.expect_end();
    model.set_params(params);
    return model;
}

} // namespace flowlens
