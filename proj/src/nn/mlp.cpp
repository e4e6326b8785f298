#include "matrace/nn/mlp.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

namespace matrace::nn {

namespace {

std::atomic<std::uint64_t> g_next_revision{1};

std::uint64_t fresh_revision() { return g_next_revision.fetch_add(1, std::memory_order_relaxed); }

}  // namespace

void MlpSpec::validate() const {
    if (input_dim <= 0) throw std::invalid_argument("MlpSpec: input_dim must be positive");
    if (output_dim <= 0) throw std::invalid_argument("MlpSpec: output_dim must be positive");
    if (head_count <= 0) throw std::invalid_argument("MlpSpec: head_count must be positive");
    for (int h : hidden) {
        if (h <= 0) throw std::invalid_argument("MlpSpec: hidden widths must be positive");
    }
}

std::vector<LayerShape> layer_shapes(const MlpSpec& spec) {
    spec.validate();
    std::vector<LayerShape> layers;
    int in = spec.input_dim;
    std::size_t offset = 0;
    auto add = [&](int out) {
        layers.push_back({in, out, offset});
        offset += static_cast<std::size_t>(in) * out + out;
        in = out;
    };
    for (int h : spec.hidden) add(h);
    add(spec.total_output());
    return layers;
}

std::size_t MlpSpec::param_count() const {
    const auto layers = layer_shapes(*this);
    return layers.back().biases() + layers.back().out;
}

ParamVector::ParamVector(const MlpSpec& spec)
    : values_(spec.param_count(), 0.0), layers_(layer_shapes(spec)), revision_(fresh_revision()) {}

ParamVector::ParamVector(const MlpSpec& spec, std::vector<double> values)
    : values_(std::move(values)), layers_(layer_shapes(spec)), revision_(fresh_revision()) {
    if (values_.size() != spec.param_count()) {
        throw std::invalid_argument("ParamVector: " + std::to_string(values_.size()) + " values given, spec needs " +
                                    std::to_string(spec.param_count()));
    }
}

std::span<double> ParamVector::mutable_values() {
    revision_ = fresh_revision();
    return values_;
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    ParamVector params(spec);
    std::mt19937_64 rng(seed);
    auto values = params.mutable_values();
    for (const auto& layer : params.layers()) {
        const double limit = std::sqrt(6.0 / layer.in);
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t k = 0; k < static_cast<std::size_t>(layer.in) * layer.out; ++k) {
            values[layer.weights() + k] = dist(rng);
        }
    }
    return params;
}

std::vector<double> forward(const ParamVector& params, const MlpSpec& spec, std::span<const double> input, int batch,
                            ForwardCache* cache) {
    if (params.size() != spec.param_count()) {
        throw std::invalid_argument("forward: parameter vector has " + std::to_string(params.size()) +
                                    " entries, spec needs " + std::to_string(spec.param_count()));
    }
    if (batch < 0 || input.size() != static_cast<std::size_t>(batch) * spec.input_dim) {
        throw std::invalid_argument("forward: input has " + std::to_string(input.size()) + " values, expected " +
                                    std::to_string(batch) + " x " + std::to_string(spec.input_dim));
    }
    const auto& layers = params.layers();
    const auto w = params.values();

    std::vector<double> x(input.begin(), input.end());
    if (cache) {
        cache->revision = params.revision();
        cache->batch = batch;
        cache->activations.clear();
        cache->activations.push_back(x);
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const bool last = l + 1 == layers.size();
        std::vector<double> y(static_cast<std::size_t>(batch) * layer.out);
        for (int b = 0; b < batch; ++b) {
            const double* xb = x.data() + static_cast<std::size_t>(b) * layer.in;
            double* yb = y.data() + static_cast<std::size_t>(b) * layer.out;
            for (int o = 0; o < layer.out; ++o) {
                const double* row = w.data() + layer.weights() + static_cast<std::size_t>(o) * layer.in;
                double acc = w[layer.biases() + o];
                for (int i = 0; i < layer.in; ++i) acc += row[i] * xb[i];
                if (!last && spec.activation == Activation::relu && acc < 0.0) acc = 0.0;
                yb[o] = acc;
            }
        }
        x = std::move(y);
        if (cache && !last) cache->activations.push_back(x);
    }
    return x;
}

ParamVector backward(const ParamVector& params, const MlpSpec& spec, const ForwardCache& cache,
                     std::span<const double> output_grad) {
    if (cache.revision != params.revision() || cache.activations.size() != params.layers().size()) {
        throw std::invalid_argument("backward: forward cache is stale (parameters changed since the forward pass)");
    }
    const int batch = cache.batch;
    if (output_grad.size() != static_cast<std::size_t>(batch) * spec.total_output()) {
        throw std::invalid_argument("backward: output gradient has wrong size");
    }
    const auto& layers = params.layers();
    const auto w = params.values();
    ParamVector grad(spec);
    auto g = grad.mutable_values();

    std::vector<double> delta(output_grad.begin(), output_grad.end());
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& layer = layers[l];
        const auto& x = cache.activations[l];
        std::vector<double> delta_in(l > 0 ? static_cast<std::size_t>(batch) * layer.in : 0, 0.0);
        for (int b = 0; b < batch; ++b) {
            const double* xb = x.data() + static_cast<std::size_t>(b) * layer.in;
            const double* db = delta.data() + static_cast<std::size_t>(b) * layer.out;
            double* dib = l > 0 ? delta_in.data() + static_cast<std::size_t>(b) * layer.in : nullptr;
            for (int o = 0; o < layer.out; ++o) {
                const double d = db[o];
                if (d == 0.0) continue;
                double* grow = g.data() + layer.weights() + static_cast<std::size_t>(o) * layer.in;
                const double* wrow = w.data() + layer.weights() + static_cast<std::size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) grow[i] += d * xb[i];
                g[layer.biases() + o] += d;
                if (dib) {
                    for (int i = 0; i < layer.in; ++i) dib[i] += d * wrow[i];
                }
            }
            if (dib && spec.activation == Activation::relu) {
                for (int i = 0; i < layer.in; ++i) {
                    if (xb[i] <= 0.0) dib[i] = 0.0;
                }
            }
        }
        delta = std::move(delta_in);
    }
    return grad;
}

}  // namespace matrace::nn
