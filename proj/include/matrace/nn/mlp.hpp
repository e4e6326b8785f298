#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace matrace::nn {

enum class Activation { relu, identity };

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> hidden{64, 64};
    Activation activation = Activation::relu;
    int output_dim = 1;
    int head_count = 1;  // 1, or n_agents for a vector-valued critic

    int total_output() const { return output_dim * head_count; }
    std::size_t param_count() const;
    void validate() const;
    bool operator==(const MlpSpec&) const = default;
};

/// One affine layer inside the flat parameter array: weights (out x in,
/// row-major) followed by biases (out).
struct LayerShape {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;

    std::size_t weights() const { return offset; }
    std::size_t biases() const { return offset + static_cast<std::size_t>(in) * out; }
};

std::vector<LayerShape> layer_shapes(const MlpSpec& spec);

/// Flat parameter array. Every mutation through mutable_values() assigns a
/// fresh revision id; forward caches remember the revision they were built from.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(const MlpSpec& spec);
    ParamVector(const MlpSpec& spec, std::vector<double> values);

    std::span<const double> values() const { return values_; }
    std::span<double> mutable_values();
    std::size_t size() const { return values_.size(); }
    std::uint64_t revision() const { return revision_; }
    const std::vector<LayerShape>& layers() const { return layers_; }

    bool operator==(const ParamVector& other) const { return values_ == other.values_; }

private:
    std::vector<double> values_;
    std::vector<LayerShape> layers_;
    std::uint64_t revision_ = 0;
};

/// He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

/// Activations of one batched forward pass, kept for backward().
struct ForwardCache {
    std::uint64_t revision = 0;
    int batch = 0;
    std::vector<std::vector<double>> activations;  // [layer][batch * width], activations[0] = input
};

/// Batched forward pass; `input` holds `batch` rows of input_dim values.
/// Returns batch rows of total_output() values.
std::vector<double> forward(const ParamVector& params, const MlpSpec& spec, std::span<const double> input, int batch,
                            ForwardCache* cache = nullptr);

/// Gradient of sum_b <output_grad_b, f(x_b)> with respect to the parameters.
ParamVector backward(const ParamVector& params, const MlpSpec& spec, const ForwardCache& cache,
                     std::span<const double> output_grad);

}  // namespace matrace::nn
