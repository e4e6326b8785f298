#pragma once

#include <cstdint>
#include <vector>

#include "matrace/nn/mlp.hpp"

namespace matrace::nn {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-3;

    AdamState() = default;
    AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// Bias-corrected Adam step, descending along `grads`. Throws on a non-finite gradient
/// before touching either the parameters or the moments.
void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state);

struct EntropySchedule {
    double initial_cost = 1.0;
    double target = 1e-5;
    double adjustment = 10.0;

    void validate() const;
};

/// Log-linear decay from initial_cost to target over the first 1/adjustment of training.
double entropy_coefficient(const EntropySchedule& schedule, double fraction_complete);

}  // namespace matrace::nn
