#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "matrace/nn/optim.hpp"

namespace matrace::nn {

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state) {
    const auto n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw std::invalid_argument("adam_step: parameter, gradient and moment sizes differ");
    }
    const auto g = grads.values();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(g[i])) {
            std::ostringstream msg;
            msg << "adam_step: non-finite gradient " << g[i] << " at index " << i << " of " << n << " (step "
                << state.step << ")";
            throw std::runtime_error(msg.str());
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    auto p = params.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

void EntropySchedule::validate() const {
    if (!(target > 0.0 && initial_cost >= target)) {
        throw std::invalid_argument("entropy schedule needs 0 < target <= initial_cost");
    }
    if (!(adjustment > 0.0)) throw std::invalid_argument("entropy adjustment must be positive");
}

double entropy_coefficient(const EntropySchedule& schedule, double fraction_complete) {
    const double progress = std::clamp(fraction_complete * schedule.adjustment, 0.0, 1.0);
    const double log_coef =
        std::log(schedule.initial_cost) + progress * (std::log(schedule.target) - std::log(schedule.initial_cost));
    return std::clamp(std::exp(log_coef), schedule.target, schedule.initial_cost);
}

}  // namespace matrace::nn
