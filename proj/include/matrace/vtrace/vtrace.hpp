#pragma once

#include <span>
#include <string>
#include <vector>

#include "matrace/correction.hpp"

namespace matrace::vtrace {

struct Weights {
    std::vector<double> c;
    std::vector<double> rho;
};

/// Clipped importance weights from joint-action log-probabilities. The log
/// ratio is clipped before exponentiation, so extreme ratios never overflow.
Weights importance_weights(std::span<const double> target_logp, std::span<const double> behavior_logp,
                           const CorrectionConfig& config);

/// Per-step inputs of the target recursion, general enough for unrolls that
/// cross episode boundaries.
struct TraceInputs {
    std::span<const double> rewards;      // r_t, length T
    std::span<const double> values;       // V(s_t), length T
    std::span<const double> next_values;  // successor value used in delta_t: 0 on termination,
                                          // V(final obs) on truncation, V(s_{t+1}) otherwise
    std::span<const double> continues;    // 1 if the trace carries from t to t+1, 0 at episode ends
    std::span<const double> bootstrap;    // length 1: V(s_T), the value of the state after the unroll
    std::span<const double> c;
    std::span<const double> rho;
    double gamma = 0.99;
};

/// v_t = V(s_t) + rho_t delta_t + gamma c_t (v_{t+1} - V(s_{t+1})), v_T = V(s_T).
std::vector<double> vtrace_targets(const TraceInputs& in);

/// Uninterrupted trajectory: `values` has length T + 1, the last entry is V(s_T).
std::vector<double> vtrace_targets(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const double> c, std::span<const double> rho, double gamma);

/// Same, with the bootstrap passed separately (values has length T).
std::vector<double> vtrace_targets(std::span<const double> rewards, std::span<const double> values,
                                   double bootstrap_value, std::span<const double> c, std::span<const double> rho,
                                   double gamma);

enum class AdvantageMode {
    eq7,               // rho_t (r_t + gamma V(s_{t+1}) - V(s_t))
    vtrace_bootstrap,  // rho_t (r_t + gamma v_{t+1} - V(s_t))
};

AdvantageMode parse_advantage_mode(const std::string& name);
std::string to_string(AdvantageMode mode);

/// Policy-gradient advantages. `v_targets` is only read in vtrace_bootstrap mode.
std::vector<double> pg_advantage(const TraceInputs& in, std::span<const double> v_targets, AdvantageMode mode);

std::vector<double> pg_advantage(std::span<const double> rewards, std::span<const double> values,
                                 std::span<const double> v_targets, std::span<const double> rho, double gamma,
                                 AdvantageMode mode);

}  // namespace matrace::vtrace
