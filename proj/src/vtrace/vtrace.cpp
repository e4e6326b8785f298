#include "matrace/vtrace/vtrace.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace matrace::vtrace {

namespace {

double clipped_exp(double log_ratio, double bar) {
    if (bar <= 0.0) return 0.0;
    const double log_bar = std::log(bar);
    return std::exp(log_ratio < log_bar ? log_ratio : log_bar);
}

void require_length(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw std::invalid_argument(std::string("vtrace: ") + what + " has length " + std::to_string(got) +
                                    ", expected " + std::to_string(want));
    }
}

void check(const TraceInputs& in) {
    const auto t = in.rewards.size();
    require_length(in.values.size(), t, "values");
    require_length(in.next_values.size(), t, "next_values");
    require_length(in.continues.size(), t, "continues");
    require_length(in.c.size(), t, "c");
    require_length(in.rho.size(), t, "rho");
    require_length(in.bootstrap.size(), 1, "bootstrap");
}

}  // namespace

Weights importance_weights(std::span<const double> target_logp, std::span<const double> behavior_logp,
                           const CorrectionConfig& config) {
    require_length(behavior_logp.size(), target_logp.size(), "behavior_logp");
    Weights w;
    w.c.resize(target_logp.size());
    w.rho.resize(target_logp.size());
    for (std::size_t t = 0; t < target_logp.size(); ++t) {
        if (!std::isfinite(target_logp[t]) || !std::isfinite(behavior_logp[t])) {
            throw std::invalid_argument("importance_weights: non-finite log-probability at step " + std::to_string(t));
        }
        const double log_ratio = target_logp[t] - behavior_logp[t];
        w.rho[t] = config.unclipped_rho ? std::exp(log_ratio) : clipped_exp(log_ratio, config.rho_bar);
        w.c[t] = config.lambda * clipped_exp(log_ratio, config.c_bar);
    }
    return w;
}

std::vector<double> vtrace_targets(const TraceInputs& in) {
    check(in);
    const auto n = in.rewards.size();
    std::vector<double> v(n);
    // Carry holds v_{t+1} - V(s_{t+1}); zero at the unroll end since v_T = V(s_T).
    double carry = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const double delta = in.rewards[k] + in.gamma * in.next_values[k] - in.values[k];
        const double correction = in.rho[k] * delta + in.gamma * in.c[k] * in.continues[k] * carry;
        v[k] = in.values[k] + correction;
        carry = correction;
    }
    return v;
}

std::vector<double> vtrace_targets(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const double> c, std::span<const double> rho, double gamma) {
    require_length(values.size(), rewards.size() + 1, "values");
    const std::vector<double> ones(rewards.size(), 1.0);
    TraceInputs in;
    in.rewards = rewards;
    in.values = values.first(rewards.size());
    in.next_values = values.subspan(1);
    in.continues = ones;
    in.bootstrap = values.last(1);
    in.c = c;
    in.rho = rho;
    in.gamma = gamma;
    return vtrace_targets(in);
}

std::vector<double> vtrace_targets(std::span<const double> rewards, std::span<const double> values,
                                   double bootstrap_value, std::span<const double> c, std::span<const double> rho,
                                   double gamma) {
    require_length(values.size(), rewards.size(), "values");
    std::vector<double> full(values.begin(), values.end());
    full.push_back(bootstrap_value);
    return vtrace_targets(rewards, full, c, rho, gamma);
}

AdvantageMode parse_advantage_mode(const std::string& name) {
    if (name == "eq7") return AdvantageMode::eq7;
    if (name == "vtrace_bootstrap") return AdvantageMode::vtrace_bootstrap;
    throw std::invalid_argument("unknown advantage mode '" + name + "' (expected eq7 or vtrace_bootstrap)");
}

std::string to_string(AdvantageMode mode) { return mode == AdvantageMode::eq7 ? "eq7" : "vtrace_bootstrap"; }

std::vector<double> pg_advantage(const TraceInputs& in, std::span<const double> v_targets, AdvantageMode mode) {
    check(in);
    const auto n = in.rewards.size();
    if (mode == AdvantageMode::vtrace_bootstrap) require_length(v_targets.size(), n, "v_targets");
    std::vector<double> adv(n);
    for (std::size_t t = 0; t < n; ++t) {
        double next = in.next_values[t];
        if (mode == AdvantageMode::vtrace_bootstrap && in.continues[t] != 0.0) {
            next = t + 1 < n ? v_targets[t + 1] : in.bootstrap[0];
        }
        adv[t] = in.rho[t] * (in.rewards[t] + in.gamma * next - in.values[t]);
    }
    return adv;
}

std::vector<double> pg_advantage(std::span<const double> rewards, std::span<const double> values,
                                 std::span<const double> v_targets, std::span<const double> rho, double gamma,
                                 AdvantageMode mode) {
    require_length(values.size(), rewards.size() + 1, "values");
    const std::vector<double> ones(rewards.size(), 1.0);
    TraceInputs in;
    in.rewards = rewards;
    in.values = values.first(rewards.size());
    in.next_values = values.subspan(1);
    in.continues = ones;
    in.bootstrap = values.last(1);
    in.c = ones;
    in.rho = rho;
    in.gamma = gamma;
    return pg_advantage(in, v_targets, mode);
}

}  // namespace matrace::vtrace
