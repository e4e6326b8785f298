#include "matrace/learner/learner.hpp"

#include <cmath>
#include <limits>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace matrace::learner {

void TrainConfig::validate() const {
    if (density < 1) throw std::invalid_argument("density must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (unroll_length < 1) throw std::invalid_argument("unroll_length must be >= 1");
    if (unrolls_per_epoch < 1) throw std::invalid_argument("unrolls_per_epoch must be >= 1");
    if (framestack < 1) throw std::invalid_argument("framestack must be >= 1");
    if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");
    correction.validate();
    entropy.validate();
}

TrainConfig ablation_mode(TrainConfig config, const std::string& name) {
    static const std::regex framestack_re(R"(framestack(?:\((\d+)\)|:(\d+)))");
    static const std::regex critic_re(R"(critic(?:\((\w+)\)|:(\w+)))");
    std::smatch m;
    if (name == "no_is") {
        config.importance_sampling = false;
    } else if (name == "decentralized") {
        config.critic_mode = nn::CriticMode::decentralized;
    } else if (name == "separate_actors") {
        config.actor_mode = nn::ActorMode::separate;
    } else if (name == "agent_id") {
        config.actor_mode = nn::ActorMode::shared_with_id;
    } else if (std::regex_match(name, m, framestack_re)) {
        config.framestack = std::stoi(m[1].matched ? m[1].str() : m[2].str());
        if (config.framestack < 1) throw std::invalid_argument("framestack ablation needs k >= 1");
    } else if (std::regex_match(name, m, critic_re)) {
        const auto mode = nn::parse_critic_mode(m[1].matched ? m[1].str() : m[2].str());
        if (mode == nn::CriticMode::decentralized) {
            throw std::invalid_argument("use the 'decentralized' ablation for per-agent critics");
        }
        config.critic_mode = mode;
    } else {
        throw std::invalid_argument("unknown ablation '" + name +
                                    "' (expected no_is, decentralized, separate_actors, agent_id, framestack(k) or "
                                    "critic(obs|full|obs_full))");
    }
    return config;
}

nn::ActorLayout actor_layout(const env::DecPomdpSpec& spec, const TrainConfig& config) {
    nn::ActorLayout layout;
    layout.mode = config.actor_mode;
    layout.n_agents = spec.n_agents;
    layout.obs_dim = spec.obs_dim;
    layout.framestack = config.framestack;
    layout.n_actions = spec.n_actions;
    layout.hidden = config.hidden;
    layout.validate();
    return layout;
}

nn::CriticLayout critic_layout(const env::DecPomdpSpec& spec, const TrainConfig& config) {
    nn::CriticLayout layout;
    layout.mode = config.critic_mode;
    layout.n_agents = spec.n_agents;
    layout.obs_dim = spec.obs_dim;
    layout.state_dim = spec.state_dim;
    layout.framestack = config.framestack;
    layout.heads = config.critic_heads;
    layout.hidden = config.hidden;
    layout.validate();
    return layout;
}

namespace {

using Batch = std::span<const runtime::Unroll* const>;

/// Batched actor pass over every (unroll, step, agent) of a batch.
struct ActorPass {
    std::vector<std::vector<double>> logits;  // [net][row * n_actions]
    std::vector<nn::ForwardCache> caches;
    std::vector<std::size_t> unroll_base;  // first step index of each unroll
    int n_agents = 0;
    bool separate = false;

    std::size_t row(std::size_t u, int t, int k) const {
        const auto step = unroll_base[u] + static_cast<std::size_t>(t);
        return separate ? step : step * n_agents + k;
    }
    int net(int k) const { return separate ? k : 0; }
};

ActorPass actor_pass(const nn::ActorNetworks& actor, Batch batch, bool keep_cache) {
    const auto& layout = actor.layout;
    ActorPass pass;
    pass.n_agents = layout.n_agents;
    pass.separate = layout.mode == nn::ActorMode::separate;
    const auto spec = layout.net_spec();
    const auto stacked = static_cast<std::size_t>(layout.obs_dim) * layout.framestack;
    std::vector<std::vector<double>> inputs(layout.net_count());
    std::vector<int> rows(layout.net_count(), 0);
    std::size_t steps = 0;
    for (const auto* u : batch) {
        pass.unroll_base.push_back(steps);
        for (int t = 0; t < u->length; ++t) {
            for (int k = 0; k < layout.n_agents; ++k) {
                const auto offset = (static_cast<std::size_t>(t) * layout.n_agents + k) * stacked;
                const auto x = layout.input(k, std::span<const double>(u->actor_obs).subspan(offset, stacked));
                auto& dst = inputs[layout.net_for(k)];
                dst.insert(dst.end(), x.begin(), x.end());
                ++rows[layout.net_for(k)];
            }
        }
        steps += static_cast<std::size_t>(u->length);
    }
    pass.caches.resize(layout.net_count());
    for (int n = 0; n < layout.net_count(); ++n) {
        pass.logits.push_back(nn::forward(actor.nets[n], spec, inputs[n], rows[n], keep_cache ? &pass.caches[n] : nullptr));
    }
    return pass;
}

/// Critic outputs of every row of a batch: per unroll, its steps, then the
/// bootstrap row, then one row per truncated step.
struct CriticPass {
    std::vector<std::vector<double>> out;  // [net][row * outputs_per_net]
    std::vector<nn::ForwardCache> caches;
    std::vector<std::size_t> unroll_base;
    int outputs = 1;
    bool decentralized = false;

    double value(std::size_t u, std::size_t local_row, int column) const {
        const auto r = unroll_base[u] + local_row;
        return decentralized ? out[column][r] : out[0][r * outputs + column];
    }
};

CriticPass critic_pass(const nn::CriticNetworks& critic, Batch batch, bool keep_cache) {
    const auto& layout = critic.layout;
    CriticPass pass;
    pass.outputs = layout.outputs_per_net();
    pass.decentralized = layout.mode == nn::CriticMode::decentralized;
    const auto spec = layout.net_spec();
    const int nets = layout.net_count();
    std::vector<std::vector<double>> inputs(nets);
    int rows = 0;
    for (const auto* u : batch) {
        if (!u->complete) throw std::invalid_argument("learner: partial unrolls cannot be trained on");
        pass.unroll_base.push_back(static_cast<std::size_t>(rows));
        for (int n = 0; n < nets; ++n) {
            auto& dst = inputs[n];
            dst.insert(dst.end(), u->critic_x[n].begin(), u->critic_x[n].end());
            dst.insert(dst.end(), u->bootstrap_x[n].begin(), u->bootstrap_x[n].end());
            for (const auto& [t, x] : u->final_x) dst.insert(dst.end(), x[n].begin(), x[n].end());
        }
        rows += u->length + 1 + static_cast<int>(u->final_x.size());
    }
    pass.caches.resize(nets);
    for (int n = 0; n < nets; ++n) {
        pass.out.push_back(nn::forward(critic.nets[n], spec, inputs[n], rows, keep_cache ? &pass.caches[n] : nullptr));
    }
    return pass;
}

/// log pi(a_{t,k} | o_{t,k}) for every step and agent, [t][k].
std::vector<std::vector<double>> action_log_probs(const ActorPass& pass, const runtime::Unroll& u, std::size_t index,
                                                  int n_actions, std::vector<std::vector<double>>* full = nullptr) {
    std::vector<std::vector<double>> out(u.length, std::vector<double>(u.n_agents));
    for (int t = 0; t < u.length; ++t) {
        for (int k = 0; k < u.n_agents; ++k) {
            const auto r = pass.row(index, t, k);
            const auto& logits = pass.logits[pass.net(k)];
            const auto legal = std::span<const std::uint8_t>(u.legal).subspan(
                (static_cast<std::size_t>(t) * u.n_agents + k) * n_actions, n_actions);
            auto lp = nn::masked_log_softmax(std::span<const double>(logits).subspan(r * n_actions, n_actions), legal);
            out[t][k] = lp[u.actions[static_cast<std::size_t>(t) * u.n_agents + k]];
            if (full) full->push_back(std::move(lp));
        }
    }
    return out;
}

UnrollTargets build_targets(const TrainConfig& config, const CriticPass& critic, std::size_t index,
                            const runtime::Unroll& u, const std::vector<std::vector<double>>& logp, int columns) {
    const auto T = static_cast<std::size_t>(u.length);
    UnrollTargets out;
    std::vector<double> target(T, 0.0), behavior(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (int k = 0; k < u.n_agents; ++k) {
            target[t] += logp[t][k];
            behavior[t] += u.behavior_logp[t * u.n_agents + k];
        }
        out.log_ratio.push_back(target[t] - behavior[t]);
    }
    if (config.importance_sampling) {
        auto w = vtrace::importance_weights(target, behavior, config.correction);
        out.c = std::move(w.c);
        out.rho = std::move(w.rho);
    } else {
        out.c.assign(T, 1.0);
        out.rho.assign(T, 1.0);
    }
    out.continues.resize(T);
    for (std::size_t t = 0; t < T; ++t) out.continues[t] = (u.terminated[t] || u.truncated[t]) ? 0.0 : 1.0;

    for (int col = 0; col < columns; ++col) {
        std::vector<double> values(T), next(T);
        for (std::size_t t = 0; t < T; ++t) values[t] = critic.value(index, t, col);
        const double boot = critic.value(index, T, col);
        std::size_t f = 0;
        for (std::size_t t = 0; t < T; ++t) {
            if (u.terminated[t]) {
                next[t] = 0.0;
            } else if (u.truncated[t]) {
                while (u.final_x[f].first != static_cast<int>(t)) ++f;
                next[t] = critic.value(index, T + 1 + f, col);
            } else {
                next[t] = t + 1 < T ? values[t + 1] : boot;
            }
        }
        out.values.push_back(std::move(values));
        out.next_values.push_back(std::move(next));
        out.bootstrap.push_back({boot});

        vtrace::TraceInputs in;
        in.rewards = u.rewards;
        in.values = out.values.back();
        in.next_values = out.next_values.back();
        in.continues = out.continues;
        in.bootstrap = out.bootstrap.back();
        in.c = out.c;
        in.rho = out.rho;
        in.gamma = config.gamma;
        out.v_targets.push_back(vtrace::vtrace_targets(in));
        out.advantages.push_back(vtrace::pg_advantage(in, out.v_targets.back(), config.advantage));
    }
    return out;
}

void require_finite(double x, const char* what, std::size_t batch) {
    if (!std::isfinite(x)) {
        std::ostringstream msg;
        msg << what << " is not finite (" << x << ") on a batch of " << batch << " unrolls";
        throw std::runtime_error(msg.str());
    }
}

}  // namespace

Learner::Learner(const env::DecPomdpSpec& spec, const TrainConfig& config)
    : spec_(&spec),
      config_(config),
      actor_(nn::ActorNetworks::init(actor_layout(spec, config), config.seed)),
      critic_(nn::CriticNetworks::init(critic_layout(spec, config), config.seed)) {
    config_.validate();
    for (const auto& p : actor_.nets) actor_opt_.emplace_back(p.size(), config.learning_rate);
    for (const auto& p : critic_.nets) critic_opt_.emplace_back(p.size(), config.learning_rate);
}

UnrollTargets Learner::targets(const runtime::Unroll& unroll) const {
    const runtime::Unroll* one[] = {&unroll};
    const auto apass = actor_pass(actor_, one, false);
    const auto cpass = critic_pass(critic_, one, false);
    const auto logp = action_log_probs(apass, unroll, 0, spec_->n_actions);
    return build_targets(config_, cpass, 0, unroll, logp, critic_.layout.columns());
}

CriticStats Learner::critic_update(Batch batch) {
    const auto apass = actor_pass(actor_, batch, false);
    auto cpass = critic_pass(critic_, batch, true);
    const int columns = critic_.layout.columns();
    const int outputs = critic_.layout.outputs_per_net();
    std::size_t steps = 0;
    for (const auto* u : batch) steps += static_cast<std::size_t>(u->length);
    const double scale = 1.0 / (static_cast<double>(steps) * columns);

    std::vector<std::vector<double>> grad_out(cpass.out.size());
    for (std::size_t n = 0; n < cpass.out.size(); ++n) grad_out[n].assign(cpass.out[n].size(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& u = *batch[i];
        const auto logp = action_log_probs(apass, u, i, spec_->n_actions);
        const auto tg = build_targets(config_, cpass, i, u, logp, columns);
        for (int col = 0; col < columns; ++col) {
            for (int t = 0; t < u.length; ++t) {
                const double err = tg.values[col][t] - tg.v_targets[col][t];
                loss += err * err * scale;
                const auto r = cpass.unroll_base[i] + static_cast<std::size_t>(t);
                if (cpass.decentralized) {
                    grad_out[col][r] = 2.0 * err * scale;
                } else {
                    grad_out[0][r * outputs + col] = 2.0 * err * scale;
                }
            }
        }
    }
    require_finite(loss, "critic loss", batch.size());
    for (std::size_t n = 0; n < critic_.nets.size(); ++n) {
        const auto g = nn::backward(critic_.nets[n], critic_.layout.net_spec(), cpass.caches[n], grad_out[n]);
        nn::adam_step(critic_.nets[n], g, critic_opt_[n]);
    }
    return {loss};
}

ActorGradient Learner::actor_gradient(Batch batch, double entropy_coef) const {
    const auto apass = actor_pass(actor_, batch, true);
    const auto cpass = critic_pass(critic_, batch, false);
    const int n_actions = spec_->n_actions;
    const auto& layout = actor_.layout;
    std::size_t steps = 0;
    for (const auto* u : batch) steps += static_cast<std::size_t>(u->length);
    const double scale = 1.0 / static_cast<double>(steps);
    const double log_rho_bar = std::log(config_.correction.rho_bar);

    std::vector<std::vector<double>> grad_logits(apass.logits.size());
    for (std::size_t n = 0; n < apass.logits.size(); ++n) grad_logits[n].assign(apass.logits[n].size(), 0.0);

    ActorGradient out;
    double entropy_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& u = *batch[i];
        std::vector<std::vector<double>> full;
        const auto logp = action_log_probs(apass, u, i, n_actions, &full);
        const auto tg = build_targets(config_, cpass, i, u, logp, critic_.layout.columns());
        for (int t = 0; t < u.length; ++t) {
            out.stats.mean_rho += tg.rho[t] * scale;
            out.stats.mean_abs_log_ratio += std::abs(tg.log_ratio[t]) * scale;
            if (tg.log_ratio[t] > log_rho_bar) out.stats.clipped_fraction += scale;
            for (int k = 0; k < u.n_agents; ++k) {
                const auto& lp = full[static_cast<std::size_t>(t) * u.n_agents + k];
                const double h = nn::entropy(lp);
                entropy_sum += h;
                const double w = tg.rho[t] * tg.advantages[critic_.layout.column_for(k)][t];
                const int a = u.actions[static_cast<std::size_t>(t) * u.n_agents + k];
                out.stats.loss -= (w * lp[a] + entropy_coef * h) * scale;
                double* g = grad_logits[apass.net(k)].data() + apass.row(i, t, k) * n_actions;
                for (int j = 0; j < n_actions; ++j) {
                    if (!std::isfinite(lp[j])) continue;
                    const double p = std::exp(lp[j]);
                    const double d_logp = (j == a ? 1.0 : 0.0) - p;
                    const double d_entropy = -p * (lp[j] + h);
                    g[j] = -(w * d_logp + entropy_coef * d_entropy) * scale;
                }
            }
        }
    }
    out.stats.entropy = entropy_sum * scale / layout.n_agents;
    require_finite(out.stats.loss, "actor loss", batch.size());
    for (std::size_t n = 0; n < actor_.nets.size(); ++n) {
        out.grads.push_back(nn::backward(actor_.nets[n], layout.net_spec(), apass.caches[n], grad_logits[n]));
    }
    return out;
}

ActorStats Learner::actor_update(Batch batch, double entropy_coef) {
    auto g = actor_gradient(batch, entropy_coef);
    for (std::size_t n = 0; n < actor_.nets.size(); ++n) nn::adam_step(actor_.nets[n], g.grads[n], actor_opt_[n]);
    return g.stats;
}

}  // namespace matrace::learner
