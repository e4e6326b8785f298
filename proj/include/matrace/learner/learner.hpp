#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "matrace/correction.hpp"
#include "matrace/env/dec_pomdp.hpp"
#include "matrace/nn/optim.hpp"
#include "matrace/nn/policy.hpp"
#include "matrace/runtime/unroll.hpp"
#include "matrace/vtrace/vtrace.hpp"

namespace matrace::learner {

struct TrainConfig {
    int density = 1;  // critic and actor updates per collection round
    double learning_rate = 1e-3;
    int batch_size = 32;  // unrolls per update
    double gamma = 0.99;
    CorrectionConfig correction;
    int unroll_length = 32;
    int unrolls_per_epoch = 32;
    nn::CriticMode critic_mode = nn::CriticMode::obs;
    int critic_heads = 1;
    nn::ActorMode actor_mode = nn::ActorMode::shared;
    vtrace::AdvantageMode advantage = vtrace::AdvantageMode::eq7;
    bool importance_sampling = true;
    int framestack = 1;
    std::vector<int> hidden{64, 64};
    nn::EntropySchedule entropy;
    std::int64_t total_steps = 0;
    std::uint64_t seed = 0;
    int checkpoint_every = 100;  // epochs

    void validate() const;
};

/// Applies one named ablation: no_is, decentralized, separate_actors,
/// agent_id, framestack(k) / framestack:k, critic(obs|full|obs_full) / critic:x.
TrainConfig ablation_mode(TrainConfig config, const std::string& name);

nn::ActorLayout actor_layout(const env::DecPomdpSpec& spec, const TrainConfig& config);
nn::CriticLayout critic_layout(const env::DecPomdpSpec& spec, const TrainConfig& config);

/// Per-column critic quantities and V-trace targets of one unroll.
struct UnrollTargets {
    std::vector<double> c;
    std::vector<double> rho;
    std::vector<double> log_ratio;  // joint log pi - log mu per step
    std::vector<double> continues;
    // [column][t]
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> next_values;
    std::vector<std::vector<double>> bootstrap;  // [column][1]
    std::vector<std::vector<double>> v_targets;
    std::vector<std::vector<double>> advantages;
};

struct CriticStats {
    double loss = 0.0;
};

struct ActorStats {
    double loss = 0.0;
    double entropy = 0.0;  // mean per-agent policy entropy
    double mean_rho = 0.0;
    double clipped_fraction = 0.0;  // steps whose ratio exceeded rho_bar
    double mean_abs_log_ratio = 0.0;
};

struct ActorGradient {
    ActorStats stats;
    std::vector<nn::ParamVector> grads;  // per actor net, gradient of the loss
};

/// Owns the live actor and critic parameters and their optimizers.
class Learner {
public:
    Learner(const env::DecPomdpSpec& spec, const TrainConfig& config);

    const nn::ActorNetworks& actor() const { return actor_; }
    const nn::CriticNetworks& critic() const { return critic_; }
    nn::ActorNetworks& mutable_actor() { return actor_; }
    nn::CriticNetworks& mutable_critic() { return critic_; }
    const TrainConfig& config() const { return config_; }

    /// Targets under the current actor and critic (all treated as constants).
    UnrollTargets targets(const runtime::Unroll& unroll) const;

    /// One Adam step on the mean squared error between V and the V-trace targets.
    CriticStats critic_update(std::span<const runtime::Unroll* const> batch);

    /// Loss gradient of the importance-weighted policy gradient plus entropy bonus.
    ActorGradient actor_gradient(std::span<const runtime::Unroll* const> batch, double entropy_coef) const;
    ActorStats actor_update(std::span<const runtime::Unroll* const> batch, double entropy_coef);

private:
    const env::DecPomdpSpec* spec_;
    TrainConfig config_;
    nn::ActorNetworks actor_;
    nn::CriticNetworks critic_;
    std::vector<nn::AdamState> actor_opt_;
    std::vector<nn::AdamState> critic_opt_;
};

}  // namespace matrace::learner
