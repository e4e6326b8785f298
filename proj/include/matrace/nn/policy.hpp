#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "matrace/nn/mlp.hpp"

namespace matrace::nn {

enum class ActorMode { shared, shared_with_id, separate };
enum class CriticMode { obs, full, obs_full, decentralized };

ActorMode parse_actor_mode(const std::string& name);
CriticMode parse_critic_mode(const std::string& name);
std::string to_string(ActorMode mode);
std::string to_string(CriticMode mode);

/// Log-softmax restricted to legal actions; illegal entries get -inf.
/// An empty mask means every action is legal.
std::vector<double> masked_log_softmax(std::span<const double> logits, std::span<const std::uint8_t> legal = {});

/// -sum p log p over the finite entries of `log_probs`.
double entropy(std::span<const double> log_probs);

/// k most recent frames of a fixed width, oldest first, zero-padded after reset.
class FrameStack {
public:
    FrameStack(int frame_dim, int k);

    void reset();
    void push(std::span<const double> frame);
    std::span<const double> stacked() const { return data_; }
    int frame_dim() const { return frame_dim_; }
    int depth() const { return k_; }

private:
    int frame_dim_;
    int k_;
    std::vector<double> data_;
};

/// Shape of the decentralized actors. Inputs are an agent's own stacked
/// observations only, optionally followed by its one-hot id.
struct ActorLayout {
    ActorMode mode = ActorMode::shared;
    int n_agents = 1;
    int obs_dim = 1;
    int framestack = 1;
    int n_actions = 1;
    std::vector<int> hidden{64, 64};

    void validate() const;
    int input_dim() const;
    int net_count() const { return mode == ActorMode::separate ? n_agents : 1; }
    int net_for(int agent) const { return mode == ActorMode::separate ? agent : 0; }
    MlpSpec net_spec() const;
    /// Network input for `agent` from its stacked observation (obs_dim * framestack values).
    std::vector<double> input(int agent, std::span<const double> stacked_obs) const;
};

/// Per-agent policy networks evaluated on a fixed set of parameters.
struct ActorNetworks {
    ActorLayout layout;
    std::vector<ParamVector> nets;

    static ActorNetworks init(const ActorLayout& layout, std::uint64_t seed);

    /// Logits of `agent`; illegal actions are masked to -inf.
    std::vector<double> logits(int agent, std::span<const double> stacked_obs,
                               std::span<const std::uint8_t> legal = {}) const;
    std::vector<double> log_probs(int agent, std::span<const double> stacked_obs,
                                  std::span<const std::uint8_t> legal = {}) const;
};

struct CriticLayout {
    CriticMode mode = CriticMode::obs;
    int n_agents = 1;
    int obs_dim = 1;
    int state_dim = 0;
    int framestack = 1;
    int heads = 1;  // 1 (broadcast) or n_agents; decentralized critics always have one head each
    std::vector<int> hidden{64, 64};

    void validate() const;
    int input_dim() const;
    int net_count() const { return mode == CriticMode::decentralized ? n_agents : 1; }
    int outputs_per_net() const { return mode == CriticMode::decentralized ? 1 : heads; }
    int columns() const { return mode == CriticMode::decentralized ? n_agents : heads; }
    int column_for(int agent) const { return agent < columns() ? agent : columns() - 1; }
    MlpSpec net_spec() const;
};

/// Critic network inputs, one vector per critic net. `stacked_joint_obs` holds
/// framestack frames of the concatenated agent observations (oldest first),
/// `stacked_state` framestack frames of the state encoding (may be empty for
/// observation-only modes).
std::vector<std::vector<double>> critic_input(const CriticLayout& layout, std::span<const double> stacked_joint_obs,
                                              std::span<const double> stacked_state);

struct CriticNetworks {
    CriticLayout layout;
    std::vector<ParamVector> nets;

    static CriticNetworks init(const CriticLayout& layout, std::uint64_t seed);

    /// Value per column for one time step, given critic_input() output.
    std::vector<double> values(const std::vector<std::vector<double>>& inputs) const;
};

nlohmann::json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ActorLayout& layout);
ActorLayout actor_layout_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CriticLayout& layout);
CriticLayout critic_layout_from_json(const nlohmann::json& doc);

}  // namespace matrace::nn
