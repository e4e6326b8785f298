#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace matrace::runtime {

/// What a worker tells the learner after each environment transition (or
/// after the first reset). `obs`, `state` and `legal` describe the state the
/// next action is chosen in; when the transition truncated the episode,
/// `final_obs`/`final_state` carry the last observation before the reset.
struct StepReport {
    bool first = false;  // no transition precedes this report (worker start)
    bool terminated = false;
    bool truncated = false;
    double reward = 0.0;
    std::vector<double> obs;    // [agent * obs_dim + k]
    std::vector<double> state;  // state encoding
    std::vector<double> final_obs;
    std::vector<double> final_state;
    std::vector<std::uint8_t> legal;  // [agent * n_actions + a]
};

/// Fixed-length slice of one worker's experience. Episodes may end inside an
/// unroll; the next step then starts a fresh episode.
struct Unroll {
    int worker = 0;
    int length = 0;
    int n_agents = 0;
    bool complete = false;  // false only for partial unrolls flushed at shutdown

    std::vector<double> actor_obs;        // [t][agent][obs_dim * framestack]
    std::vector<std::uint8_t> legal;      // [t][agent][action]
    std::vector<int> actions;             // [t][agent]
    std::vector<double> behavior_logp;    // [t][agent], log mu(a_{t,i} | o_{t,i})
    std::vector<std::uint32_t> versions;  // [t], snapshot that chose the action
    std::vector<double> rewards;
    std::vector<std::uint8_t> terminated;
    std::vector<std::uint8_t> truncated;

    std::vector<std::vector<double>> critic_x;     // [net][t * input_dim]
    std::vector<std::vector<double>> bootstrap_x;  // [net][input_dim], state after the last step
    // Critic inputs of the last observation of episodes truncated at step t.
    std::vector<std::pair<int, std::vector<std::vector<double>>>> final_x;

    std::vector<double> episode_returns;  // undiscounted returns of episodes ending here
};

}  // namespace matrace::runtime
