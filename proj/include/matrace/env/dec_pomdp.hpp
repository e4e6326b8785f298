#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace matrace::env {

using Rng = std::mt19937_64;

/// One nonzero entry of a transition row.
struct Transition {
    int next_state = 0;
    double prob = 0.0;
};

/// Tabular, fully cooperative Dec-POMDP.
///
/// Joint actions are indexed in mixed radix with agent 0 as the most
/// significant digit, so for two agents joint = a0 * n_actions + a1.
/// Transition rows are stored sparsely (zero entries omitted) and indexed by
/// row(state, joint). Terminal states are absorbing with zero reward.
struct DecPomdpSpec {
    std::string name;
    int n_agents = 0;
    int n_states = 0;
    int n_actions = 0;  // per agent, identical for all agents
    int obs_dim = 0;    // per agent
    int state_dim = 0;  // length of the full-state encoding
    double gamma = 0.99;
    int episode_limit = 1;
    // Undiscounted episode return that counts as solving the task.
    double optimal_return = 0.0;

    std::vector<std::vector<Transition>> transition;  // [row(s, joint)]
    std::vector<std::vector<double>> reward;          // [agent][row(s, joint)]
    std::vector<double> observations;                 // [(agent * n_states + s) * obs_dim + k]
    std::vector<double> state_features;               // [s * state_dim + k]
    std::vector<double> initial_dist;                 // [s]
    std::vector<std::uint8_t> terminal;               // [s]
    std::vector<std::uint8_t> legal;                  // [(s * n_agents + agent) * n_actions + a]; empty = all legal

    int n_joint_actions() const;
    std::size_t row(int state, int joint) const {
        return static_cast<std::size_t>(state) * n_joint_actions() + joint;
    }
    int joint_index(std::span<const int> actions) const;
    std::vector<int> joint_actions(int joint) const;

    std::span<const double> observation(int agent, int state) const;
    std::span<const double> state_feature(int state) const;
    bool is_legal(int state, int agent, int action) const;
    bool is_terminal(int state) const { return terminal[state] != 0; }
    double shared_reward(int state, int joint) const { return reward[0][row(state, joint)]; }
};

/// Returns one human-readable line per broken invariant; empty iff valid.
std::vector<std::string> validate_spec(const DecPomdpSpec& spec);

/// Throws std::invalid_argument listing the violations.
void require_valid(const DecPomdpSpec& spec);

using JointObservation = std::vector<std::vector<double>>;

JointObservation joint_observation(const DecPomdpSpec& spec, int state);
std::vector<std::vector<std::uint8_t>> legal_actions(const DecPomdpSpec& spec, int state);

struct ResetResult {
    int state_index = 0;
    JointObservation joint_obs;
};

struct EpisodeStep {
    int state_index = 0;  // successor state
    JointObservation joint_obs;
    std::vector<int> joint_action;
    double reward = 0.0;
    bool done = false;
    bool terminated = false;  // reached an absorbing state
    bool truncated = false;   // episode_limit hit in a non-terminal state
    std::vector<std::vector<std::uint8_t>> legal_actions;
};

int sample_initial_state(const DecPomdpSpec& spec, Rng& rng);

/// Samples s0 from initial_dist with a generator seeded by `seed`.
ResetResult reset(const DecPomdpSpec& spec, std::uint64_t seed);
ResetResult reset(const DecPomdpSpec& spec, Rng& rng);

/// `steps_taken` counts transitions already made in the current episode.
EpisodeStep step(const DecPomdpSpec& spec, int state, std::span<const int> joint_action, Rng& rng,
                 int steps_taken = 0);

/// Stateful wrapper around reset/step owned by exactly one worker.
class Episode {
public:
    Episode(const DecPomdpSpec& spec, std::uint64_t seed);

    ResetResult reset();
    EpisodeStep step(std::span<const int> joint_action);

    int state() const { return state_; }
    int steps_taken() const { return steps_taken_; }
    const DecPomdpSpec& spec() const { return *spec_; }

private:
    const DecPomdpSpec* spec_;
    Rng rng_;
    int state_ = 0;
    int steps_taken_ = 0;
};

/// Single-state game: play once, then move to an absorbing terminal state.
/// For one agent the payoff must have exactly one row (a bandit).
DecPomdpSpec make_matrix_game(const std::vector<std::vector<double>>& payoff, int n_agents = 2);

DecPomdpSpec make_bandit(const std::vector<double>& arm_rewards);

/// Agents move on a grid (stay/up/down/left/right); the team is rewarded +1 and
/// the episode terminates once every goal cell is occupied. Goal cells fill the
/// bottom-right corner. Each agent observes a (2r+1)^2 window around itself with
/// channels [outside grid, goal cell, other agent present].
DecPomdpSpec make_coop_gridworld(int width, int height, int n_agents, int sight_radius, int episode_limit);

nlohmann::json spec_to_json(const DecPomdpSpec& spec);
DecPomdpSpec spec_from_json(const nlohmann::json& doc);

}  // namespace matrace::env
