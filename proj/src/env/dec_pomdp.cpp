#include "matrace/env/dec_pomdp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace matrace::env {

namespace {

constexpr double kStochasticTol = 1e-12;

// Neumaier summation; long rows of tiny probabilities otherwise drift past 1e-12.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

int sample_from(std::span<const double> probs, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = static_cast<int>(i);
        x -= probs[i];
        if (x < 0.0) return last_positive;
    }
    // Rounding left a sliver of mass unassigned.
    return last_positive;
}

int sample_row(const std::vector<Transition>& row, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    int last = -1;
    for (const auto& t : row) {
        if (t.prob <= 0.0) continue;
        last = t.next_state;
        x -= t.prob;
        if (x < 0.0) return last;
    }
    return last;
}

}  // namespace

int DecPomdpSpec::n_joint_actions() const {
    int joint = 1;
    for (int i = 0; i < n_agents; ++i) joint *= n_actions;
    return joint;
}

int DecPomdpSpec::joint_index(std::span<const int> actions) const {
    if (static_cast<int>(actions.size()) != n_agents) {
        throw std::invalid_argument("joint action has " + std::to_string(actions.size()) + " components, expected " +
                                    std::to_string(n_agents));
    }
    int joint = 0;
    for (int i = 0; i < n_agents; ++i) {
        if (actions[i] < 0 || actions[i] >= n_actions) {
            throw std::invalid_argument("agent " + std::to_string(i) + " issued action " + std::to_string(actions[i]) +
                                        " outside [0, " + std::to_string(n_actions) + ")");
        }
        joint = joint * n_actions + actions[i];
    }
    return joint;
}

std::vector<int> DecPomdpSpec::joint_actions(int joint) const {
    std::vector<int> out(n_agents);
    for (int i = n_agents - 1; i >= 0; --i) {
        out[i] = joint % n_actions;
        joint /= n_actions;
    }
    return out;
}

std::span<const double> DecPomdpSpec::observation(int agent, int state) const {
    const auto offset = (static_cast<std::size_t>(agent) * n_states + state) * obs_dim;
    return {observations.data() + offset, static_cast<std::size_t>(obs_dim)};
}

std::span<const double> DecPomdpSpec::state_feature(int state) const {
    const auto offset = static_cast<std::size_t>(state) * state_dim;
    return {state_features.data() + offset, static_cast<std::size_t>(state_dim)};
}

bool DecPomdpSpec::is_legal(int state, int agent, int action) const {
    if (legal.empty()) return true;
    return legal[(static_cast<std::size_t>(state) * n_agents + agent) * n_actions + action] != 0;
}

std::vector<std::string> validate_spec(const DecPomdpSpec& spec) {
    std::vector<std::string> out;
    auto fail = [&](std::string msg) { out.push_back(std::move(msg)); };

    if (spec.n_agents < 1) fail("n_agents must be >= 1");
    if (spec.n_states < 1) fail("n_states must be >= 1");
    if (spec.n_actions < 1) fail("n_actions must be >= 1");
    if (spec.obs_dim < 0) fail("obs_dim must be >= 0");
    if (spec.state_dim < 0) fail("state_dim must be >= 0");
    if (!(spec.gamma >= 0.0 && spec.gamma < 1.0)) fail("gamma must lie in [0, 1), got " + std::to_string(spec.gamma));
    if (spec.episode_limit < 1) fail("episode_limit must be >= 1");
    if (!out.empty()) return out;

    const std::size_t rows = static_cast<std::size_t>(spec.n_states) * spec.n_joint_actions();
    if (spec.transition.size() != rows) {
        fail("transition has " + std::to_string(spec.transition.size()) + " rows, expected " + std::to_string(rows));
    } else {
        for (int s = 0; s < spec.n_states; ++s) {
            for (int j = 0; j < spec.n_joint_actions(); ++j) {
                CompensatedSum acc;
                bool negative = false;
                bool out_of_range = false;
                for (const auto& t : spec.transition[spec.row(s, j)]) {
                    acc.add(t.prob);
                    negative |= t.prob < 0.0 || !std::isfinite(t.prob);
                    out_of_range |= t.next_state < 0 || t.next_state >= spec.n_states;
                }
                const double sum = acc.value();
                std::ostringstream where;
                where << "transition(state=" << s << ", joint_action=" << j << ")";
                if (negative) fail(where.str() + " has a negative or non-finite entry");
                if (out_of_range) fail(where.str() + " names a successor outside the state set");
                if (std::abs(sum - 1.0) > kStochasticTol) {
                    std::ostringstream msg;
                    msg.precision(17);
                    msg << where.str() << " sums to " << sum;
                    fail(msg.str());
                }
            }
        }
    }

    if (static_cast<int>(spec.reward.size()) != spec.n_agents) {
        fail("reward must have one table per agent");
    } else {
        for (int i = 0; i < spec.n_agents; ++i) {
            if (spec.reward[i].size() != rows) {
                fail("reward table of agent " + std::to_string(i) + " has wrong size");
            }
        }
        if (out.empty()) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (int i = 1; i < spec.n_agents; ++i) {
                    if (spec.reward[i][r] != spec.reward[0][r]) {
                        fail("reward differs between agent 0 and agent " + std::to_string(i) + " at row " +
                             std::to_string(r) + " (rewards must be shared)");
                        break;
                    }
                }
                if (!std::isfinite(spec.reward[0][r])) fail("reward row " + std::to_string(r) + " is not finite");
            }
        }
    }

    if (spec.observations.size() != static_cast<std::size_t>(spec.n_agents) * spec.n_states * spec.obs_dim) {
        fail("observations table has wrong size");
    }
    if (spec.state_features.size() != static_cast<std::size_t>(spec.n_states) * spec.state_dim) {
        fail("state_features table has wrong size");
    }
    if (static_cast<int>(spec.initial_dist.size()) != spec.n_states) {
        fail("initial_dist has wrong size");
    } else {
        CompensatedSum acc;
        for (int s = 0; s < spec.n_states; ++s) {
            if (spec.initial_dist[s] < 0.0) fail("initial_dist[" + std::to_string(s) + "] is negative");
            acc.add(spec.initial_dist[s]);
        }
        const double sum = acc.value();
        if (std::abs(sum - 1.0) > kStochasticTol) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "initial_dist sums to " << sum;
            fail(msg.str());
        }
    }
    if (static_cast<int>(spec.terminal.size()) != spec.n_states) fail("terminal flags have wrong size");
    if (!spec.legal.empty() &&
        spec.legal.size() != static_cast<std::size_t>(spec.n_states) * spec.n_agents * spec.n_actions) {
        fail("legal mask has wrong size");
    }
    if (!spec.legal.empty() && out.empty()) {
        for (int s = 0; s < spec.n_states; ++s) {
            for (int i = 0; i < spec.n_agents; ++i) {
                bool any = false;
                for (int a = 0; a < spec.n_actions; ++a) any |= spec.is_legal(s, i, a);
                if (!any) fail("agent " + std::to_string(i) + " has no legal action in state " + std::to_string(s));
            }
        }
    }
    return out;
}

void require_valid(const DecPomdpSpec& spec) {
    const auto violations = validate_spec(spec);
    if (violations.empty()) return;
    std::string msg = "invalid Dec-POMDP spec";
    if (!spec.name.empty()) msg += " '" + spec.name + "'";
    for (const auto& v : violations) msg += "\n  " + v;
    throw std::invalid_argument(msg);
}

JointObservation joint_observation(const DecPomdpSpec& spec, int state) {
    JointObservation out(spec.n_agents);
    for (int i = 0; i < spec.n_agents; ++i) {
        const auto o = spec.observation(i, state);
        out[i].assign(o.begin(), o.end());
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> legal_actions(const DecPomdpSpec& spec, int state) {
    std::vector<std::vector<std::uint8_t>> out(spec.n_agents, std::vector<std::uint8_t>(spec.n_actions, 1));
    if (spec.legal.empty()) return out;
    for (int i = 0; i < spec.n_agents; ++i) {
        for (int a = 0; a < spec.n_actions; ++a) out[i][a] = spec.is_legal(state, i, a) ? 1 : 0;
    }
    return out;
}

int sample_initial_state(const DecPomdpSpec& spec, Rng& rng) { return sample_from(spec.initial_dist, rng); }

ResetResult reset(const DecPomdpSpec& spec, Rng& rng) {
    ResetResult r;
    r.state_index = sample_initial_state(spec, rng);
    r.joint_obs = joint_observation(spec, r.state_index);
    return r;
}

ResetResult reset(const DecPomdpSpec& spec, std::uint64_t seed) {
    require_valid(spec);
    Rng rng(seed);
    return reset(spec, rng);
}

EpisodeStep step(const DecPomdpSpec& spec, int state, std::span<const int> joint_action, Rng& rng,
                 int steps_taken) {
    if (static_cast<int>(joint_action.size()) != spec.n_agents) {
        throw std::invalid_argument("step: expected " + std::to_string(spec.n_agents) + " actions, got " +
                                    std::to_string(joint_action.size()));
    }
    for (int i = 0; i < spec.n_agents; ++i) {
        const int a = joint_action[i];
        if (a < 0 || a >= spec.n_actions || !spec.is_legal(state, i, a)) {
            throw std::invalid_argument("step: agent " + std::to_string(i) + " issued illegal action " +
                                        std::to_string(a) + " in state " + std::to_string(state));
        }
    }
    const int joint = spec.joint_index(joint_action);
    const auto r = spec.row(state, joint);

    EpisodeStep out;
    out.joint_action.assign(joint_action.begin(), joint_action.end());
    out.reward = spec.is_terminal(state) ? 0.0 : spec.reward[0][r];
    out.state_index = spec.is_terminal(state) ? state : sample_row(spec.transition[r], rng);
    out.terminated = spec.is_terminal(out.state_index);
    out.truncated = !out.terminated && steps_taken + 1 >= spec.episode_limit;
    out.done = out.terminated || out.truncated;
    out.joint_obs = joint_observation(spec, out.state_index);
    out.legal_actions = legal_actions(spec, out.state_index);
    return out;
}

Episode::Episode(const DecPomdpSpec& spec, std::uint64_t seed) : spec_(&spec), rng_(seed) { require_valid(spec); }

ResetResult Episode::reset() {
    auto r = env::reset(*spec_, rng_);
    state_ = r.state_index;
    steps_taken_ = 0;
    return r;
}

EpisodeStep Episode::step(std::span<const int> joint_action) {
    auto s = env::step(*spec_, state_, joint_action, rng_, steps_taken_);
    state_ = s.state_index;
    ++steps_taken_;
    return s;
}

}  // namespace matrace::env
