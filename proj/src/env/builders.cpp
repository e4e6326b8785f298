#include <algorithm>
#include <limits>
#include <stdexcept>

#include "matrace/env/dec_pomdp.hpp"

namespace matrace::env {

DecPomdpSpec make_matrix_game(const std::vector<std::vector<double>>& payoff, int n_agents) {
    if (n_agents != 1 && n_agents != 2) throw std::invalid_argument("matrix game supports 1 or 2 agents");
    if (payoff.empty() || payoff.front().empty()) throw std::invalid_argument("payoff matrix is empty");
    const std::size_t cols = payoff.front().size();
    for (std::size_t r = 0; r < payoff.size(); ++r) {
        if (payoff[r].size() != cols) {
            throw std::invalid_argument("payoff matrix is not rectangular: row " + std::to_string(r) + " has " +
                                        std::to_string(payoff[r].size()) + " entries, row 0 has " +
                                        std::to_string(cols));
        }
    }
    if (n_agents == 1 && payoff.size() != 1) throw std::invalid_argument("single-agent payoff must have one row");
    if (n_agents == 2 && payoff.size() != cols) {
        throw std::invalid_argument("two-agent payoff must be square (both agents share one action set)");
    }

    DecPomdpSpec spec;
    spec.name = n_agents == 1 ? "bandit" : "matrix_game";
    spec.n_agents = n_agents;
    spec.n_states = 2;  // 0 = play, 1 = absorbing terminal
    spec.n_actions = static_cast<int>(cols);
    spec.obs_dim = 1;
    spec.state_dim = 2;
    spec.episode_limit = 1;
    spec.gamma = 0.99;

    const int joint = spec.n_joint_actions();
    spec.transition.resize(static_cast<std::size_t>(spec.n_states) * joint);
    spec.reward.assign(n_agents, std::vector<double>(spec.transition.size(), 0.0));
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < joint; ++j) {
        const auto a = spec.joint_actions(j);
        const double r = n_agents == 1 ? payoff[0][a[0]] : payoff[a[0]][a[1]];
        best = std::max(best, r);
        for (int i = 0; i < n_agents; ++i) spec.reward[i][spec.row(0, j)] = r;
        spec.transition[spec.row(0, j)] = {{1, 1.0}};
        spec.transition[spec.row(1, j)] = {{1, 1.0}};
    }
    spec.optimal_return = best;
    spec.observations.assign(static_cast<std::size_t>(n_agents) * spec.n_states, 0.0);
    for (int i = 0; i < n_agents; ++i) spec.observations[static_cast<std::size_t>(i) * spec.n_states + 0] = 1.0;
    spec.state_features = {1.0, 0.0, 0.0, 1.0};
    spec.initial_dist = {1.0, 0.0};
    spec.terminal = {0, 1};
    return spec;
}

DecPomdpSpec make_bandit(const std::vector<double>& arm_rewards) { return make_matrix_game({arm_rewards}, 1); }

DecPomdpSpec make_coop_gridworld(int width, int height, int n_agents, int sight_radius, int episode_limit) {
    if (width < 1 || height < 1) throw std::invalid_argument("gridworld needs width, height >= 1");
    if (n_agents < 1) throw std::invalid_argument("gridworld needs at least one agent");
    if (sight_radius < 0) throw std::invalid_argument("sight_radius must be >= 0");
    if (episode_limit < 1) throw std::invalid_argument("episode_limit must be >= 1");
    const int cells = width * height;
    if (cells < n_agents) throw std::invalid_argument("grid has fewer cells than goal cells (one per agent)");
    if (cells == n_agents && n_agents == 1) throw std::invalid_argument("1x1 grid leaves no non-goal start cell");

    long long configs_ll = 1;
    for (int i = 0; i < n_agents; ++i) {
        configs_ll *= cells;
        if (configs_ll > 2'000'000) throw std::invalid_argument("gridworld joint state space exceeds 2e6 states");
    }
    const int configs = static_cast<int>(configs_ll);
    const int terminal = configs;

    constexpr int kActions = 5;  // stay, up, down, left, right
    constexpr int dx[kActions] = {0, 0, 0, -1, 1};
    constexpr int dy[kActions] = {0, -1, 1, 0, 0};

    std::vector<std::uint8_t> is_goal(cells, 0);
    for (int g = 0; g < n_agents; ++g) is_goal[cells - 1 - g] = 1;

    auto decode = [&](int config, std::vector<int>& pos) {
        for (int i = n_agents - 1; i >= 0; --i) {
            pos[i] = config % cells;
            config /= cells;
        }
    };
    auto encode = [&](const std::vector<int>& pos) {
        int c = 0;
        for (int i = 0; i < n_agents; ++i) c = c * cells + pos[i];
        return c;
    };
    auto covered = [&](const std::vector<int>& pos) {
        for (int g = 0; g < n_agents; ++g) {
            const int goal = cells - 1 - g;
            if (std::find(pos.begin(), pos.end(), goal) == pos.end()) return false;
        }
        return true;
    };

    DecPomdpSpec spec;
    spec.name = "gridworld";
    spec.n_agents = n_agents;
    spec.n_states = configs + 1;
    spec.n_actions = kActions;
    const int window = 2 * sight_radius + 1;
    spec.obs_dim = 3 * window * window;
    spec.state_dim = n_agents * (width + height) + 1;
    spec.episode_limit = episode_limit;
    spec.gamma = 0.99;
    spec.optimal_return = 1.0;

    const int joint = spec.n_joint_actions();
    spec.transition.resize(static_cast<std::size_t>(spec.n_states) * joint);
    spec.reward.assign(n_agents, std::vector<double>(spec.transition.size(), 0.0));
    spec.observations.assign(static_cast<std::size_t>(n_agents) * spec.n_states * spec.obs_dim, 0.0);
    spec.state_features.assign(static_cast<std::size_t>(spec.n_states) * spec.state_dim, 0.0);
    spec.initial_dist.assign(spec.n_states, 0.0);
    spec.terminal.assign(spec.n_states, 0);
    spec.terminal[terminal] = 1;

    std::vector<int> pos(n_agents);
    std::vector<int> next(n_agents);
    int start_configs = 0;
    for (int c = 0; c < configs; ++c) {
        decode(c, pos);
        if (!covered(pos)) {
            spec.initial_dist[c] = 1.0;
            ++start_configs;
        }

        for (int j = 0; j < joint; ++j) {
            int rem = j;
            for (int i = n_agents - 1; i >= 0; --i) {
                const int a = rem % kActions;
                rem /= kActions;
                const int x = pos[i] % width;
                const int y = pos[i] / width;
                const int nx = x + dx[a];
                const int ny = y + dy[a];
                next[i] = (nx >= 0 && nx < width && ny >= 0 && ny < height) ? ny * width + nx : pos[i];
            }
            const auto r = spec.row(c, j);
            if (covered(next)) {
                spec.transition[r] = {{terminal, 1.0}};
                for (int i = 0; i < n_agents; ++i) spec.reward[i][r] = 1.0;
            } else {
                spec.transition[r] = {{encode(next), 1.0}};
            }
        }

        for (int i = 0; i < n_agents; ++i) {
            double* o = spec.observations.data() + (static_cast<std::size_t>(i) * spec.n_states + c) * spec.obs_dim;
            const int x = pos[i] % width;
            const int y = pos[i] / width;
            int k = 0;
            for (int wy = -sight_radius; wy <= sight_radius; ++wy) {
                for (int wx = -sight_radius; wx <= sight_radius; ++wx, ++k) {
                    const int cx = x + wx;
                    const int cy = y + wy;
                    if (cx < 0 || cx >= width || cy < 0 || cy >= height) {
                        o[3 * k] = 1.0;
                        continue;
                    }
                    const int cell = cy * width + cx;
                    o[3 * k + 1] = is_goal[cell];
                    for (int other = 0; other < n_agents; ++other) {
                        if (other != i && pos[other] == cell) o[3 * k + 2] = 1.0;
                    }
                }
            }
            double* f = spec.state_features.data() + static_cast<std::size_t>(c) * spec.state_dim;
            f[i * (width + height) + x] = 1.0;
            f[i * (width + height) + width + y] = 1.0;
        }
    }
    for (int j = 0; j < joint; ++j) spec.transition[spec.row(terminal, j)] = {{terminal, 1.0}};
    spec.state_features[static_cast<std::size_t>(terminal) * spec.state_dim + spec.state_dim - 1] = 1.0;

    if (start_configs == 0) throw std::invalid_argument("every configuration covers the goals; no start state");
    for (auto& p : spec.initial_dist) p /= start_configs;
    return spec;
}

}  // namespace matrace::env
