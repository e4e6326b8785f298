#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "matrace/oracle/oracle.hpp"

namespace matrace::oracle {

namespace {

constexpr double kRowTol = 1e-12;

void require_row(std::span<const double> row, const std::string& where) {
    double sum = 0.0;
    for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument(where + " has a negative or non-finite entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTol) {
        throw std::invalid_argument(where + " sums to " + std::to_string(sum) + ", not 1");
    }
}

}  // namespace

ObservationIndex index_observations(const DecPomdpSpec& spec) {
    ObservationIndex index;
    index.id.assign(spec.n_agents, std::vector<int>(spec.n_states, 0));
    index.count.assign(spec.n_agents, 0);
    for (int i = 0; i < spec.n_agents; ++i) {
        std::map<std::vector<double>, int> seen;
        for (int s = 0; s < spec.n_states; ++s) {
            const auto o = spec.observation(i, s);
            auto [it, inserted] = seen.emplace(std::vector<double>(o.begin(), o.end()), index.count[i]);
            if (inserted) ++index.count[i];
            index.id[i][s] = it->second;
        }
    }
    return index;
}

TabularPolicy TabularPolicy::uniform(const ObservationIndex& index, int n_actions) {
    TabularPolicy p;
    p.n_agents = static_cast<int>(index.count.size());
    p.n_actions = n_actions;
    p.n_obs = index.count;
    for (int i = 0; i < p.n_agents; ++i) {
        p.table.emplace_back(static_cast<std::size_t>(index.count[i]) * n_actions, 1.0 / n_actions);
    }
    return p;
}

JointPolicy joint_policy(const DecPomdpSpec& spec, const TabularPolicy& policy, const ObservationIndex& index) {
    if (policy.n_agents != spec.n_agents || policy.n_actions != spec.n_actions) {
        throw std::invalid_argument("policy shape does not match the spec");
    }
    JointPolicy joint;
    joint.n_states = spec.n_states;
    joint.n_joint = spec.n_joint_actions();
    joint.prob.assign(static_cast<std::size_t>(joint.n_states) * joint.n_joint, 0.0);
    for (int s = 0; s < spec.n_states; ++s) {
        for (int j = 0; j < joint.n_joint; ++j) {
            const auto actions = spec.joint_actions(j);
            double p = 1.0;
            for (int i = 0; i < spec.n_agents; ++i) p *= policy.prob(i, index.id[i][s], actions[i]);
            joint.prob[static_cast<std::size_t>(s) * joint.n_joint + j] = p;
        }
    }
    return joint;
}

JointPolicy joint_policy(const DecPomdpSpec& spec, const TabularPolicy& policy) {
    return joint_policy(spec, policy, index_observations(spec));
}

void require_stochastic(const JointPolicy& policy) {
    if (policy.prob.size() != static_cast<std::size_t>(policy.n_states) * policy.n_joint) {
        throw std::invalid_argument("joint policy table has wrong size");
    }
    for (int s = 0; s < policy.n_states; ++s) {
        require_row({policy.prob.data() + static_cast<std::size_t>(s) * policy.n_joint,
                     static_cast<std::size_t>(policy.n_joint)},
                    "policy row for state " + std::to_string(s));
    }
}

void require_stochastic(const TabularPolicy& policy) {
    for (int i = 0; i < policy.n_agents; ++i) {
        for (int o = 0; o < policy.n_obs[i]; ++o) {
            require_row({policy.table[i].data() + static_cast<std::size_t>(o) * policy.n_actions,
                         static_cast<std::size_t>(policy.n_actions)},
                        "policy row of agent " + std::to_string(i) + ", observation " + std::to_string(o));
        }
    }
}

double sup_distance(const ValueTable& a, const ValueTable& b) {
    if (a.v.size() != b.v.size()) throw std::invalid_argument("value tables differ in shape");
    double d = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) d = std::max(d, std::abs(a.v[k] - b.v[k]));
    return d;
}

ValueTable exact_value(const DecPomdpSpec& spec, const JointPolicy& policy, double tol, int columns) {
    env::require_valid(spec);
    require_stochastic(policy);
    if (policy.n_states != spec.n_states || policy.n_joint != spec.n_joint_actions()) {
        throw std::invalid_argument("policy shape does not match the spec");
    }
    if (columns != 1 && columns != spec.n_agents) throw std::invalid_argument("columns must be 1 or n_agents");

    const int n = spec.n_states;
    Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(n, columns);
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < policy.n_joint; ++j) {
            const double p = policy(s, j);
            if (p == 0.0) continue;
            const auto r = spec.row(s, j);
            for (const auto& t : spec.transition[r]) transition(s, t.next_state) += p * t.prob;
            for (int k = 0; k < columns; ++k) reward(s, k) += p * spec.reward[k][r];
        }
    }
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - spec.gamma * transition;
    Eigen::MatrixXd v = system.partialPivLu().solve(reward);

    // Bellman residual; refine with evaluation sweeps if the solve was not tight enough.
    auto residual = [&]() { return (reward + spec.gamma * transition * v - v).cwiseAbs().maxCoeff(); };
    for (int sweep = 0; sweep < 100000 && residual() > tol; ++sweep) v = reward + spec.gamma * transition * v;
    if (residual() > tol) throw std::runtime_error("exact_value: residual did not reach tolerance");

    ValueTable out(n, columns);
    for (int s = 0; s < n; ++s) {
        for (int k = 0; k < columns; ++k) out(s, k) = v(s, k);
    }
    return out;
}

ValueTable exact_value(const DecPomdpSpec& spec, const TabularPolicy& policy, double tol, int columns) {
    require_stochastic(policy);
    return exact_value(spec, joint_policy(spec, policy), tol, columns);
}

ClippedWeights clipped_weights(double pi, double mu, const CorrectionConfig& config) {
    double ratio;
    if (mu > 0.0) {
        ratio = pi / mu;
    } else if (pi > 0.0) {
        ratio = std::numeric_limits<double>::infinity();
    } else {
        ratio = 0.0;
    }
    ClippedWeights w;
    w.rho = config.unclipped_rho ? ratio : std::min(config.rho_bar, ratio);
    w.c = config.lambda * std::min(config.c_bar, ratio);
    return w;
}

RhoTable expected_rho(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                      const CorrectionConfig& config) {
    RhoTable out;
    out.per_state.assign(spec.n_states, 0.0);
    for (int s = 0; s < spec.n_states; ++s) {
        double acc = 0.0;
        for (int j = 0; j < mu.n_joint; ++j) {
            const double m = mu(s, j);
            const double p = pi(s, j);
            if (m == 0.0) {
                if (p > 0.0 && (config.unclipped_rho || std::isinf(config.rho_bar))) {
                    throw std::invalid_argument("expected_rho: mu is zero where pi is positive (state " +
                                                std::to_string(s) + ") and rho is unbounded");
                }
                continue;
            }
            acc += m * clipped_weights(p, m, config).rho;
        }
        out.per_state[s] = acc;
    }
    out.beta = *std::min_element(out.per_state.begin(), out.per_state.end());
    return out;
}

std::vector<double> alpha_table(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                                const CorrectionConfig& config) {
    const auto rho = expected_rho(spec, pi, mu, config);
    std::vector<double> alpha(static_cast<std::size_t>(spec.n_states) * mu.n_joint, 0.0);
    for (int s = 0; s < spec.n_states; ++s) {
        for (int j = 0; j < mu.n_joint; ++j) {
            const auto w = clipped_weights(pi(s, j), mu(s, j), config);
            double next_rho = 0.0;
            for (const auto& t : spec.transition[spec.row(s, j)]) next_rho += t.prob * rho.per_state[t.next_state];
            // Weights are only ever realized on actions mu can take.
            const double rho_sa = std::isinf(w.rho) ? config.rho_bar : w.rho;
            const double c_sa = std::isinf(w.c) ? config.lambda * config.c_bar : w.c;
            alpha[static_cast<std::size_t>(s) * mu.n_joint + j] = rho_sa - c_sa * next_rho;
        }
    }
    return alpha;
}

JointPolicy corrected_policy(const JointPolicy& pi, const JointPolicy& mu, double rho_bar) {
    if (pi.n_states != mu.n_states || pi.n_joint != mu.n_joint) {
        throw std::invalid_argument("corrected_policy: pi and mu differ in shape");
    }
    JointPolicy out = mu;
    for (int s = 0; s < pi.n_states; ++s) {
        double norm = 0.0;
        for (int j = 0; j < pi.n_joint; ++j) norm += std::min(rho_bar * mu(s, j), pi(s, j));
        bool overlap = false;
        for (int j = 0; j < pi.n_joint; ++j) overlap |= mu(s, j) > 0.0 && pi(s, j) > 0.0;
        if (rho_bar == 0.0 || !overlap) {
            throw std::invalid_argument("corrected_policy: all-zero numerator in state " + std::to_string(s));
        }
        if (!std::isnormal(norm)) {
            spdlog::warn("corrected_policy: normalizer underflows in state {}, falling back to mu", s);
            continue;
        }
        for (int j = 0; j < pi.n_joint; ++j) {
            out.prob[static_cast<std::size_t>(s) * pi.n_joint + j] = std::min(rho_bar * mu(s, j), pi(s, j)) / norm;
        }
    }
    return out;
}

RandomProblem random_problem(std::uint64_t seed, const RandomProblemLimits& limits) {
    env::Rng rng(seed);
    std::uniform_int_distribution<int> states_dist(2, limits.max_states);
    std::uniform_int_distribution<int> agents_dist(1, limits.max_agents);
    std::uniform_int_distribution<int> actions_dist(2, limits.max_actions);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    DecPomdpSpec spec;
    spec.name = "random-" + std::to_string(seed);
    spec.n_states = states_dist(rng);
    spec.n_agents = agents_dist(rng);
    spec.n_actions = actions_dist(rng);
    spec.gamma = limits.gamma_lo + (limits.gamma_hi - limits.gamma_lo) * unit(rng);
    spec.episode_limit = 100;
    spec.obs_dim = spec.n_states;
    spec.state_dim = spec.n_states;

    const int joint = spec.n_joint_actions();
    spec.transition.resize(static_cast<std::size_t>(spec.n_states) * joint);
    std::vector<double> shared_reward(spec.transition.size());
    for (std::size_t r = 0; r < spec.transition.size(); ++r) {
        std::vector<double> w(spec.n_states);
        double total = 0.0;
        for (auto& x : w) {
            // Sparse rows exercise near-deterministic kernels.
            x = unit(rng) < 0.3 ? 0.0 : -std::log(1.0 - unit(rng));
            total += x;
        }
        if (total == 0.0) {
            w[static_cast<std::size_t>(unit(rng) * spec.n_states) % spec.n_states] = 1.0;
            total = 1.0;
        }
        double placed = 0.0;
        int last = -1;
        for (int s = 0; s < spec.n_states; ++s) {
            if (w[s] == 0.0) continue;
            spec.transition[r].push_back({s, w[s] / total});
            placed += w[s] / total;
            last = static_cast<int>(spec.transition[r].size()) - 1;
        }
        spec.transition[r][last].prob += 1.0 - placed;
        shared_reward[r] = 2.0 * unit(rng) - 1.0;
    }
    spec.reward.assign(spec.n_agents, shared_reward);

    // Each agent sees a coarsened state: a random many-to-one map onto ids.
    spec.observations.assign(static_cast<std::size_t>(spec.n_agents) * spec.n_states * spec.obs_dim, 0.0);
    for (int i = 0; i < spec.n_agents; ++i) {
        const int ids = std::uniform_int_distribution<int>(1, spec.n_states)(rng);
        for (int s = 0; s < spec.n_states; ++s) {
            const int id = s < ids ? s : std::uniform_int_distribution<int>(0, ids - 1)(rng);
            spec.observations[(static_cast<std::size_t>(i) * spec.n_states + s) * spec.obs_dim + id] = 1.0;
        }
    }
    spec.state_features.assign(static_cast<std::size_t>(spec.n_states) * spec.state_dim, 0.0);
    for (int s = 0; s < spec.n_states; ++s) spec.state_features[static_cast<std::size_t>(s) * spec.state_dim + s] = 1.0;
    spec.initial_dist.assign(spec.n_states, 1.0 / spec.n_states);
    spec.terminal.assign(spec.n_states, 0);

    const auto index = index_observations(spec);
    auto random_policy = [&](double floor) {
        TabularPolicy p;
        p.n_agents = spec.n_agents;
        p.n_actions = spec.n_actions;
        p.n_obs = index.count;
        for (int i = 0; i < spec.n_agents; ++i) {
            std::vector<double> table(static_cast<std::size_t>(index.count[i]) * spec.n_actions);
            for (int o = 0; o < index.count[i]; ++o) {
                double total = 0.0;
                for (int a = 0; a < spec.n_actions; ++a) {
                    const double x = -std::log(1.0 - unit(rng));
                    table[static_cast<std::size_t>(o) * spec.n_actions + a] = x;
                    total += x;
                }
                for (int a = 0; a < spec.n_actions; ++a) {
                    auto& x = table[static_cast<std::size_t>(o) * spec.n_actions + a];
                    x = floor / spec.n_actions + (1.0 - floor) * x / total;
                }
            }
            p.table.push_back(std::move(table));
        }
        return p;
    };

    RandomProblem problem;
    problem.spec = std::move(spec);
    problem.pi = random_policy(0.05);
    problem.mu = random_policy(0.3);
    problem.config.rho_bar = 0.3 + 1.7 * unit(rng);
    problem.config.c_bar = problem.config.rho_bar * (0.2 + 0.8 * unit(rng));
    return problem;
}

}  // namespace matrace::oracle
