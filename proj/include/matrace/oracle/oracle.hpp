#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matrace/correction.hpp"
#include "matrace/env/dec_pomdp.hpp"

namespace matrace::oracle {

using env::DecPomdpSpec;

/// Observation ids per agent: states whose observation vectors coincide share an id.
struct ObservationIndex {
    std::vector<std::vector<int>> id;  // [agent][state]
    std::vector<int> count;            // distinct observations per agent
};

ObservationIndex index_observations(const DecPomdpSpec& spec);

/// Factorized decentralized policy: pi(a | s) = prod_i pi_i(a_i | o_i(s)).
struct TabularPolicy {
    int n_agents = 0;
    int n_actions = 0;
    std::vector<int> n_obs;                  // per agent
    std::vector<std::vector<double>> table;  // [agent][obs_id * n_actions + a]

    double prob(int agent, int obs_id, int action) const {
        return table[agent][static_cast<std::size_t>(obs_id) * n_actions + action];
    }
    static TabularPolicy uniform(const ObservationIndex& index, int n_actions);
};

/// State-conditioned distribution over joint actions, [state * n_joint + joint].
/// The product form of a TabularPolicy is one instance; the corrected policy is
/// another and in general does not factorize across agents.
struct JointPolicy {
    int n_states = 0;
    int n_joint = 0;
    std::vector<double> prob;

    double operator()(int state, int joint) const { return prob[static_cast<std::size_t>(state) * n_joint + joint]; }
};

JointPolicy joint_policy(const DecPomdpSpec& spec, const TabularPolicy& policy);
JointPolicy joint_policy(const DecPomdpSpec& spec, const TabularPolicy& policy, const ObservationIndex& index);

/// Throws std::invalid_argument if any row is not a probability vector (tolerance 1e-12).
void require_stochastic(const JointPolicy& policy);
void require_stochastic(const TabularPolicy& policy);

/// Value per state; `columns` is 1 or n_agents (column k uses agent k's reward table).
struct ValueTable {
    int n_states = 0;
    int columns = 1;
    std::vector<double> v;  // [state * columns + col]

    ValueTable() = default;
    ValueTable(int states, int cols, double fill = 0.0)
        : n_states(states), columns(cols), v(static_cast<std::size_t>(states) * cols, fill) {}

    double& operator()(int s, int col = 0) { return v[static_cast<std::size_t>(s) * columns + col]; }
    double operator()(int s, int col = 0) const { return v[static_cast<std::size_t>(s) * columns + col]; }
};

double sup_distance(const ValueTable& a, const ValueTable& b);

ValueTable exact_value(const DecPomdpSpec& spec, const JointPolicy& policy, double tol, int columns = 1);
ValueTable exact_value(const DecPomdpSpec& spec, const TabularPolicy& policy, double tol, int columns = 1);

struct RhoTable {
    std::vector<double> per_state;  // E_{a~mu(.|s)} rho(s, a)
    double beta = 0.0;              // min over states
};

RhoTable expected_rho(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                      const CorrectionConfig& config);

/// alpha(s, a) = rho(s, a) - c(s, a) * E_{s'~P(s,a)} E_{a'~mu(.|s')} rho(s', a'),
/// indexed [state * n_joint + joint].
std::vector<double> alpha_table(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                                const CorrectionConfig& config);

/// min(rho_bar mu, pi) normalized per state. A row whose normalizer underflows
/// falls back to mu (logged); an all-zero numerator with positive rho_bar is an error.
JointPolicy corrected_policy(const JointPolicy& pi, const JointPolicy& mu, double rho_bar);

struct OperatorResult {
    ValueTable value;
    int horizon = 0;          // number of series terms summed
    double tail_bound = 0.0;  // certified bound on the neglected tail, sup norm
};

/// Exact expectation of the truncated V-trace operator series under mu, by
/// dynamic programming over the state space.
OperatorResult apply_R(const DecPomdpSpec& spec, const ValueTable& value, const JointPolicy& pi,
                       const JointPolicy& mu, const CorrectionConfig& config, double trunc_tol);

struct FixedPointResult {
    ValueTable value;
    double residual = 0.0;  // sup norm of apply_R(V) - V
    int polish_iterations = 0;
};

FixedPointResult fixed_point(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                             const CorrectionConfig& config, double tol, int columns = 1);

/// ||R V1 - R V2|| / ||V1 - V2||; trunc_tol is relative to ||V1 - V2||.
double contraction_ratio(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                         const CorrectionConfig& config, const ValueTable& v1, const ValueTable& v2,
                         double trunc_tol);

struct TelescopingResult {
    std::vector<double> per_state;  // E_mu[sum_t gamma^t c~_{t-2} alpha_t | s_0 = s]
    std::vector<double> identity;   // 1 + (gamma - 1) E_mu[sum_t gamma^t c~_{t-1} rho_t | s_0 = s]
    double max_value = 0.0;
    double bound = 0.0;  // 1 + (gamma - 1) beta
    int horizon = 0;
    double tail_bound = 0.0;
};

TelescopingResult telescoping_bound(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                                    const CorrectionConfig& config, double trunc_tol);

/// Importance ratio pi/mu for one (state, joint) pair and the two clipped weights.
struct ClippedWeights {
    double c = 0.0;
    double rho = 0.0;
};
ClippedWeights clipped_weights(double pi, double mu, const CorrectionConfig& config);

// Random small problems for the verification battery.
struct RandomProblem {
    DecPomdpSpec spec;
    TabularPolicy pi;
    TabularPolicy mu;
    CorrectionConfig config;
};

struct RandomProblemLimits {
    int max_states = 6;
    int max_agents = 2;
    int max_actions = 3;
    double gamma_lo = 0.5;
    double gamma_hi = 0.95;
};

RandomProblem random_problem(std::uint64_t seed, const RandomProblemLimits& limits = {});

}  // namespace matrace::oracle
