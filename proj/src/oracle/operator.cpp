#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "matrace/oracle/oracle.hpp"

namespace matrace::oracle {

namespace {

// Expectations under mu of the weighted one-step quantities.
struct WeightedKernel {
    Eigen::MatrixXd trace;     // sum_a mu c P   (c-weighted successor kernel)
    Eigen::MatrixXd rho_next;  // sum_a mu rho P
    Eigen::VectorXd rho_mass;  // sum_a mu rho
    Eigen::MatrixXd rho_reward;  // sum_a mu rho r_k, one column per value column
    double trace_norm = 0.0;     // max row sum of `trace`
};

void check_shapes(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu) {
    if (pi.n_states != spec.n_states || mu.n_states != spec.n_states || pi.n_joint != spec.n_joint_actions() ||
        mu.n_joint != spec.n_joint_actions()) {
        throw std::invalid_argument("policy shape does not match the spec");
    }
}

WeightedKernel weighted_kernel(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                               const CorrectionConfig& config, int columns) {
    check_shapes(spec, pi, mu);
    const int n = spec.n_states;
    WeightedKernel k;
    k.trace = Eigen::MatrixXd::Zero(n, n);
    k.rho_next = Eigen::MatrixXd::Zero(n, n);
    k.rho_mass = Eigen::VectorXd::Zero(n);
    k.rho_reward = Eigen::MatrixXd::Zero(n, columns);
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < mu.n_joint; ++j) {
            const double m = mu(s, j);
            if (m == 0.0) continue;
            const auto w = clipped_weights(pi(s, j), m, config);
            const auto r = spec.row(s, j);
            k.rho_mass(s) += m * w.rho;
            for (int col = 0; col < columns; ++col) k.rho_reward(s, col) += m * w.rho * spec.reward[col][r];
            for (const auto& t : spec.transition[r]) {
                k.trace(s, t.next_state) += m * w.c * t.prob;
                k.rho_next(s, t.next_state) += m * w.rho * t.prob;
            }
        }
    }
    k.trace_norm = k.trace.rowwise().sum().maxCoeff();
    return k;
}

struct Horizon {
    int steps = 1;
    double tail = 0.0;
};

// Smallest T with q^T * scale / (1 - q) <= tol.
Horizon certified_horizon(double q, double scale, double tol) {
    if (scale == 0.0 || q == 0.0) return {1, 0.0};
    if (!(q < 1.0)) throw std::runtime_error("trace kernel is not a contraction; cannot certify truncation");
    if (!(tol > 0.0)) throw std::invalid_argument("truncation tolerance must be positive");
    const double target = tol * (1.0 - q) / scale;
    int steps = 1;
    if (target < 1.0) steps = static_cast<int>(std::ceil(std::log(target) / std::log(q)));
    steps = std::max(steps, 1);
    if (steps > 50'000'000) throw std::runtime_error("truncation horizon too long");
    return {steps, std::pow(q, steps) * scale / (1.0 - q)};
}

// sum_{t < steps} (gamma * trace)^t g, by Horner's scheme.
Eigen::MatrixXd truncated_series(const Eigen::MatrixXd& trace, double gamma, const Eigen::MatrixXd& g, int steps) {
    Eigen::MatrixXd acc = g;
    for (int t = 1; t < steps; ++t) acc = g + gamma * (trace * acc);
    return acc;
}

Eigen::MatrixXd to_matrix(const ValueTable& v) {
    Eigen::MatrixXd m(v.n_states, v.columns);
    for (int s = 0; s < v.n_states; ++s) {
        for (int c = 0; c < v.columns; ++c) m(s, c) = v(s, c);
    }
    return m;
}

ValueTable from_matrix(const Eigen::MatrixXd& m) {
    ValueTable v(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int s = 0; s < v.n_states; ++s) {
        for (int c = 0; c < v.columns; ++c) v(s, c) = m(s, c);
    }
    return v;
}

// g = E_mu[rho (r + gamma V(s') - V(s))]; the reward term is optional so the
// same expression serves differences of value functions.
Eigen::MatrixXd td_drift(const WeightedKernel& k, double gamma, const Eigen::MatrixXd& v, bool with_reward) {
    Eigen::MatrixXd g = gamma * (k.rho_next * v) - k.rho_mass.asDiagonal() * v;
    if (with_reward) g += k.rho_reward;
    return g;
}

}  // namespace

OperatorResult apply_R(const DecPomdpSpec& spec, const ValueTable& value, const JointPolicy& pi,
                       const JointPolicy& mu, const CorrectionConfig& config, double trunc_tol) {
    if (value.n_states != spec.n_states) throw std::invalid_argument("value table has wrong number of states");
    const auto k = weighted_kernel(spec, pi, mu, config, value.columns);
    const Eigen::MatrixXd v = to_matrix(value);
    const Eigen::MatrixXd g = td_drift(k, spec.gamma, v, true);
    const auto horizon = certified_horizon(spec.gamma * k.trace_norm, g.cwiseAbs().maxCoeff(), trunc_tol);

    OperatorResult out;
    out.value = from_matrix(v + truncated_series(k.trace, spec.gamma, g, horizon.steps));
    out.horizon = horizon.steps;
    out.tail_bound = horizon.tail;
    return out;
}

FixedPointResult fixed_point(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                             const CorrectionConfig& config, double tol, int columns) {
    const auto beta = expected_rho(spec, pi, mu, config).beta;
    if (!(beta > 0.0)) throw std::invalid_argument("fixed_point: beta = 0, the contraction bound is vacuous");

    // R V = A V + b with the full (untruncated) series summed in closed form:
    //   A = I + N (gamma P_rho - D_rho),  b = N r_rho,  N = (I - gamma P_c)^{-1}.
    const int n = spec.n_states;
    const auto k = weighted_kernel(spec, pi, mu, config, columns);
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
    const auto neumann = (identity - spec.gamma * k.trace).partialPivLu();
    const Eigen::MatrixXd drift = spec.gamma * k.rho_next - Eigen::MatrixXd(k.rho_mass.asDiagonal());
    const Eigen::MatrixXd a = identity + neumann.solve(drift);
    const Eigen::MatrixXd b = neumann.solve(k.rho_reward);
    const Eigen::MatrixXd v = (identity - a).partialPivLu().solve(b);

    FixedPointResult out;
    out.value = from_matrix(v);
    // Certify against the truncated operator; polish by plain iteration if needed.
    for (;;) {
        const auto next = apply_R(spec, out.value, pi, mu, config, tol / 10.0);
        out.residual = sup_distance(next.value, out.value);
        if (out.residual <= tol) break;
        if (out.polish_iterations >= 100000) throw std::runtime_error("fixed_point: residual did not reach tolerance");
        out.value = next.value;
        ++out.polish_iterations;
    }
    return out;
}

double contraction_ratio(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                         const CorrectionConfig& config, const ValueTable& v1, const ValueTable& v2,
                         double trunc_tol) {
    const double gap = sup_distance(v1, v2);
    if (gap == 0.0) throw std::invalid_argument("contraction_ratio: V1 and V2 are identical");
    const auto k = weighted_kernel(spec, pi, mu, config, v1.columns);
    const Eigen::MatrixXd delta = to_matrix(v1) - to_matrix(v2);
    const Eigen::MatrixXd g = td_drift(k, spec.gamma, delta, false);
    const auto horizon = certified_horizon(spec.gamma * k.trace_norm, g.cwiseAbs().maxCoeff(), trunc_tol * gap);
    const Eigen::MatrixXd image = delta + truncated_series(k.trace, spec.gamma, g, horizon.steps);
    return image.cwiseAbs().maxCoeff() / gap;
}

TelescopingResult telescoping_bound(const DecPomdpSpec& spec, const JointPolicy& pi, const JointPolicy& mu,
                                    const CorrectionConfig& config, double trunc_tol) {
    const auto k = weighted_kernel(spec, pi, mu, config, 1);
    const auto rho = expected_rho(spec, pi, mu, config);
    const auto alpha = alpha_table(spec, pi, mu, config);
    const int n = spec.n_states;

    Eigen::MatrixXd alpha_bar = Eigen::MatrixXd::Zero(n, 1);
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < mu.n_joint; ++j) alpha_bar(s, 0) += mu(s, j) * alpha[static_cast<std::size_t>(s) * mu.n_joint + j];
    }
    const Eigen::MatrixXd rho_mass = k.rho_mass;

    const double q = spec.gamma * k.trace_norm;
    const double scale = std::max(spec.gamma * alpha_bar.cwiseAbs().maxCoeff(),
                                  (1.0 - spec.gamma) * rho_mass.cwiseAbs().maxCoeff());
    const auto horizon = certified_horizon(q, scale, trunc_tol);

    // t = 0 contributes alpha_0 = 1 - E rho_0; term t >= 1 carries c~_{t-2} alpha(s_{t-1}, a_{t-1}).
    const Eigen::MatrixXd later = spec.gamma * truncated_series(k.trace, spec.gamma, alpha_bar, horizon.steps);
    const Eigen::MatrixXd rho_sum = truncated_series(k.trace, spec.gamma, rho_mass, horizon.steps);

    TelescopingResult out;
    out.per_state.resize(n);
    out.identity.resize(n);
    for (int s = 0; s < n; ++s) {
        out.per_state[s] = (1.0 - rho.per_state[s]) + later(s, 0);
        out.identity[s] = 1.0 + (spec.gamma - 1.0) * rho_sum(s, 0);
    }
    out.max_value = *std::max_element(out.per_state.begin(), out.per_state.end());
    out.bound = 1.0 + (spec.gamma - 1.0) * rho.beta;
    out.horizon = horizon.steps;
    out.tail_bound = horizon.tail;
    return out;
}

}  // namespace matrace::oracle
