#pragma once
// Reference implementations used only by the tests. They are written
// independently of the library code they check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/nn/mlp.hpp"
#include "matrace/oracle/oracle.hpp"

namespace testing_oracles {

// Dense Gaussian elimination with partial pivoting.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= a[i][k] * x[k];
        x[i] = acc / a[i][i];
    }
    return x;
}

// V = r_pi + gamma P_pi V.
inline std::vector<double> direct_value(const matrace::env::DecPomdpSpec& spec,
                                        const matrace::oracle::JointPolicy& pol) {
    const int n = spec.n_states;
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    std::vector<double> b(n, 0.0);
    for (int s = 0; s < n; ++s) {
        a[s][s] += 1.0;
        for (int j = 0; j < pol.n_joint; ++j) {
            const double p = pol(s, j);
            const auto r = spec.row(s, j);
            b[s] += p * spec.reward[0][r];
            for (const auto& t : spec.transition[r]) a[s][t.next_state] -= spec.gamma * p * t.prob;
        }
    }
    return solve(a, b);
}

inline matrace::oracle::JointPolicy corrected(const matrace::oracle::JointPolicy& pi,
                                              const matrace::oracle::JointPolicy& mu, double rho_bar) {
    auto out = pi;
    for (int s = 0; s < pi.n_states; ++s) {
        double z = 0.0;
        for (int j = 0; j < pi.n_joint; ++j) z += std::min(rho_bar * mu(s, j), pi(s, j));
        for (int j = 0; j < pi.n_joint; ++j) {
            out.prob[static_cast<std::size_t>(s) * pi.n_joint + j] = std::min(rho_bar * mu(s, j), pi(s, j)) / z;
        }
    }
    return out;
}

inline double sup(const std::vector<double>& a, const matrace::oracle::ValueTable& b) {
    double m = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) m = std::max(m, std::abs(a[s] - b(static_cast<int>(s))));
    return m;
}

// v_s = V(x_s) + sum_{t>=s} gamma^{t-s} (prod_{s<=i<t} c_i) rho_t delta_t; `v` has T + 1 entries.
inline std::vector<double> vtrace_sum_form(const std::vector<double>& r, const std::vector<double>& v,
                                           const std::vector<double>& c, const std::vector<double>& rho,
                                           double gamma) {
    const std::size_t n = r.size();
    std::vector<double> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        double acc = v[s];
        double trace = 1.0;
        double disc = 1.0;
        for (std::size_t t = s; t < n; ++t) {
            acc += disc * trace * rho[t] * (r[t] + gamma * v[t + 1] - v[t]);
            trace *= c[t];
            disc *= gamma;
        }
        out[s] = acc;
    }
    return out;
}

struct GradCheck {
    double max_rel_error = 0.0;
    int coordinates = 0;
};

// Central differences of L = sum_b <w_b, f(x_b)> on `samples` random coordinates.
inline GradCheck finite_difference_check(const matrace::nn::MlpSpec& spec, std::uint64_t seed, int samples,
                                         int batch = 3, double h = 1e-6) {
    using namespace matrace::nn;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto params = init_params(spec, seed);
    // Non-zero biases so the check covers them.
    for (const auto& layer : params.layers()) {
        auto vals = params.mutable_values();
        for (int o = 0; o < layer.out; ++o) vals[layer.biases() + o] = 0.1 * normal(rng);
    }
    std::vector<double> x(static_cast<std::size_t>(batch) * spec.input_dim);
    for (auto& v : x) v = normal(rng);
    std::vector<double> w(static_cast<std::size_t>(batch) * spec.total_output());
    for (auto& v : w) v = normal(rng);

    auto loss = [&](const ParamVector& p) {
        const auto out = forward(p, spec, x, batch);
        double acc = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) acc += w[k] * out[k];
        return acc;
    };
    ForwardCache cache;
    forward(params, spec, x, batch, &cache);
    const auto grad = backward(params, spec, cache, w);

    GradCheck out;
    std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
    for (int k = 0; k < samples; ++k) {
        const auto i = pick(rng);
        auto plus = params, minus = params;
        plus.mutable_values()[i] += h;
        minus.mutable_values()[i] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        const double g = grad.values()[i];
        const double rel = std::abs(g - fd) / std::max(1e-6, std::abs(g) + std::abs(fd));
        out.max_rel_error = std::max(out.max_rel_error, rel);
        ++out.coordinates;
    }
    return out;
}

}  // namespace testing_oracles
