#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "matrace/oracle/battery.hpp"
#include "matrace/oracle/oracle.hpp"
#include "oracles.hpp"

using namespace matrace;
using namespace matrace::oracle;
using testing_oracles::direct_value;

namespace {

struct Problem {
    RandomProblem raw;
    JointPolicy pi, mu;
};

Problem make(std::uint64_t seed) {
    Problem p{random_problem(seed), {}, {}};
    const auto index = index_observations(p.raw.spec);
    p.pi = joint_policy(p.raw.spec, p.raw.pi, index);
    p.mu = joint_policy(p.raw.spec, p.raw.mu, index);
    return p;
}

int sample(const std::vector<double>& w, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
}

}  // namespace

TEST_CASE("exact_value matches a direct linear solve") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = make(seed);
        const auto v = exact_value(p.raw.spec, p.pi, 1e-13);
        const auto ref = direct_value(p.raw.spec, p.pi);
        for (int s = 0; s < p.raw.spec.n_states; ++s) CHECK(v(s) == doctest::Approx(ref[s]).epsilon(1e-9));
    }
}

TEST_CASE("exact_value matches Monte Carlo returns") {
    const auto p = make(3);
    const auto& spec = p.raw.spec;
    const auto v = exact_value(spec, p.pi, 1e-13);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = 20000;
    const int horizon = static_cast<int>(std::ceil(std::log(1e-6) / std::log(spec.gamma)));
    for (int s0 = 0; s0 < spec.n_states; ++s0) {
        double sum = 0.0, sq = 0.0;
        for (int k = 0; k < n; ++k) {
            int s = s0;
            double g = 0.0, disc = 1.0;
            for (int t = 0; t < horizon; ++t) {
                std::vector<double> row(p.pi.prob.begin() + s * p.pi.n_joint,
                                        p.pi.prob.begin() + (s + 1) * p.pi.n_joint);
                const int j = sample(row, unit(rng));
                const auto r = spec.row(s, j);
                g += disc * spec.reward[0][r];
                disc *= spec.gamma;
                std::vector<double> next(spec.n_states, 0.0);
                for (const auto& tr : spec.transition[r]) next[tr.next_state] += tr.prob;
                s = sample(next, unit(rng));
            }
            sum += g;
            sq += g * g;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sq / n - mean * mean) / n);
        CHECK(std::abs(mean - v(s0)) <= 5 * se + 1e-5);
    }
}

TEST_CASE("apply_R matches a Monte Carlo estimate of the sum form") {
    const auto p = make(7);
    const auto& spec = p.raw.spec;
    const auto& cfg = p.raw.config;
    ValueTable v(spec.n_states, 1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& x : v.v) x = 4.0 * unit(rng) - 2.0;
    const auto exact = apply_R(spec, v, p.pi, p.mu, cfg, 1e-12).value;

    const int n = 20000;
    const int horizon = static_cast<int>(std::ceil(std::log(1e-7) / std::log(spec.gamma)));
    for (int s0 = 0; s0 < spec.n_states; ++s0) {
        double sum = 0.0, sq = 0.0;
        for (int k = 0; k < n; ++k) {
            int s = s0;
            double total = 0.0, trace = 1.0;
            for (int t = 0; t < horizon && trace > 1e-12; ++t) {
                std::vector<double> row(p.mu.prob.begin() + s * p.mu.n_joint,
                                        p.mu.prob.begin() + (s + 1) * p.mu.n_joint);
                const int j = sample(row, unit(rng));
                const double ratio = p.pi(s, j) / p.mu(s, j);
                const double rho = std::min(cfg.rho_bar, ratio);
                const double c = cfg.lambda * std::min(cfg.c_bar, ratio);
                const auto r = spec.row(s, j);
                std::vector<double> next(spec.n_states, 0.0);
                for (const auto& tr : spec.transition[r]) next[tr.next_state] += tr.prob;
                const int s1 = sample(next, unit(rng));
                total += trace * rho * (spec.reward[0][r] + spec.gamma * v(s1) - v(s));
                trace *= spec.gamma * c;
                s = s1;
            }
            sum += total;
            sq += total * total;
        }
        const double mean = v(s0) + sum / n;
        const double se = std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)) / n);
        CHECK(std::abs(mean - exact(s0)) <= 5 * se + 1e-6);
    }
}

TEST_CASE("fixed point equals the value of the corrected policy (independent solve)") {
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const auto p = make(seed);
        const auto fp = fixed_point(p.raw.spec, p.pi, p.mu, p.raw.config, 1e-11);
        const auto ref = direct_value(p.raw.spec, testing_oracles::corrected(p.pi, p.mu, p.raw.config.rho_bar));
        for (int s = 0; s < p.raw.spec.n_states; ++s) CHECK(std::abs(fp.value(s) - ref[s]) <= 1e-6);
        CHECK(fp.residual <= 1e-11);
    }
}

TEST_CASE("iterating apply_R converges to the closed-form fixed point") {
    const auto p = make(11);
    const auto fp = fixed_point(p.raw.spec, p.pi, p.mu, p.raw.config, 1e-11);
    ValueTable v(p.raw.spec.n_states, 1);
    for (int it = 0; it < 5000; ++it) {
        const auto next = apply_R(p.raw.spec, v, p.pi, p.mu, p.raw.config, 1e-13).value;
        const double d = sup_distance(next, v);
        v = next;
        if (d < 1e-12) break;
    }
    CHECK(sup_distance(v, fp.value) <= 1e-8);
}

TEST_CASE("corrected policy: rows stochastic, reduces to pi for large rho_bar") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = make(seed);
        const auto pt = corrected_policy(p.pi, p.mu, p.raw.config.rho_bar);
        CHECK_NOTHROW(require_stochastic(pt));
        const auto ref = testing_oracles::corrected(p.pi, p.mu, p.raw.config.rho_bar);
        for (std::size_t k = 0; k < pt.prob.size(); ++k) CHECK(pt.prob[k] == doctest::Approx(ref.prob[k]).epsilon(1e-12));
        const auto wide = corrected_policy(p.pi, p.mu, 1e9);
        for (std::size_t k = 0; k < wide.prob.size(); ++k) CHECK(std::abs(wide.prob[k] - p.pi.prob[k]) <= 1e-12);
    }
}

TEST_CASE("clipped weights follow the truncation formulas") {
    CorrectionConfig cfg;
    cfg.c_bar = 0.5;
    cfg.rho_bar = 2.0;
    cfg.lambda = 0.8;
    const auto w = clipped_weights(0.6, 0.2, cfg);  // ratio 3
    CHECK(w.rho == doctest::Approx(2.0));
    CHECK(w.c == doctest::Approx(0.4));
    const auto small = clipped_weights(0.1, 0.4, cfg);  // ratio 0.25
    CHECK(small.rho == doctest::Approx(0.25));
    CHECK(small.c == doctest::Approx(0.2));
    cfg.c_bar = 3.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("beta is the minimum expected clipped ratio and at most 1") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto p = make(seed);
        const auto table = expected_rho(p.raw.spec, p.pi, p.mu, p.raw.config);
        double beta = 1e300;
        for (int s = 0; s < p.raw.spec.n_states; ++s) {
            double e = 0.0;
            for (int j = 0; j < p.mu.n_joint; ++j) {
                e += p.mu(s, j) * std::min(p.raw.config.rho_bar, p.pi(s, j) / p.mu(s, j));
            }
            CHECK(table.per_state[s] == doctest::Approx(e).epsilon(1e-12));
            beta = std::min(beta, e);
        }
        CHECK(table.beta == doctest::Approx(beta).epsilon(1e-12));
        CHECK(table.beta <= 1.0 + 1e-12);
    }
}

TEST_CASE("property: alpha is non-negative whenever c_bar <= rho_bar") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto p = make(seed);
        REQUIRE(p.raw.config.c_bar <= p.raw.config.rho_bar);
        const auto alpha = alpha_table(p.raw.spec, p.pi, p.mu, p.raw.config);
        CHECK(*std::min_element(alpha.begin(), alpha.end()) >= -1e-12);
    }
}

TEST_CASE("property: contraction ratio respects 1 - (1 - gamma) beta") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto p = make(seed);
        const double beta = expected_rho(p.raw.spec, p.pi, p.mu, p.raw.config).beta;
        const double bound = 1.0 - (1.0 - p.raw.spec.gamma) * beta;
        for (int k = 0; k < 10; ++k) {
            ValueTable a(p.raw.spec.n_states, 1), b(p.raw.spec.n_states, 1);
            for (auto& x : a.v) x = dist(rng);
            for (auto& x : b.v) x = dist(rng);
            CHECK(contraction_ratio(p.raw.spec, p.pi, p.mu, p.raw.config, a, b, 1e-12) <= bound + 1e-9);
        }
    }
}

TEST_CASE("telescoping sum agrees with its closed form and the bound") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto p = make(seed);
        const auto t = telescoping_bound(p.raw.spec, p.pi, p.mu, p.raw.config, 1e-12);
        for (int s = 0; s < p.raw.spec.n_states; ++s) CHECK(std::abs(t.per_state[s] - t.identity[s]) <= 1e-9);
        CHECK(t.max_value <= t.bound + 1e-9);
    }
}

TEST_CASE("battery passes on a small run and flags the injected bug") {
    BatteryOptions opts;
    opts.n_specs = 8;
    opts.value_pairs = 20;
    const auto good = run_battery(opts);
    CHECK(good.rows.size() == 8);
    CHECK(good.passed());

    opts.inject_unclipped_rho = true;
    const auto bad = run_battery(opts);
    CHECK_FALSE(bad.passed());
    REQUIRE_FALSE(bad.violations().empty());
    CHECK(bad.violations().front().rfind("seed=", 0) == 0);

    opts.n_specs = 0;
    opts.inject_unclipped_rho = false;
    const auto empty = run_battery(opts);
    CHECK(empty.rows.empty());
    CHECK(empty.passed());
}

TEST_CASE("battery CSV has one header and matching column counts") {
    BatteryOptions opts;
    opts.n_specs = 3;
    opts.value_pairs = 5;
    std::ostringstream out;
    write_battery_csv(out, run_battery(opts));
    std::istringstream in(out.str());
    std::string header, line;
    std::getline(in, header);
    CHECK(header == battery_csv_header());
    const auto cols = std::count(header.begin(), header.end(), ',');
    int rows = 0;
    while (std::getline(in, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == cols);
        ++rows;
    }
    CHECK(rows == 3);
}
