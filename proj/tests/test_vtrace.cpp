#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "matrace/vtrace/vtrace.hpp"
#include "oracles.hpp"

using namespace matrace;

namespace {

struct Sample {
    std::vector<double> r, v, c, rho;
    double gamma;
};

Sample random_sample(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.0, 1.5), g(0.5, 0.999);
    Sample s;
    s.gamma = g(rng);
    for (std::size_t t = 0; t < n; ++t) {
        s.r.push_back(u(rng));
        s.c.push_back(w(rng));
        s.rho.push_back(w(rng));
    }
    for (std::size_t t = 0; t <= n; ++t) s.v.push_back(5.0 * u(rng));
    return s;
}

}  // namespace

TEST_CASE("backward recursion equals the sum form") {
    std::mt19937_64 rng(0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto s = random_sample(rng, 1 + k % 8);
        const auto got = vtrace::vtrace_targets(s.r, s.v, s.c, s.rho, s.gamma);
        const auto want = testing_oracles::vtrace_sum_form(s.r, s.v, s.c, s.rho, s.gamma);
        for (std::size_t t = 0; t < got.size(); ++t) worst = std::max(worst, std::abs(got[t] - want[t]));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("on-policy with unit weights reduces to n-step returns") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 200; ++k) {
        auto s = random_sample(rng, 1 + k % 8);
        std::fill(s.c.begin(), s.c.end(), 1.0);
        std::fill(s.rho.begin(), s.rho.end(), 1.0);
        const auto got = vtrace::vtrace_targets(s.r, s.v, s.c, s.rho, s.gamma);
        const std::size_t n = s.r.size();
        for (std::size_t t = 0; t < n; ++t) {
            double g = 0.0, disc = 1.0;
            for (std::size_t i = t; i < n; ++i) {
                g += disc * s.r[i];
                disc *= s.gamma;
            }
            g += disc * s.v[n];
            CHECK(std::abs(got[t] - g) <= 1e-10);
        }
    }
}

TEST_CASE("zero trace weights give one-step targets") {
    std::mt19937_64 rng(2);
    auto s = random_sample(rng, 6);
    std::fill(s.c.begin(), s.c.end(), 0.0);
    const auto got = vtrace::vtrace_targets(s.r, s.v, s.c, s.rho, s.gamma);
    for (std::size_t t = 0; t < got.size(); ++t) {
        CHECK(got[t] == doctest::Approx(s.v[t] + s.rho[t] * (s.r[t] + s.gamma * s.v[t + 1] - s.v[t])));
    }
}

TEST_CASE("separate bootstrap overload matches") {
    std::mt19937_64 rng(3);
    const auto s = random_sample(rng, 5);
    const std::vector<double> head(s.v.begin(), s.v.end() - 1);
    CHECK(vtrace::vtrace_targets(s.r, head, s.v.back(), s.c, s.rho, s.gamma) ==
          vtrace::vtrace_targets(s.r, s.v, s.c, s.rho, s.gamma));
}

TEST_CASE("episode boundaries cut the trace and use next_values") {
    // Two episodes inside one unroll: [0, 1] terminates at t = 1, [2, 3] continues to the bootstrap.
    std::mt19937_64 rng(4);
    const auto s = random_sample(rng, 4);
    const std::vector<double> values(s.v.begin(), s.v.begin() + 4);
    const std::vector<double> next{s.v[1], 0.0, s.v[3], s.v[4]};
    const std::vector<double> cont{1.0, 0.0, 1.0, 1.0};
    const std::vector<double> boot{s.v[4]};
    vtrace::TraceInputs in{s.r, values, next, cont, boot, s.c, s.rho, s.gamma};
    const auto got = vtrace::vtrace_targets(in);

    const std::vector<double> r1(s.r.begin(), s.r.begin() + 2), c1(s.c.begin(), s.c.begin() + 2),
        p1(s.rho.begin(), s.rho.begin() + 2);
    const auto first = testing_oracles::vtrace_sum_form(r1, {s.v[0], s.v[1], 0.0}, c1, p1, s.gamma);
    const std::vector<double> r2(s.r.begin() + 2, s.r.end()), c2(s.c.begin() + 2, s.c.end()),
        p2(s.rho.begin() + 2, s.rho.end());
    const auto second = testing_oracles::vtrace_sum_form(r2, {s.v[2], s.v[3], s.v[4]}, c2, p2, s.gamma);
    CHECK(got[0] == doctest::Approx(first[0]).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(first[1]).epsilon(1e-12));
    CHECK(got[2] == doctest::Approx(second[0]).epsilon(1e-12));
    CHECK(got[3] == doctest::Approx(second[1]).epsilon(1e-12));
}

TEST_CASE("truncation bootstraps from the final observation value") {
    const std::vector<double> r{1.0}, v{0.5}, next{2.0}, cont{0.0}, boot{-7.0}, one{1.0};
    vtrace::TraceInputs in{r, v, next, cont, boot, one, one, 0.9};
    CHECK(vtrace::vtrace_targets(in)[0] == doctest::Approx(1.0 + 0.9 * 2.0));
}

TEST_CASE("importance weights clip before exponentiating") {
    CorrectionConfig cfg;
    cfg.c_bar = 0.5;
    cfg.rho_bar = 1.0;
    cfg.lambda = 0.9;
    const std::vector<double> target{std::log(0.9), std::log(0.1), 800.0};
    const std::vector<double> behavior{std::log(0.3), std::log(0.4), 0.0};
    const auto w = vtrace::importance_weights(target, behavior, cfg);
    CHECK(w.rho[0] == doctest::Approx(1.0));
    CHECK(w.c[0] == doctest::Approx(0.45));
    CHECK(w.rho[1] == doctest::Approx(0.25));
    CHECK(w.c[1] == doctest::Approx(0.9 * 0.25));
    CHECK(std::isfinite(w.rho[2]));
    CHECK(w.rho[2] == doctest::Approx(1.0));

    const std::vector<double> bad{-INFINITY};
    const std::vector<double> zero{0.0};
    CHECK_THROWS_AS(vtrace::importance_weights(bad, zero, cfg), std::invalid_argument);
}

TEST_CASE("property: weights are bounded by their truncation levels") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 3.0);
    CorrectionConfig cfg;
    cfg.c_bar = 0.7;
    cfg.rho_bar = 1.3;
    std::vector<double> a(500), b(500);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    const auto w = vtrace::importance_weights(a, b, cfg);
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(w.c[t] <= 0.7 + 1e-15);
        CHECK(w.rho[t] <= 1.3 + 1e-15);
        CHECK(w.c[t] >= 0.0);
        CHECK(w.c[t] <= w.rho[t] + 1e-15);
    }
}

TEST_CASE("advantage modes") {
    const std::vector<double> r{1.0, 0.0, 2.0}, v{0.5, 0.2, -0.3, 0.7}, rho{0.5, 1.0, 0.8}, c{1.0, 1.0, 1.0};
    const double g = 0.9;
    const auto targets = vtrace::vtrace_targets(r, v, c, rho, g);
    const auto eq7 = vtrace::pg_advantage(r, v, targets, rho, g, vtrace::AdvantageMode::eq7);
    const auto boot = vtrace::pg_advantage(r, v, targets, rho, g, vtrace::AdvantageMode::vtrace_bootstrap);
    for (int t = 0; t < 3; ++t) {
        CHECK(eq7[t] == doctest::Approx(rho[t] * (r[t] + g * v[t + 1] - v[t])));
        const double next = t + 1 < 3 ? targets[t + 1] : v[3];
        CHECK(boot[t] == doctest::Approx(rho[t] * (r[t] + g * next - v[t])));
    }
    CHECK(vtrace::parse_advantage_mode("vtrace_bootstrap") == vtrace::AdvantageMode::vtrace_bootstrap);
    CHECK_THROWS_AS(vtrace::parse_advantage_mode("gae"), std::invalid_argument);
}

TEST_CASE("length mismatches are rejected") {
    const std::vector<double> r{1.0, 2.0}, v{0.0, 0.0}, c{1.0, 1.0};
    CHECK_THROWS_AS(vtrace::vtrace_targets(r, v, c, c, 0.9), std::invalid_argument);
}
