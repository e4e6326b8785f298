#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/oracle/oracle.hpp"

using namespace matrace;

TEST_CASE("builtin environments are valid") {
    CHECK(env::validate_spec(env::make_bandit({1.0, 0.0})).empty());
    CHECK(env::validate_spec(env::make_matrix_game({{10, 0, 0}, {0, 5, 0}, {0, 0, 8}})).empty());
    CHECK(env::validate_spec(env::make_coop_gridworld(5, 5, 2, 1, 30)).empty());
    CHECK(env::validate_spec(env::make_coop_gridworld(3, 2, 1, 0, 5)).empty());
}

TEST_CASE("invalid builder arguments are rejected") {
    CHECK_THROWS_AS(env::make_matrix_game({{1, 2}, {3}}), std::invalid_argument);
    CHECK_THROWS_AS(env::make_coop_gridworld(1, 1, 1, 1, 5), std::invalid_argument);
    CHECK_THROWS_AS(env::make_coop_gridworld(5, 5, 2, -1, 5), std::invalid_argument);
    CHECK_THROWS_AS(env::make_coop_gridworld(5, 5, 2, 1, 0), std::invalid_argument);
}

TEST_CASE("validate_spec reports broken rows") {
    auto spec = env::make_bandit({1.0, 0.0});
    spec.transition[0][0].prob = 0.5;
    CHECK_FALSE(env::validate_spec(spec).empty());
    CHECK_THROWS_AS(env::require_valid(spec), std::invalid_argument);

    spec = env::make_bandit({1.0, 0.0});
    spec.initial_dist.assign(spec.n_states, 0.0);
    CHECK_FALSE(env::validate_spec(spec).empty());
}

TEST_CASE("joint action indexing round-trips, agent 0 most significant") {
    const auto spec = env::make_coop_gridworld(3, 3, 2, 1, 10);
    for (int j = 0; j < spec.n_joint_actions(); ++j) {
        const auto acts = spec.joint_actions(j);
        CHECK(spec.joint_index(acts) == j);
        CHECK(j == acts[0] * spec.n_actions + acts[1]);
    }
}

TEST_CASE("matrix game: one play then absorbing termination") {
    const auto spec = env::make_matrix_game({{10, 0, 0}, {0, 5, 0}, {0, 0, 8}});
    CHECK(spec.optimal_return == doctest::Approx(10.0));
    env::Episode ep(spec, 3);
    ep.reset();
    const std::vector<int> a{2, 2};
    const auto st = ep.step(a);
    CHECK(st.reward == 8.0);
    CHECK(st.terminated);
    CHECK_FALSE(st.truncated);
    // Absorbing: further steps yield zero reward and stay put.
    env::Rng rng(1);
    const auto again = env::step(spec, st.state_index, a, rng);
    CHECK(again.reward == 0.0);
    CHECK(again.state_index == st.state_index);
}

TEST_CASE("episode limit truncates non-terminal states") {
    const auto spec = env::make_coop_gridworld(5, 5, 2, 1, 4);
    env::Episode ep(spec, 11);
    ep.reset();
    const std::vector<int> stay{0, 0};
    env::EpisodeStep st;
    for (int t = 0; t < 4; ++t) {
        st = ep.step(stay);
        if (t < 3) CHECK_FALSE(st.done);
    }
    CHECK(st.truncated);
    CHECK_FALSE(st.terminated);
    CHECK(st.done);
}

TEST_CASE("illegal or malformed actions throw") {
    const auto spec = env::make_bandit({1.0, 0.0});
    env::Episode ep(spec, 0);
    ep.reset();
    CHECK_THROWS_AS(ep.step(std::vector<int>{2}), std::invalid_argument);
    CHECK_THROWS_AS(ep.step(std::vector<int>{0, 0}), std::invalid_argument);
}

TEST_CASE("same seed gives the same trajectory") {
    const auto spec = env::make_coop_gridworld(4, 4, 2, 1, 20);
    auto run = [&](std::uint64_t seed) {
        env::Episode ep(spec, seed);
        std::vector<int> states{ep.reset().state_index};
        env::Rng policy(99);
        for (int t = 0; t < 200; ++t) {
            std::vector<int> a{static_cast<int>(policy() % 5), static_cast<int>(policy() % 5)};
            const auto st = ep.step(a);
            states.push_back(st.state_index);
            if (st.done) states.push_back(ep.reset().state_index);
        }
        return states;
    };
    CHECK(run(5) == run(5));
}

TEST_CASE("sampled transitions follow the kernel (Monte Carlo)") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto prob = oracle::random_problem(seed);
        const auto& spec = prob.spec;
        env::Rng rng(seed + 100);
        int s = 0;
        while (spec.is_terminal(s)) ++s;
        const auto acts = spec.joint_actions(0);
        const auto& row = spec.transition[spec.row(s, 0)];
        const int n = 40000;
        std::map<int, int> counts;
        for (int k = 0; k < n; ++k) ++counts[env::step(spec, s, acts, rng).state_index];
        for (const auto& tr : row) {
            const double p = tr.prob;
            const double sd = std::sqrt(p * (1 - p) / n);
            CHECK(std::abs(counts[tr.next_state] / double(n) - p) <= 5 * sd + 1e-12);
        }
    }
}

TEST_CASE("reset samples the initial distribution") {
    const auto spec = env::make_coop_gridworld(3, 3, 1, 1, 10);
    env::Rng rng(7);
    std::vector<int> counts(spec.n_states, 0);
    const int n = 50000;
    for (int k = 0; k < n; ++k) ++counts[env::reset(spec, rng).state_index];
    for (int s = 0; s < spec.n_states; ++s) {
        const double p = spec.initial_dist[s];
        CHECK(std::abs(counts[s] / double(n) - p) <= 5 * std::sqrt(p * (1 - p) / n) + 1e-12);
    }
}

TEST_CASE("gridworld observations are local windows") {
    const auto spec = env::make_coop_gridworld(5, 5, 2, 1, 30);
    CHECK(spec.obs_dim == 3 * 9);
    for (int s = 0; s < spec.n_states; ++s) {
        for (int i = 0; i < spec.n_agents; ++i) {
            for (double x : spec.observation(i, s)) CHECK((x == 0.0 || x == 1.0));
        }
    }
}

TEST_CASE("JSON round trip preserves the spec") {
    for (const auto& spec : {env::make_matrix_game({{1, 0}, {0, 2}}), env::make_coop_gridworld(3, 3, 2, 1, 7),
                             oracle::random_problem(4).spec}) {
        const auto back = env::spec_from_json(env::spec_to_json(spec));
        CHECK(back.n_states == spec.n_states);
        CHECK(back.n_agents == spec.n_agents);
        CHECK(back.gamma == spec.gamma);
        CHECK(back.observations == spec.observations);
        CHECK(back.state_features == spec.state_features);
        CHECK(back.reward == spec.reward);
        CHECK(back.initial_dist == spec.initial_dist);
        CHECK(back.terminal == spec.terminal);
        CHECK(back.legal == spec.legal);
        for (std::size_t r = 0; r < spec.transition.size(); ++r) {
            std::vector<double> a(spec.n_states, 0.0), b(spec.n_states, 0.0);
            for (const auto& t : spec.transition[r]) a[t.next_state] += t.prob;
            for (const auto& t : back.transition[r]) b[t.next_state] += t.prob;
            CHECK(a == b);
        }
    }
}

TEST_CASE("malformed JSON is rejected with a message") {
    CHECK_THROWS_AS(env::spec_from_json(nlohmann::json{{"n_agents", 1}}), std::invalid_argument);
}
