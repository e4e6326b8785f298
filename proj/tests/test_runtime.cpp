#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/learner/learner.hpp"
#include "matrace/runtime/collector.hpp"
#include "matrace/runtime/queue.hpp"
#include "matrace/runtime/session.hpp"
#include "matrace/runtime/snapshot.hpp"
#include "matrace/runtime/wire.hpp"

using namespace matrace;
using namespace matrace::runtime;

namespace {

struct Rig {
    env::DecPomdpSpec spec;
    learner::TrainConfig cfg;
    nn::ActorLayout actor;
    nn::CriticLayout critic;
    std::shared_ptr<SnapshotStore> store;

    explicit Rig(env::DecPomdpSpec s, int framestack = 1) : spec(std::move(s)) {
        cfg.hidden = {16};
        cfg.framestack = framestack;
        actor = learner::actor_layout(spec, cfg);
        critic = learner::critic_layout(spec, cfg);
        store = std::make_shared<SnapshotStore>();
        store->set_archive_all(true);
        store->publish(nn::ActorNetworks::init(actor, 1), 0);
    }

    std::unique_ptr<Collector> collector(CollectorOptions o) {
        return make_collector(spec, actor, critic, store, o);
    }

    // New random parameters so successive snapshots differ.
    void publish(std::uint64_t seed) { store->publish(nn::ActorNetworks::init(actor, seed), 0); }
};

env::DecPomdpSpec grid() { return env::make_coop_gridworld(4, 4, 2, 1, 12); }

std::uint64_t steps_in(const std::vector<Unroll>& us) {
    std::uint64_t n = 0;
    for (const auto& u : us) n += static_cast<std::uint64_t>(u.length);
    return n;
}

// Recomputes every recorded behavior log-probability from the archived snapshot.
std::size_t replay_mismatches(const SnapshotStore& store, const Unroll& u, const nn::ActorLayout& layout) {
    const int in = layout.obs_dim * layout.framestack;
    const int a = layout.n_actions;
    std::size_t bad = 0;
    for (int t = 0; t < u.length; ++t) {
        const auto snap = store.find(u.versions[t]);
        if (!snap) return 1u << 30;
        for (int i = 0; i < u.n_agents; ++i) {
            const std::size_t k = static_cast<std::size_t>(t) * u.n_agents + i;
            std::span<const double> obs(u.actor_obs.data() + k * in, in);
            std::span<const std::uint8_t> legal(u.legal.data() + k * a, a);
            const auto lp = snap->actor.log_probs(i, obs, legal);
            if (lp[u.actions[k]] != u.behavior_logp[k]) ++bad;
        }
    }
    return bad;
}

}  // namespace

TEST_CASE("wire frames round-trip and decode incrementally") {
    wire::Frame f{wire::FrameType::action, 77, wire::encode_actions(std::vector<int>{3, 0, 4})};
    const auto bytes = wire::encode(f);
    CHECK(bytes.size() == 4 + 1 + 4 + 12);
    std::size_t used = 0;
    CHECK_FALSE(wire::decode(std::span(bytes).first(bytes.size() - 1), used));
    const auto back = wire::decode(bytes, used);
    REQUIRE(back);
    CHECK(used == bytes.size());
    CHECK(back->type == wire::FrameType::action);
    CHECK(back->version == 77);
    CHECK(wire::decode_actions(back->payload, 3) == std::vector<int>{3, 0, 4});

    std::vector<std::uint8_t> bad = bytes;
    bad[4] = 9;
    CHECK_THROWS(wire::decode(bad, used));
    std::vector<std::uint8_t> huge{0xff, 0xff, 0xff, 0x7f, 1, 0, 0, 0, 0};
    CHECK_THROWS(wire::decode(huge, used));
}

TEST_CASE("wire step reports carry truncation data") {
    wire::Dims d{2, 3, 4, 2};
    StepReport r;
    r.truncated = true;
    r.reward = -0.125;
    r.obs = {1, 2, 3, 4, 5, 6};
    r.state = {0.5, 0.25, 0, 1};
    r.final_obs = {6, 5, 4, 3, 2, 1};
    r.final_state = {1, 1, 1, 1};
    r.legal = {1, 0, 1, 1};
    const auto back = wire::decode_step(wire::encode_step(r, d), d);
    CHECK(back.truncated);
    CHECK_FALSE(back.terminated);
    CHECK_FALSE(back.first);
    CHECK(back.reward == r.reward);
    CHECK(back.obs == r.obs);
    CHECK(back.state == r.state);
    CHECK(back.final_obs == r.final_obs);
    CHECK(back.final_state == r.final_state);
    CHECK(back.legal == r.legal);

    wire::WorkerCounters c{123456789012ULL, 42, 17.5};
    const auto cb = wire::decode_report(wire::encode_report(c));
    CHECK(cb.env_steps == c.env_steps);
    CHECK(cb.episodes == 42);
    CHECK(cb.mean_round_trip_us == 17.5);
}

TEST_CASE("wire frames over a socketpair") {
    int fds[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    std::thread writer([&] {
        for (std::uint32_t k = 0; k < 100; ++k) {
            wire::write_frame(fds[0], {wire::FrameType::step, k, std::vector<std::uint8_t>(k * 37 % 1000, 7)});
        }
        ::close(fds[0]);
    });
    for (std::uint32_t k = 0; k < 100; ++k) {
        const auto f = wire::read_frame(fds[1]);
        REQUIRE(f);
        CHECK(f->version == k);
        CHECK(f->payload.size() == k * 37 % 1000);
    }
    CHECK_FALSE(wire::read_frame(fds[1]));
    writer.join();
    ::close(fds[1]);
}

TEST_CASE("snapshot store versions and lags") {
    SnapshotStore store(4);
    nn::ActorLayout l{nn::ActorMode::shared, 1, 2, 1, 2, {4}};
    CHECK_FALSE(store.latest());
    for (int k = 1; k <= 6; ++k) CHECK(store.publish(nn::ActorNetworks::init(l, k), k)->version == static_cast<std::uint32_t>(k));
    CHECK(store.latest()->version == 6);
    CHECK(store.at_lag(0)->version == 6);
    CHECK(store.at_lag(2)->version == 4);
    CHECK(store.at_lag(3)->version == 3);
    CHECK(store.at_lag(10)->version == 3);  // evicted: oldest retained
    CHECK(store.find(6));
    CHECK_FALSE(store.find(1));
    store.set_archive_all(true);
    store.publish(nn::ActorNetworks::init(l, 7), 7);
    for (int k = 0; k < 8; ++k) store.publish(nn::ActorNetworks::init(l, 8 + k), 8 + k);
    CHECK(store.find(7));
}

TEST_CASE("young history: fixed lag falls back to the oldest snapshot") {
    SnapshotStore store;
    nn::ActorLayout l{nn::ActorMode::shared, 1, 2, 1, 2, {4}};
    store.publish(nn::ActorNetworks::init(l, 1), 0);
    store.publish(nn::ActorNetworks::init(l, 2), 0);
    CHECK(store.at_lag(5)->version == 1);
}

TEST_CASE("staleness parsing") {
    CHECK(Staleness::parse("fresh").kind == StalenessKind::fresh);
    CHECK(Staleness::parse("natural").kind == StalenessKind::natural);
    const auto s = Staleness::parse("fixed_lag(5)");
    CHECK(s.kind == StalenessKind::fixed_lag);
    CHECK(s.lag == 5);
    CHECK(Staleness::parse("fixed_lag:3").lag == 3);
    CHECK(Staleness::parse(s.to_string()).lag == 5);
    CHECK_THROWS(Staleness::parse("fixed_lag(-1)"));
    CHECK_THROWS(Staleness::parse("stale"));
}

TEST_CASE("bounded queue blocks producers when full and drains on close") {
    BoundedQueue<int> q(2);
    CHECK(q.push(1));
    CHECK(q.push(2));
    std::atomic<bool> pushed{false};
    std::thread producer([&] {
        q.push(3);
        pushed = true;
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK_FALSE(pushed.load());
    CHECK(q.pop() == 1);
    producer.join();
    CHECK(pushed.load());
    q.close();
    CHECK_FALSE(q.push(4));
    CHECK(q.pop() == 2);
    CHECK(q.pop() == 3);
    CHECK_FALSE(q.pop());
}

TEST_CASE("sync collector: fixed-length unrolls with consistent shapes") {
    Rig rig(grid(), 2);
    CollectorOptions o;
    o.workers = 3;
    o.unroll_length = 10;
    auto c = rig.collector(o);
    const auto us = c->collect(6);
    REQUIRE(us.size() == 6);
    const int in = rig.critic.input_dim();
    for (const auto& u : us) {
        CHECK(u.complete);
        CHECK(u.length == 10);
        CHECK(u.actor_obs.size() == static_cast<std::size_t>(10 * 2 * rig.spec.obs_dim * 2));
        CHECK(u.actions.size() == 20u);
        CHECK(u.critic_x.size() == 1u);
        CHECK(u.critic_x[0].size() == static_cast<std::size_t>(10 * in));
        CHECK(u.bootstrap_x[0].size() == static_cast<std::size_t>(in));
        for (const auto& [t, x] : u.final_x) CHECK(u.truncated[t]);
        for (int t = 0; t < u.length; ++t) CHECK_FALSE((u.terminated[t] && u.truncated[t]));
    }
    const auto summary = c->shutdown();
    CHECK(summary.generated_steps == steps_in(us) + steps_in(summary.leftovers));
}

TEST_CASE("sync collection is deterministic for a fixed seed") {
    auto run = [] {
        Rig rig(grid());
        CollectorOptions o;
        o.workers = 2;
        o.unroll_length = 8;
        o.seed_base = 17;
        auto c = rig.collector(o);
        auto us = c->collect(5);
        c->shutdown();
        return us;
    };
    const auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].actions == b[k].actions);
        CHECK(a[k].behavior_logp == b[k].behavior_logp);
        CHECK(a[k].rewards == b[k].rewards);
        CHECK(a[k].critic_x == b[k].critic_x);
    }
}

TEST_CASE("frame stacks reset at episode boundaries") {
    Rig rig(env::make_matrix_game({{1, 0}, {0, 1}}), 3);
    CollectorOptions o;
    o.unroll_length = 4;
    auto c = rig.collector(o);
    const auto us = c->collect(2);
    // Every episode is one step long, so only the newest frame is ever non-zero.
    const int od = rig.spec.obs_dim;
    for (const auto& u : us) {
        for (int t = 0; t < u.length; ++t) {
            for (int i = 0; i < 2; ++i) {
                const double* x = u.actor_obs.data() + (static_cast<std::size_t>(t) * 2 + i) * od * 3;
                for (int k = 0; k < 2 * od; ++k) CHECK(x[k] == 0.0);
            }
        }
    }
    c->shutdown();
}

TEST_CASE("fixed-lag staleness serves version newest - k") {
    Rig rig(grid());
    CollectorOptions o;
    o.unroll_length = 5;
    o.staleness = Staleness::parse("fixed_lag(3)");
    auto c = rig.collector(o);
    const auto lagged = [](std::uint32_t newest) { return newest > 3 ? newest - 3 : 1u; };
    for (int k = 0; k < 8; ++k) {
        const auto us = c->collect(1);
        const auto newest = rig.store->latest()->version;
        // The first action of an unroll is inferred when the previous unroll closes,
        // before the publish that follows it.
        CHECK(us[0].versions[0] == lagged(k == 0 ? newest : newest - 1));
        for (std::size_t t = 1; t < us[0].versions.size(); ++t) CHECK(us[0].versions[t] == lagged(newest));
        rig.publish(100 + k);
    }
    c->shutdown();
}

TEST_CASE("natural staleness keeps one snapshot per unroll") {
    Rig rig(grid());
    CollectorOptions o;
    o.unroll_length = 6;
    o.staleness = Staleness::parse("natural");
    auto c = rig.collector(o);
    for (int k = 0; k < 4; ++k) {
        for (const auto& u : c->collect(2)) {
            for (const auto v : u.versions) CHECK(v == u.versions.front());
        }
        rig.publish(200 + k);
    }
    c->shutdown();
}

TEST_CASE("behavior log-probs replay bit-exactly from archived snapshots") {
    for (const auto mode : {ExecMode::sync, ExecMode::threads, ExecMode::processes}) {
        CAPTURE(to_string(mode));
        Rig rig(grid(), 2);
        CollectorOptions o;
        o.workers = 3;
        o.mode = mode;
        o.unroll_length = 8;
        o.staleness = Staleness::parse("fixed_lag(1)");
        auto c = rig.collector(o);
        std::size_t bad = 0, checked = 0;
        for (int k = 0; k < 5; ++k) {
            for (const auto& u : c->collect(3)) {
                bad += replay_mismatches(*rig.store, u, rig.actor);
                ++checked;
            }
            rig.publish(300 + k);
        }
        auto summary = c->shutdown();
        for (const auto& u : summary.leftovers) bad += replay_mismatches(*rig.store, u, rig.actor);
        CHECK(checked == 15);
        CHECK(bad == 0);
    }
}

TEST_CASE("conservation: generated steps equal consumed steps at shutdown") {
    for (const auto mode : {ExecMode::threads, ExecMode::processes}) {
        CAPTURE(to_string(mode));
        Rig rig(grid());
        CollectorOptions o;
        o.workers = 4;
        o.mode = mode;
        o.unroll_length = 16;
        o.queue_capacity = 2;
        auto c = rig.collector(o);
        std::uint64_t consumed = 0;
        while (consumed < 20000) consumed += steps_in(c->collect(8));
        const auto summary = c->shutdown();
        consumed += steps_in(summary.leftovers);
        CHECK(summary.generated_steps == consumed);
        std::uint64_t reported = 0;
        for (const auto& w : summary.workers) {
            reported += w.env_steps;
            CHECK(w.env_steps == w.consumed_steps);
        }
        CHECK(reported == summary.generated_steps);
    }
}

TEST_CASE("a crashed worker is restarted and accounting still balances") {
    for (const auto mode : {ExecMode::threads, ExecMode::processes}) {
        CAPTURE(to_string(mode));
        Rig rig(grid());
        CollectorOptions o;
        o.workers = 2;
        o.mode = mode;
        o.unroll_length = 8;
        o.crash_worker = 1;
        o.crash_after_steps = 50;
        auto c = rig.collector(o);
        std::uint64_t consumed = 0;
        while (consumed < 2000) consumed += steps_in(c->collect(4));
        const auto summary = c->shutdown();
        consumed += steps_in(summary.leftovers);
        CHECK(summary.generated_steps == consumed);
        REQUIRE(summary.workers.size() == 2);
        CHECK(summary.workers[0].restarts == 0);
        CHECK(summary.workers[1].restarts == 1);
        CHECK(summary.workers[1].env_steps > 50);
    }
}

TEST_CASE("backpressure bounds the experience held by the runtime") {
    Rig rig(grid());
    CollectorOptions o;
    o.workers = 3;
    o.mode = ExecMode::threads;
    o.unroll_length = 8;
    o.queue_capacity = 2;
    auto c = rig.collector(o);
    c->collect(1);
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    const auto summary = c->shutdown();
    // Queue contents plus at most one blocked and one partial unroll per worker.
    CHECK(summary.leftovers.size() <= o.queue_capacity + 2 * static_cast<std::size_t>(o.workers));
    CHECK(summary.generated_steps <= 8u * (1 + o.queue_capacity + 2 * o.workers));
}

TEST_CASE("throughput grows with workers when environment steps sleep") {
    auto rate = [](int workers) {
        Rig rig(grid());
        CollectorOptions o;
        o.workers = workers;
        o.mode = ExecMode::threads;
        o.unroll_length = 8;
        o.env_latency_us = 2000.0;
        o.latency_sleeps = true;
        auto c = rig.collector(o);
        c->collect(workers);  // warm-up
        const auto t0 = std::chrono::steady_clock::now();
        const auto steps = steps_in(c->collect(4 * workers));
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c->shutdown();
        return steps / sec;
    };
    const double one = rate(1), four = rate(4);
    CHECK(four > 2.0 * one);
}

TEST_CASE("throughput meter averages over its window") {
    ThroughputMeter m(1.0);
    const auto t0 = ThroughputMeter::Clock::now();
    m.record(100, t0);
    m.record(100, t0 + std::chrono::milliseconds(500));
    CHECK(m.rate(t0 + std::chrono::milliseconds(900)) == doctest::Approx(200.0));
    CHECK(m.rate(t0 + std::chrono::milliseconds(1200)) == doctest::Approx(100.0));
}

TEST_CASE("batched inference groups requests by parameter vector") {
    Rig rig(grid());
    rig.publish(5);
    const auto a = rig.store->find(1), b = rig.store->find(2);
    std::vector<double> obs(rig.spec.obs_dim, 0.0);
    obs[3] = 1.0;
    std::vector<std::uint8_t> legal(2 * rig.spec.n_actions, 1);
    InferenceRequest ra{a, {obs, obs}, legal}, rb{b, {obs, obs}, legal};
    const auto out = evaluate({&ra, &rb, &ra});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == out[2]);
    CHECK(out[0][0] == a->actor.logits(0, obs, {}));
    CHECK(out[1][1] == b->actor.logits(1, obs, {}));
}
