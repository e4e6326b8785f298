#include <chrono>
#include <stdexcept>
#include <thread>

#include "matrace/runtime/collector.hpp"
#include "matrace/runtime/wire.hpp"

namespace matrace::runtime {

ExecMode parse_exec_mode(const std::string& name) {
    if (name == "sync") return ExecMode::sync;
    if (name == "threads") return ExecMode::threads;
    if (name == "processes") return ExecMode::processes;
    throw std::invalid_argument("unknown execution mode '" + name + "' (expected sync, threads or processes)");
}

std::string to_string(ExecMode mode) {
    switch (mode) {
        case ExecMode::sync: return "sync";
        case ExecMode::threads: return "threads";
        case ExecMode::processes: return "processes";
    }
    return "?";
}

std::uint64_t worker_env_seed(std::uint64_t seed_base, int id, int restarts) {
    return seed_base + static_cast<std::uint64_t>(id) + 0x100000000ULL * static_cast<std::uint64_t>(restarts);
}

std::uint64_t worker_action_seed(std::uint64_t seed_base, int id) {
    return (seed_base + static_cast<std::uint64_t>(id)) ^ 0xa0761d6478bd642fULL;
}

WorkerEnv::WorkerEnv(const env::DecPomdpSpec& spec, std::uint64_t seed, double latency_us, bool latency_sleeps)
    : spec_(&spec), episode_(spec, seed), latency_us_(latency_us), latency_sleeps_(latency_sleeps) {}

StepReport WorkerEnv::observe(int state) {
    StepReport r;
    for (int i = 0; i < spec_->n_agents; ++i) {
        const auto o = spec_->observation(i, state);
        r.obs.insert(r.obs.end(), o.begin(), o.end());
        for (int a = 0; a < spec_->n_actions; ++a) r.legal.push_back(spec_->is_legal(state, i, a));
    }
    const auto f = spec_->state_feature(state);
    r.state.assign(f.begin(), f.end());
    return r;
}

StepReport WorkerEnv::start() {
    const auto r = episode_.reset();
    auto out = observe(r.state_index);
    out.first = true;
    return out;
}

StepReport WorkerEnv::advance(std::span<const int> actions) {
    if (latency_us_ > 0.0) {
        const auto cost = std::chrono::duration<double, std::micro>(latency_us_);
        if (latency_sleeps_) {
            std::this_thread::sleep_for(cost);
        } else {
            const auto until = std::chrono::steady_clock::now() + cost;
            while (std::chrono::steady_clock::now() < until) {
            }
        }
    }
    const auto st = episode_.step(actions);
    ++steps_;
    if (!st.done) {
        auto out = observe(st.state_index);
        out.reward = st.reward;
        return out;
    }
    ++episodes_;
    StepReport final_view;
    if (st.truncated) final_view = observe(st.state_index);
    const auto r = episode_.reset();
    auto out = observe(r.state_index);
    out.reward = st.reward;
    out.terminated = st.terminated;
    out.truncated = st.truncated;
    out.final_obs = std::move(final_view.obs);
    out.final_state = std::move(final_view.state);
    return out;
}

void run_worker(int fd, const env::DecPomdpSpec& spec, const WorkerParams& params) {
    using Clock = std::chrono::steady_clock;
    const wire::Dims dims{spec.n_agents, spec.obs_dim, spec.state_dim, spec.n_actions};
    WorkerEnv env(spec, params.seed, params.latency_us, params.latency_sleeps);
    wire::write_frame(fd, {wire::FrameType::hello, static_cast<std::uint32_t>(params.id), {}});
    auto report = env.start();
    double round_trip_us = 0.0;
    std::uint64_t exchanges = 0;
    for (;;) {
        const auto sent = Clock::now();
        wire::write_frame(fd, {wire::FrameType::step, 0, wire::encode_step(report, dims)});
        const auto frame = wire::read_frame(fd);
        if (!frame) return;  // learner went away
        if (frame->type == wire::FrameType::stop) break;
        if (frame->type != wire::FrameType::action) throw std::runtime_error("worker: unexpected frame type");
        round_trip_us += std::chrono::duration<double, std::micro>(Clock::now() - sent).count();
        ++exchanges;
        const auto actions = wire::decode_actions(frame->payload, spec.n_agents);
        if (params.crash_after_steps > 0 && env.steps() >= params.crash_after_steps) {
            throw std::runtime_error("injected worker crash");
        }
        report = env.advance(actions);
    }
    wire::WorkerCounters counters{env.steps(), env.episodes(), exchanges ? round_trip_us / exchanges : 0.0};
    wire::write_frame(fd, {wire::FrameType::report, static_cast<std::uint32_t>(params.id),
                           wire::encode_report(counters)});
}

namespace {

/// All workers stepped round-robin on the calling thread.
class SyncCollector final : public Collector {
public:
    SyncCollector(const env::DecPomdpSpec& spec, const nn::ActorLayout& actor, const nn::CriticLayout& critic,
                  std::shared_ptr<SnapshotStore> store, const CollectorOptions& options)
        : options_(options) {
        for (int w = 0; w < options.workers; ++w) {
            envs_.emplace_back(spec, worker_env_seed(options.seed_base, w), options.env_latency_us,
                               options.latency_sleeps);
            SessionConfig sc{w, options.unroll_length, options.staleness, worker_action_seed(options.seed_base, w)};
            sessions_.emplace_back(spec, actor, critic, store, sc);
        }
        actions_.resize(options.workers);
        inference_us_.assign(options.workers, 0.0);
        inference_calls_.assign(options.workers, 0);
    }

    std::vector<Unroll> collect(int count) override {
        while (static_cast<int>(ready_.size()) < count) {
            for (int w = 0; w < options_.workers; ++w) step_worker(w);
        }
        std::vector<Unroll> out(std::make_move_iterator(ready_.begin()),
                                std::make_move_iterator(ready_.begin() + count));
        ready_.erase(ready_.begin(), ready_.begin() + count);
        return out;
    }

    CollectorSummary shutdown() override {
        CollectorSummary s;
        for (auto& u : ready_) s.leftovers.push_back(std::move(u));
        ready_.clear();
        for (int w = 0; w < options_.workers; ++w) {
            if (auto partial = sessions_[w].flush()) s.leftovers.push_back(std::move(*partial));
            WorkerReport r;
            r.worker = w;
            r.env_steps = envs_[w].steps();
            r.consumed_steps = sessions_[w].consumed_steps();
            r.episodes = envs_[w].episodes();
            r.mean_round_trip_us = inference_calls_[w] ? inference_us_[w] / inference_calls_[w] : 0.0;
            r.version_histogram = sessions_[w].version_histogram();
            s.generated_steps += r.env_steps;
            s.workers.push_back(std::move(r));
        }
        return s;
    }

private:
    void step_worker(int w) {
        using Clock = std::chrono::steady_clock;
        auto report = actions_[w].empty() ? envs_[w].start() : envs_[w].advance(actions_[w]);
        const auto t0 = Clock::now();
        const auto& req = sessions_[w].begin(report);
        const auto logits = evaluate({&req});
        actions_[w] = sessions_[w].finish(logits[0]);
        inference_us_[w] += std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
        ++inference_calls_[w];
        for (auto& u : sessions_[w].take_ready()) ready_.push_back(std::move(u));
    }

    CollectorOptions options_;
    std::vector<WorkerEnv> envs_;
    std::vector<ActorSession> sessions_;
    std::vector<std::vector<int>> actions_;
    std::vector<double> inference_us_;
    std::vector<std::uint64_t> inference_calls_;
    std::deque<Unroll> ready_;
};

}  // namespace

std::unique_ptr<Collector> make_socket_collector(const env::DecPomdpSpec& spec, const nn::ActorLayout& actor,
                                                 const nn::CriticLayout& critic, std::shared_ptr<SnapshotStore> store,
                                                 const CollectorOptions& options);

std::unique_ptr<Collector> make_collector(const env::DecPomdpSpec& spec, const nn::ActorLayout& actor,
                                          const nn::CriticLayout& critic, std::shared_ptr<SnapshotStore> store,
                                          const CollectorOptions& options) {
    if (options.workers < 1) throw std::invalid_argument("need at least one worker");
    if (options.mode == ExecMode::sync) return std::make_unique<SyncCollector>(spec, actor, critic, store, options);
    return make_socket_collector(spec, actor, critic, std::move(store), options);
}

ThroughputMeter::ThroughputMeter(double window_seconds) : window_(window_seconds) {
    if (!(window_seconds > 0.0)) throw std::invalid_argument("throughput window must be positive");
}

void ThroughputMeter::record(std::uint64_t steps, Clock::time_point now) {
    events_.emplace_back(now, steps);
    const auto horizon = now - std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(window_));
    while (!events_.empty() && events_.front().first <= horizon) events_.pop_front();
}

double ThroughputMeter::rate(Clock::time_point now) const {
    const auto horizon = now - std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(window_));
    std::uint64_t total = 0;
    for (const auto& [t, n] : events_) {
        if (t > horizon && t <= now) total += n;
    }
    return static_cast<double>(total) / window_;
}

}  // namespace matrace::runtime
