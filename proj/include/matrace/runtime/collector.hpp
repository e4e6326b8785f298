#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/nn/policy.hpp"
#include "matrace/runtime/session.hpp"
#include "matrace/runtime/snapshot.hpp"
#include "matrace/runtime/unroll.hpp"

namespace matrace::runtime {

enum class ExecMode { sync, threads, processes };

ExecMode parse_exec_mode(const std::string& name);
std::string to_string(ExecMode mode);

struct CollectorOptions {
    int workers = 1;
    ExecMode mode = ExecMode::sync;
    Staleness staleness;
    int unroll_length = 32;
    std::uint64_t seed_base = 0;
    std::size_t queue_capacity = 16;  // unrolls
    // Extra per-step environment cost; busy-waits unless latency_sleeps.
    double env_latency_us = 0.0;
    bool latency_sleeps = false;
    // Fault injection: worker `crash_worker` dies after this many steps (first incarnation only).
    int crash_worker = -1;
    std::uint64_t crash_after_steps = 0;
};

struct WorkerReport {
    int worker = 0;
    std::uint64_t env_steps = 0;       // transitions generated by the worker
    std::uint64_t consumed_steps = 0;  // transitions received by its session
    std::uint64_t episodes = 0;
    double mean_round_trip_us = 0.0;
    std::map<std::uint32_t, std::uint64_t> version_histogram;
    int restarts = 0;
};

struct CollectorSummary {
    std::vector<Unroll> leftovers;  // queued or partial unrolls never handed to collect()
    std::vector<WorkerReport> workers;
    std::uint64_t generated_steps = 0;
};

/// Environment side of a worker: owns one environment instance.
class WorkerEnv {
public:
    WorkerEnv(const env::DecPomdpSpec& spec, std::uint64_t seed, double latency_us = 0.0, bool latency_sleeps = false);

    StepReport start();
    StepReport advance(std::span<const int> actions);

    std::uint64_t steps() const { return steps_; }
    std::uint64_t episodes() const { return episodes_; }

private:
    StepReport observe(int state);

    const env::DecPomdpSpec* spec_;
    env::Episode episode_;
    double latency_us_;
    bool latency_sleeps_;
    std::uint64_t steps_ = 0;
    std::uint64_t episodes_ = 0;
};

struct WorkerParams {
    int id = 0;
    std::uint64_t seed = 0;
    double latency_us = 0.0;
    bool latency_sleeps = false;
    std::uint64_t crash_after_steps = 0;  // 0 = never
};

/// Worker loop over a connected stream socket: HELLO, then STEP/ACTION
/// exchanges until STOP, then REPORT. Throws on an injected crash.
void run_worker(int fd, const env::DecPomdpSpec& spec, const WorkerParams& params);

class Collector {
public:
    virtual ~Collector() = default;
    /// Blocks until `count` complete unrolls are available. Throws
    /// std::runtime_error if the runtime disconnected.
    virtual std::vector<Unroll> collect(int count) = 0;
    /// Stops all workers and returns everything not yet collected.
    virtual CollectorSummary shutdown() = 0;
};

std::unique_ptr<Collector> make_collector(const env::DecPomdpSpec& spec, const nn::ActorLayout& actor,
                                          const nn::CriticLayout& critic, std::shared_ptr<SnapshotStore> store,
                                          const CollectorOptions& options);

/// Seed of worker `id`'s environment and of its session's action sampler.
std::uint64_t worker_env_seed(std::uint64_t seed_base, int id, int restarts = 0);
std::uint64_t worker_action_seed(std::uint64_t seed_base, int id);

/// Windowed steps-per-second meter.
class ThroughputMeter {
public:
    using Clock = std::chrono::steady_clock;

    explicit ThroughputMeter(double window_seconds = 10.0);
    void record(std::uint64_t steps, Clock::time_point now = Clock::now());
    double rate(Clock::time_point now = Clock::now()) const;

private:
    double window_;
    std::deque<std::pair<Clock::time_point, std::uint64_t>> events_;
};

}  // namespace matrace::runtime
