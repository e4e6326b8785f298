#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/learner/learner.hpp"
#include "matrace/nn/checkpoint.hpp"
#include "matrace/runtime/collector.hpp"

namespace matrace::learner {

struct EpochMetrics {
    std::int64_t epoch = 0;
    std::int64_t env_steps = 0;  // cumulative
    std::int64_t episodes = 0;   // cumulative
    double mean_return = 0.0;    // episodes finished during this epoch; nan if none
    double median_return = 0.0;
    double success_rate = 0.0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double entropy = 0.0;
    double entropy_coef = 0.0;
    double mean_rho = 0.0;
    double clipped_fraction = 0.0;
    double mean_abs_log_ratio = 0.0;
    std::uint32_t param_version = 0;
    double elapsed_sec = 0.0;
    double steps_per_sec = 0.0;
};

/// metrics.csv holds only quantities that are reproducible for a fixed seed;
/// wall-clock columns live in timing.csv.
std::string metrics_csv_header();
void write_metrics_row(std::ostream& out, const EpochMetrics& m);
std::string timing_csv_header();
void write_timing_row(std::ostream& out, const EpochMetrics& m);

struct RunOptions {
    // unroll_length and seed_base are taken from the TrainConfig.
    runtime::CollectorOptions collector;
    std::filesystem::path out_dir;  // empty: write nothing
    nlohmann::json checkpoint_meta = nlohmann::json::object();
    bool archive_snapshots = false;
    double max_seconds = 0.0;  // > 0: also stop once this much wall time has passed
    bool dump_vtrace = false;  // out_dir/vtrace.csv with per-step c, rho, delta, v
    std::function<void(const EpochMetrics&)> on_epoch;
    // Sees every collected round before the updates of its epoch.
    std::function<void(const std::vector<runtime::Unroll>&, const Learner&)> on_round;
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
    nn::ActorNetworks actor;
    nn::CriticNetworks critic;
    runtime::CollectorSummary summary;
    std::uint64_t consumed_steps = 0;  // handed to the learner, plus leftovers drained at shutdown
    bool disconnected = false;
    std::shared_ptr<runtime::SnapshotStore> snapshots;
};

TrainResult train(const env::DecPomdpSpec& spec, const TrainConfig& config, const RunOptions& options);

nn::Checkpoint make_checkpoint(const nn::ActorNetworks& actor, const nn::CriticNetworks& critic,
                               std::uint64_t version, std::int64_t step, const nlohmann::json& meta);
nn::ActorNetworks actor_from_checkpoint(const nn::Checkpoint& checkpoint);

struct EvalSummary {
    int episodes = 0;
    double mean_return = 0.0;
    double median_return = 0.0;
    double success_rate = 0.0;
    std::vector<double> returns;
};

/// Decentralized execution: each agent acts on its own observation stream only.
/// Throws when the actor's dimensions do not match the environment.
EvalSummary evaluate_policy(const env::DecPomdpSpec& spec, const nn::ActorNetworks& actor, int episodes,
                            std::uint64_t seed, bool greedy);

double median(std::vector<double> xs);
bool is_success(const env::DecPomdpSpec& spec, double episode_return);

}  // namespace matrace::learner
