#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "matrace/cli/config.hpp"
#include "matrace/learner/train.hpp"

namespace matrace::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2 };

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    std::int64_t env_steps = 0;
    learner::EvalSummary eval;
    bool disconnected = false;
};

/// Trains one seed into `dir` (metrics.csv, timing.csv, checkpoints/,
/// resolved_config.ini) and evaluates the final policy.
SeedOutcome train_seed(const RunConfig& config, const learner::TrainConfig& train, std::uint64_t seed,
                       const std::filesystem::path& dir, bool dump_vtrace = false);

struct Quartiles {
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
};
Quartiles quartiles(std::vector<double> xs);

int cmd_train(const RunConfig& config, std::ostream& out, bool dump_vtrace = false);

struct OracleVerifyOptions {
    int n_specs = 200;
    std::uint64_t seed = 0;
    bool inject_unclipped_rho = false;
    std::filesystem::path out_dir;
};
int cmd_oracle_verify(const OracleVerifyOptions& options, std::ostream& out, std::ostream& err);

int cmd_ablate(const RunConfig& config, std::ostream& out);

struct BenchRow {
    int workers = 0;
    double mean = 0.0;
    double stddev = 0.0;
    int repetitions = 0;
};
std::vector<BenchRow> bench_scaling(const RunConfig& config);
int cmd_bench_scaling(const RunConfig& config, std::ostream& out);

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::optional<EnvConfig> env;  // otherwise read from the checkpoint
    int episodes = 100;
    std::uint64_t seed = 0;
    bool greedy = false;
};
learner::EvalSummary evaluate_checkpoint(const EvalOptions& options);
int cmd_eval(const EvalOptions& options, std::ostream& out);

nlohmann::json env_to_json(const EnvConfig& env);
EnvConfig env_from_json(const nlohmann::json& doc);

}  // namespace matrace::cli
