#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/learner/learner.hpp"
#include "matrace/runtime/collector.hpp"

namespace matrace::cli {

/// Bad configuration or usage; maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat "section.key" -> value map read from an INI file, with the line each
/// key came from. Command-line overrides replace file values.
class RawConfig {
public:
    static RawConfig from_file(const std::filesystem::path& path);
    static RawConfig from_string(const std::string& text, const std::string& origin = "<string>");

    /// "section.key=value"
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    std::optional<std::string> get(const std::string& key) const;
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    /// "file:line" of a key, or "command line".
    std::string where(const std::string& key) const;
    std::vector<std::string> keys() const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;
};

struct EnvConfig {
    std::string name;  // bandit, matrix_game, gridworld, json
    std::map<std::string, std::string> params;
};

struct RunConfig {
    EnvConfig env;
    learner::TrainConfig train;
    runtime::CollectorOptions runtime;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out_dir = "runs";
    int eval_episodes = 200;
    bool eval_greedy = false;
    std::vector<std::string> ablations;
    std::vector<int> bench_counts{1, 2, 4, 8};
    double bench_seconds = 5.0;
    int bench_repetitions = 3;
};

/// Typed view of a raw config. Throws ConfigError naming the key and its
/// location for missing required keys, unknown keys and bad values.
RunConfig resolve(const RawConfig& raw, bool require_train_keys = true);

/// Every effective setting, defaults included, as an INI document that
/// resolves back to the same RunConfig.
std::string to_ini(const RunConfig& config);

env::DecPomdpSpec make_env(const EnvConfig& config);

}  // namespace matrace::cli
