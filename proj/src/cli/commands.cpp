#include "matrace/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "matrace/nn/checkpoint.hpp"
#include "matrace/oracle/battery.hpp"

namespace matrace::cli {

namespace {

constexpr std::uint64_t kEvalSeedSalt = 0x2545f4914f6cdd1dULL;

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string variant_dir(std::string name) {
    for (auto& ch : name) {
        if (ch == '(' || ch == ')' || ch == ':' || ch == '/' || ch == ' ') ch = '_';
    }
    while (!name.empty() && name.back() == '_') name.pop_back();
    return name;
}

void write_summary(const std::filesystem::path& dir, const std::vector<SeedOutcome>& runs, std::ostream& out,
                   const std::string& label) {
    auto summary = open_csv(dir / "summary.csv");
    summary << "seed,env_steps,eval_episodes,eval_mean_return,eval_median_return,eval_success_rate\n";
    std::vector<double> success, returns;
    for (const auto& r : runs) {
        summary << r.seed << ',' << r.env_steps << ',' << r.eval.episodes << ',' << r.eval.mean_return << ','
                << r.eval.median_return << ',' << r.eval.success_rate << '\n';
        success.push_back(r.eval.success_rate);
        returns.push_back(r.eval.mean_return);
    }
    const auto s = quartiles(success);
    const auto m = quartiles(returns);
    auto agg = open_csv(dir / "aggregate.csv");
    agg << "quantity,q25,median,q75\n";
    agg << "eval_success_rate," << s.q25 << ',' << s.median << ',' << s.q75 << '\n';
    agg << "eval_mean_return," << m.q25 << ',' << m.median << ',' << m.q75 << '\n';
    out << label << ": " << runs.size() << " seed(s), median success " << s.median << " (IQR " << s.q25 << " - "
        << s.q75 << "), median return " << m.median << '\n';
}

}  // namespace

nlohmann::json env_to_json(const EnvConfig& env) {
    return {{"name", env.name}, {"params", env.params}};
}

EnvConfig env_from_json(const nlohmann::json& doc) {
    EnvConfig env;
    env.name = doc.at("name").get<std::string>();
    env.params = doc.at("params").get<std::map<std::string, std::string>>();
    return env;
}

Quartiles quartiles(std::vector<double> xs) {
    Quartiles q;
    if (xs.empty()) {
        q.q25 = q.median = q.q75 = std::numeric_limits<double>::quiet_NaN();
        return q;
    }
    std::sort(xs.begin(), xs.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(xs.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, xs.size() - 1);
        return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
    };
    q.q25 = at(0.25);
    q.median = at(0.5);
    q.q75 = at(0.75);
    return q;
}

SeedOutcome train_seed(const RunConfig& config, const learner::TrainConfig& train, std::uint64_t seed,
                       const std::filesystem::path& dir, bool dump_vtrace) {
    const auto spec = make_env(config.env);
    auto tc = train;
    tc.seed = seed;

    std::filesystem::create_directories(dir);
    RunConfig echo = config;
    echo.train = tc;
    echo.seeds = {seed};
    echo.ablations.clear();
    {
        std::ofstream ini(dir / "resolved_config.ini");
        ini << to_ini(echo);
    }

    learner::RunOptions opts;
    opts.collector = config.runtime;
    opts.out_dir = dir;
    opts.dump_vtrace = dump_vtrace;
    opts.checkpoint_meta = {{"env", env_to_json(config.env)}, {"seed", seed}};
    const auto result = learner::train(spec, tc, opts);

    SeedOutcome out;
    out.seed = seed;
    out.dir = dir;
    out.env_steps = result.metrics.empty() ? 0 : result.metrics.back().env_steps;
    out.disconnected = result.disconnected;
    out.eval = learner::evaluate_policy(spec, result.actor, config.eval_episodes, seed ^ kEvalSeedSalt,
                                        config.eval_greedy);
    return out;
}

int cmd_train(const RunConfig& config, std::ostream& out, bool dump_vtrace) {
    make_env(config.env);  // fail fast on a bad environment
    std::vector<SeedOutcome> runs;
    bool failed = false;
    for (const auto seed : config.seeds) {
        runs.push_back(train_seed(config, config.train, seed, config.out_dir / seed_dir(seed), dump_vtrace));
        const auto& r = runs.back();
        out << "seed " << seed << ": " << r.env_steps << " steps, eval success " << r.eval.success_rate
            << ", mean return " << r.eval.mean_return << '\n';
        if (r.disconnected) {
            spdlog::error("seed {}: collection failed; run is incomplete", seed);
            failed = true;
        }
    }
    write_summary(config.out_dir, runs, out, "train");
    return failed ? kFailed : kOk;
}

int cmd_oracle_verify(const OracleVerifyOptions& options, std::ostream& out, std::ostream& err) {
    if (options.n_specs < 0) throw ConfigError("--n-specs must be >= 0");
    oracle::BatteryOptions bo;
    bo.n_specs = options.n_specs;
    bo.seed = options.seed;
    bo.inject_unclipped_rho = options.inject_unclipped_rho;
    const auto report = oracle::run_battery(bo);
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        auto csv = open_csv(options.out_dir / "oracle_report.csv");
        oracle::write_battery_csv(csv, report);
    }
    const auto violations = report.violations();
    for (const auto& v : violations) err << "violation: " << v << '\n';
    out << "oracle-verify: " << report.rows.size() << " spec(s), " << violations.size() << " violation(s)\n";
    return report.passed() ? kOk : kFailed;
}

int cmd_ablate(const RunConfig& config, std::ostream& out) {
    make_env(config.env);
    std::vector<std::pair<std::string, learner::TrainConfig>> variants{{"baseline", config.train}};
    for (const auto& name : config.ablations) {
        try {
            variants.emplace_back(name, learner::ablation_mode(config.train, name));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("ablate.names: " + std::string(e.what()));
        }
    }
    const auto spec = make_env(config.env);
    std::filesystem::create_directories(config.out_dir);
    auto cmp = open_csv(config.out_dir / "comparison.csv");
    cmp << "ablation,seed,checkpoint,env_steps,param_version,eval_mean_return,eval_median_return,eval_success_rate\n";
    bool failed = false;
    for (const auto& [name, tc] : variants) {
        const auto vdir = config.out_dir / variant_dir(name);
        std::vector<SeedOutcome> runs;
        for (const auto seed : config.seeds) {
            runs.push_back(train_seed(config, tc, seed, vdir / seed_dir(seed)));
            failed = failed || runs.back().disconnected;
            std::vector<std::filesystem::path> ckpts;
            for (const auto& entry : std::filesystem::directory_iterator(runs.back().dir / "checkpoints")) {
                if (entry.path().filename() != "final.ckpt") ckpts.push_back(entry.path());
            }
            std::sort(ckpts.begin(), ckpts.end());
            ckpts.push_back(runs.back().dir / "checkpoints" / "final.ckpt");
            for (const auto& path : ckpts) {
                const auto ck = nn::load_checkpoint(path);
                const auto ev = learner::evaluate_policy(spec, learner::actor_from_checkpoint(ck),
                                                         config.eval_episodes, seed ^ kEvalSeedSalt,
                                                         config.eval_greedy);
                cmp << name << ',' << seed << ',' << path.stem().string() << ',' << ck.step << ',' << ck.version
                    << ',' << ev.mean_return << ',' << ev.median_return << ',' << ev.success_rate << '\n';
            }
        }
        write_summary(vdir, runs, out, name);
    }
    return failed ? kFailed : kOk;
}

std::vector<BenchRow> bench_scaling(const RunConfig& config) {
    if (config.bench_counts.empty()) throw ConfigError("bench.counts is empty");
    if (config.bench_repetitions < 1) throw ConfigError("bench.repetitions must be >= 1");
    if (!(config.bench_seconds > 0.0)) throw ConfigError("bench.seconds must be > 0");
    const auto spec = make_env(config.env);
    std::vector<BenchRow> rows;
    for (const int count : config.bench_counts) {
        if (count < 1) throw ConfigError("bench.counts entries must be >= 1");
        std::vector<double> rates;
        for (int rep = 0; rep < config.bench_repetitions; ++rep) {
            auto tc = config.train;
            tc.total_steps = std::numeric_limits<std::int64_t>::max() / 2;
            tc.seed = config.seeds.front() + static_cast<std::uint64_t>(rep);
            tc.checkpoint_every = std::numeric_limits<int>::max();
            learner::RunOptions opts;
            opts.collector = config.runtime;
            opts.collector.workers = count;
            // Synchronous collection has no parallelism to measure.
            if (opts.collector.mode == runtime::ExecMode::sync) opts.collector.mode = runtime::ExecMode::threads;
            opts.max_seconds = config.bench_seconds;
            const auto result = learner::train(spec, tc, opts);
            const auto& last = result.metrics.back();
            rates.push_back(static_cast<double>(last.env_steps) / last.elapsed_sec);
            spdlog::info("bench: {} worker(s), repetition {}: {:.1f} steps/s", count, rep, rates.back());
        }
        BenchRow row;
        row.workers = count;
        row.repetitions = static_cast<int>(rates.size());
        row.mean = std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
        double ss = 0.0;
        for (const double r : rates) ss += (r - row.mean) * (r - row.mean);
        row.stddev = rates.size() > 1 ? std::sqrt(ss / (rates.size() - 1)) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

int cmd_bench_scaling(const RunConfig& config, std::ostream& out) {
    const auto rows = bench_scaling(config);
    std::filesystem::create_directories(config.out_dir);
    auto csv = open_csv(config.out_dir / "bench.csv");
    csv << "workers,steps_per_sec_mean,steps_per_sec_std,repetitions\n";
    for (const auto& r : rows) {
        csv << r.workers << ',' << r.mean << ',' << r.stddev << ',' << r.repetitions << '\n';
        out << r.workers << " worker(s): " << r.mean << " +- " << r.stddev << " steps/s\n";
    }
    return kOk;
}

learner::EvalSummary evaluate_checkpoint(const EvalOptions& options) {
    if (!std::filesystem::exists(options.checkpoint)) {
        throw ConfigError("checkpoint not found: " + options.checkpoint.string());
    }
    if (options.episodes < 0) throw ConfigError("--episodes must be >= 0");
    const auto ck = nn::load_checkpoint(options.checkpoint);
    EnvConfig env;
    if (options.env) {
        env = *options.env;
    } else if (ck.meta.contains("env")) {
        env = env_from_json(ck.meta.at("env"));
    } else {
        throw ConfigError("checkpoint has no environment description; pass --config");
    }
    const auto spec = make_env(env);
    try {
        return learner::evaluate_policy(spec, learner::actor_from_checkpoint(ck), options.episodes, options.seed,
                                        options.greedy);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

int cmd_eval(const EvalOptions& options, std::ostream& out) {
    const auto s = evaluate_checkpoint(options);
    out << std::setprecision(10) << "episodes " << s.episodes << "\nmean_return " << s.mean_return
        << "\nmedian_return " << s.median_return << "\nsuccess_rate " << s.success_rate << '\n';
    return kOk;
}

}  // namespace matrace::cli
