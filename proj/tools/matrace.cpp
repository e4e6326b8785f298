// matrace: train, evaluate and verify multi-agent off-policy actor-critic runs.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "matrace/cli/commands.hpp"

using namespace matrace;

namespace {

struct CommonFlags {
    std::string config;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("-c,--config", flags.config, "INI config file");
    if (config_required) opt->required();
    cmd->add_option("-s,--set", flags.overrides, "Override a setting: section.key=value (repeatable)");
    cmd->add_option("-o,--out-dir", flags.out_dir, "Output directory (overrides run.out_dir)");
}

cli::RawConfig load_raw(const CommonFlags& flags) {
    auto raw = flags.config.empty() ? cli::RawConfig::from_string("", "command line")
                                    : cli::RawConfig::from_file(flags.config);
    for (const auto& o : flags.overrides) raw.apply_override(o);
    if (!flags.out_dir.empty()) raw.set("run.out_dir", flags.out_dir);
    return raw;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent V-trace actor-critic: training, evaluation and operator verification"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    CommonFlags train_flags;
    bool dump_vtrace = false;
    auto* train = app.add_subcommand("train", "Train one run per seed; writes metrics, checkpoints and a config echo");
    add_common(train, train_flags, true);
    train->add_flag("--dump-vtrace", dump_vtrace, "Write per-step c, rho, delta and v targets to vtrace.csv");

    cli::EvalOptions eval_opts;
    std::string eval_config, ckpt;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with decentralized execution");
    eval->add_option("checkpoint", ckpt, "Checkpoint file")->required();
    eval->add_option("-c,--config", eval_config, "Config whose [env] section to use (default: from checkpoint)");
    eval->add_option("-n,--episodes", eval_opts.episodes, "Number of episodes")->capture_default_str();
    eval->add_option("--seed", eval_opts.seed, "Evaluation seed")->capture_default_str();
    eval->add_flag("--greedy", eval_opts.greedy, "Take the most likely action instead of sampling");

    cli::OracleVerifyOptions ov;
    std::string inject;
    std::string ov_out;
    auto* verify = app.add_subcommand("oracle-verify", "Check the correction operator against exact tabular oracles");
    verify->add_option("-n,--n-specs", ov.n_specs, "Number of random specs")->capture_default_str();
    verify->add_option("--seed", ov.seed, "Battery seed")->capture_default_str();
    verify->add_option("--inject-bug", inject, "Negative control")->check(CLI::IsMember({"unclipped-rho"}));
    verify->add_option("-o,--out-dir", ov_out, "Directory for oracle_report.csv");

    CommonFlags ablate_flags;
    std::vector<std::string> names;
    auto* ablate = app.add_subcommand("ablate", "Run the baseline and each named ablation over shared seeds");
    add_common(ablate, ablate_flags, true);
    ablate->add_option("--names", names, "Ablations (overrides ablate.names), e.g. no_is critic:full");

    CommonFlags bench_flags;
    std::vector<int> counts;
    auto* bench = app.add_subcommand("bench-scaling", "Measure training throughput per worker count");
    add_common(bench, bench_flags, true);
    bench->add_option("--counts", counts, "Worker counts (overrides bench.counts)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kUsage;
    }

    const auto level = spdlog::level::from_str(log_level);
    spdlog::set_level(level);

    try {
        if (*train) {
            const auto config = cli::resolve(load_raw(train_flags));
            return cli::cmd_train(config, std::cout, dump_vtrace);
        }
        if (*eval) {
            eval_opts.checkpoint = ckpt;
            if (!eval_config.empty()) eval_opts.env = cli::resolve(cli::RawConfig::from_file(eval_config), false).env;
            return cli::cmd_eval(eval_opts, std::cout);
        }
        if (*verify) {
            ov.inject_unclipped_rho = !inject.empty();
            ov.out_dir = ov_out;
            return cli::cmd_oracle_verify(ov, std::cout, std::cerr);
        }
        if (*ablate) {
            auto raw = load_raw(ablate_flags);
            if (!names.empty()) {
                std::string joined;
                for (const auto& n : names) joined += (joined.empty() ? "" : ",") + n;
                raw.set("ablate.names", joined);
            }
            return cli::cmd_ablate(cli::resolve(raw), std::cout);
        }
        if (*bench) {
            auto raw = load_raw(bench_flags);
            if (!counts.empty()) {
                std::string joined;
                for (const int n : counts) joined += (joined.empty() ? "" : ",") + std::to_string(n);
                raw.set("bench.counts", joined);
            }
            return cli::cmd_bench_scaling(cli::resolve(raw, false), std::cout);
        }
    } catch (const cli::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kFailed;
    }
    return cli::kUsage;
}
