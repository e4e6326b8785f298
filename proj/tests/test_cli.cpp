#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "matrace/cli/commands.hpp"
#include "matrace/cli/config.hpp"

using namespace matrace;
namespace fs = std::filesystem;

namespace {

const char* kBandit = R"(; two-armed bandit
[env]
name = bandit
arms = 1,0

[train]
total_steps = 0
hidden = 8
)";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("matrace_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int line_count(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(MATRACE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("missing required keys are named with their location") {
    const auto raw = cli::RawConfig::from_string("[env]\nname = bandit\narms = 1,0\n", "t.ini");
    CHECK_THROWS_WITH_AS(cli::resolve(raw), doctest::Contains("train.total_steps"), cli::ConfigError);
    CHECK_NOTHROW(cli::resolve(raw, false));
    const auto none = cli::RawConfig::from_string("[train]\ntotal_steps = 5\n", "t.ini");
    CHECK_THROWS_WITH_AS(cli::resolve(none), doctest::Contains("env.name"), cli::ConfigError);
}

TEST_CASE("bad values and unknown keys report file and line") {
    const auto raw = cli::RawConfig::from_string("[env]\nname = bandit\n\n[train]\ntotal_steps = 10\nbatch_size = x\n",
                                                 "t.ini");
    CHECK_THROWS_WITH_AS(cli::resolve(raw), doctest::Contains("t.ini:6"), cli::ConfigError);
    const auto unknown = cli::RawConfig::from_string("[env]\nname = bandit\n[train]\ntotal_steps = 1\ntypo = 3\n",
                                                     "u.ini");
    CHECK_THROWS_WITH_AS(cli::resolve(unknown), doctest::Contains("u.ini:5"), cli::ConfigError);
    CHECK_THROWS_AS(cli::RawConfig::from_string("[env\nname = x\n"), cli::ConfigError);
}

TEST_CASE("command-line overrides win over the file") {
    auto raw = cli::RawConfig::from_string(kBandit);
    raw.apply_override("train.batch_size=7");
    raw.apply_override("runtime.staleness = fixed_lag(2)");
    const auto c = cli::resolve(raw);
    CHECK(c.train.batch_size == 7);
    CHECK(c.runtime.staleness.lag == 2);
    CHECK(raw.where("train.batch_size") == "command line");
    CHECK_THROWS_AS(raw.apply_override("batch_size"), cli::ConfigError);
}

TEST_CASE("resolved config echo resolves back to the same settings") {
    auto raw = cli::RawConfig::from_string(kBandit);
    raw.apply_override("train.learning_rate=0.00123");
    raw.apply_override("train.critic=obs_full");
    raw.apply_override("runtime.workers=3");
    raw.apply_override("run.seeds=4,5");
    const auto c = cli::resolve(raw);
    const auto text = cli::to_ini(c);
    const auto back = cli::resolve(cli::RawConfig::from_string(text));
    CHECK(cli::to_ini(back) == text);
    CHECK(back.train.learning_rate == c.train.learning_rate);
    CHECK(back.train.critic_mode == nn::CriticMode::obs_full);
    CHECK(back.runtime.workers == 3);
    CHECK(back.seeds == std::vector<std::uint64_t>{4, 5});
}

TEST_CASE("environment construction from config") {
    cli::EnvConfig e{"matrix_game", {{"payoff", "10,0;0,5"}}};
    CHECK(cli::make_env(e).n_actions == 2);
    e = {"gridworld", {{"width", "3"}, {"height", "3"}, {"agents", "2"}}};
    CHECK(cli::make_env(e).n_agents == 2);
    e = {"bandit", {}};
    CHECK_THROWS_WITH_AS(cli::make_env(e), doctest::Contains("env.arms"), cli::ConfigError);
    e = {"chess", {}};
    CHECK_THROWS_AS(cli::make_env(e), cli::ConfigError);
}

TEST_CASE("quartiles use linear interpolation") {
    const auto q = cli::quartiles({4, 1, 3, 2, 5});
    CHECK(q.median == 3.0);
    CHECK(q.q25 == 2.0);
    CHECK(q.q75 == 4.0);
    CHECK(cli::quartiles({1, 2}).median == 1.5);
}

TEST_CASE("train with zero steps writes header-only metrics and a config echo") {
    const auto dir = scratch("train0");
    auto c = cli::resolve(cli::RawConfig::from_string(kBandit));
    c.out_dir = dir;
    c.eval_episodes = 5;
    std::ostringstream out;
    CHECK(cli::cmd_train(c, out) == cli::kOk);
    CHECK(line_count(dir / "seed_0" / "metrics.csv") == 1);
    CHECK(fs::exists(dir / "seed_0" / "resolved_config.ini"));
    CHECK(fs::exists(dir / "summary.csv"));
    const auto echo = cli::resolve(cli::RawConfig::from_file(dir / "seed_0" / "resolved_config.ini"));
    CHECK(cli::to_ini(echo) == read(dir / "seed_0" / "resolved_config.ini"));
}

TEST_CASE("oracle-verify: empty battery, small battery, negative control") {
    const auto dir = scratch("oracle");
    std::ostringstream out, err;
    CHECK(cli::cmd_oracle_verify({0, 0, false, dir}, out, err) == cli::kOk);
    CHECK(line_count(dir / "oracle_report.csv") == 1);
    CHECK(cli::cmd_oracle_verify({3, 0, false, dir}, out, err) == cli::kOk);
    CHECK(line_count(dir / "oracle_report.csv") == 4);
    CHECK(cli::cmd_oracle_verify({3, 0, true, dir}, out, err) == cli::kFailed);
    CHECK(err.str().find("seed=") != std::string::npos);
}

TEST_CASE("eval: zero episodes, repeatability, mismatch naming dims") {
    const auto dir = scratch("eval");
    auto c = cli::resolve(cli::RawConfig::from_string(kBandit));
    c.out_dir = dir;
    c.eval_episodes = 1;
    c.train.total_steps = 64;
    std::ostringstream out;
    REQUIRE(cli::cmd_train(c, out) == cli::kOk);
    cli::EvalOptions e;
    e.checkpoint = dir / "seed_0" / "checkpoints" / "final.ckpt";
    e.episodes = 0;
    CHECK(cli::evaluate_checkpoint(e).episodes == 0);
    e.episodes = 30;
    e.seed = 9;
    CHECK(cli::evaluate_checkpoint(e).returns == cli::evaluate_checkpoint(e).returns);
    e.env = cli::EnvConfig{"bandit", {{"arms", "1,0,0"}}};
    CHECK_THROWS_WITH_AS(cli::evaluate_checkpoint(e), doctest::Contains("actions"), cli::ConfigError);
}

TEST_CASE("ablate with no names runs the baseline only") {
    const auto dir = scratch("ablate");
    auto c = cli::resolve(cli::RawConfig::from_string(kBandit));
    c.out_dir = dir;
    c.eval_episodes = 2;
    c.train.total_steps = 64;
    std::ostringstream out;
    CHECK(cli::cmd_ablate(c, out) == cli::kOk);
    const auto text = read(dir / "comparison.csv");
    CHECK(text.find("baseline,0,final") != std::string::npos);
    CHECK(line_count(dir / "comparison.csv") == 2);
}

TEST_CASE("bench-scaling with one count gives a single row") {
    const auto dir = scratch("bench");
    auto c = cli::resolve(cli::RawConfig::from_string(kBandit), false);
    c.out_dir = dir;
    c.bench_counts = {1};
    c.bench_seconds = 0.2;
    c.bench_repetitions = 3;
    std::ostringstream out;
    CHECK(cli::cmd_bench_scaling(c, out) == cli::kOk);
    CHECK(line_count(dir / "bench.csv") == 2);
    CHECK(read(dir / "bench.csv").rfind("workers,steps_per_sec_mean,steps_per_sec_std,repetitions\n", 0) == 0);
}

TEST_CASE("binary exit codes") {
    const auto dir = scratch("exit");
    {
        std::ofstream f(dir / "ok.ini");
        f << kBandit;
        std::ofstream g(dir / "missing.ini");
        g << "[env]\nname = bandit\narms = 1,0\n";
    }
    const auto log = dir / "log.txt";
    CHECK(run_cli("--help", log) == 0);
    CHECK(run_cli("", log) == 2);
    CHECK(run_cli("frobnicate", log) == 2);
    CHECK(run_cli("train -c " + (dir / "missing.ini").string(), log) == 2);
    CHECK(read(log).find("train.total_steps") != std::string::npos);
    CHECK(run_cli("train -c " + (dir / "ok.ini").string() + " -o " + (dir / "run").string(), log) == 0);
    CHECK(run_cli("train -c " + (dir / "ok.ini").string() + " --set train.gamma=2", log) == 2);
    CHECK(run_cli("oracle-verify -n 0", log) == 0);
    CHECK(run_cli("oracle-verify -n 2 --inject-bug unclipped-rho", log) == 1);
    CHECK(run_cli("eval " + (dir / "nope.ckpt").string(), log) == 2);
    CHECK(run_cli("eval " + (dir / "run" / "seed_0" / "checkpoints" / "final.ckpt").string() + " -n 0", log) == 0);
}
