#include "matrace/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace matrace::cli {

namespace {

const std::set<std::string> kEnvParams{"arms", "payoff", "agents", "width", "height", "sight_radius",
                                       "episode_limit", "path", "gamma"};

const std::set<std::string> kKnownKeys{
    "env.name",
    "train.total_steps", "train.density", "train.learning_rate", "train.batch_size", "train.gamma",
    "train.c_bar", "train.rho_bar", "train.lambda", "train.allow_c_above_rho", "train.unroll_length",
    "train.unrolls_per_epoch", "train.critic", "train.critic_heads", "train.actor", "train.advantage",
    "train.importance_sampling", "train.framestack", "train.hidden", "train.entropy_initial",
    "train.entropy_target", "train.entropy_adjustment", "train.checkpoint_every",
    "runtime.workers", "runtime.mode", "runtime.staleness", "runtime.queue_capacity", "runtime.env_latency_us",
    "runtime.latency_sleeps",
    "run.seeds", "run.out_dir",
    "eval.episodes", "eval.greedy",
    "ablate.names",
    "bench.counts", "bench.seconds", "bench.repetitions",
};

std::vector<std::string> split_list(const std::string& text, const char* seps = ",") {
    std::vector<std::string> parts;
    boost::split(parts, text, boost::is_any_of(seps));
    std::vector<std::string> out;
    for (auto& p : parts) {
        boost::trim(p);
        if (!p.empty()) out.push_back(p);
    }
    return out;
}

class Reader {
public:
    explicit Reader(const RawConfig& raw) : raw_(raw) {}

    template <typename T>
    void read(const std::string& key, T& out) const {
        const auto v = raw_.get(key);
        if (!v) return;
        out = parse<T>(key, *v);
    }

    template <typename T>
    T parse(const std::string& key, const std::string& text) const {
        try {
            if constexpr (std::is_same_v<T, bool>) {
                auto t = boost::to_lower_copy(text);
                if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
                if (t == "false" || t == "0" || t == "no" || t == "off") return false;
                throw std::invalid_argument("expected true or false");
            } else if constexpr (std::is_same_v<T, std::string>) {
                return text;
            } else if constexpr (std::is_floating_point_v<T>) {
                double x = 0.0;
                const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
                if (ec != std::errc{} || end != text.data() + text.size()) {
                    throw std::invalid_argument("expected a number");
                }
                return static_cast<T>(x);
            } else {
                long long x = 0;
                const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
                if (ec != std::errc{} || end != text.data() + text.size()) {
                    throw std::invalid_argument("expected an integer");
                }
                if constexpr (std::is_unsigned_v<T>) {
                    if (x < 0) throw std::invalid_argument("must be non-negative");
                }
                return static_cast<T>(x);
            }
        } catch (const std::exception& e) {
            fail(key, "invalid value '" + text + "': " + e.what());
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError(raw_.where(key) + ": " + key + ": " + what);
    }

    template <typename F>
    void check(const std::string& key, F&& f) const {
        try {
            f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            fail(key, e.what());
        }
    }

private:
    const RawConfig& raw_;
};

std::string format_double(double x) {
    std::ostringstream s;
    s << std::setprecision(17) << x;
    return s.str();
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::ostringstream s;
    for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? "," : "") << xs[i];
    return s.str();
}

}  // namespace

RawConfig RawConfig::from_string(const std::string& text, const std::string& origin) {
    RawConfig out;
    out.origin_ = origin;
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(origin + ": key '" + section + "' must live inside a [section]");
        }
        for (const auto& [key, value] : body) out.values_[section + "." + key] = value.data();
    }
    // property_tree does not keep positions; recover them for diagnostics.
    std::istringstream lines(text);
    std::string line, section;
    for (int n = 1; std::getline(lines, line); ++n) {
        boost::trim(line);
        if (line.empty() || line[0] == ';' || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = boost::trim_copy(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq != std::string::npos) out.lines_[section + "." + boost::trim_copy(line.substr(0, eq))] = n;
    }
    return out;
}

RawConfig RawConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path.string());
}

void RawConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || assignment.find('.') > eq) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    set(boost::trim_copy(assignment.substr(0, eq)), boost::trim_copy(assignment.substr(eq + 1)));
}

void RawConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
    lines_.erase(key);
}

std::optional<std::string> RawConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string RawConfig::where(const std::string& key) const {
    const auto it = lines_.find(key);
    if (it != lines_.end()) return origin_ + ":" + std::to_string(it->second);
    if (values_.count(key)) return "command line";
    return origin_.empty() ? "config" : origin_;
}

std::vector<std::string> RawConfig::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

RunConfig resolve(const RawConfig& raw, bool require_train_keys) {
    Reader r(raw);
    for (const auto& key : raw.keys()) {
        const bool env_param = key.rfind("env.", 0) == 0 && kEnvParams.count(key.substr(4));
        if (!kKnownKeys.count(key) && !env_param) r.fail(key, "unknown key");
    }
    RunConfig out;
    if (!raw.has("env.name")) throw ConfigError(raw.where("env.name") + ": missing required key env.name");
    out.env.name = *raw.get("env.name");
    for (const auto& p : kEnvParams) {
        if (auto v = raw.get("env." + p)) out.env.params[p] = *v;
    }
    if (require_train_keys && !raw.has("train.total_steps")) {
        throw ConfigError(raw.where("train.total_steps") + ": missing required key train.total_steps");
    }

    auto& t = out.train;
    r.read("train.total_steps", t.total_steps);
    r.read("train.density", t.density);
    r.read("train.learning_rate", t.learning_rate);
    r.read("train.batch_size", t.batch_size);
    r.read("train.gamma", t.gamma);
    r.read("train.c_bar", t.correction.c_bar);
    r.read("train.rho_bar", t.correction.rho_bar);
    r.read("train.lambda", t.correction.lambda);
    r.read("train.allow_c_above_rho", t.correction.allow_c_above_rho);
    r.read("train.unroll_length", t.unroll_length);
    r.read("train.unrolls_per_epoch", t.unrolls_per_epoch);
    if (auto v = raw.get("train.critic")) r.check("train.critic", [&] { t.critic_mode = nn::parse_critic_mode(*v); });
    r.read("train.critic_heads", t.critic_heads);
    if (auto v = raw.get("train.actor")) r.check("train.actor", [&] { t.actor_mode = nn::parse_actor_mode(*v); });
    if (auto v = raw.get("train.advantage")) {
        r.check("train.advantage", [&] { t.advantage = vtrace::parse_advantage_mode(*v); });
    }
    r.read("train.importance_sampling", t.importance_sampling);
    r.read("train.framestack", t.framestack);
    if (auto v = raw.get("train.hidden")) {
        t.hidden.clear();
        for (const auto& h : split_list(*v)) t.hidden.push_back(r.parse<int>("train.hidden", h));
    }
    r.read("train.entropy_initial", t.entropy.initial_cost);
    r.read("train.entropy_target", t.entropy.target);
    r.read("train.entropy_adjustment", t.entropy.adjustment);
    r.read("train.checkpoint_every", t.checkpoint_every);

    auto& rt = out.runtime;
    r.read("runtime.workers", rt.workers);
    if (rt.workers < 1) r.fail("runtime.workers", "must be >= 1");
    if (auto v = raw.get("runtime.mode")) r.check("runtime.mode", [&] { rt.mode = runtime::parse_exec_mode(*v); });
    if (auto v = raw.get("runtime.staleness")) {
        r.check("runtime.staleness", [&] { rt.staleness = runtime::Staleness::parse(*v); });
    }
    r.read("runtime.queue_capacity", rt.queue_capacity);
    if (rt.queue_capacity < 1) r.fail("runtime.queue_capacity", "must be >= 1");
    r.read("runtime.env_latency_us", rt.env_latency_us);
    r.read("runtime.latency_sleeps", rt.latency_sleeps);

    if (auto v = raw.get("run.seeds")) {
        out.seeds.clear();
        for (const auto& s : split_list(*v)) out.seeds.push_back(r.parse<std::uint64_t>("run.seeds", s));
        if (out.seeds.empty()) r.fail("run.seeds", "seed list is empty");
    }
    if (auto v = raw.get("run.out_dir")) out.out_dir = *v;
    r.read("eval.episodes", out.eval_episodes);
    r.read("eval.greedy", out.eval_greedy);
    if (auto v = raw.get("ablate.names")) {
        out.ablations = split_list(*v);
        for (const auto& name : out.ablations) {
            r.check("ablate.names", [&] { learner::ablation_mode(out.train, name); });
        }
    }
    if (auto v = raw.get("bench.counts")) {
        out.bench_counts.clear();
        for (const auto& s : split_list(*v)) out.bench_counts.push_back(r.parse<int>("bench.counts", s));
        if (out.bench_counts.empty()) r.fail("bench.counts", "worker count list is empty");
    }
    r.read("bench.seconds", out.bench_seconds);
    r.read("bench.repetitions", out.bench_repetitions);

    r.check("train", [&] { t.validate(); });
    return out;
}

std::string to_ini(const RunConfig& c) {
    std::ostringstream s;
    const auto& t = c.train;
    s << "[env]\nname = " << c.env.name << '\n';
    for (const auto& [k, v] : c.env.params) s << k << " = " << v << '\n';
    s << "\n[train]\n"
      << "total_steps = " << t.total_steps << '\n'
      << "density = " << t.density << '\n'
      << "learning_rate = " << format_double(t.learning_rate) << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "gamma = " << format_double(t.gamma) << '\n'
      << "c_bar = " << format_double(t.correction.c_bar) << '\n'
      << "rho_bar = " << format_double(t.correction.rho_bar) << '\n'
      << "lambda = " << format_double(t.correction.lambda) << '\n'
      << "allow_c_above_rho = " << (t.correction.allow_c_above_rho ? "true" : "false") << '\n'
      << "unroll_length = " << t.unroll_length << '\n'
      << "unrolls_per_epoch = " << t.unrolls_per_epoch << '\n'
      << "critic = " << nn::to_string(t.critic_mode) << '\n'
      << "critic_heads = " << t.critic_heads << '\n'
      << "actor = " << nn::to_string(t.actor_mode) << '\n'
      << "advantage = " << vtrace::to_string(t.advantage) << '\n'
      << "importance_sampling = " << (t.importance_sampling ? "true" : "false") << '\n'
      << "framestack = " << t.framestack << '\n'
      << "hidden = " << join(t.hidden) << '\n'
      << "entropy_initial = " << format_double(t.entropy.initial_cost) << '\n'
      << "entropy_target = " << format_double(t.entropy.target) << '\n'
      << "entropy_adjustment = " << format_double(t.entropy.adjustment) << '\n'
      << "checkpoint_every = " << t.checkpoint_every << '\n';
    s << "\n[runtime]\n"
      << "workers = " << c.runtime.workers << '\n'
      << "mode = " << runtime::to_string(c.runtime.mode) << '\n'
      << "staleness = " << c.runtime.staleness.to_string() << '\n'
      << "queue_capacity = " << c.runtime.queue_capacity << '\n'
      << "env_latency_us = " << format_double(c.runtime.env_latency_us) << '\n'
      << "latency_sleeps = " << (c.runtime.latency_sleeps ? "true" : "false") << '\n';
    s << "\n[run]\nseeds = " << join(c.seeds) << "\nout_dir = " << c.out_dir.string() << '\n';
    s << "\n[eval]\nepisodes = " << c.eval_episodes << "\ngreedy = " << (c.eval_greedy ? "true" : "false") << '\n';
    if (!c.ablations.empty()) s << "\n[ablate]\nnames = " << join(c.ablations) << '\n';
    s << "\n[bench]\ncounts = " << join(c.bench_counts) << "\nseconds = " << format_double(c.bench_seconds)
      << "\nrepetitions = " << c.bench_repetitions << '\n';
    return s.str();
}

env::DecPomdpSpec make_env(const EnvConfig& config) {
    auto param = [&](const std::string& key) -> std::string {
        const auto it = config.params.find(key);
        if (it == config.params.end()) {
            throw ConfigError("env.name = " + config.name + " needs env." + key);
        }
        return it->second;
    };
    auto int_param = [&](const std::string& key, int fallback) {
        const auto it = config.params.find(key);
        if (it == config.params.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError("env." + key + ": invalid integer '" + it->second + "'");
        }
    };
    auto numbers = [&](const std::string& text, const std::string& key) {
        std::vector<double> out;
        for (const auto& x : split_list(text)) {
            try {
                out.push_back(std::stod(x));
            } catch (const std::exception&) {
                throw ConfigError("env." + key + ": invalid number '" + x + "'");
            }
        }
        return out;
    };

    env::DecPomdpSpec spec;
    try {
        if (config.name == "bandit") {
            spec = env::make_bandit(numbers(param("arms"), "arms"));
        } else if (config.name == "matrix_game") {
            std::vector<std::vector<double>> payoff;
            for (const auto& row : split_list(param("payoff"), ";")) payoff.push_back(numbers(row, "payoff"));
            spec = env::make_matrix_game(payoff, int_param("agents", 2));
        } else if (config.name == "gridworld") {
            spec = env::make_coop_gridworld(int_param("width", 5), int_param("height", 5), int_param("agents", 2),
                                            int_param("sight_radius", 1), int_param("episode_limit", 30));
        } else if (config.name == "json") {
            std::ifstream in(param("path"));
            if (!in) throw ConfigError("env.path: cannot read " + param("path"));
            spec = env::spec_from_json(nlohmann::json::parse(in));
        } else {
            throw ConfigError("env.name: unknown environment '" + config.name +
                              "' (expected bandit, matrix_game, gridworld or json)");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("environment " + config.name + ": " + e.what());
    }
    if (auto it = config.params.find("gamma"); it != config.params.end()) spec.gamma = std::stod(it->second);
    return spec;
}

}  // namespace matrace::cli
