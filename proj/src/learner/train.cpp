#include "matrace/learner/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

namespace matrace::learner {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string epoch_checkpoint_name(std::int64_t epoch) {
    std::ostringstream s;
    s << "epoch_" << std::setw(7) << std::setfill('0') << epoch << ".ckpt";
    return s.str();
}

}  // namespace

double median(std::vector<double> xs) {
    if (xs.empty()) return kNan;
    std::sort(xs.begin(), xs.end());
    const auto n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

bool is_success(const env::DecPomdpSpec& spec, double episode_return) {
    return episode_return >= spec.optimal_return - 1e-9;
}

std::string metrics_csv_header() {
    return "epoch,env_steps,episodes,mean_return,median_return,success_rate,critic_loss,actor_loss,entropy,"
           "entropy_coef,mean_rho,clipped_fraction,mean_abs_log_ratio,param_version";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
    out << std::setprecision(17) << m.epoch << ',' << m.env_steps << ',' << m.episodes << ',' << m.mean_return << ','
        << m.median_return << ',' << m.success_rate << ',' << m.critic_loss << ',' << m.actor_loss << ','
        << m.entropy << ',' << m.entropy_coef << ',' << m.mean_rho << ',' << m.clipped_fraction << ','
        << m.mean_abs_log_ratio << ',' << m.param_version << '\n';
}

std::string timing_csv_header() { return "epoch,env_steps,elapsed_sec,steps_per_sec"; }

void write_timing_row(std::ostream& out, const EpochMetrics& m) {
    out << std::setprecision(10) << m.epoch << ',' << m.env_steps << ',' << m.elapsed_sec << ',' << m.steps_per_sec
        << '\n';
}

nn::Checkpoint make_checkpoint(const nn::ActorNetworks& actor, const nn::CriticNetworks& critic,
                               std::uint64_t version, std::int64_t step, const nlohmann::json& meta) {
    nn::Checkpoint ck;
    ck.version = version;
    ck.step = step;
    ck.meta = meta;
    ck.meta["actor_layout"] = nn::to_json(actor.layout);
    ck.meta["critic_layout"] = nn::to_json(critic.layout);
    for (std::size_t k = 0; k < actor.nets.size(); ++k) {
        ck.networks.push_back({"actor/" + std::to_string(k), actor.layout.net_spec(), actor.nets[k]});
    }
    for (std::size_t k = 0; k < critic.nets.size(); ++k) {
        ck.networks.push_back({"critic/" + std::to_string(k), critic.layout.net_spec(), critic.nets[k]});
    }
    return ck;
}

nn::ActorNetworks actor_from_checkpoint(const nn::Checkpoint& checkpoint) {
    nn::ActorNetworks actor;
    actor.layout = nn::actor_layout_from_json(checkpoint.meta.at("actor_layout"));
    for (int k = 0; k < actor.layout.net_count(); ++k) {
        const auto& net = checkpoint.network("actor/" + std::to_string(k));
        if (!(net.spec == actor.layout.net_spec())) {
            throw std::runtime_error("checkpoint actor network " + std::to_string(k) +
                                     " does not match the recorded actor layout");
        }
        actor.nets.push_back(net.params);
    }
    return actor;
}

TrainResult train(const env::DecPomdpSpec& spec, const TrainConfig& config, const RunOptions& options) {
    using Clock = std::chrono::steady_clock;
    config.validate();
    env::require_valid(spec);
    Learner learner(spec, config);

    std::ofstream metrics_out, timing_out, vtrace_out;
    std::filesystem::path ckpt_dir;
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        metrics_out.open(options.out_dir / "metrics.csv");
        timing_out.open(options.out_dir / "timing.csv");
        if (!metrics_out || !timing_out) throw std::runtime_error("cannot write under " + options.out_dir.string());
        metrics_out << metrics_csv_header() << '\n';
        timing_out << timing_csv_header() << '\n';
        ckpt_dir = options.out_dir / "checkpoints";
        std::filesystem::create_directories(ckpt_dir);
        if (options.dump_vtrace) {
            vtrace_out.open(options.out_dir / "vtrace.csv");
            vtrace_out << "epoch,t,c,rho,delta,v\n" << std::setprecision(17);
        }
    }

    auto store = std::make_shared<runtime::SnapshotStore>();
    store->set_archive_all(options.archive_snapshots);
    store->publish(learner.actor(), 0);

    auto copts = options.collector;
    copts.unroll_length = config.unroll_length;
    copts.seed_base = config.seed;
    const auto alayout = actor_layout(spec, config);
    const auto clayout = critic_layout(spec, config);

    TrainResult result;
    result.snapshots = store;
    std::mt19937_64 sampler(config.seed ^ 0x5851f42d4c957f2dULL);
    std::int64_t steps = 0;
    std::int64_t episodes = 0;
    std::int64_t epoch = 0;
    const auto started = Clock::now();

    auto save = [&](const std::string& name) {
        if (ckpt_dir.empty()) return;
        const auto latest = store->latest();
        nn::save_checkpoint(ckpt_dir / name,
                            make_checkpoint(learner.actor(), learner.critic(), latest->version, steps,
                                            options.checkpoint_meta));
    };

    {
        auto collector = runtime::make_collector(spec, alayout, clayout, store, copts);
        while (steps < config.total_steps) {
            std::vector<runtime::Unroll> round;
            try {
                round = collector->collect(config.unrolls_per_epoch);
            } catch (const std::runtime_error& e) {
                spdlog::error("{}; stopping training", e.what());
                result.disconnected = true;
                break;
            }
            if (options.on_round) options.on_round(round, learner);

            EpochMetrics m;
            m.epoch = epoch;
            std::vector<double> returns;
            for (const auto& u : round) {
                steps += u.length;
                result.consumed_steps += static_cast<std::uint64_t>(u.length);
                returns.insert(returns.end(), u.episode_returns.begin(), u.episode_returns.end());
            }
            episodes += static_cast<std::int64_t>(returns.size());

            // Fresh permutation of the round for each pass over it.
            std::vector<std::size_t> order(round.size());
            std::size_t cursor = order.size();
            auto next_batch = [&] {
                std::vector<const runtime::Unroll*> batch;
                for (int b = 0; b < config.batch_size; ++b) {
                    if (cursor == order.size()) {
                        std::iota(order.begin(), order.end(), std::size_t{0});
                        std::shuffle(order.begin(), order.end(), sampler);
                        cursor = 0;
                    }
                    batch.push_back(&round[order[cursor++]]);
                }
                return batch;
            };

            const double fraction = static_cast<double>(steps) / static_cast<double>(config.total_steps);
            m.entropy_coef = nn::entropy_coefficient(config.entropy, fraction);
            for (int d = 0; d < config.density; ++d) {
                const auto batch = next_batch();
                m.critic_loss += learner.critic_update(batch).loss / config.density;
            }
            if (vtrace_out.is_open() && !round.empty()) {
                const auto tg = learner.targets(round.front());
                for (int t = 0; t < round.front().length; ++t) {
                    const double delta = round.front().rewards[t] + config.gamma * tg.next_values[0][t] -
                                         tg.values[0][t];
                    vtrace_out << epoch << ',' << t << ',' << tg.c[t] << ',' << tg.rho[t] << ',' << delta << ','
                               << tg.v_targets[0][t] << '\n';
                }
            }
            for (int d = 0; d < config.density; ++d) {
                const auto batch = next_batch();
                const auto s = learner.actor_update(batch, m.entropy_coef);
                m.actor_loss += s.loss / config.density;
                m.entropy += s.entropy / config.density;
                m.mean_rho += s.mean_rho / config.density;
                m.clipped_fraction += s.clipped_fraction / config.density;
                m.mean_abs_log_ratio += s.mean_abs_log_ratio / config.density;
            }
            const auto snap = store->publish(learner.actor(), steps);

            m.env_steps = steps;
            m.episodes = episodes;
            if (returns.empty()) {
                m.mean_return = m.median_return = m.success_rate = kNan;
            } else {
                m.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
                m.median_return = median(returns);
                m.success_rate = static_cast<double>(std::count_if(returns.begin(), returns.end(), [&](double r) {
                                     return is_success(spec, r);
                                 })) /
                                 returns.size();
            }
            m.param_version = snap->version;
            m.elapsed_sec = std::chrono::duration<double>(Clock::now() - started).count();
            m.steps_per_sec = m.elapsed_sec > 0.0 ? steps / m.elapsed_sec : 0.0;
            if (metrics_out.is_open()) {
                write_metrics_row(metrics_out, m);
                write_timing_row(timing_out, m);
            }
            if (options.on_epoch) options.on_epoch(m);
            result.metrics.push_back(m);
            ++epoch;
            if (epoch % config.checkpoint_every == 0) save(epoch_checkpoint_name(epoch));
            if (options.max_seconds > 0.0 && m.elapsed_sec >= options.max_seconds) break;
        }
        result.summary = collector->shutdown();
    }
    for (const auto& u : result.summary.leftovers) result.consumed_steps += static_cast<std::uint64_t>(u.length);
    save("final.ckpt");
    result.actor = learner.actor();
    result.critic = learner.critic();
    return result;
}

EvalSummary evaluate_policy(const env::DecPomdpSpec& spec, const nn::ActorNetworks& actor, int episodes,
                            std::uint64_t seed, bool greedy) {
    const auto& layout = actor.layout;
    if (layout.n_agents != spec.n_agents || layout.obs_dim != spec.obs_dim || layout.n_actions != spec.n_actions) {
        throw std::invalid_argument("policy/environment mismatch: policy has " + std::to_string(layout.n_agents) +
                                    " agents, obs_dim " + std::to_string(layout.obs_dim) + ", " +
                                    std::to_string(layout.n_actions) + " actions; environment has " +
                                    std::to_string(spec.n_agents) + " agents, obs_dim " +
                                    std::to_string(spec.obs_dim) + ", " + std::to_string(spec.n_actions) +
                                    " actions");
    }
    // Decentralized execution guard: actor inputs are built from one agent's own observations.
    const int expected_in = spec.obs_dim * layout.framestack +
                            (layout.mode == nn::ActorMode::shared_with_id ? spec.n_agents : 0);
    if (layout.input_dim() != expected_in) throw std::logic_error("actor input is not a per-agent observation");

    EvalSummary out;
    out.episodes = std::max(episodes, 0);
    env::Episode ep(spec, seed);
    env::Rng rng(seed ^ 0x94d049bb133111ebULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int e = 0; e < episodes; ++e) {
        std::vector<nn::FrameStack> stacks(spec.n_agents, nn::FrameStack(spec.obs_dim, layout.framestack));
        auto r = ep.reset();
        int state = r.state_index;
        double total = 0.0;
        for (;;) {
            std::vector<int> actions(spec.n_agents);
            const auto legal = env::legal_actions(spec, state);
            for (int i = 0; i < spec.n_agents; ++i) {
                stacks[i].push(spec.observation(i, state));
                const auto lp = actor.log_probs(i, stacks[i].stacked(), legal[i]);
                if (greedy) {
                    actions[i] = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
                } else {
                    const double u = unit(rng);
                    double acc = 0.0;
                    for (int a = 0; a < spec.n_actions; ++a) {
                        if (!std::isfinite(lp[a])) continue;
                        actions[i] = a;
                        acc += std::exp(lp[a]);
                        if (u < acc) break;
                    }
                }
            }
            const auto st = ep.step(actions);
            total += st.reward;
            state = st.state_index;
            if (st.done) break;
        }
        out.returns.push_back(total);
    }
    if (!out.returns.empty()) {
        out.mean_return = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / out.returns.size();
        out.median_return = median(out.returns);
        out.success_rate =
            static_cast<double>(std::count_if(out.returns.begin(), out.returns.end(),
                                              [&](double x) { return is_success(spec, x); })) /
            out.returns.size();
    }
    return out;
}

}  // namespace matrace::learner
