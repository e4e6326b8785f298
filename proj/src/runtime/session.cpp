#include "matrace/runtime/session.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace matrace::runtime {

std::vector<std::vector<std::vector<double>>> evaluate(const std::vector<const InferenceRequest*>& requests) {
    std::vector<std::vector<std::vector<double>>> out(requests.size());
    // Group (request, agent) pairs by the parameter vector they need.
    std::map<const nn::ParamVector*, std::vector<std::pair<std::size_t, int>>> groups;
    for (std::size_t r = 0; r < requests.size(); ++r) {
        const auto& req = *requests[r];
        if (!req.snapshot) throw std::logic_error("evaluate: request without a snapshot");
        const auto& layout = req.snapshot->actor.layout;
        out[r].resize(req.inputs.size());
        for (int i = 0; i < static_cast<int>(req.inputs.size()); ++i) {
            groups[&req.snapshot->actor.nets.at(layout.net_for(i))].emplace_back(r, i);
        }
    }
    for (const auto& [params, members] : groups) {
        const auto& layout = requests[members.front().first]->snapshot->actor.layout;
        const auto spec = layout.net_spec();
        std::vector<double> batch;
        batch.reserve(members.size() * spec.input_dim);
        for (const auto& [r, i] : members) {
            const auto& x = requests[r]->inputs[i];
            batch.insert(batch.end(), x.begin(), x.end());
        }
        const auto y = nn::forward(*params, spec, batch, static_cast<int>(members.size()));
        const auto width = static_cast<std::size_t>(spec.total_output());
        for (std::size_t m = 0; m < members.size(); ++m) {
            const auto [r, i] = members[m];
            out[r][i].assign(y.begin() + m * width, y.begin() + (m + 1) * width);
        }
    }
    return out;
}

ActorSession::ActorSession(const env::DecPomdpSpec& spec, nn::ActorLayout actor, nn::CriticLayout critic,
                           std::shared_ptr<SnapshotStore> store, SessionConfig config)
    : spec_(&spec),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      store_(std::move(store)),
      config_(config),
      rng_(config.seed),
      joint_stack_(spec.n_agents * spec.obs_dim, critic_.framestack),
      state_stack_(spec.state_dim, critic_.framestack) {
    if (config_.unroll_length < 1) throw std::invalid_argument("unroll length must be positive");
    if (actor_.obs_dim != spec.obs_dim || actor_.n_agents != spec.n_agents || actor_.n_actions != spec.n_actions) {
        throw std::invalid_argument("actor layout does not match the environment");
    }
    for (int i = 0; i < spec.n_agents; ++i) agent_stacks_.emplace_back(spec.obs_dim, actor_.framestack);
    start_unroll();
}

void ActorSession::start_unroll() {
    current_ = Unroll{};
    current_.worker = config_.worker;
    current_.n_agents = spec_->n_agents;
    current_.critic_x.assign(critic_.net_count(), {});
    if (config_.staleness.kind == StalenessKind::natural) unroll_snapshot_ = store_->wait_latest();
}

SnapshotPtr ActorSession::choose_snapshot() {
    switch (config_.staleness.kind) {
        case StalenessKind::fresh: return store_->wait_latest();
        case StalenessKind::fixed_lag: return store_->at_lag(config_.staleness.lag);
        case StalenessKind::natural: return unroll_snapshot_;
    }
    return nullptr;
}

void ActorSession::drop_pending() {
    if (!requested_ && !pending_) return;
    const auto n = static_cast<std::size_t>(current_.rewards.size());
    const auto agents = static_cast<std::size_t>(spec_->n_agents);
    current_.actor_obs.resize(n * agents * actor_.obs_dim * actor_.framestack);
    current_.legal.resize(n * agents * spec_->n_actions);
    current_.actions.resize(n * agents);
    current_.behavior_logp.resize(n * agents);
    current_.versions.resize(n);
    for (auto& x : current_.critic_x) x.resize(n * critic_.input_dim());
    requested_ = false;
    pending_ = false;
}

const InferenceRequest& ActorSession::begin(const StepReport& report) {
    const int n = spec_->n_agents;
    const auto obs_width = static_cast<std::size_t>(spec_->obs_dim);
    if (report.obs.size() != n * obs_width) throw std::invalid_argument("step report: wrong observation size");

    bool boundary = report.first;
    if (report.first) {
        // A (re)started worker: any action issued to a previous incarnation never completed.
        drop_pending();
        episode_return_ = 0.0;
    } else {
        if (!pending_) throw std::logic_error("step report without an outstanding action");
        current_.rewards.push_back(report.reward);
        current_.terminated.push_back(report.terminated);
        current_.truncated.push_back(report.truncated);
        ++consumed_steps_;
        episode_return_ += report.reward;
        if (report.truncated) {
            auto joint = joint_stack_;
            auto state = state_stack_;
            joint.push(report.final_obs);
            state.push(report.final_state);
            current_.final_x.emplace_back(static_cast<int>(current_.rewards.size()) - 1,
                                          nn::critic_input(critic_, joint.stacked(), state.stacked()));
        }
        if (report.terminated || report.truncated) {
            current_.episode_returns.push_back(episode_return_);
            episode_return_ = 0.0;
            ++episodes_;
            boundary = true;
        }
        pending_ = false;
    }

    if (boundary) {
        for (auto& s : agent_stacks_) s.reset();
        joint_stack_.reset();
        state_stack_.reset();
    }
    for (int i = 0; i < n; ++i) {
        agent_stacks_[i].push(std::span<const double>(report.obs).subspan(i * obs_width, obs_width));
    }
    joint_stack_.push(report.obs);
    state_stack_.push(report.state);
    auto x = nn::critic_input(critic_, joint_stack_.stacked(), state_stack_.stacked());

    if (static_cast<int>(current_.rewards.size()) == config_.unroll_length) {
        current_.length = config_.unroll_length;
        current_.complete = true;
        current_.bootstrap_x = x;
        ready_.push_back(std::move(current_));
        start_unroll();
    }

    request_.snapshot = choose_snapshot();
    request_.inputs.clear();
    for (int i = 0; i < n; ++i) request_.inputs.push_back(actor_.input(i, agent_stacks_[i].stacked()));
    request_.legal = report.legal.empty()
                         ? std::vector<std::uint8_t>(static_cast<std::size_t>(n) * spec_->n_actions, 1)
                         : report.legal;

    for (const auto& s : agent_stacks_) current_.actor_obs.insert(current_.actor_obs.end(), s.stacked().begin(),
                                                                  s.stacked().end());
    current_.legal.insert(current_.legal.end(), request_.legal.begin(), request_.legal.end());
    for (std::size_t k = 0; k < x.size(); ++k) current_.critic_x[k].insert(current_.critic_x[k].end(), x[k].begin(),
                                                                          x[k].end());
    current_.versions.push_back(request_.snapshot->version);
    requested_ = true;
    return request_;
}

std::vector<int> ActorSession::finish(const std::vector<std::vector<double>>& logits) {
    if (!requested_) throw std::logic_error("finish() without a pending request");
    const int n = spec_->n_agents;
    const int a_count = spec_->n_actions;
    if (static_cast<int>(logits.size()) != n) throw std::invalid_argument("finish: one logit vector per agent expected");
    std::vector<int> actions(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const auto legal = std::span<const std::uint8_t>(request_.legal).subspan(i * a_count, a_count);
        const auto lp = nn::masked_log_softmax(logits[i], legal);
        const double u = unit(rng_);
        double acc = 0.0;
        int choice = -1;
        for (int a = 0; a < a_count; ++a) {
            if (!legal[a]) continue;
            choice = a;
            acc += std::exp(lp[a]);
            if (u < acc) break;
        }
        actions[i] = choice;
        current_.actions.push_back(choice);
        current_.behavior_logp.push_back(lp[choice]);
    }
    ++versions_[request_.snapshot->version];
    requested_ = false;
    pending_ = true;
    return actions;
}

std::vector<Unroll> ActorSession::take_ready() {
    std::vector<Unroll> out;
    out.swap(ready_);
    return out;
}

std::optional<Unroll> ActorSession::flush() {
    drop_pending();
    if (current_.rewards.empty()) return std::nullopt;
    Unroll out = std::move(current_);
    out.length = static_cast<int>(out.rewards.size());
    out.complete = false;
    start_unroll();
    return out;
}

}  // namespace matrace::runtime
