#include "matrace/nn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace matrace::nn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t net_seed(std::uint64_t seed, int index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<int> hidden_from_json(const nlohmann::json& doc) { return doc.at("hidden").get<std::vector<int>>(); }

}  // namespace

ActorMode parse_actor_mode(const std::string& name) {
    if (name == "shared") return ActorMode::shared;
    if (name == "shared_with_id") return ActorMode::shared_with_id;
    if (name == "separate") return ActorMode::separate;
    throw std::invalid_argument("unknown actor mode '" + name + "' (expected shared, shared_with_id or separate)");
}

CriticMode parse_critic_mode(const std::string& name) {
    if (name == "obs") return CriticMode::obs;
    if (name == "full") return CriticMode::full;
    if (name == "obs_full") return CriticMode::obs_full;
    if (name == "decentralized") return CriticMode::decentralized;
    throw std::invalid_argument("unknown critic mode '" + name + "' (expected obs, full, obs_full or decentralized)");
}

std::string to_string(ActorMode mode) {
    switch (mode) {
        case ActorMode::shared: return "shared";
        case ActorMode::shared_with_id: return "shared_with_id";
        case ActorMode::separate: return "separate";
    }
    return "?";
}

std::string to_string(CriticMode mode) {
    switch (mode) {
        case CriticMode::obs: return "obs";
        case CriticMode::full: return "full";
        case CriticMode::obs_full: return "obs_full";
        case CriticMode::decentralized: return "decentralized";
    }
    return "?";
}

std::vector<double> masked_log_softmax(std::span<const double> logits, std::span<const std::uint8_t> legal) {
    if (!legal.empty() && legal.size() != logits.size()) {
        throw std::invalid_argument("masked_log_softmax: mask length differs from logits");
    }
    auto allowed = [&](std::size_t a) { return legal.empty() || legal[a] != 0; };
    double max_logit = kNegInf;
    for (std::size_t a = 0; a < logits.size(); ++a) {
        if (allowed(a)) max_logit = std::max(max_logit, logits[a]);
    }
    if (max_logit == kNegInf) throw std::invalid_argument("masked_log_softmax: no legal action");
    double z = 0.0;
    for (std::size_t a = 0; a < logits.size(); ++a) {
        if (allowed(a)) z += std::exp(logits[a] - max_logit);
    }
    const double log_z = max_logit + std::log(z);
    std::vector<double> out(logits.size(), kNegInf);
    for (std::size_t a = 0; a < logits.size(); ++a) {
        if (allowed(a)) out[a] = logits[a] - log_z;
    }
    return out;
}

double entropy(std::span<const double> log_probs) {
    double h = 0.0;
    for (double lp : log_probs) {
        if (std::isfinite(lp)) h -= std::exp(lp) * lp;
    }
    return h;
}

FrameStack::FrameStack(int frame_dim, int k) : frame_dim_(frame_dim), k_(k) {
    if (frame_dim < 0 || k < 1) throw std::invalid_argument("FrameStack: need frame_dim >= 0 and k >= 1");
    data_.assign(static_cast<std::size_t>(frame_dim) * k, 0.0);
}

void FrameStack::reset() { std::fill(data_.begin(), data_.end(), 0.0); }

void FrameStack::push(std::span<const double> frame) {
    if (frame.size() != static_cast<std::size_t>(frame_dim_)) {
        throw std::invalid_argument("FrameStack: frame has " + std::to_string(frame.size()) + " values, expected " +
                                    std::to_string(frame_dim_));
    }
    std::rotate(data_.begin(), data_.begin() + frame_dim_, data_.end());
    std::copy(frame.begin(), frame.end(), data_.end() - frame_dim_);
}

void ActorLayout::validate() const {
    if (n_agents < 1 || obs_dim < 1 || framestack < 1 || n_actions < 1) {
        throw std::invalid_argument("ActorLayout: agents, obs_dim, framestack and actions must be positive");
    }
}

int ActorLayout::input_dim() const {
    return obs_dim * framestack + (mode == ActorMode::shared_with_id ? n_agents : 0);
}

MlpSpec ActorLayout::net_spec() const {
    MlpSpec spec;
    spec.input_dim = input_dim();
    spec.hidden = hidden;
    spec.output_dim = n_actions;
    return spec;
}

std::vector<double> ActorLayout::input(int agent, std::span<const double> stacked_obs) const {
    if (stacked_obs.size() != static_cast<std::size_t>(obs_dim) * framestack) {
        throw std::invalid_argument("actor input: stacked observation has " + std::to_string(stacked_obs.size()) +
                                    " values, expected " + std::to_string(obs_dim * framestack));
    }
    if (agent < 0 || agent >= n_agents) throw std::out_of_range("actor input: agent id out of range");
    std::vector<double> x(stacked_obs.begin(), stacked_obs.end());
    if (mode == ActorMode::shared_with_id) {
        x.resize(x.size() + n_agents, 0.0);
        x[static_cast<std::size_t>(obs_dim) * framestack + agent] = 1.0;
    }
    return x;
}

ActorNetworks ActorNetworks::init(const ActorLayout& layout, std::uint64_t seed) {
    layout.validate();
    ActorNetworks out{layout, {}};
    for (int k = 0; k < layout.net_count(); ++k) out.nets.push_back(init_params(layout.net_spec(), net_seed(seed, k)));
    return out;
}

std::vector<double> ActorNetworks::logits(int agent, std::span<const double> stacked_obs,
                                          std::span<const std::uint8_t> legal) const {
    const auto x = layout.input(agent, stacked_obs);
    auto out = forward(nets.at(layout.net_for(agent)), layout.net_spec(), x, 1);
    if (!legal.empty()) {
        if (legal.size() != out.size()) throw std::invalid_argument("actor logits: mask length differs from actions");
        for (std::size_t a = 0; a < out.size(); ++a) {
            if (!legal[a]) out[a] = kNegInf;
        }
    }
    return out;
}

std::vector<double> ActorNetworks::log_probs(int agent, std::span<const double> stacked_obs,
                                             std::span<const std::uint8_t> legal) const {
    const auto x = layout.input(agent, stacked_obs);
    const auto out = forward(nets.at(layout.net_for(agent)), layout.net_spec(), x, 1);
    return masked_log_softmax(out, legal);
}

void CriticLayout::validate() const {
    if (n_agents < 1 || obs_dim < 1 || framestack < 1) {
        throw std::invalid_argument("CriticLayout: agents, obs_dim and framestack must be positive");
    }
    if ((mode == CriticMode::full || mode == CriticMode::obs_full) && state_dim < 1) {
        throw std::invalid_argument("critic mode " + to_string(mode) +
                                    " needs a full-state encoding, but the environment exposes none");
    }
    if (mode != CriticMode::decentralized && heads != 1 && heads != n_agents) {
        throw std::invalid_argument("critic heads must be 1 or n_agents");
    }
}

int CriticLayout::input_dim() const {
    switch (mode) {
        case CriticMode::obs: return n_agents * obs_dim * framestack;
        case CriticMode::full: return state_dim * framestack;
        case CriticMode::obs_full: return (n_agents * obs_dim + state_dim) * framestack;
        case CriticMode::decentralized: return obs_dim * framestack;
    }
    return 0;
}

MlpSpec CriticLayout::net_spec() const {
    MlpSpec spec;
    spec.input_dim = input_dim();
    spec.hidden = hidden;
    spec.output_dim = 1;
    spec.head_count = outputs_per_net();
    return spec;
}

std::vector<std::vector<double>> critic_input(const CriticLayout& layout, std::span<const double> stacked_joint_obs,
                                              std::span<const double> stacked_state) {
    const auto k = static_cast<std::size_t>(layout.framestack);
    const auto joint_width = static_cast<std::size_t>(layout.n_agents) * layout.obs_dim;
    if (stacked_joint_obs.size() != joint_width * k) {
        throw std::invalid_argument("critic_input: stacked joint observation has " +
                                    std::to_string(stacked_joint_obs.size()) + " values, expected " +
                                    std::to_string(joint_width * k));
    }
    const bool uses_state = layout.mode == CriticMode::full || layout.mode == CriticMode::obs_full;
    if (uses_state && stacked_state.size() != static_cast<std::size_t>(layout.state_dim) * k) {
        throw std::invalid_argument("critic_input: critic mode " + to_string(layout.mode) +
                                    " needs a stacked state of " + std::to_string(layout.state_dim * k) + " values");
    }
    std::vector<std::vector<double>> out;
    switch (layout.mode) {
        case CriticMode::obs:
            out.emplace_back(stacked_joint_obs.begin(), stacked_joint_obs.end());
            break;
        case CriticMode::full:
            out.emplace_back(stacked_state.begin(), stacked_state.end());
            break;
        case CriticMode::obs_full: {
            std::vector<double> x(stacked_joint_obs.begin(), stacked_joint_obs.end());
            x.insert(x.end(), stacked_state.begin(), stacked_state.end());
            out.push_back(std::move(x));
            break;
        }
        case CriticMode::decentralized:
            for (int i = 0; i < layout.n_agents; ++i) {
                std::vector<double> x;
                x.reserve(static_cast<std::size_t>(layout.obs_dim) * k);
                for (std::size_t f = 0; f < k; ++f) {
                    const auto begin = stacked_joint_obs.begin() + f * joint_width + i * layout.obs_dim;
                    x.insert(x.end(), begin, begin + layout.obs_dim);
                }
                out.push_back(std::move(x));
            }
            break;
    }
    return out;
}

CriticNetworks CriticNetworks::init(const CriticLayout& layout, std::uint64_t seed) {
    layout.validate();
    CriticNetworks out{layout, {}};
    for (int k = 0; k < layout.net_count(); ++k) {
        out.nets.push_back(init_params(layout.net_spec(), net_seed(seed ^ 0xc2b2ae3d27d4eb4fULL, k)));
    }
    return out;
}

std::vector<double> CriticNetworks::values(const std::vector<std::vector<double>>& inputs) const {
    if (inputs.size() != nets.size()) throw std::invalid_argument("critic values: one input per critic net expected");
    std::vector<double> out;
    for (std::size_t k = 0; k < nets.size(); ++k) {
        const auto v = forward(nets[k], layout.net_spec(), inputs[k], 1);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

nlohmann::json to_json(const MlpSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden", spec.hidden},
            {"activation", spec.activation == Activation::relu ? "relu" : "identity"},
            {"output_dim", spec.output_dim},
            {"head_count", spec.head_count}};
}

MlpSpec mlp_spec_from_json(const nlohmann::json& doc) {
    MlpSpec spec;
    spec.input_dim = doc.at("input_dim").get<int>();
    spec.hidden = hidden_from_json(doc);
    const auto act = doc.at("activation").get<std::string>();
    if (act == "relu") {
        spec.activation = Activation::relu;
    } else if (act == "identity") {
        spec.activation = Activation::identity;
    } else {
        throw std::invalid_argument("unknown activation '" + act + "'");
    }
    spec.output_dim = doc.at("output_dim").get<int>();
    spec.head_count = doc.at("head_count").get<int>();
    spec.validate();
    return spec;
}

nlohmann::json to_json(const ActorLayout& layout) {
    return {{"mode", to_string(layout.mode)},       {"n_agents", layout.n_agents},
            {"obs_dim", layout.obs_dim},            {"framestack", layout.framestack},
            {"n_actions", layout.n_actions},        {"hidden", layout.hidden}};
}

ActorLayout actor_layout_from_json(const nlohmann::json& doc) {
    ActorLayout layout;
    layout.mode = parse_actor_mode(doc.at("mode").get<std::string>());
    layout.n_agents = doc.at("n_agents").get<int>();
    layout.obs_dim = doc.at("obs_dim").get<int>();
    layout.framestack = doc.at("framestack").get<int>();
    layout.n_actions = doc.at("n_actions").get<int>();
    layout.hidden = hidden_from_json(doc);
    layout.validate();
    return layout;
}

nlohmann::json to_json(const CriticLayout& layout) {
    return {{"mode", to_string(layout.mode)}, {"n_agents", layout.n_agents}, {"obs_dim", layout.obs_dim},
            {"state_dim", layout.state_dim},  {"framestack", layout.framestack}, {"heads", layout.heads},
            {"hidden", layout.hidden}};
}

CriticLayout critic_layout_from_json(const nlohmann::json& doc) {
    CriticLayout layout;
    layout.mode = parse_critic_mode(doc.at("mode").get<std::string>());
    layout.n_agents = doc.at("n_agents").get<int>();
    layout.obs_dim = doc.at("obs_dim").get<int>();
    layout.state_dim = doc.at("state_dim").get<int>();
    layout.framestack = doc.at("framestack").get<int>();
    layout.heads = doc.at("heads").get<int>();
    layout.hidden = hidden_from_json(doc);
    layout.validate();
    return layout;
}

}  // namespace matrace::nn
