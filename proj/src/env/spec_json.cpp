#include <stdexcept>

#include "matrace/env/dec_pomdp.hpp"

namespace matrace::env {

using nlohmann::json;

// Kernel rows are written densely; the in-memory form keeps only nonzero entries.
json spec_to_json(const DecPomdpSpec& spec) {
    json doc;
    doc["format"] = "matrace.dec_pomdp/1";
    doc["name"] = spec.name;
    doc["n_agents"] = spec.n_agents;
    doc["n_states"] = spec.n_states;
    doc["n_actions"] = spec.n_actions;
    doc["obs_dim"] = spec.obs_dim;
    doc["state_dim"] = spec.state_dim;
    doc["gamma"] = spec.gamma;
    doc["episode_limit"] = spec.episode_limit;
    doc["optimal_return"] = spec.optimal_return;
    doc["initial_dist"] = spec.initial_dist;

    json terminal = json::array();
    for (auto t : spec.terminal) terminal.push_back(t != 0);
    doc["terminal"] = terminal;

    json rows = json::array();
    for (const auto& row : spec.transition) {
        std::vector<double> dense(spec.n_states, 0.0);
        for (const auto& t : row) dense.at(t.next_state) += t.prob;
        rows.push_back(dense);
    }
    doc["transition"] = rows;
    doc["reward"] = spec.reward;

    json obs = json::array();
    for (int i = 0; i < spec.n_agents; ++i) {
        json per_state = json::array();
        for (int s = 0; s < spec.n_states; ++s) {
            const auto o = spec.observation(i, s);
            per_state.push_back(std::vector<double>(o.begin(), o.end()));
        }
        obs.push_back(per_state);
    }
    doc["observations"] = obs;

    json features = json::array();
    for (int s = 0; s < spec.n_states; ++s) {
        const auto f = spec.state_feature(s);
        features.push_back(std::vector<double>(f.begin(), f.end()));
    }
    doc["state_features"] = features;
    if (!spec.legal.empty()) {
        std::vector<int> legal(spec.legal.begin(), spec.legal.end());
        doc["legal"] = legal;
    }
    return doc;
}

DecPomdpSpec spec_from_json(const json& doc) {
    DecPomdpSpec spec;
    try {
        spec.name = doc.value("name", std::string{});
        spec.n_agents = doc.at("n_agents").get<int>();
        spec.n_states = doc.at("n_states").get<int>();
        spec.n_actions = doc.at("n_actions").get<int>();
        spec.obs_dim = doc.at("obs_dim").get<int>();
        spec.state_dim = doc.value("state_dim", 0);
        spec.gamma = doc.at("gamma").get<double>();
        spec.episode_limit = doc.at("episode_limit").get<int>();
        spec.optimal_return = doc.value("optimal_return", 0.0);
        spec.initial_dist = doc.at("initial_dist").get<std::vector<double>>();

        for (const auto& t : doc.at("terminal")) spec.terminal.push_back(t.get<bool>() ? 1 : 0);

        for (const auto& row : doc.at("transition")) {
            std::vector<Transition> sparse;
            const auto dense = row.get<std::vector<double>>();
            if (static_cast<int>(dense.size()) != spec.n_states) {
                throw std::invalid_argument("transition row length " + std::to_string(dense.size()) +
                                            " differs from n_states");
            }
            for (int s = 0; s < spec.n_states; ++s) {
                if (dense[s] != 0.0) sparse.push_back({s, dense[s]});
            }
            spec.transition.push_back(std::move(sparse));
        }

        // Accept either one shared table or one table per agent.
        const auto& reward = doc.at("reward");
        if (!reward.empty() && reward.front().is_array()) {
            spec.reward = reward.get<std::vector<std::vector<double>>>();
        } else {
            spec.reward.assign(spec.n_agents, reward.get<std::vector<double>>());
        }

        for (const auto& per_agent : doc.at("observations")) {
            for (const auto& o : per_agent) {
                const auto v = o.get<std::vector<double>>();
                if (static_cast<int>(v.size()) != spec.obs_dim) {
                    throw std::invalid_argument("observation vector length differs from obs_dim");
                }
                spec.observations.insert(spec.observations.end(), v.begin(), v.end());
            }
        }
        if (doc.contains("state_features")) {
            for (const auto& f : doc.at("state_features")) {
                const auto v = f.get<std::vector<double>>();
                if (static_cast<int>(v.size()) != spec.state_dim) {
                    throw std::invalid_argument("state feature length differs from state_dim");
                }
                spec.state_features.insert(spec.state_features.end(), v.begin(), v.end());
            }
        }
        if (doc.contains("legal")) {
            for (const auto& l : doc.at("legal")) spec.legal.push_back(l.get<int>() != 0 ? 1 : 0);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed Dec-POMDP document: ") + e.what());
    }
    require_valid(spec);
    return spec;
}

}  // namespace matrace::env
