#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "matrace/env/dec_pomdp.hpp"
#include "matrace/nn/policy.hpp"
#include "matrace/runtime/snapshot.hpp"
#include "matrace/runtime/unroll.hpp"

namespace matrace::runtime {

struct InferenceRequest {
    SnapshotPtr snapshot;
    std::vector<std::vector<double>> inputs;  // actor network input per agent
    std::vector<std::uint8_t> legal;          // [agent][action]
};

/// Per-agent logits for each request, evaluating requests that share a
/// network in one batched forward pass.
std::vector<std::vector<std::vector<double>>> evaluate(const std::vector<const InferenceRequest*>& requests);

struct SessionConfig {
    int worker = 0;
    int unroll_length = 32;
    Staleness staleness;
    std::uint64_t seed = 0;  // action sampling
};

/// Learner-side state for one worker: frame stacks, snapshot choice, action
/// sampling and unroll assembly. The worker itself only steps its environment.
class ActorSession {
public:
    ActorSession(const env::DecPomdpSpec& spec, nn::ActorLayout actor, nn::CriticLayout critic,
                 std::shared_ptr<SnapshotStore> store, SessionConfig config);

    /// Consumes a worker report and returns the inference request for the
    /// action in the reported state.
    const InferenceRequest& begin(const StepReport& report);
    /// Samples the joint action from the evaluated logits of the last request.
    std::vector<int> finish(const std::vector<std::vector<double>>& logits);

    /// Unrolls completed since the last call.
    std::vector<Unroll> take_ready();
    /// Completed steps of the unfinished unroll, if any (shutdown only).
    std::optional<Unroll> flush();

    std::uint32_t pending_version() const { return request_.snapshot ? request_.snapshot->version : 0; }
    std::uint64_t consumed_steps() const { return consumed_steps_; }
    std::uint64_t episodes() const { return episodes_; }
    const std::map<std::uint32_t, std::uint64_t>& version_histogram() const { return versions_; }

private:
    SnapshotPtr choose_snapshot();
    void start_unroll();
    void drop_pending();

    const env::DecPomdpSpec* spec_;
    nn::ActorLayout actor_;
    nn::CriticLayout critic_;
    std::shared_ptr<SnapshotStore> store_;
    SessionConfig config_;
    env::Rng rng_;

    std::vector<nn::FrameStack> agent_stacks_;
    nn::FrameStack joint_stack_;
    nn::FrameStack state_stack_;

    Unroll current_;
    SnapshotPtr unroll_snapshot_;
    std::vector<Unroll> ready_;
    InferenceRequest request_;
    bool pending_ = false;  // an action was issued and its transition not yet reported
    bool requested_ = false;
    double episode_return_ = 0.0;

    std::uint64_t consumed_steps_ = 0;
    std::uint64_t episodes_ = 0;
    std::map<std::uint32_t, std::uint64_t> versions_;
};

}  // namespace matrace::runtime
