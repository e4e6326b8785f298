#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "matrace/runtime/unroll.hpp"

namespace matrace::runtime::wire {

// Frame: u32 length of the rest, u8 type, u32 version, payload. All integers
// and doubles little-endian. See docs/wire_format.md.
enum class FrameType : std::uint8_t {
    hello = 1,   // worker -> learner, version = worker id
    step = 2,    // worker -> learner, StepReport
    action = 3,  // learner -> worker, version = snapshot version, payload u32 per agent
    stop = 4,    // learner -> worker
    report = 5,  // worker -> learner, final counters
};

struct Frame {
    FrameType type = FrameType::hello;
    std::uint32_t version = 0;
    std::vector<std::uint8_t> payload;
};

inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

std::vector<std::uint8_t> encode(const Frame& frame);

/// Decodes one frame from the front of `bytes`; returns nullopt when more
/// bytes are needed. `consumed` receives the frame size on success.
std::optional<Frame> decode(std::span<const std::uint8_t> bytes, std::size_t& consumed);

struct Dims {
    int n_agents = 0;
    int obs_dim = 0;
    int state_dim = 0;
    int n_actions = 0;
};

std::vector<std::uint8_t> encode_step(const StepReport& report, const Dims& dims);
StepReport decode_step(std::span<const std::uint8_t> payload, const Dims& dims);

std::vector<std::uint8_t> encode_actions(std::span<const int> actions);
std::vector<int> decode_actions(std::span<const std::uint8_t> payload, int n_agents);

struct WorkerCounters {
    std::uint64_t env_steps = 0;
    std::uint64_t episodes = 0;
    double mean_round_trip_us = 0.0;
};

std::vector<std::uint8_t> encode_report(const WorkerCounters& counters);
WorkerCounters decode_report(std::span<const std::uint8_t> payload);

/// Blocking whole-frame IO on a stream socket. read_frame returns nullopt on EOF.
void write_frame(int fd, const Frame& frame);
std::optional<Frame> read_frame(int fd);

}  // namespace matrace::runtime::wire
