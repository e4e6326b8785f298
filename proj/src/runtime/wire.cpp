#include "matrace/runtime/wire.hpp"

#include <bit>
#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <string>
#include <system_error>

#include <sys/socket.h>
#include <unistd.h>

namespace matrace::runtime::wire {

namespace {

constexpr std::size_t kHeaderBytes = 4 + 1 + 4;

class Writer {
public:
    void u8(std::uint8_t x) { out_.push_back(x); }
    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    }
    void u64(std::uint64_t x) {
        u32(static_cast<std::uint32_t>(x));
        u32(static_cast<std::uint32_t>(x >> 32));
    }
    void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
    void f64s(std::span<const double> xs) {
        for (double x : xs) f64(x);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return x;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<double> f64s(std::size_t n) {
        std::vector<double> out(n);
        for (auto& x : out) x = f64();
        return out;
    }
    void finish() const {
        if (pos_ != in_.size()) throw std::runtime_error("wire: trailing bytes in payload");
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw std::runtime_error("wire: payload too short");
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

constexpr std::uint32_t kFirst = 1;
constexpr std::uint32_t kTerminated = 2;
constexpr std::uint32_t kTruncated = 4;

}  // namespace

std::vector<std::uint8_t> encode(const Frame& frame) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(1 + 4 + frame.payload.size()));
    w.u8(static_cast<std::uint8_t>(frame.type));
    w.u32(frame.version);
    auto out = w.take();
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

std::optional<Frame> decode(std::span<const std::uint8_t> bytes, std::size_t& consumed) {
    if (bytes.size() < 4) return std::nullopt;
    Reader head(bytes.first(4));
    const auto len = head.u32();
    if (len < 5 || len > kMaxFrameBytes) throw std::runtime_error("wire: bad frame length " + std::to_string(len));
    if (bytes.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
    Reader r(bytes.subspan(4, 5));
    Frame f;
    const auto type = r.u8();
    if (type < 1 || type > 5) throw std::runtime_error("wire: unknown frame type " + std::to_string(type));
    f.type = static_cast<FrameType>(type);
    f.version = r.u32();
    const auto body = bytes.subspan(kHeaderBytes, len - 5);
    f.payload.assign(body.begin(), body.end());
    consumed = 4 + len;
    return f;
}

std::vector<std::uint8_t> encode_step(const StepReport& report, const Dims& dims) {
    const auto n_obs = static_cast<std::size_t>(dims.n_agents) * dims.obs_dim;
    const auto n_legal = static_cast<std::size_t>(dims.n_agents) * dims.n_actions;
    if (report.obs.size() != n_obs || report.state.size() != static_cast<std::size_t>(dims.state_dim)) {
        throw std::invalid_argument("wire: step report does not match the environment dimensions");
    }
    Writer w;
    w.u32((report.first ? kFirst : 0) | (report.terminated ? kTerminated : 0) | (report.truncated ? kTruncated : 0));
    w.f64(report.reward);
    w.f64s(report.obs);
    w.f64s(report.state);
    if (report.truncated) {
        if (report.final_obs.size() != n_obs || report.final_state.size() != report.state.size()) {
            throw std::invalid_argument("wire: truncated step without final observation");
        }
        w.f64s(report.final_obs);
        w.f64s(report.final_state);
    }
    for (std::size_t k = 0; k < n_legal; ++k) w.u32(report.legal.empty() ? 1u : report.legal[k]);
    return w.take();
}

StepReport decode_step(std::span<const std::uint8_t> payload, const Dims& dims) {
    const auto n_obs = static_cast<std::size_t>(dims.n_agents) * dims.obs_dim;
    Reader r(payload);
    StepReport out;
    const auto flags = r.u32();
    out.first = flags & kFirst;
    out.terminated = flags & kTerminated;
    out.truncated = flags & kTruncated;
    out.reward = r.f64();
    out.obs = r.f64s(n_obs);
    out.state = r.f64s(dims.state_dim);
    if (out.truncated) {
        out.final_obs = r.f64s(n_obs);
        out.final_state = r.f64s(dims.state_dim);
    }
    out.legal.resize(static_cast<std::size_t>(dims.n_agents) * dims.n_actions);
    for (auto& x : out.legal) x = r.u32() != 0;
    r.finish();
    return out;
}

std::vector<std::uint8_t> encode_actions(std::span<const int> actions) {
    Writer w;
    for (int a : actions) w.u32(static_cast<std::uint32_t>(a));
    return w.take();
}

std::vector<int> decode_actions(std::span<const std::uint8_t> payload, int n_agents) {
    Reader r(payload);
    std::vector<int> out(n_agents);
    for (auto& a : out) a = static_cast<int>(r.u32());
    r.finish();
    return out;
}

std::vector<std::uint8_t> encode_report(const WorkerCounters& counters) {
    Writer w;
    w.u64(counters.env_steps);
    w.u64(counters.episodes);
    w.f64(counters.mean_round_trip_us);
    return w.take();
}

WorkerCounters decode_report(std::span<const std::uint8_t> payload) {
    Reader r(payload);
    WorkerCounters out;
    out.env_steps = r.u64();
    out.episodes = r.u64();
    out.mean_round_trip_us = r.f64();
    r.finish();
    return out;
}

void write_frame(int fd, const Frame& frame) {
    const auto bytes = encode(frame);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto n = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::system_error(errno, std::generic_category(), "wire: write failed");
        }
        done += static_cast<std::size_t>(n);
    }
}

namespace {

bool read_exact(int fd, std::uint8_t* out, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
        const auto got = ::read(fd, out + done, n - done);
        if (got == 0) {
            if (done == 0) return false;
            throw std::runtime_error("wire: connection closed mid-frame");
        }
        if (got < 0) {
            if (errno == EINTR) continue;
            if (errno == ECONNRESET) return false;
            throw std::system_error(errno, std::generic_category(), "wire: read failed");
        }
        done += static_cast<std::size_t>(got);
    }
    return true;
}

}  // namespace

std::optional<Frame> read_frame(int fd) {
    std::vector<std::uint8_t> buf(4);
    if (!read_exact(fd, buf.data(), 4)) return std::nullopt;
    const std::uint32_t len = buf[0] | (buf[1] << 8) | (buf[2] << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
    if (len < 5 || len > kMaxFrameBytes) throw std::runtime_error("wire: bad frame length " + std::to_string(len));
    buf.resize(4 + len);
    if (!read_exact(fd, buf.data() + 4, len)) throw std::runtime_error("wire: connection closed mid-frame");
    std::size_t consumed = 0;
    auto frame = decode(buf, consumed);
    if (!frame) throw std::runtime_error("wire: incomplete frame");
    return frame;
}

}  // namespace matrace::runtime::wire
