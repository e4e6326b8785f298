#include <atomic>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <thread>

#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "matrace/runtime/collector.hpp"
#include "matrace/runtime/queue.hpp"
#include "matrace/runtime/wire.hpp"

namespace matrace::runtime {

namespace {

/// Workers are threads or forked processes, each connected to the learner
/// through a socketpair. One inference thread on the learner side serves all
/// of them and feeds completed unrolls into a bounded queue.
class SocketCollector final : public Collector {
public:
    SocketCollector(const env::DecPomdpSpec& spec, const nn::ActorLayout& actor, const nn::CriticLayout& critic,
                    std::shared_ptr<SnapshotStore> store, const CollectorOptions& options)
        : spec_(spec),
          options_(options),
          dims_{spec.n_agents, spec.obs_dim, spec.state_dim, spec.n_actions},
          queue_(options.queue_capacity) {
        store->wait_latest();
        for (int w = 0; w < options.workers; ++w) {
            SessionConfig sc{w, options.unroll_length, options.staleness, worker_action_seed(options.seed_base, w)};
            sessions_.emplace_back(spec_, actor, critic, store, sc);
            slots_.emplace_back();
            slots_.back().id = w;
        }
        for (auto& slot : slots_) launch(slot);
        inference_ = std::thread([this] { serve(); });
    }

    ~SocketCollector() override {
        if (!shut_down_) {
            try {
                shutdown();
            } catch (const std::exception& e) {
                spdlog::error("collector shutdown failed: {}", e.what());
            }
        }
    }

    std::vector<Unroll> collect(int count) override {
        std::vector<Unroll> out;
        out.reserve(count);
        while (static_cast<int>(out.size()) < count) {
            auto u = queue_.pop();
            if (!u) {
                for (auto& x : out) early_.push_back(std::move(x));
                throw std::runtime_error("runtime disconnected: " + failure());
            }
            out.push_back(std::move(*u));
        }
        return out;
    }

    CollectorSummary shutdown() override {
        if (shut_down_) throw std::logic_error("collector already shut down");
        shut_down_ = true;
        stopping_ = true;
        queue_.close();
        if (inference_.joinable()) inference_.join();

        CollectorSummary s;
        for (auto& u : early_) s.leftovers.push_back(std::move(u));
        for (auto& u : queue_.drain()) s.leftovers.push_back(std::move(u));
        for (auto& u : rejected_) s.leftovers.push_back(std::move(u));
        for (std::size_t w = 0; w < slots_.size(); ++w) {
            for (auto& u : sessions_[w].take_ready()) s.leftovers.push_back(std::move(u));
            if (auto partial = sessions_[w].flush()) s.leftovers.push_back(std::move(*partial));
            auto& slot = slots_[w];
            WorkerReport r;
            r.worker = slot.id;
            r.env_steps = slot.reported_steps + slot.lost_steps;
            r.consumed_steps = sessions_[w].consumed_steps();
            r.episodes = slot.reported_episodes;
            r.mean_round_trip_us = slot.round_trip_us;
            r.version_histogram = sessions_[w].version_histogram();
            r.restarts = slot.restarts;
            s.generated_steps += r.env_steps;
            s.workers.push_back(std::move(r));
        }
        return s;
    }

private:
    struct Slot {
        int id = 0;
        int fd = -1;
        std::thread thread;
        pid_t pid = -1;
        int restarts = 0;
        bool done = false;       // REPORT received or gone after STOP
        std::uint64_t incarnation_steps = 0;
        std::uint64_t reported_steps = 0;
        std::uint64_t reported_episodes = 0;
        std::uint64_t lost_steps = 0;  // steps of crashed incarnations, counted on the learner side
        double round_trip_us = 0.0;
    };

    std::string failure() {
        std::lock_guard lock(error_mu_);
        return error_.empty() ? "inference service stopped" : error_;
    }

    void launch(Slot& slot) {
        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
            throw std::runtime_error(std::string("socketpair failed: ") + std::strerror(errno));
        }
        WorkerParams params;
        params.id = slot.id;
        params.seed = worker_env_seed(options_.seed_base, slot.id, slot.restarts);
        params.latency_us = options_.env_latency_us;
        params.latency_sleeps = options_.latency_sleeps;
        if (slot.id == options_.crash_worker && slot.restarts == 0) params.crash_after_steps = options_.crash_after_steps;
        slot.fd = fds[0];
        slot.incarnation_steps = 0;
        const int child_fd = fds[1];
        if (options_.mode == ExecMode::threads) {
            const auto* spec = &spec_;
            slot.thread = std::thread([child_fd, spec, params] {
                try {
                    run_worker(child_fd, *spec, params);
                } catch (const std::exception& e) {
                    spdlog::warn("worker {} thread died: {}", params.id, e.what());
                }
                ::close(child_fd);
            });
            return;
        }
        const pid_t pid = ::fork();
        if (pid < 0) throw std::runtime_error(std::string("fork failed: ") + std::strerror(errno));
        if (pid == 0) {
            for (const auto& other : slots_) {
                if (other.fd >= 0) ::close(other.fd);
            }
            int code = 0;
            try {
                run_worker(child_fd, spec_, params);
            } catch (...) {
                code = 3;
            }
            ::close(child_fd);
            ::_exit(code);
        }
        ::close(child_fd);
        slot.pid = pid;
    }

    void reap(Slot& slot) {
        if (slot.fd >= 0) ::close(slot.fd);
        slot.fd = -1;
        if (slot.thread.joinable()) slot.thread.join();
        if (slot.pid > 0) {
            int status = 0;
            ::waitpid(slot.pid, &status, 0);
            slot.pid = -1;
        }
    }

    void on_disconnect(Slot& slot) {
        reap(slot);
        if (stopping_) {
            slot.done = true;
            return;
        }
        slot.lost_steps += slot.incarnation_steps;
        ++slot.restarts;
        spdlog::warn("worker {} disconnected after {} steps; restarting (restart #{})", slot.id,
                     slot.incarnation_steps, slot.restarts);
        launch(slot);
    }

    void deliver(ActorSession& session) {
        for (auto& u : session.take_ready()) {
            if (!queue_.push(std::move(u))) rejected_.push_back(std::move(u));
        }
    }

    void serve() {
        try {
            serve_loop();
        } catch (const std::exception& e) {
            {
                std::lock_guard lock(error_mu_);
                error_ = e.what();
            }
            spdlog::error("inference service failed: {}", e.what());
            queue_.close();
            for (auto& slot : slots_) {
                if (slot.fd >= 0) ::shutdown(slot.fd, SHUT_RDWR);
            }
            for (auto& slot : slots_) reap(slot);
        }
    }

    void serve_loop() {
        std::vector<pollfd> fds;
        std::vector<Slot*> owners;
        std::vector<std::pair<std::size_t, StepReport>> batch;
        for (;;) {
            fds.clear();
            owners.clear();
            bool all_done = true;
            for (auto& slot : slots_) {
                if (slot.done) continue;
                all_done = false;
                fds.push_back({slot.fd, POLLIN, 0});
                owners.push_back(&slot);
            }
            if (all_done) return;
            const int ready = ::poll(fds.data(), fds.size(), 50);
            if (ready < 0) {
                if (errno == EINTR) continue;
                throw std::runtime_error(std::string("poll failed: ") + std::strerror(errno));
            }
            batch.clear();
            for (std::size_t k = 0; k < fds.size(); ++k) {
                if (!(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
                Slot& slot = *owners[k];
                std::optional<wire::Frame> frame;
                try {
                    frame = wire::read_frame(slot.fd);
                } catch (const std::exception& e) {
                    spdlog::warn("worker {}: {}", slot.id, e.what());
                }
                if (!frame) {
                    on_disconnect(slot);
                    continue;
                }
                switch (frame->type) {
                    case wire::FrameType::hello: break;
                    case wire::FrameType::step: {
                        auto report = wire::decode_step(frame->payload, dims_);
                        if (!report.first) ++slot.incarnation_steps;
                        batch.emplace_back(static_cast<std::size_t>(&slot - slots_.data()), std::move(report));
                        break;
                    }
                    case wire::FrameType::report: {
                        const auto c = wire::decode_report(frame->payload);
                        slot.reported_steps += c.env_steps;
                        slot.reported_episodes += c.episodes;
                        slot.round_trip_us = c.mean_round_trip_us;
                        slot.done = true;
                        reap(slot);
                        break;
                    }
                    default: throw std::runtime_error("unexpected frame from worker " + std::to_string(slot.id));
                }
            }
            if (batch.empty()) continue;

            std::vector<const InferenceRequest*> requests;
            for (auto& [w, report] : batch) requests.push_back(&sessions_[w].begin(report));
            const bool stop = stopping_;
            std::vector<std::vector<std::vector<double>>> logits;
            if (!stop) logits = evaluate(requests);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const auto w = batch[b].first;
                auto& slot = slots_[w];
                try {
                    if (stop) {
                        wire::write_frame(slot.fd, {wire::FrameType::stop, 0, {}});
                    } else {
                        const auto actions = sessions_[w].finish(logits[b]);
                        wire::write_frame(slot.fd, {wire::FrameType::action, sessions_[w].pending_version(),
                                                    wire::encode_actions(actions)});
                    }
                } catch (const std::exception& e) {
                    spdlog::warn("worker {}: {}", slot.id, e.what());
                    on_disconnect(slot);
                }
                deliver(sessions_[w]);
            }
        }
    }

    const env::DecPomdpSpec& spec_;
    CollectorOptions options_;
    wire::Dims dims_;
    BoundedQueue<Unroll> queue_;
    std::vector<ActorSession> sessions_;
    std::vector<Slot> slots_;
    std::thread inference_;
    std::atomic<bool> stopping_{false};
    bool shut_down_ = false;
    std::vector<Unroll> rejected_;
    std::vector<Unroll> early_;
    std::mutex error_mu_;
    std::string error_;
};

}  // namespace

std::unique_ptr<Collector> make_socket_collector(const env::DecPomdpSpec& spec, const nn::ActorLayout& actor,
                                                 const nn::CriticLayout& critic, std::shared_ptr<SnapshotStore> store,
                                                 const CollectorOptions& options) {
    return std::make_unique<SocketCollector>(spec, actor, critic, std::move(store), options);
}

}  // namespace matrace::runtime
