#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "matrace/nn/policy.hpp"

namespace matrace::runtime {

/// Immutable actor parameters as published by the learner.
struct ParamSnapshot {
    std::uint32_t version = 0;
    std::int64_t created_step = 0;
    nn::ActorNetworks actor;
};

using SnapshotPtr = std::shared_ptr<const ParamSnapshot>;

/// Versioned history of published snapshots. Versions start at 1 and
/// increase by one per publication; the newest `depth` are retained.
class SnapshotStore {
public:
    explicit SnapshotStore(std::size_t depth = 64);

    SnapshotPtr publish(nn::ActorNetworks actor, std::int64_t step);

    /// Newest snapshot, or nullptr before the first publication.
    SnapshotPtr latest() const;
    /// Blocks until a snapshot exists.
    SnapshotPtr wait_latest() const;
    /// Snapshot of version latest - lag; the oldest retained one when that
    /// version was evicted (with a warning) or was never published.
    SnapshotPtr at_lag(int lag) const;
    /// Exact version lookup in the retained history or the archive.
    SnapshotPtr find(std::uint32_t version) const;

    /// Keep every snapshot ever published (for replay checks) in addition
    /// to the bounded history.
    void set_archive_all(bool on);
    std::size_t depth() const { return depth_; }

private:
    std::size_t depth_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::deque<SnapshotPtr> history_;
    std::map<std::uint32_t, SnapshotPtr> archive_;
    bool archive_all_ = false;
    mutable bool warned_ = false;
};

enum class StalenessKind { fresh, fixed_lag, natural };

/// Which snapshot serves a worker's next action.
///   fresh        newest snapshot at every step
///   fixed_lag(k) version newest - k at every step
///   natural      newest snapshot, refreshed only between unrolls
struct Staleness {
    StalenessKind kind = StalenessKind::fresh;
    int lag = 0;

    /// Accepts "fresh", "natural", "fixed_lag(k)" and "fixed_lag:k".
    static Staleness parse(const std::string& text);
    std::string to_string() const;
};

}  // namespace matrace::runtime
