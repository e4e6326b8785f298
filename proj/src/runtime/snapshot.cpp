#include "matrace/runtime/snapshot.hpp"

#include <regex>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace matrace::runtime {

SnapshotStore::SnapshotStore(std::size_t depth) : depth_(depth) {
    if (depth == 0) throw std::invalid_argument("snapshot history depth must be positive");
}

SnapshotPtr SnapshotStore::publish(nn::ActorNetworks actor, std::int64_t step) {
    std::lock_guard lock(mu_);
    const std::uint32_t version = history_.empty() ? 1 : history_.back()->version + 1;
    auto snap = std::make_shared<const ParamSnapshot>(ParamSnapshot{version, step, std::move(actor)});
    history_.push_back(snap);
    while (history_.size() > depth_) history_.pop_front();
    if (archive_all_) archive_[version] = snap;
    cv_.notify_all();
    return snap;
}

SnapshotPtr SnapshotStore::latest() const {
    std::lock_guard lock(mu_);
    return history_.empty() ? nullptr : history_.back();
}

SnapshotPtr SnapshotStore::wait_latest() const {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !history_.empty(); });
    return history_.back();
}

SnapshotPtr SnapshotStore::at_lag(int lag) const {
    if (lag < 0) throw std::invalid_argument("snapshot lag must be non-negative");
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !history_.empty(); });
    const auto newest = history_.back()->version;
    const auto oldest = history_.front()->version;
    if (static_cast<std::uint32_t>(lag) >= newest) return history_.front();
    const auto wanted = newest - static_cast<std::uint32_t>(lag);
    if (wanted < oldest) {
        if (!warned_) {
            warned_ = true;
            spdlog::warn("requested lag {} exceeds snapshot history depth {}; serving oldest retained version {}",
                         lag, depth_, oldest);
        }
        return history_.front();
    }
    return history_[wanted - oldest];
}

SnapshotPtr SnapshotStore::find(std::uint32_t version) const {
    std::lock_guard lock(mu_);
    if (!history_.empty() && version >= history_.front()->version && version <= history_.back()->version) {
        return history_[version - history_.front()->version];
    }
    const auto it = archive_.find(version);
    return it == archive_.end() ? nullptr : it->second;
}

void SnapshotStore::set_archive_all(bool on) {
    std::lock_guard lock(mu_);
    archive_all_ = on;
    if (on) {
        for (const auto& s : history_) archive_[s->version] = s;
    }
}

Staleness Staleness::parse(const std::string& text) {
    if (text == "fresh") return {StalenessKind::fresh, 0};
    if (text == "natural") return {StalenessKind::natural, 0};
    static const std::regex lag_re(R"(fixed_lag(?:\((\d+)\)|:(\d+)))");
    std::smatch m;
    if (std::regex_match(text, m, lag_re)) {
        const int lag = std::stoi(m[1].matched ? m[1].str() : m[2].str());
        return {StalenessKind::fixed_lag, lag};
    }
    throw std::invalid_argument("unknown staleness mode '" + text + "' (expected fresh, natural or fixed_lag(k))");
}

std::string Staleness::to_string() const {
    switch (kind) {
        case StalenessKind::fresh: return "fresh";
        case StalenessKind::natural: return "natural";
        case StalenessKind::fixed_lag: return "fixed_lag(" + std::to_string(lag) + ")";
    }
    return "?";
}

}  // namespace matrace::runtime
