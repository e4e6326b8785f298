#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace matrace::runtime {

/// Multi-producer multi-consumer FIFO with blocking backpressure. Nothing is
/// ever dropped: push blocks while full, and after close() it refuses the
/// item (returns false) and leaves it with the producer.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("queue capacity must be positive");
    }

    /// The item is moved from only when accepted.
    bool push(T&& item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    /// Blocks until an item arrives; nullopt once closed and empty.
    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_full_.notify_all();
        not_empty_.notify_all();
    }

    /// Removes everything still queued.
    std::deque<T> drain() {
        std::lock_guard lock(mu_);
        std::deque<T> out;
        out.swap(items_);
        not_full_.notify_all();
        return out;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return items_.size();
    }
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<T> items_;
    bool closed_ = false;
};

}  // namespace matrace::runtime
