#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>

namespace mosaic {

/// Bounded FIFO that never blocks the producer: when full, the oldest entry
/// is discarded to make room for the newest.
template <class T>
class LatestWinsQueue {
public:
    explicit LatestWinsQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    /// Called after every push, outside the lock.
    void set_notifier(std::function<void()> notify)
    {
        std::lock_guard lock(mutex_);
        notify_ = std::move(notify);
    }

    void push(T value)
    {
        std::function<void()> notify;
        {
            std::lock_guard lock(mutex_);
            if (items_.size() == capacity_) {
                items_.pop_front();
                ++dropped_;
            }
            items_.push_back(std::move(value));
            high_water_ = std::max(high_water_, items_.size());
            notify = notify_;
        }
        cv_.notify_one();
        if (notify) {
            notify();
        }
    }

    std::optional<T> try_pop()
    {
        std::lock_guard lock(mutex_);
        return take_locked();
    }

    template <class Rep, class Period>
    std::optional<T> pop_for(std::chrono::duration<Rep, Period> timeout)
    {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, timeout, [&] { return !items_.empty(); });
        return take_locked();
    }

    /// The most recent entry; discards everything older.
    std::optional<T> pop_latest()
    {
        std::lock_guard lock(mutex_);
        if (items_.empty()) {
            return std::nullopt;
        }
        dropped_ += items_.size() - 1;
        T value = std::move(items_.back());
        items_.clear();
        return value;
    }

    std::size_t size() const
    {
        std::lock_guard lock(mutex_);
        return items_.size();
    }
    std::size_t dropped() const
    {
        std::lock_guard lock(mutex_);
        return dropped_;
    }
    std::size_t high_water() const
    {
        std::lock_guard lock(mutex_);
        return high_water_;
    }
    std::size_t capacity() const { return capacity_; }

private:
    std::optional<T> take_locked()
    {
        if (items_.empty()) {
            return std::nullopt;
        }
        T value = std::move(items_.front());
        items_.pop_front();
        return value;
    }

    const std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<T> items_;
    std::size_t dropped_ = 0;
    std::size_t high_water_ = 0;
    std::function<void()> notify_;
};

}  // namespace mosaic
