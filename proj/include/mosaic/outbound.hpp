#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

#include "mosaic/protocol.hpp"

namespace mosaic {

/// Per-device command queue between the event loop and a session writer.
///
/// Below capacity it is a plain FIFO. At capacity it makes room by cancelling
/// a queued "on" against its matching later "off" (highlights and lines only);
/// show, hide and resource_def are never touched. When nothing can be
/// cancelled the push fails and the caller should drop the client.
class OutboundQueue {
public:
    explicit OutboundQueue(std::size_t capacity = 1024) : capacity_(capacity) {}

    /// false: full and nothing cancellable.
    bool push(ServerCommand c);

    /// Waits up to `timeout` for a command; nullopt on timeout or once closed and empty.
    std::optional<ServerCommand> pop(std::chrono::milliseconds timeout);

    /// Wakes the consumer; pop returns what is left, then nullopt.
    void close();
    bool closed() const;

    std::size_t size() const;
    std::size_t cancelled() const;
    std::size_t capacity() const { return capacity_; }

private:
    enum class Room { freed, absorbed, none };  // absorbed: the incoming off met its on
    Room make_room_locked(const ServerCommand& incoming);

    const std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<ServerCommand> items_;
    std::size_t cancelled_ = 0;
    bool closed_ = false;
};

/// Whether `off` retracts exactly what `on` drew.
bool cancels(const ServerCommand& on, const ServerCommand& off);

}  // namespace mosaic
