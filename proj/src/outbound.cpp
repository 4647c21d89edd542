#include "mosaic/outbound.hpp"

#include <cstddef>

namespace mosaic {

namespace {

// Returns the "on" flag for toggleable commands, nullopt for the rest.
std::optional<bool> toggle_of(const ServerCommand& c)
{
    if (const auto* h = std::get_if<cmd::Highlight>(&c)) {
        return h->on;
    }
    if (const auto* l = std::get_if<cmd::LineLocal>(&c)) {
        return l->on;
    }
    if (const auto* p = std::get_if<cmd::LineToPoint>(&c)) {
        return p->on;
    }
    return std::nullopt;
}

}  // namespace

bool cancels(const ServerCommand& on, const ServerCommand& off)
{
    if (on.index() != off.index() || toggle_of(on) != true || toggle_of(off) != false) {
        return false;
    }
    if (const auto* a = std::get_if<cmd::Highlight>(&on)) {
        return a->resource_id == std::get<cmd::Highlight>(off).resource_id;
    }
    if (const auto* a = std::get_if<cmd::LineLocal>(&on)) {
        const auto& b = std::get<cmd::LineLocal>(off);
        return a->from_resource == b.from_resource && a->to_resource == b.to_resource;
    }
    const auto& a = std::get<cmd::LineToPoint>(on);
    const auto& b = std::get<cmd::LineToPoint>(off);
    return a.resource_id == b.resource_id && a.x_px == b.x_px && a.y_px == b.y_px;
}

OutboundQueue::Room OutboundQueue::make_room_locked(const ServerCommand& incoming)
{
    // An incoming off that retracts a queued on: neither needs sending.
    if (toggle_of(incoming) == false) {
        for (auto it = items_.rbegin(); it != items_.rend(); ++it) {
            if (cancels(*it, incoming)) {
                items_.erase(std::next(it).base());
                cancelled_ += 2;
                return Room::absorbed;
            }
        }
    }
    for (std::size_t on = 0; on < items_.size(); ++on) {
        if (toggle_of(items_[on]) != true) {
            continue;
        }
        for (std::size_t off = on + 1; off < items_.size(); ++off) {
            if (cancels(items_[on], items_[off])) {
                items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(off));
                items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(on));
                cancelled_ += 2;
                return Room::freed;
            }
        }
    }
    return Room::none;
}

bool OutboundQueue::push(ServerCommand c)
{
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return true;  // the session is ending; nothing more goes out
        }
        if (items_.size() >= capacity_) {
            switch (make_room_locked(c)) {
            case Room::absorbed: return true;
            case Room::none: return false;
            case Room::freed: break;
            }
        }
        items_.push_back(std::move(c));
    }
    cv_.notify_one();
    return true;
}

std::optional<ServerCommand> OutboundQueue::pop(std::chrono::milliseconds timeout)
{
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) {
        return std::nullopt;
    }
    ServerCommand c = std::move(items_.front());
    items_.pop_front();
    return c;
}

void OutboundQueue::close()
{
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool OutboundQueue::closed() const
{
    std::lock_guard lock(mutex_);
    return closed_;
}

std::size_t OutboundQueue::size() const
{
    std::lock_guard lock(mutex_);
    return items_.size();
}

std::size_t OutboundQueue::cancelled() const
{
    std::lock_guard lock(mutex_);
    return cancelled_;
}

}  // namespace mosaic
