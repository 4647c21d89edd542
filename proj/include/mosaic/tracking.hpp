#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mosaic/net.hpp"
#include "mosaic/protocol.hpp"
#include "mosaic/queue.hpp"

namespace mosaic::tracking {

enum class Mode { poll, stream };

Mode mode_from_string(std::string_view s);
std::string_view to_string(Mode mode);

// Scripted motion -------------------------------------------------------------

struct Keyframe {
    std::int64_t t_ms = 0;
    double x_mm = 0.0;
    double y_mm = 0.0;
    double z_mm = 0.0;
    double roll_deg = 0.0;
    double pitch_deg = 0.0;
    double yaw_deg = 0.0;
    friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

class ScriptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MotionScript {
    double rate_hz = 60.0;
    bool loop = false;
    std::map<std::int64_t, std::vector<Keyframe>> bodies;  // keyed by body id

    /// Throws ScriptError on an invalid document.
    static MotionScript from_json(const nlohmann::json& j);
    static MotionScript load(const std::filesystem::path& path);

    std::int64_t start_ms() const;
    std::int64_t end_ms() const;
};

/// Body poses at script time t_ms (wire units: mm and degrees). Positions are
/// linear between keyframes, angles follow the shortest arc. Past the end a
/// body holds its last keyframe, or the whole script wraps when looping.
std::vector<TrackedBody> interpolate(const MotionScript& script, std::int64_t t_ms);

/// Angle in degrees a fraction f of the way from a to b along the shorter arc,
/// normalised to (-180, 180].
double lerp_angle_deg(double a, double b, double f);

/// Wire body -> model pose (degrees to radians).
DevicePose pose_from_body(const TrackedBody& body, DeviceId device, std::int64_t t_ms);

// Source ------------------------------------------------------------------------

/// Produces the frame to send right now. Called with the source's lock held.
using FrameProvider = std::function<TrackingFrame()>;

/// Frames that follow a MotionScript in wall-clock time from construction.
FrameProvider script_clock(MotionScript script);

/// The tracking-source side of the feed: answers polls, or pushes frames at
/// rate_hz in stream mode. Serves any number of consumers.
class TrackingSource {
public:
    TrackingSource(const net::Endpoint& listen, Mode mode, double rate_hz, FrameProvider provider);
    ~TrackingSource();
    TrackingSource(const TrackingSource&) = delete;
    TrackingSource& operator=(const TrackingSource&) = delete;

    std::uint16_t port() const { return port_; }

    /// Runs `change` under the lock the provider is sampled with and returns
    /// the number of polls received so far. Every poll counted after that
    /// number is answered with a frame sampled after the change.
    std::uint64_t update(const std::function<void()>& change);

    std::uint64_t polls_received() const;
    std::uint64_t frames_sent() const { return frames_sent_.load(); }

    /// Blocks until at least `count` polls have arrived.
    bool wait_for_polls(std::uint64_t count, net::Millis timeout);

    /// Drops every consumer connection, keeps listening.
    void disconnect_all();
    void stop();

private:
    void accept_loop();
    void serve(std::shared_ptr<net::LineConnection> conn);
    TrackingFrame sample_locked();

    const Mode mode_;
    const double rate_hz_;
    FrameProvider provider_;
    net::Listener listener_;
    std::uint16_t port_ = 0;

    mutable std::mutex mutex_;
    std::condition_variable polled_;
    std::uint64_t polls_ = 0;
    std::vector<std::shared_ptr<net::LineConnection>> conns_;
    std::vector<std::thread> workers_;

    std::atomic<std::uint64_t> frames_sent_{0};
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
};

// Ingest ------------------------------------------------------------------------

struct IngestOptions {
    net::Endpoint source;
    Mode mode = Mode::poll;
    net::Millis poll_interval{16};
    net::Millis timeout{500};
    net::Millis reconnect_backoff{1000};
    std::size_t queue_capacity = 8;
};

enum class IngestEvent { Connected, ConnectionLost, Timeout, OutOfOrder };

std::string_view to_string(IngestEvent e);

/// Pulls frames from a tracking source into a latest-wins queue, reconnecting
/// after failures. Delivered t_ms never decreases: after a reconnect the new
/// source's clock is shifted to continue from the last delivered frame.
class TrackingClient {
public:
    using Listener = std::function<void(IngestEvent, const std::string& detail)>;

    TrackingClient(IngestOptions options, Listener listener = {});
    ~TrackingClient();
    TrackingClient(const TrackingClient&) = delete;
    TrackingClient& operator=(const TrackingClient&) = delete;

    LatestWinsQueue<TrackingFrame>& frames() { return queue_; }

    void start();
    void stop();

    std::uint64_t frames_received() const { return received_.load(); }
    std::uint64_t connects() const { return connects_.load(); }
    std::uint64_t connection_losses() const { return losses_.load(); }
    std::uint64_t timeouts() const { return timeouts_.load(); }

private:
    void ingest_loop();
    void run_connection(net::LineConnection& conn);
    void deliver(TrackingFrame frame);
    void report(IngestEvent e, const std::string& detail);
    bool sleep_unless_stopped(net::Millis d);

    IngestOptions options_;
    Listener listener_;
    LatestWinsQueue<TrackingFrame> queue_;

    std::mutex wake_mutex_;
    std::condition_variable wake_;
    std::atomic<bool> stopping_{false};
    std::mutex conn_mutex_;
    net::Socket* live_socket_ = nullptr;
    std::thread thread_;

    // Clock continuity across connections.
    std::optional<std::int64_t> last_delivered_;
    std::optional<std::int64_t> last_raw_;
    std::int64_t offset_ = 0;
    bool fresh_connection_ = true;

    std::atomic<std::uint64_t> received_{0};
    std::atomic<std::uint64_t> connects_{0};
    std::atomic<std::uint64_t> losses_{0};
    std::atomic<std::uint64_t> timeouts_{0};
};

}  // namespace mosaic::tracking
