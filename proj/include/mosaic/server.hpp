#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mosaic/event_log.hpp"
#include "mosaic/model.hpp"
#include "mosaic/net.hpp"
#include "mosaic/queue.hpp"
#include "mosaic/store.hpp"
#include "mosaic/tracking.hpp"

namespace mosaic {

class ConfigInvalid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DeviceConfig {
    DeviceId device_id = 0;
    std::int64_t body_id = 0;  // tracking body carrying this device
    ScreenSpec screen;
};

struct ServerConfig {
    ModelConfig model;
    std::vector<DeviceConfig> devices;

    net::Endpoint listen{"127.0.0.1", 7300};
    std::optional<net::Endpoint> tracking;
    tracking::Mode tracking_mode = tracking::Mode::poll;
    std::chrono::milliseconds poll_interval{16};
    std::chrono::milliseconds tracking_timeout{500};
    std::chrono::milliseconds reconnect_backoff{1000};

    std::filesystem::path db = "mosaic.db";
    std::optional<std::filesystem::path> log;
    std::optional<std::filesystem::path> seed;
    std::optional<std::uint16_t> web_bridge;

    std::chrono::milliseconds hello_timeout{5000};
    std::size_t outbound_capacity = 1024;
    std::chrono::milliseconds flush_interval{200};

    /// Reads the registry file: {"throw_threshold_px_s"?, "poll_interval_ms"?,
    /// "hello_timeout_ms"?, "reconnect_backoff_ms"?, "devices": [{device_id,
    /// body_id?, width_px, height_px, width_mm, height_mm}]}. Throws ConfigInvalid.
    static ServerConfig from_json(const nlohmann::json& j);
    static ServerConfig load(const std::filesystem::path& path);
};

/// Process exit statuses for fatal startup errors.
enum ExitCode : int { exit_ok = 0, exit_bind_failure = 2, exit_store_corrupt = 3, exit_config_invalid = 4 };

class WebBridge;

/// The coordinating process: device sessions, tracking ingest, the model
/// event loop, persistence and the event log.
///
/// Only the event loop thread touches the model. Sessions, ingest and the
/// web bridge reach it through the inbox and the frame queues.
class Server {
public:
    /// Opens the store, imports the seed, builds the model and binds the
    /// listeners. Throws ConfigInvalid, store::StoreError or net::BindError.
    explicit Server(ServerConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    void start();
    void request_stop();
    /// Blocks until stopped, then flushes the store and the log.
    void wait();

    std::uint16_t port() const { return port_; }
    std::optional<std::uint16_t> bridge_port() const;

    /// Canonical model state, read on the event loop.
    nlohmann::ordered_json state_json();
    std::vector<DeviceId> online_devices();

    /// Frames pushed here are handled like ingested ones (used by the web bridge).
    void push_frame(TrackingFrame frame);

    struct Session;

private:
    struct Opened {
        std::shared_ptr<Session> session;
        msg::Hello hello;
    };
    struct Received {
        std::shared_ptr<Session> session;
        DeviceMessage message;
    };
    struct Closed {
        std::shared_ptr<Session> session;
    };
    struct Call {
        std::function<void()> fn;
    };
    using Event = std::variant<Opened, Received, Closed, Call>;

    void post(Event e);
    void event_loop();
    void accept_loop();
    void reader(std::shared_ptr<Session> s);
    void writer(std::shared_ptr<Session> s);

    void drain_frames();
    void apply_frame(const TrackingFrame& frame);
    void handle(Opened& e);
    void handle(Received& e);
    void handle(Closed& e);
    void dispatch(const CommandBatch& batch);
    void send(DeviceId device, const ServerCommand& c);
    void persist_changes();
    void reap_sessions();

    ServerConfig config_;
    std::map<std::int64_t, DeviceId> body_to_device_;
    std::unique_ptr<store::Store> store_;
    std::optional<EventLog> log_;
    InteractionModel model_;
    std::map<ResourceId, store::Placement> persisted_;

    net::Listener listener_;
    std::uint16_t port_ = 0;
    std::unique_ptr<tracking::TrackingClient> ingest_;
    LatestWinsQueue<TrackingFrame> bridge_frames_{8};
    std::unique_ptr<WebBridge> bridge_;

    std::mutex inbox_mutex_;
    std::condition_variable inbox_cv_;
    std::deque<Event> inbox_;
    bool wake_ = false;

    std::map<DeviceId, std::shared_ptr<Session>> online_;  // event loop only

    std::mutex sessions_mutex_;
    std::vector<std::shared_ptr<Session>> sessions_;
    std::uint64_t next_session_ = 1;

    std::atomic<bool> stopping_{false};
    std::atomic<bool> started_{false};
    bool finished_ = false;
    std::thread loop_thread_;
    std::thread accept_thread_;
};

/// Runs `fn`, mapping fatal startup exceptions to their exit codes. Other
/// exceptions propagate.
int run_with_exit_codes(const std::function<void()>& fn, std::string* message = nullptr);

}  // namespace mosaic
