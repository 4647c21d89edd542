#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mosaic/net.hpp"
#include "mosaic/screen_model.hpp"
#include "mosaic/tracking.hpp"

namespace mosaic::sim {

using net::Millis;

class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A headless device: sends gestures, mirrors every received command into a
/// ScreenModel and keeps the raw lines in arrival order.
class DeviceClient {
public:
    DeviceClient(net::Endpoint server, DeviceId id, ScreenSpec screen, double throw_threshold_px_s = 1000.0);
    ~DeviceClient();
    DeviceClient(const DeviceClient&) = delete;
    DeviceClient& operator=(const DeviceClient&) = delete;

    /// Connects and says hello. Throws net::NetError when refused.
    void connect();
    /// Drops the connection without ceremony.
    void disconnect();
    /// Whether the server still holds the connection open.
    bool connected() const;
    /// Waits for the server to close the connection.
    bool wait_closed(Millis timeout);

    DeviceId id() const { return id_; }

    void send(const DeviceMessage& m);
    void send_raw(std::string_view bytes);

    // Gestures. The client only gates flicks on speed; everything else is
    // decided by the server.
    void move(ResourceId r, const std::vector<Vec2>& path);
    void click(ResourceId r);
    void long_click(ResourceId r);
    /// Sends `thrown` if |v| reaches the threshold, else a trailing `moved`
    /// at `release` (default: where the note currently is).
    void flick(ResourceId r, Vec2 v, std::optional<Vec2> release = std::nullopt);

    /// Sends dump_state and waits for the reply, which arrives after every
    /// command already queued for this device.
    cmd::StateDump dump(Millis timeout = Millis(5000));

    ScreenModel screen() const;
    /// Raw command lines received since the last call, without '\n'.
    std::vector<std::string> take_lines();
    std::optional<cmd::Error> last_error() const;

private:
    void receive_loop();

    const net::Endpoint server_;
    const DeviceId id_;
    const ScreenSpec screen_spec_;
    const double threshold_;

    std::shared_ptr<net::LineConnection> conn_;
    std::thread receiver_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    ScreenModel screen_;
    std::vector<std::string> lines_;
    std::deque<cmd::StateDump> dumps_;
    std::optional<cmd::Error> error_;
    bool open_ = false;
};

// Scenarios -----------------------------------------------------------------------

struct Gesture {
    enum class Action { move, click, long_click, flick };
    std::int64_t t_ms = 0;
    DeviceId device_id = 0;
    Action action = Action::click;
    ResourceId resource_id = 0;
    std::vector<Vec2> path;            // move
    Vec2 velocity;                     // flick
    std::optional<Vec2> release;       // flick below threshold
};

struct Scenario {
    double throw_threshold_px_s = 1000.0;
    std::map<DeviceId, ScreenSpec> screens;  // for hello; the server's registry wins
    std::optional<net::Endpoint> tracking_listen;
    std::optional<tracking::MotionScript> motion;
    std::vector<Gesture> gestures;

    /// {"throw_threshold_px_s"?, "screens"?: [{device_id, width_px, ...}],
    ///  "tracking"?: {"listen": "host:port", "script": {...} | "script_file": path},
    ///  "gestures": [{t_ms, device_id, action, resource_id, path? | vx_px_s, vy_px_s, release?}]}
    static Scenario from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static Scenario load(const std::filesystem::path& path);
};

struct Assertion {
    enum class Kind { command_count, resource_host, screen_contains, segment_collinearity };
    Kind kind = Kind::command_count;
    // command_count
    std::string command_type;
    std::optional<DeviceId> device_id;
    std::optional<bool> on;
    std::optional<std::int64_t> min, max;
    // resource_host / screen_contains
    ResourceId resource_id = 0;
    std::optional<DeviceId> host;  // resource_host: nullopt means hidden
    bool present = true;
    std::optional<bool> highlighted;
    // segment_collinearity
    double tolerance_mm = 1e-6;
    std::int64_t min_pairs = 0;

    std::string label;

    static std::vector<Assertion> list_from_json(const nlohmann::json& j);
    static std::vector<Assertion> load(const std::filesystem::path& path);
};

struct AssertionResult {
    std::string label;
    bool passed = false;
    std::string detail;
};

struct RunOptions {
    net::Endpoint server;
    std::vector<DeviceId> devices;
    bool fast = true;
    std::optional<net::Endpoint> tracking_listen;  // overrides the scenario
    Millis barrier_timeout{10000};
};

struct Report {
    /// One NDJSON line per received command: {"step":k,"device_id":d,"cmd":{...}}.
    /// Step 0 is connection; step k is the k-th gesture.
    std::string command_log;
    std::map<DeviceId, cmd::StateDump> final_dumps;
    std::map<DeviceId, DeviceView> final_screens;
    bool screens_match = false;
    std::vector<AssertionResult> results;
    double elapsed_s = 0.0;

    bool ok() const;
};

/// Plays a scenario against a running server. When the scenario has motion,
/// the runner is the tracking source (poll mode) and advances scripted time
/// to each gesture's t_ms, waiting until the server has taken the new poses
/// before the gesture is sent.
Report run_scenario(const Scenario& scenario, const RunOptions& options, const std::vector<Assertion>& assertions);

/// Evaluates assertions against a finished run.
std::vector<AssertionResult> evaluate(const std::vector<Assertion>& assertions, const Report& report);

}  // namespace mosaic::sim
