#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "mosaic/geometry.hpp"

namespace mosaic {

using ResourceId = std::int64_t;

// Device -> server -----------------------------------------------------------

namespace msg {

struct Hello {
    DeviceId device_id = 0;
    ScreenSpec screen;
    friend bool operator==(const Hello&, const Hello&) = default;
};

struct Moved {
    ResourceId resource_id = 0;
    double x_px = 0.0;
    double y_px = 0.0;
    friend bool operator==(const Moved&, const Moved&) = default;
};

struct Clicked {
    ResourceId resource_id = 0;
    friend bool operator==(const Clicked&, const Clicked&) = default;
};

struct LongClicked {
    ResourceId resource_id = 0;
    friend bool operator==(const LongClicked&, const LongClicked&) = default;
};

struct Thrown {
    ResourceId resource_id = 0;
    double vx_px_s = 0.0;
    double vy_px_s = 0.0;
    friend bool operator==(const Thrown&, const Thrown&) = default;
};

// Debug: asks the server for its view of this device. The reply is queued
// behind every command already emitted, so it doubles as a barrier.
struct DumpState {
    friend bool operator==(const DumpState&, const DumpState&) = default;
};

}  // namespace msg

using DeviceMessage = std::variant<msg::Hello, msg::Moved, msg::Clicked, msg::LongClicked, msg::Thrown, msg::DumpState>;

// Server -> device -----------------------------------------------------------

/// What one device should currently be displaying.
struct DeviceView {
    struct Note {
        double x_px = 0.0;
        double y_px = 0.0;
        bool highlighted = false;
        friend bool operator==(const Note&, const Note&) = default;
    };
    using PointLine = std::tuple<ResourceId, double, double>;

    std::map<ResourceId, Note> notes;
    std::set<std::pair<ResourceId, ResourceId>> local_lines;
    std::multiset<PointLine> point_lines;  // two segments may share an endpoint

    friend bool operator==(const DeviceView&, const DeviceView&) = default;
};

struct DeviceSnapshot {
    DeviceId device_id = 0;
    ScreenSpec screen;
    std::optional<DevicePose> pose;
    friend bool operator==(const DeviceSnapshot&, const DeviceSnapshot&) = default;
};

namespace cmd {

struct ResourceDef {
    ResourceId resource_id = 0;
    std::string text;
    bool has_timestamp = false;
    friend bool operator==(const ResourceDef&, const ResourceDef&) = default;
};

struct Show {
    ResourceId resource_id = 0;
    double x_px = 0.0;
    double y_px = 0.0;
    friend bool operator==(const Show&, const Show&) = default;
};

struct Hide {
    ResourceId resource_id = 0;
    friend bool operator==(const Hide&, const Hide&) = default;
};

struct Highlight {
    ResourceId resource_id = 0;
    bool on = false;
    friend bool operator==(const Highlight&, const Highlight&) = default;
};

struct LineLocal {
    ResourceId from_resource = 0;
    ResourceId to_resource = 0;
    bool on = false;
    friend bool operator==(const LineLocal&, const LineLocal&) = default;
};

struct LineToPoint {
    ResourceId resource_id = 0;
    double x_px = 0.0;
    double y_px = 0.0;
    bool on = false;
    friend bool operator==(const LineToPoint&, const LineToPoint&) = default;
};

/// Sent before the server closes a connection it refuses.
struct Error {
    std::string code;
    std::string message;
    friend bool operator==(const Error&, const Error&) = default;
};

/// Reply to msg::DumpState.
struct StateDump {
    DeviceId device_id = 0;
    DeviceView view;
    std::vector<DeviceSnapshot> devices;
    friend bool operator==(const StateDump&, const StateDump&) = default;
};

}  // namespace cmd

using ServerCommand = std::variant<cmd::ResourceDef, cmd::Show, cmd::Hide, cmd::Highlight, cmd::LineLocal,
                                   cmd::LineToPoint, cmd::Error, cmd::StateDump>;

// Tracking feed --------------------------------------------------------------

struct TrackedBody {
    std::int64_t id = 0;
    double x_mm = 0.0;
    double y_mm = 0.0;
    double z_mm = 0.0;
    double roll_deg = 0.0;   // gamma, about X
    double pitch_deg = 0.0;  // beta, about Y
    double yaw_deg = 0.0;    // alpha, about Z
    friend bool operator==(const TrackedBody&, const TrackedBody&) = default;
};

struct TrackingFrame {
    std::int64_t t_ms = 0;
    std::vector<TrackedBody> bodies;
    friend bool operator==(const TrackingFrame&, const TrackingFrame&) = default;
};

namespace track {
struct Poll {
    friend bool operator==(const Poll&, const Poll&) = default;
};
}  // namespace track

using TrackingMessage = std::variant<track::Poll, TrackingFrame>;

// Errors ----------------------------------------------------------------------

enum class DecodeErrorCode { UnknownType, MalformedMessage, NonUTF8 };

class DecodeError : public std::runtime_error {
public:
    DecodeError(DecodeErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    DecodeErrorCode code() const { return code_; }

private:
    DecodeErrorCode code_;
};

std::string_view to_string(DecodeErrorCode code);

// Codec -----------------------------------------------------------------------

/// Each encoder returns one compact JSON object terminated by '\n'.
std::string encode(const DeviceMessage& m);
std::string encode(const ServerCommand& c);
std::string encode(const TrackingMessage& m);

/// Decoders accept a line with or without its trailing '\n' and throw
/// DecodeError on any failure.
DeviceMessage decode_device_message(std::string_view line);
ServerCommand decode_server_command(std::string_view line);
TrackingMessage decode_tracking_message(std::string_view line);

/// snake_case variant name, as used in the `type` field.
std::string_view type_name(const DeviceMessage& m);
std::string_view type_name(const ServerCommand& c);

bool is_valid_utf8(std::string_view bytes);

/// Reassembles '\n'-delimited lines from arbitrarily chunked input.
class LineBuffer {
public:
    explicit LineBuffer(std::size_t max_line = 1 << 20) : max_line_(max_line) {}

    /// Appends bytes; throws DecodeError(MalformedMessage) if a pending line
    /// grows past the limit.
    void feed(std::string_view chunk);

    /// Next complete line without its terminator, if any.
    std::optional<std::string> next_line();

    std::size_t pending_bytes() const { return buffer_.size() - consumed_; }

private:
    std::string buffer_;
    std::size_t consumed_ = 0;
    std::size_t max_line_;
};

}  // namespace mosaic
