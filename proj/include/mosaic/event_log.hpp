#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "mosaic/model.hpp"

namespace mosaic {

/// Append-only NDJSON record of a server run. The first line is a header
/// holding the initial model state; each later line is one event:
///
///   in          a device message handed to the model
///   frame       the poses of one tracking frame handed to the model
///   out         a command the model emitted (delivered: whether the device was online)
///   replay      a command resent to rebuild a reconnecting device
///   connect / disconnect
///   error       a message the model refused
///
/// Every line carries ts_ms, milliseconds since the log was opened.
class EventLog {
public:
    explicit EventLog(const std::filesystem::path& path);

    void header(const ModelConfig& config, const nlohmann::ordered_json& state);
    void inbound(DeviceId device, const DeviceMessage& m);
    void frame(std::span<const DevicePose> poses);
    void outbound(DeviceId device, const ServerCommand& c, bool delivered);
    void replayed(DeviceId device, const ServerCommand& c);
    void connect(DeviceId device);
    void disconnect(DeviceId device);
    void refused(DeviceId device, const DeviceMessage& m, const ModelError& e);
    void flush();

private:
    void write(nlohmann::ordered_json& line);
    nlohmann::ordered_json start(std::string_view type);

    std::ofstream out_;
    std::chrono::steady_clock::time_point origin_;
};

nlohmann::ordered_json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

/// Rebuilds the model a log describes: the header state, then every `in`
/// and `frame` event in order. Throws std::runtime_error on a malformed log.
InteractionModel replay_event_log(std::istream& in);
InteractionModel replay_event_log(const std::filesystem::path& path);

}  // namespace mosaic
