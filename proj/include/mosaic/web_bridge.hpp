#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "mosaic/net.hpp"
#include "mosaic/protocol.hpp"

namespace mosaic {

/// WebSocket front door for browsers, which cannot open raw TCP.
///
///   ws://host:port/device    relays the device protocol to the server's TCP
///                            port, one text message per line in each direction
///   ws://host:port/tracking  accepts tracking lines (a streaming source);
///                            frames are handed to `sink`
class WebBridge {
public:
    using FrameSink = std::function<void(TrackingFrame)>;

    /// Binds immediately; throws net::BindError.
    WebBridge(std::uint16_t port, net::Endpoint device_server, FrameSink sink, std::string bind_host = "127.0.0.1");
    ~WebBridge();
    WebBridge(const WebBridge&) = delete;
    WebBridge& operator=(const WebBridge&) = delete;

    std::uint16_t port() const;
    void start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mosaic
