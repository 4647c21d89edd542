#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mosaic/protocol.hpp"

namespace mosaic::net {

using Millis = std::chrono::milliseconds;

class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConnectionClosed : public NetError {
public:
    ConnectionClosed() : NetError("connection closed by peer") {}
};

class BindError : public NetError {
public:
    using NetError::NetError;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// Parses "host:port" (IPv4 literal or resolvable name).
    static Endpoint parse(std::string_view text);
    std::string str() const { return host + ":" + std::to_string(port); }
};

/// Owning TCP socket.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void send_all(std::string_view bytes);

    /// Reads what is available. nullopt on timeout; throws ConnectionClosed on EOF.
    std::optional<std::string> recv_some(Millis timeout);

    /// Wakes any thread blocked on this socket; safe to call concurrently.
    void shutdown();
    void close();

private:
    int fd_ = -1;
};

class Listener {
public:
    static Listener bind(const Endpoint& at);

    std::uint16_t port() const { return port_; }
    std::optional<Socket> accept(Millis timeout);
    void close() { socket_.close(); }

private:
    Socket socket_;
    std::uint16_t port_ = 0;
};

Socket connect_to(const Endpoint& to, Millis timeout);

/// A socket speaking newline-delimited lines.
class LineConnection {
public:
    LineConnection() = default;
    explicit LineConnection(Socket socket) : socket_(std::move(socket)) {}

    /// Next line without its '\n'. nullopt on timeout; throws ConnectionClosed
    /// on EOF and DecodeError on an oversized line.
    std::optional<std::string> read_line(Millis timeout);

    /// Sends bytes that already end in '\n'.
    void write(std::string_view line) { socket_.send_all(line); }

    Socket& socket() { return socket_; }
    bool valid() const { return socket_.valid(); }

private:
    Socket socket_;
    LineBuffer buffer_;
};

}  // namespace mosaic::net
