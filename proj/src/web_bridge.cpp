#include "mosaic/web_bridge.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <list>
#include <mutex>
#include <thread>

namespace mosaic {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using namespace std::chrono_literals;

struct WebBridge::Impl {
    struct Conn {
        std::unique_ptr<tcp::socket> socket;
        std::shared_ptr<net::LineConnection> upstream;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    Impl(std::uint16_t port, net::Endpoint device_server, FrameSink sink, const std::string& host)
        : device_server(std::move(device_server)), sink(std::move(sink)), acceptor(ioc)
    {
        try {
            const tcp::endpoint at(asio::ip::make_address(host == "0.0.0.0" || host.empty() ? "0.0.0.0" : host), port);
            acceptor.open(at.protocol());
            acceptor.set_option(asio::socket_base::reuse_address(true));
            acceptor.bind(at);
            acceptor.listen();
            acceptor.non_blocking(true);
        } catch (const boost::system::system_error& e) {
            throw net::BindError("web bridge on port " + std::to_string(port) + ": " + e.what());
        }
    }

    void accept_loop()
    {
        while (!stopping) {
            boost::system::error_code ec;
            auto s = std::make_unique<tcp::socket>(ioc);
            acceptor.accept(*s, ec);
            if (ec == asio::error::would_block || ec == asio::error::try_again) {
                std::this_thread::sleep_for(20ms);
                reap();
                continue;
            }
            if (ec) {
                continue;
            }
            s->set_option(tcp::no_delay(true));
            std::lock_guard lock(mutex);
            auto& c = conns.emplace_back();
            c.socket = std::move(s);
            c.thread = std::thread([this, &c] {
                try {
                    serve(c);
                } catch (const std::exception& e) {
                    spdlog::debug("web bridge session ended: {}", e.what());
                }
                close(c);
                c.done = true;
            });
        }
    }

    void close(Conn& c)
    {
        std::lock_guard lock(close_mutex);
        boost::system::error_code ignored;
        c.socket->shutdown(tcp::socket::shutdown_both, ignored);
        if (c.upstream) {
            c.upstream->socket().shutdown();
        }
    }

    void reap()
    {
        std::lock_guard lock(mutex);
        for (auto it = conns.begin(); it != conns.end();) {
            if (it->done) {
                it->thread.join();
                it = conns.erase(it);
            } else {
                ++it;
            }
        }
    }

    void serve(Conn& c)
    {
        beast::flat_buffer buffer;
        http::request<http::string_body> req;
        http::read(*c.socket, buffer, req);
        const std::string target(req.target());
        const std::string path = target.substr(0, target.find('?'));
        if (!websocket::is_upgrade(req) || (path != "/device" && path != "/tracking")) {
            http::response<http::string_body> res{http::status::not_found, req.version()};
            res.set(http::field::content_type, "text/plain");
            res.body() = "use ws://host:port/device or ws://host:port/tracking\n";
            res.prepare_payload();
            http::write(*c.socket, res);
            return;
        }
        websocket::stream<tcp::socket&> ws(*c.socket);
        ws.accept(req);
        ws.text(true);
        if (path == "/device") {
            relay_device(c, ws);
        } else {
            relay_tracking(ws);
        }
    }

    void relay_device(Conn& c, websocket::stream<tcp::socket&>& ws)
    {
        {
            std::lock_guard lock(close_mutex);
            c.upstream = std::make_shared<net::LineConnection>(net::connect_to(device_server, 2s));
        }
        auto upstream = c.upstream;
        std::thread down([&, upstream] {
            try {
                while (!stopping) {
                    const auto line = upstream->read_line(200ms);
                    if (line) {
                        ws.write(asio::buffer(*line));
                    }
                }
            } catch (const std::exception&) {
            }
            close(c);
        });
        try {
            beast::flat_buffer buffer;
            for (;;) {
                ws.read(buffer);
                std::string line = beast::buffers_to_string(buffer.data());
                buffer.consume(buffer.size());
                if (line.empty() || line.back() != '\n') {
                    line.push_back('\n');
                }
                upstream->write(line);
            }
        } catch (const std::exception&) {
        }
        close(c);
        down.join();
    }

    void relay_tracking(websocket::stream<tcp::socket&>& ws)
    {
        beast::flat_buffer buffer;
        for (;;) {
            ws.read(buffer);
            const std::string line = beast::buffers_to_string(buffer.data());
            buffer.consume(buffer.size());
            TrackingMessage m;
            try {
                m = decode_tracking_message(line);
            } catch (const DecodeError& e) {
                ws.close(websocket::close_reason(websocket::close_code::policy_error, e.what()));
                return;
            }
            if (auto* f = std::get_if<TrackingFrame>(&m)) {
                sink(std::move(*f));
            }
        }
    }

    const net::Endpoint device_server;
    const FrameSink sink;
    asio::io_context ioc;
    tcp::acceptor acceptor;
    std::atomic<bool> stopping{false};
    std::thread thread;
    std::mutex mutex;
    std::mutex close_mutex;
    std::list<Conn> conns;
};

WebBridge::WebBridge(std::uint16_t port, net::Endpoint device_server, FrameSink sink, std::string bind_host)
    : impl_(std::make_unique<Impl>(port, std::move(device_server), std::move(sink), bind_host))
{
}

WebBridge::~WebBridge()
{
    stop();
}

std::uint16_t WebBridge::port() const
{
    return impl_->acceptor.local_endpoint().port();
}

void WebBridge::start()
{
    impl_->thread = std::thread([this] { impl_->accept_loop(); });
}

void WebBridge::stop()
{
    if (impl_->stopping.exchange(true)) {
        return;
    }
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
    std::list<Impl::Conn> conns;
    {
        std::lock_guard lock(impl_->mutex);
        for (auto& c : impl_->conns) {
            impl_->close(c);
        }
        conns.splice(conns.end(), impl_->conns);
    }
    for (auto& c : conns) {
        c.thread.join();
    }
    boost::system::error_code ignored;
    impl_->acceptor.close(ignored);
}

}  // namespace mosaic
