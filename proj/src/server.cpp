#include "mosaic/server.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <future>
#include <set>

#include "mosaic/outbound.hpp"
#include "mosaic/web_bridge.hpp"

namespace mosaic {

using namespace std::chrono_literals;

// Config ------------------------------------------------------------------------

namespace {

double positive(const nlohmann::json& obj, const char* key, const std::string& where)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_number() || !(it->get<double>() > 0) || !std::isfinite(it->get<double>())) {
        throw ConfigInvalid(where + ": '" + key + "' must be a positive number");
    }
    return it->get<double>();
}

std::int64_t non_negative_int(const nlohmann::json& v, const std::string& what)
{
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigInvalid(what + " must be a non-negative integer");
    }
    return v.get<std::int64_t>();
}

std::chrono::milliseconds optional_ms(const nlohmann::json& j, const char* key, std::chrono::milliseconds fallback)
{
    if (!j.contains(key)) {
        return fallback;
    }
    return std::chrono::milliseconds(non_negative_int(j[key], std::string("'") + key + "'"));
}

}  // namespace

ServerConfig ServerConfig::from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw ConfigInvalid("config must be a JSON object");
    }
    ServerConfig c;
    if (j.contains("throw_threshold_px_s")) {
        c.model.throw_threshold_px_s = positive(j, "throw_threshold_px_s", "config");
    }
    c.poll_interval = optional_ms(j, "poll_interval_ms", c.poll_interval);
    c.hello_timeout = optional_ms(j, "hello_timeout_ms", c.hello_timeout);
    c.reconnect_backoff = optional_ms(j, "reconnect_backoff_ms", c.reconnect_backoff);
    c.flush_interval = optional_ms(j, "flush_interval_ms", c.flush_interval);
    if (c.flush_interval > 500ms || c.flush_interval.count() == 0) {
        throw ConfigInvalid("'flush_interval_ms' must lie in [1, 500]");
    }
    const auto devices = j.find("devices");
    if (devices == j.end() || !devices->is_array()) {
        throw ConfigInvalid("config: 'devices' must be an array");
    }
    std::set<DeviceId> ids;
    std::set<std::int64_t> bodies;
    for (const auto& d : *devices) {
        if (!d.is_object() || !d.contains("device_id")) {
            throw ConfigInvalid("config: every device needs a device_id");
        }
        DeviceConfig dc;
        dc.device_id = non_negative_int(d["device_id"], "device_id");
        const std::string where = "device " + std::to_string(dc.device_id);
        dc.body_id = d.contains("body_id") ? non_negative_int(d["body_id"], where + " body_id") : dc.device_id;
        dc.screen = {positive(d, "width_px", where), positive(d, "height_px", where), positive(d, "width_mm", where),
                     positive(d, "height_mm", where)};
        if (!ids.insert(dc.device_id).second) {
            throw ConfigInvalid("config: duplicate device_id " + std::to_string(dc.device_id));
        }
        if (!bodies.insert(dc.body_id).second) {
            throw ConfigInvalid("config: body " + std::to_string(dc.body_id) + " assigned to two devices");
        }
        c.devices.push_back(dc);
    }
    return c;
}

ServerConfig ServerConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigInvalid("cannot open config " + path.string());
    }
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigInvalid(path.string() + ": " + e.what());
    }
}

int run_with_exit_codes(const std::function<void()>& fn, std::string* message)
{
    const auto note = [&](const std::exception& e) {
        if (message) {
            *message = e.what();
        }
    };
    try {
        fn();
        return exit_ok;
    } catch (const net::BindError& e) {
        note(e);
        return exit_bind_failure;
    } catch (const store::StoreError& e) {
        note(e);
        return exit_store_corrupt;
    } catch (const ConfigInvalid& e) {
        note(e);
        return exit_config_invalid;
    }
}

// Session -----------------------------------------------------------------------

struct Server::Session {
    Session(std::uint64_t id, net::Socket socket, std::size_t capacity)
        : id(id), conn(std::move(socket)), out(capacity)
    {
    }

    /// Sends what is queued, then closes.
    void finish() { out.close(); }
    /// Closes now.
    void abort()
    {
        out.close();
        conn.socket().shutdown();
    }

    const std::uint64_t id;
    net::LineConnection conn;
    OutboundQueue out;
    std::optional<DeviceId> device;  // written by the reader before Opened is posted
    std::atomic<bool> reading{true};
    std::atomic<bool> writing{true};
    std::thread reader;
    std::thread writer;
};

// Server ------------------------------------------------------------------------

Server::Server(ServerConfig config) : config_(std::move(config)), model_(config_.model)
{
    std::map<DeviceId, ScreenSpec> screens;
    for (const auto& d : config_.devices) {
        body_to_device_[d.body_id] = d.device_id;
        screens[d.device_id] = d.screen;
    }

    store_ = store::Store::open(config_.db);
    store_->upsert_devices(screens);
    if (config_.seed) {
        std::ifstream in(*config_.seed);
        if (!in) {
            throw ConfigInvalid("cannot open seed " + config_.seed->string());
        }
        store::Contents seed;
        try {
            seed = store::contents_from_seed(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigInvalid(config_.seed->string() + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigInvalid(config_.seed->string() + ": " + e.what());
        }
        for (const auto& [id, r] : seed.resources) {
            if (r.host_device && !screens.contains(*r.host_device)) {
                throw ConfigInvalid("seed resource " + std::to_string(id) + " is hosted on unconfigured device " +
                                    std::to_string(*r.host_device));
            }
        }
        store_->replace_content(seed);
        spdlog::info("imported {} resources from {}", seed.resources.size(), config_.seed->string());
    }

    const store::Contents contents = store_->load();
    for (const auto& [id, screen] : screens) {
        model_.add_device(id, screen);
    }
    for (auto [id, r] : contents.resources) {
        if (r.host_device && !screens.contains(*r.host_device)) {
            spdlog::warn("resource {} was on device {}, which is not configured; hiding it", id, *r.host_device);
            r.host_device.reset();
        }
        if (r.host_device) {
            const ScreenSpec& s = screens.at(*r.host_device);
            r.local_pos = {std::clamp(r.local_pos.x, 0.0, s.width_px), std::clamp(r.local_pos.y, 0.0, s.height_px)};
        }
        model_.add_resource(std::move(r));
    }
    for (const auto& rel : contents.relations) {
        model_.add_relation(rel);
    }
    for (const auto& [id, r] : model_.state().resources) {
        persisted_[id] = store::Placement{id, r.host_device, r.local_pos};
    }

    if (config_.log) {
        try {
            log_.emplace(*config_.log);
        } catch (const std::runtime_error& e) {
            throw ConfigInvalid(e.what());
        }
        log_->header(model_.config(), model_.to_json());
    }

    listener_ = net::Listener::bind(config_.listen);
    port_ = listener_.port();
    if (config_.web_bridge) {
        net::Endpoint local{config_.listen.host, port_};
        if (local.host.empty() || local.host == "0.0.0.0" || local.host == "*") {
            local.host = "127.0.0.1";
        }
        bridge_ = std::make_unique<WebBridge>(*config_.web_bridge, local,
                                              [this](TrackingFrame f) { push_frame(std::move(f)); },
                                              config_.listen.host);
    }
    spdlog::info("listening on {}:{} with {} devices and {} resources", config_.listen.host, port_,
                 config_.devices.size(), model_.state().resources.size());
}

Server::~Server()
{
    if (started_ && !finished_) {
        request_stop();
        wait();
    }
}

std::optional<std::uint16_t> Server::bridge_port() const
{
    if (!bridge_) {
        return std::nullopt;
    }
    return bridge_->port();
}

void Server::start()
{
    started_ = true;
    const auto wake = [this] {
        {
            std::lock_guard lock(inbox_mutex_);
            wake_ = true;
        }
        inbox_cv_.notify_one();
    };
    bridge_frames_.set_notifier(wake);
    if (config_.tracking) {
        tracking::IngestOptions opts;
        opts.source = *config_.tracking;
        opts.mode = config_.tracking_mode;
        opts.poll_interval = config_.poll_interval;
        opts.timeout = config_.tracking_timeout;
        opts.reconnect_backoff = config_.reconnect_backoff;
        ingest_ = std::make_unique<tracking::TrackingClient>(opts, [](tracking::IngestEvent e, const std::string& d) {
            if (e == tracking::IngestEvent::Connected) {
                spdlog::info("tracking: connected to {}", d);
            } else {
                spdlog::warn("tracking: {} ({})", tracking::to_string(e), d);
            }
        });
        ingest_->frames().set_notifier(wake);
        ingest_->start();
    }
    store_->start_flusher(config_.flush_interval);
    if (bridge_) {
        bridge_->start();
    }
    loop_thread_ = std::thread([this] { event_loop(); });
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::request_stop()
{
    stopping_ = true;
    inbox_cv_.notify_all();
}

void Server::wait()
{
    if (finished_) {
        return;
    }
    if (loop_thread_.joinable()) {
        loop_thread_.join();
    }
    if (accept_thread_.joinable()) {
        accept_thread_.join();
    }
    if (ingest_) {
        ingest_->stop();
    }
    if (bridge_) {
        bridge_->stop();
    }
    std::vector<std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(sessions_mutex_);
        sessions.swap(sessions_);
    }
    for (auto& s : sessions) {
        s->finish();
    }
    // Give writers a moment to drain, then cut whatever is still stuck.
    const auto until = std::chrono::steady_clock::now() + 1s;
    for (auto& s : sessions) {
        while (s->writing && std::chrono::steady_clock::now() < until) {
            std::this_thread::sleep_for(5ms);
        }
        s->abort();
    }
    for (auto& s : sessions) {
        s->reader.join();
        s->writer.join();
    }
    store_->stop_flusher();
    if (log_) {
        log_->flush();
    }
    listener_.close();
    finished_ = true;
    spdlog::info("stopped");
}

void Server::post(Event e)
{
    {
        std::lock_guard lock(inbox_mutex_);
        inbox_.push_back(std::move(e));
    }
    inbox_cv_.notify_one();
}

void Server::push_frame(TrackingFrame frame)
{
    bridge_frames_.push(std::move(frame));
}

nlohmann::ordered_json Server::state_json()
{
    if (!loop_thread_.joinable()) {
        return model_.to_json();
    }
    auto done = std::make_shared<std::promise<nlohmann::ordered_json>>();
    auto result = done->get_future();
    post(Call{[this, done] { done->set_value(model_.to_json()); }});
    return result.get();
}

std::vector<DeviceId> Server::online_devices()
{
    if (!loop_thread_.joinable()) {
        return {};
    }
    auto done = std::make_shared<std::promise<std::vector<DeviceId>>>();
    auto result = done->get_future();
    post(Call{[this, done] {
        std::vector<DeviceId> ids;
        for (const auto& [id, s] : online_) {
            ids.push_back(id);
        }
        done->set_value(ids);
    }});
    return result.get();
}

// Event loop ----------------------------------------------------------------------

void Server::event_loop()
{
    auto last_flush = std::chrono::steady_clock::now();
    while (!stopping_) {
        drain_frames();
        std::optional<Event> ev;
        {
            std::unique_lock lock(inbox_mutex_);
            inbox_cv_.wait_for(lock, 50ms, [&] { return !inbox_.empty() || wake_ || stopping_.load(); });
            wake_ = false;
            if (!inbox_.empty()) {
                ev = std::move(inbox_.front());
                inbox_.pop_front();
            }
        }
        if (ev) {
            // Poses first, so a gesture is judged against the freshest layout.
            drain_frames();
            std::visit(
                [this](auto& e) {
                    if constexpr (std::is_same_v<std::decay_t<decltype(e)>, Call>) {
                        e.fn();
                    } else {
                        handle(e);
                    }
                },
                *ev);
        }
        if (log_ && std::chrono::steady_clock::now() - last_flush > 100ms) {
            log_->flush();
            last_flush = std::chrono::steady_clock::now();
        }
    }
    // Answer anyone still waiting on a call.
    std::lock_guard lock(inbox_mutex_);
    for (auto& e : inbox_) {
        if (auto* c = std::get_if<Call>(&e)) {
            c->fn();
        }
    }
    inbox_.clear();
}

void Server::drain_frames()
{
    if (ingest_) {
        while (auto f = ingest_->frames().try_pop()) {
            apply_frame(*f);
        }
    }
    while (auto f = bridge_frames_.try_pop()) {
        apply_frame(*f);
    }
}

void Server::apply_frame(const TrackingFrame& frame)
{
    std::vector<DevicePose> poses;
    for (const auto& b : frame.bodies) {
        const auto it = body_to_device_.find(b.id);
        if (it != body_to_device_.end()) {
            poses.push_back(tracking::pose_from_body(b, it->second, frame.t_ms));
        }
    }
    if (poses.empty()) {
        return;
    }
    CommandBatch batch;
    try {
        batch = model_.on_pose_frame(poses);
    } catch (const std::exception& e) {
        spdlog::warn("tracking frame refused: {}", e.what());
        return;
    }
    if (log_) {
        log_->frame(poses);
    }
    dispatch(batch);
}

void Server::handle(Opened& e)
{
    const DeviceId d = e.hello.device_id;
    const auto refuse = [&](const char* code, const std::string& why) {
        spdlog::warn("session {}: refusing device {}: {}", e.session->id, d, why);
        e.session->out.push(cmd::Error{code, why});
        e.session->finish();
    };
    if (!model_.state().screens.contains(d)) {
        refuse("unknown_device", "device " + std::to_string(d) + " is not in the registry");
        return;
    }
    if (online_.contains(d)) {
        refuse("duplicate_device", "device " + std::to_string(d) + " is already connected");
        return;
    }
    if (!(e.hello.screen == model_.state().screens.at(d))) {
        spdlog::warn("device {} reports a screen that differs from the registry; using the registry", d);
    }
    online_[d] = e.session;
    spdlog::info("device {} online (session {})", d, e.session->id);
    if (log_) {
        log_->connect(d);
    }
    for (const auto& c : model_.replay_for(d)) {
        if (log_) {
            log_->replayed(d, c.command);
        }
        send(d, c.command);
    }
}

void Server::handle(Received& e)
{
    const DeviceId d = *e.session->device;
    const auto it = online_.find(d);
    if (it == online_.end() || it->second != e.session) {
        return;
    }
    if (std::holds_alternative<msg::DumpState>(e.message)) {
        send(d, cmd::StateDump{d, model_.view_of(d), model_.device_snapshots()});
        return;
    }
    if (log_) {
        log_->inbound(d, e.message);
    }
    try {
        const CommandBatch batch = std::visit(
            [&](const auto& m) -> CommandBatch {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, msg::Moved>) {
                    return model_.on_moved(d, m.resource_id, {m.x_px, m.y_px});
                } else if constexpr (std::is_same_v<T, msg::Clicked>) {
                    return model_.on_clicked(d, m.resource_id);
                } else if constexpr (std::is_same_v<T, msg::LongClicked>) {
                    return model_.on_long_clicked(d, m.resource_id);
                } else if constexpr (std::is_same_v<T, msg::Thrown>) {
                    return model_.on_thrown(d, m.resource_id, {m.vx_px_s, m.vy_px_s});
                } else {
                    return {};
                }
            },
            e.message);
        dispatch(batch);
        persist_changes();
    } catch (const ModelError& err) {
        spdlog::debug("device {}: {} refused: {}", d, type_name(e.message), err.what());
        if (log_) {
            log_->refused(d, e.message, err);
        }
    }
}

void Server::handle(Closed& e)
{
    if (!e.session->device) {
        return;
    }
    const DeviceId d = *e.session->device;
    const auto it = online_.find(d);
    if (it != online_.end() && it->second == e.session) {
        online_.erase(it);
        spdlog::info("device {} offline", d);
        if (log_) {
            log_->disconnect(d);
        }
    }
}

void Server::dispatch(const CommandBatch& batch)
{
    for (const auto& c : batch) {
        if (log_) {
            log_->outbound(c.device_id, c.command, online_.contains(c.device_id));
        }
        send(c.device_id, c.command);
    }
}

void Server::send(DeviceId device, const ServerCommand& c)
{
    const auto it = online_.find(device);
    if (it == online_.end()) {
        return;  // offline: reconnect replays the state instead
    }
    if (!it->second->out.push(c)) {
        spdlog::warn("device {} is not keeping up; dropping the connection", device);
        it->second->abort();
        online_.erase(it);
        if (log_) {
            log_->disconnect(device);
        }
    }
}

void Server::persist_changes()
{
    for (const auto& [id, r] : model_.state().resources) {
        const store::Placement p{id, r.host_device, r.local_pos};
        auto& last = persisted_[id];
        if (!(last == p)) {
            store_->persist_placement(p);
            last = p;
        }
    }
}

// Sessions ------------------------------------------------------------------------

void Server::accept_loop()
{
    while (!stopping_) {
        std::optional<net::Socket> sock;
        try {
            sock = listener_.accept(100ms);
        } catch (const net::NetError& e) {
            spdlog::warn("accept: {}", e.what());
            continue;
        }
        reap_sessions();
        if (!sock) {
            continue;
        }
        std::lock_guard lock(sessions_mutex_);
        auto s = std::make_shared<Session>(next_session_++, std::move(*sock), config_.outbound_capacity);
        s->reader = std::thread([this, s] { reader(s); });
        s->writer = std::thread([this, s] { writer(s); });
        sessions_.push_back(std::move(s));
    }
}

void Server::reap_sessions()
{
    std::vector<std::shared_ptr<Session>> done;
    {
        std::lock_guard lock(sessions_mutex_);
        auto it = std::partition(sessions_.begin(), sessions_.end(),
                                 [](const auto& s) { return s->reading || s->writing; });
        done.assign(std::make_move_iterator(it), std::make_move_iterator(sessions_.end()));
        sessions_.erase(it, sessions_.end());
    }
    for (auto& s : done) {
        s->reader.join();
        s->writer.join();
    }
}

void Server::reader(std::shared_ptr<Session> s)
{
    try {
        const auto first = s->conn.read_line(config_.hello_timeout);
        if (!first) {
            s->out.push(cmd::Error{"hello_timeout", "no hello within " +
                                                        std::to_string(config_.hello_timeout.count()) + " ms"});
            s->finish();
        } else {
            const DeviceMessage m = decode_device_message(*first);
            if (const auto* hello = std::get_if<msg::Hello>(&m)) {
                s->device = hello->device_id;
                post(Opened{s, *hello});
                while (!stopping_ && !s->out.closed()) {
                    const auto line = s->conn.read_line(200ms);
                    if (!line) {
                        continue;
                    }
                    DeviceMessage next = decode_device_message(*line);
                    if (std::holds_alternative<msg::Hello>(next)) {
                        throw DecodeError(DecodeErrorCode::MalformedMessage, "hello sent twice");
                    }
                    post(Received{s, std::move(next)});
                }
            } else {
                s->out.push(cmd::Error{"expected_hello", "the first message must be hello"});
                s->finish();
            }
        }
    } catch (const DecodeError& e) {
        spdlog::info("session {}: protocol error: {}", s->id, e.what());
        s->out.push(cmd::Error{"protocol_error", e.what()});
        s->finish();
    } catch (const net::NetError&) {
        s->finish();
    }
    if (s->device) {
        post(Closed{s});
    }
    s->reading = false;
}

void Server::writer(std::shared_ptr<Session> s)
{
    try {
        for (;;) {
            auto c = s->out.pop(200ms);
            if (!c) {
                if (s->out.closed()) {
                    break;
                }
                continue;
            }
            s->conn.write(encode(*c));
        }
    } catch (const net::NetError&) {
    }
    s->conn.socket().shutdown();
    s->writing = false;
}

}  // namespace mosaic
