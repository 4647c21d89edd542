#include "mosaic/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mosaic::tracking {

Mode mode_from_string(std::string_view s)
{
    if (s == "poll") {
        return Mode::poll;
    }
    if (s == "stream") {
        return Mode::stream;
    }
    throw std::invalid_argument("tracking mode must be poll or stream, got '" + std::string(s) + "'");
}

std::string_view to_string(Mode mode)
{
    return mode == Mode::poll ? "poll" : "stream";
}

std::string_view to_string(IngestEvent e)
{
    switch (e) {
    case IngestEvent::Connected: return "connected";
    case IngestEvent::ConnectionLost: return "connection_lost";
    case IngestEvent::Timeout: return "timeout";
    case IngestEvent::OutOfOrder: return "out_of_order";
    }
    return "unknown";
}

// Scripted motion -------------------------------------------------------------

namespace {

double finite_number(const nlohmann::json& obj, const char* key, const std::string& where)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) {
        throw ScriptError(where + ": '" + key + "' must be a number");
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        throw ScriptError(where + ": '" + key + "' must be finite");
    }
    return v;
}

Keyframe keyframe_from_json(const nlohmann::json& j, const std::string& where)
{
    if (!j.is_object()) {
        throw ScriptError(where + ": keyframe must be an object");
    }
    const auto t = j.find("t_ms");
    if (t == j.end() || !t->is_number_integer()) {
        throw ScriptError(where + ": 't_ms' must be an integer");
    }
    Keyframe k;
    k.t_ms = t->get<std::int64_t>();
    k.x_mm = finite_number(j, "x_mm", where);
    k.y_mm = finite_number(j, "y_mm", where);
    k.z_mm = finite_number(j, "z_mm", where);
    k.roll_deg = finite_number(j, "roll_deg", where);
    k.pitch_deg = finite_number(j, "pitch_deg", where);
    k.yaw_deg = finite_number(j, "yaw_deg", where);
    return k;
}

TrackedBody body_at(std::int64_t id, const std::vector<Keyframe>& keys, std::int64_t t)
{
    const auto make = [id](const Keyframe& k) {
        return TrackedBody{id, k.x_mm, k.y_mm, k.z_mm, k.roll_deg, k.pitch_deg, k.yaw_deg};
    };
    if (t <= keys.front().t_ms) {
        return make(keys.front());
    }
    if (t >= keys.back().t_ms) {
        return make(keys.back());
    }
    const auto next = std::upper_bound(keys.begin(), keys.end(), t,
                                       [](std::int64_t v, const Keyframe& k) { return v < k.t_ms; });
    const Keyframe& a = *std::prev(next);
    const Keyframe& b = *next;
    if (a.t_ms == t) {
        return make(a);
    }
    const double f = static_cast<double>(t - a.t_ms) / static_cast<double>(b.t_ms - a.t_ms);
    const auto lerp = [f](double u, double v) { return u + (v - u) * f; };
    return TrackedBody{id,
                       lerp(a.x_mm, b.x_mm),
                       lerp(a.y_mm, b.y_mm),
                       lerp(a.z_mm, b.z_mm),
                       lerp_angle_deg(a.roll_deg, b.roll_deg, f),
                       lerp_angle_deg(a.pitch_deg, b.pitch_deg, f),
                       lerp_angle_deg(a.yaw_deg, b.yaw_deg, f)};
}

}  // namespace

MotionScript MotionScript::from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw ScriptError("motion script must be a JSON object");
    }
    MotionScript s;
    if (j.contains("rate_hz")) {
        s.rate_hz = finite_number(j, "rate_hz", "motion script");
    }
    if (s.rate_hz < 1.0 || s.rate_hz > 240.0) {
        throw ScriptError("rate_hz must lie in [1, 240]");
    }
    if (j.contains("loop")) {
        if (!j["loop"].is_boolean()) {
            throw ScriptError("'loop' must be a boolean");
        }
        s.loop = j["loop"].get<bool>();
    }
    const auto devices = j.find("devices");
    if (devices == j.end() || !devices->is_object()) {
        throw ScriptError("'devices' must be an object keyed by body id");
    }
    for (const auto& [key, frames] : devices->items()) {
        std::int64_t id = -1;
        std::size_t used = 0;
        try {
            id = std::stoll(key, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != key.size() || id < 0) {
            throw ScriptError("body id '" + key + "' is not a non-negative integer");
        }
        if (!frames.is_array() || frames.empty()) {
            throw ScriptError("body " + key + ": keyframes must be a non-empty array");
        }
        std::vector<Keyframe> keys;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            keys.push_back(keyframe_from_json(frames[i], "body " + key + " keyframe " + std::to_string(i)));
            if (i > 0 && keys[i].t_ms <= keys[i - 1].t_ms) {
                throw ScriptError("body " + key + ": keyframes must be strictly increasing in t_ms");
            }
        }
        s.bodies[id] = std::move(keys);
    }
    return s;
}

MotionScript MotionScript::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ScriptError("cannot open motion script " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ScriptError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::int64_t MotionScript::start_ms() const
{
    std::optional<std::int64_t> t;
    for (const auto& [id, keys] : bodies) {
        t = std::min(t.value_or(keys.front().t_ms), keys.front().t_ms);
    }
    return t.value_or(0);
}

std::int64_t MotionScript::end_ms() const
{
    std::optional<std::int64_t> t;
    for (const auto& [id, keys] : bodies) {
        t = std::max(t.value_or(keys.back().t_ms), keys.back().t_ms);
    }
    return t.value_or(0);
}

double lerp_angle_deg(double a, double b, double f)
{
    double d = std::remainder(b - a, 360.0);
    if (d == -180.0) {
        d = 180.0;
    }
    double r = std::remainder(a + d * f, 360.0);
    if (r == -180.0) {
        r = 180.0;
    }
    return r;
}

std::vector<TrackedBody> interpolate(const MotionScript& script, std::int64_t t_ms)
{
    const std::int64_t start = script.start_ms();
    const std::int64_t end = script.end_ms();
    std::int64_t t = t_ms;
    if (script.loop && end > start && t > end) {
        t = start + (t - start) % (end - start);
    }
    std::vector<TrackedBody> out;
    out.reserve(script.bodies.size());
    for (const auto& [id, keys] : script.bodies) {
        out.push_back(body_at(id, keys, t));
    }
    return out;
}

DevicePose pose_from_body(const TrackedBody& body, DeviceId device, std::int64_t t_ms)
{
    return DevicePose{device,
                      Vec3{body.x_mm, body.y_mm, body.z_mm},
                      EulerAngles::from_degrees(body.yaw_deg, body.pitch_deg, body.roll_deg),
                      t_ms};
}

FrameProvider script_clock(MotionScript script)
{
    const auto origin = std::chrono::steady_clock::now();
    return [script = std::move(script), origin] {
        const auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin);
        const std::int64_t t = script.start_ms() + elapsed.count();
        return TrackingFrame{t, interpolate(script, t)};
    };
}

// Source ------------------------------------------------------------------------

TrackingSource::TrackingSource(const net::Endpoint& listen, Mode mode, double rate_hz, FrameProvider provider)
    : mode_(mode), rate_hz_(rate_hz), provider_(std::move(provider)), listener_(net::Listener::bind(listen))
{
    port_ = listener_.port();
    acceptor_ = std::thread([this] { accept_loop(); });
}

TrackingSource::~TrackingSource()
{
    stop();
}

std::uint64_t TrackingSource::update(const std::function<void()>& change)
{
    std::lock_guard lock(mutex_);
    change();
    return polls_;
}

std::uint64_t TrackingSource::polls_received() const
{
    std::lock_guard lock(mutex_);
    return polls_;
}

bool TrackingSource::wait_for_polls(std::uint64_t count, net::Millis timeout)
{
    std::unique_lock lock(mutex_);
    return polled_.wait_for(lock, timeout, [&] { return polls_ >= count || stopping_; }) && polls_ >= count;
}

void TrackingSource::disconnect_all()
{
    std::lock_guard lock(mutex_);
    for (auto& c : conns_) {
        c->socket().shutdown();
    }
}

void TrackingSource::stop()
{
    if (stopping_.exchange(true)) {
        return;
    }
    polled_.notify_all();
    if (acceptor_.joinable()) {
        acceptor_.join();
    }
    disconnect_all();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        workers.swap(workers_);
    }
    for (auto& w : workers) {
        w.join();
    }
    listener_.close();
}

TrackingFrame TrackingSource::sample_locked()
{
    return provider_();
}

void TrackingSource::accept_loop()
{
    while (!stopping_) {
        std::optional<net::Socket> s;
        try {
            s = listener_.accept(net::Millis(100));
        } catch (const net::NetError&) {
            continue;
        }
        if (!s) {
            continue;
        }
        auto conn = std::make_shared<net::LineConnection>(std::move(*s));
        std::lock_guard lock(mutex_);
        conns_.push_back(conn);
        workers_.emplace_back([this, conn] { serve(conn); });
    }
}

void TrackingSource::serve(std::shared_ptr<net::LineConnection> conn)
{
    try {
        if (mode_ == Mode::stream) {
            const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(1.0 / rate_hz_));
            auto next = std::chrono::steady_clock::now();
            while (!stopping_) {
                TrackingFrame f;
                {
                    std::lock_guard lock(mutex_);
                    f = sample_locked();
                }
                conn->write(encode(TrackingMessage{std::move(f)}));
                frames_sent_.fetch_add(1);
                next += period;
                std::this_thread::sleep_until(next);
            }
        } else {
            while (!stopping_) {
                const auto line = conn->read_line(net::Millis(100));
                if (!line) {
                    continue;
                }
                if (!std::holds_alternative<track::Poll>(decode_tracking_message(*line))) {
                    continue;
                }
                TrackingFrame f;
                {
                    std::lock_guard lock(mutex_);
                    ++polls_;
                    f = sample_locked();
                }
                polled_.notify_all();
                conn->write(encode(TrackingMessage{std::move(f)}));
                frames_sent_.fetch_add(1);
            }
        }
    } catch (const net::NetError&) {
    } catch (const DecodeError&) {
    }
    std::lock_guard lock(mutex_);
    conn->socket().shutdown();
    std::erase(conns_, conn);
}

// Ingest ------------------------------------------------------------------------

TrackingClient::TrackingClient(IngestOptions options, Listener listener)
    : options_(std::move(options)), listener_(std::move(listener)), queue_(options_.queue_capacity)
{
}

TrackingClient::~TrackingClient()
{
    stop();
}

void TrackingClient::start()
{
    stopping_ = false;
    thread_ = std::thread([this] { ingest_loop(); });
}

void TrackingClient::stop()
{
    {
        std::lock_guard lock(wake_mutex_);
        stopping_ = true;
    }
    wake_.notify_all();
    {
        std::lock_guard lock(conn_mutex_);
        if (live_socket_ != nullptr) {
            live_socket_->shutdown();
        }
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

bool TrackingClient::sleep_unless_stopped(net::Millis d)
{
    std::unique_lock lock(wake_mutex_);
    return !wake_.wait_for(lock, d, [&] { return stopping_.load(); });
}

void TrackingClient::report(IngestEvent e, const std::string& detail)
{
    if (listener_) {
        listener_(e, detail);
    }
}

void TrackingClient::ingest_loop()
{
    while (!stopping_) {
        net::LineConnection conn;
        try {
            conn = net::LineConnection(net::connect_to(options_.source, options_.timeout));
        } catch (const net::NetError& e) {
            losses_.fetch_add(1);
            report(IngestEvent::ConnectionLost, e.what());
            sleep_unless_stopped(options_.reconnect_backoff);
            continue;
        }
        connects_.fetch_add(1);
        report(IngestEvent::Connected, options_.source.str());
        {
            std::lock_guard lock(conn_mutex_);
            live_socket_ = &conn.socket();
        }
        fresh_connection_ = true;
        if (stopping_) {
            conn.socket().shutdown();
        }
        bool lost = false;
        std::string why;
        try {
            run_connection(conn);
        } catch (const net::NetError& e) {
            lost = true;
            why = e.what();
        } catch (const DecodeError& e) {
            lost = true;
            why = std::string("bad frame: ") + e.what();
        }
        {
            std::lock_guard lock(conn_mutex_);
            live_socket_ = nullptr;
        }
        if (stopping_) {
            break;
        }
        if (lost) {
            losses_.fetch_add(1);
            report(IngestEvent::ConnectionLost, why);
        }
        sleep_unless_stopped(options_.reconnect_backoff);
    }
}

void TrackingClient::run_connection(net::LineConnection& conn)
{
    static const std::string poll_line = encode(TrackingMessage{track::Poll{}});
    while (!stopping_) {
        if (options_.mode == Mode::poll) {
            conn.write(poll_line);
        }
        const auto line = conn.read_line(options_.timeout);
        if (!line) {
            timeouts_.fetch_add(1);
            report(IngestEvent::Timeout, "no frame within " + std::to_string(options_.timeout.count()) + " ms");
            if (options_.mode == Mode::poll) {
                return;  // a late reply would pair with the next poll
            }
            continue;
        }
        auto msg = decode_tracking_message(*line);
        if (auto* frame = std::get_if<TrackingFrame>(&msg)) {
            deliver(std::move(*frame));
        }
        if (options_.mode == Mode::poll && options_.poll_interval.count() > 0) {
            sleep_unless_stopped(options_.poll_interval);
        }
    }
}

void TrackingClient::deliver(TrackingFrame frame)
{
    const std::int64_t raw = frame.t_ms;
    if (fresh_connection_) {
        fresh_connection_ = false;
        if (last_delivered_ && raw + offset_ < *last_delivered_) {
            offset_ = *last_delivered_ - raw;
        }
    } else if (last_raw_ && raw < *last_raw_) {
        report(IngestEvent::OutOfOrder, "t_ms went back from " + std::to_string(*last_raw_) + " to " +
                                            std::to_string(raw));
        return;
    }
    last_raw_ = raw;
    frame.t_ms = raw + offset_;
    last_delivered_ = frame.t_ms;
    received_.fetch_add(1);
    queue_.push(std::move(frame));
}

}  // namespace mosaic::tracking
