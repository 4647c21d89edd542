#include "mosaic/simclient.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mosaic::sim {

using namespace std::chrono_literals;

// DeviceClient --------------------------------------------------------------------

DeviceClient::DeviceClient(net::Endpoint server, DeviceId id, ScreenSpec screen, double threshold)
    : server_(std::move(server)), id_(id), screen_spec_(screen), threshold_(threshold)
{
}

DeviceClient::~DeviceClient()
{
    disconnect();
}

void DeviceClient::connect()
{
    disconnect();
    conn_ = std::make_shared<net::LineConnection>(net::connect_to(server_, 2s));
    {
        std::lock_guard lock(mutex_);
        screen_ = ScreenModel{};
        dumps_.clear();
        error_.reset();
        open_ = true;
    }
    conn_->write(encode(DeviceMessage{msg::Hello{id_, screen_spec_}}));
    receiver_ = std::thread([this] { receive_loop(); });
}

void DeviceClient::disconnect()
{
    if (conn_) {
        conn_->socket().shutdown();
    }
    if (receiver_.joinable()) {
        receiver_.join();
    }
    conn_.reset();
}

bool DeviceClient::connected() const
{
    std::lock_guard lock(mutex_);
    return open_;
}

bool DeviceClient::wait_closed(Millis timeout)
{
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return !open_; });
}

void DeviceClient::receive_loop()
{
    auto conn = conn_;
    try {
        for (;;) {
            const auto line = conn->read_line(200ms);
            if (!line) {
                continue;
            }
            ServerCommand c = decode_server_command(*line);
            std::lock_guard lock(mutex_);
            lines_.push_back(*line);
            if (auto* d = std::get_if<cmd::StateDump>(&c)) {
                dumps_.push_back(std::move(*d));
            } else if (auto* e = std::get_if<cmd::Error>(&c)) {
                error_ = std::move(*e);
            } else {
                screen_.apply(c);
            }
            cv_.notify_all();
        }
    } catch (const std::exception&) {
    }
    std::lock_guard lock(mutex_);
    open_ = false;
    cv_.notify_all();
}

void DeviceClient::send(const DeviceMessage& m)
{
    send_raw(encode(m));
}

void DeviceClient::send_raw(std::string_view bytes)
{
    if (!conn_) {
        throw SimError("device " + std::to_string(id_) + " is not connected");
    }
    conn_->write(bytes);
}

void DeviceClient::move(ResourceId r, const std::vector<Vec2>& path)
{
    for (const Vec2& p : path) {
        {
            std::lock_guard lock(mutex_);
            screen_.move_locally(r, p);
        }
        send(msg::Moved{r, p.x, p.y});
    }
}

void DeviceClient::click(ResourceId r)
{
    send(msg::Clicked{r});
}

void DeviceClient::long_click(ResourceId r)
{
    send(msg::LongClicked{r});
}

void DeviceClient::flick(ResourceId r, Vec2 v, std::optional<Vec2> release)
{
    if (std::hypot(v.x, v.y) >= threshold_) {
        send(msg::Thrown{r, v.x, v.y});
        return;
    }
    if (!release) {
        std::lock_guard lock(mutex_);
        const auto it = screen_.view().notes.find(r);
        if (it == screen_.view().notes.end()) {
            return;  // nothing under the finger
        }
        release = Vec2{it->second.x_px, it->second.y_px};
    }
    move(r, {*release});
}

cmd::StateDump DeviceClient::dump(Millis timeout)
{
    {
        std::lock_guard lock(mutex_);
        dumps_.clear();
    }
    send(msg::DumpState{});
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !dumps_.empty() || !open_; }) || dumps_.empty()) {
        throw SimError("device " + std::to_string(id_) + ": no state dump within " + std::to_string(timeout.count()) +
                       " ms" + (error_ ? " (server said " + error_->code + ": " + error_->message + ")" : ""));
    }
    cmd::StateDump d = std::move(dumps_.front());
    dumps_.pop_front();
    return d;
}

ScreenModel DeviceClient::screen() const
{
    std::lock_guard lock(mutex_);
    return screen_;
}

std::vector<std::string> DeviceClient::take_lines()
{
    std::lock_guard lock(mutex_);
    return std::exchange(lines_, {});
}

std::optional<cmd::Error> DeviceClient::last_error() const
{
    std::lock_guard lock(mutex_);
    return error_;
}

// Scenario files ------------------------------------------------------------------

namespace {

const ScreenSpec kDefaultScreen{1280, 800, 216.96, 135.6};

double number(const nlohmann::json& j, const char* key, const std::string& where)
{
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number() || !std::isfinite(it->get<double>())) {
        throw SimError(where + ": '" + key + "' must be a number");
    }
    return it->get<double>();
}

std::int64_t integer(const nlohmann::json& j, const char* key, const std::string& where)
{
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
        throw SimError(where + ": '" + key + "' must be an integer");
    }
    return it->get<std::int64_t>();
}

Vec2 point(const nlohmann::json& j, const std::string& where)
{
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
        return {j[0].get<double>(), j[1].get<double>()};
    }
    if (j.is_object()) {
        return {number(j, "x_px", where), number(j, "y_px", where)};
    }
    throw SimError(where + ": a point is [x, y] or {\"x_px\", \"y_px\"}");
}

Gesture::Action action_from(const std::string& s, const std::string& where)
{
    if (s == "move") return Gesture::Action::move;
    if (s == "click") return Gesture::Action::click;
    if (s == "long_click") return Gesture::Action::long_click;
    if (s == "flick") return Gesture::Action::flick;
    throw SimError(where + ": unknown action '" + s + "'");
}

nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw SimError("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SimError(path.string() + ": " + e.what());
    }
}

}  // namespace

Scenario Scenario::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    if (!j.is_object()) {
        throw SimError("scenario must be a JSON object");
    }
    Scenario s;
    if (j.contains("throw_threshold_px_s")) {
        s.throw_threshold_px_s = number(j, "throw_threshold_px_s", "scenario");
    }
    if (j.contains("screens")) {
        for (const auto& d : j["screens"]) {
            s.screens[integer(d, "device_id", "screen")] =
                ScreenSpec{number(d, "width_px", "screen"), number(d, "height_px", "screen"),
                           number(d, "width_mm", "screen"), number(d, "height_mm", "screen")};
        }
    }
    if (j.contains("tracking")) {
        const auto& t = j["tracking"];
        if (t.contains("listen")) {
            s.tracking_listen = net::Endpoint::parse(t["listen"].get<std::string>());
        }
        try {
            if (t.contains("script")) {
                s.motion = tracking::MotionScript::from_json(t["script"]);
            } else if (t.contains("script_file")) {
                s.motion = tracking::MotionScript::load(base_dir / t["script_file"].get<std::string>());
            }
        } catch (const tracking::ScriptError& e) {
            throw SimError(std::string("scenario motion: ") + e.what());
        }
    }
    const auto gestures = j.find("gestures");
    if (gestures == j.end() || !gestures->is_array()) {
        throw SimError("scenario: 'gestures' must be an array");
    }
    std::int64_t last_t = std::numeric_limits<std::int64_t>::min();
    for (std::size_t i = 0; i < gestures->size(); ++i) {
        const auto& g = (*gestures)[i];
        const std::string where = "gesture " + std::to_string(i);
        Gesture out;
        out.t_ms = integer(g, "t_ms", where);
        if (out.t_ms < last_t) {
            throw SimError(where + ": gestures must be sorted by t_ms");
        }
        last_t = out.t_ms;
        out.device_id = integer(g, "device_id", where);
        out.resource_id = integer(g, "resource_id", where);
        if (!g.contains("action") || !g["action"].is_string()) {
            throw SimError(where + ": 'action' must be a string");
        }
        out.action = action_from(g["action"].get<std::string>(), where);
        if (out.action == Gesture::Action::move) {
            if (!g.contains("path") || !g["path"].is_array() || g["path"].empty()) {
                throw SimError(where + ": move needs a non-empty 'path'");
            }
            for (const auto& p : g["path"]) {
                out.path.push_back(point(p, where));
            }
        }
        if (out.action == Gesture::Action::flick) {
            out.velocity = {number(g, "vx_px_s", where), number(g, "vy_px_s", where)};
            if (g.contains("release")) {
                out.release = point(g["release"], where);
            }
        }
        s.gestures.push_back(std::move(out));
    }
    return s;
}

Scenario Scenario::load(const std::filesystem::path& path)
{
    return from_json(read_json(path), path.parent_path());
}

std::vector<Assertion> Assertion::list_from_json(const nlohmann::json& j)
{
    const nlohmann::json& list = j.is_object() && j.contains("assertions") ? j["assertions"] : j;
    if (!list.is_array()) {
        throw SimError("assertions must be an array");
    }
    std::vector<Assertion> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& a = list[i];
        const std::string where = "assertion " + std::to_string(i);
        if (!a.is_object() || !a.contains("kind") || !a["kind"].is_string()) {
            throw SimError(where + ": needs a 'kind'");
        }
        Assertion x;
        const std::string kind = a["kind"].get<std::string>();
        if (a.contains("device_id") && !a["device_id"].is_null()) {
            x.device_id = integer(a, "device_id", where);
        }
        if (kind == "command_count") {
            x.kind = Kind::command_count;
            if (!a.contains("type") || !a["type"].is_string()) {
                throw SimError(where + ": command_count needs a 'type'");
            }
            x.command_type = a["type"].get<std::string>();
            if (a.contains("on")) x.on = a["on"].get<bool>();
            if (a.contains("min")) x.min = integer(a, "min", where);
            if (a.contains("max")) x.max = integer(a, "max", where);
            if (a.contains("equals")) x.min = x.max = integer(a, "equals", where);
            if (!x.min && !x.max) {
                throw SimError(where + ": command_count needs min, max or equals");
            }
        } else if (kind == "resource_host") {
            x.kind = Kind::resource_host;
            x.resource_id = integer(a, "resource_id", where);
            x.host = x.device_id;
            if (!a.contains("device_id")) {
                throw SimError(where + ": resource_host needs 'device_id' (null for hidden)");
            }
        } else if (kind == "screen_contains") {
            x.kind = Kind::screen_contains;
            x.resource_id = integer(a, "resource_id", where);
            if (!x.device_id) {
                throw SimError(where + ": screen_contains needs 'device_id'");
            }
            if (a.contains("present")) x.present = a["present"].get<bool>();
            if (a.contains("highlighted")) x.highlighted = a["highlighted"].get<bool>();
        } else if (kind == "segment_collinearity") {
            x.kind = Kind::segment_collinearity;
            x.tolerance_mm = number(a, "tolerance_mm", where);
            if (a.contains("min_pairs")) x.min_pairs = integer(a, "min_pairs", where);
        } else {
            throw SimError(where + ": unknown kind '" + kind + "'");
        }
        x.label = a.contains("label") ? a["label"].get<std::string>() : kind + " #" + std::to_string(i);
        out.push_back(std::move(x));
    }
    return out;
}

std::vector<Assertion> Assertion::load(const std::filesystem::path& path)
{
    return list_from_json(read_json(path));
}

// Evaluation ------------------------------------------------------------------------

namespace {

struct LiftedLine {
    DeviceId device;
    ResourceId anchor;
    Vec3 from;  // anchor note, global
    Vec3 to;    // drawn endpoint, global
};

double distance_to_line(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double len = ab.norm();
    if (len == 0.0) {
        return (p - a).norm();
    }
    return (p - a).cross(ab).norm() / len;
}

AssertionResult check_collinearity(const Assertion& a, const Report& r)
{
    AssertionResult res{a.label, false, ""};
    if (r.final_dumps.empty()) {
        res.detail = "no state dumps";
        return res;
    }
    std::map<DeviceId, DeviceSnapshot> devices;
    for (const auto& d : r.final_dumps.begin()->second.devices) {
        devices[d.device_id] = d;
    }
    std::vector<LiftedLine> lines;
    for (const auto& [dev, view] : r.final_screens) {
        const auto it = devices.find(dev);
        if (it == devices.end() || !it->second.pose) {
            continue;
        }
        const Transform t = pose_to_transform(*it->second.pose);
        const auto lift = [&](Vec2 px) { return local_to_global(t, px_to_local_mm(it->second.screen, px)); };
        for (const auto& [anchor, x, y] : view.point_lines) {
            const auto note = view.notes.find(anchor);
            if (note == view.notes.end()) {
                continue;
            }
            lines.push_back({dev, anchor, lift({note->second.x_px, note->second.y_px}), lift({x, y})});
        }
    }
    // Each drawn segment must have a partner on another device, anchored at
    // its target, such that both lie on the line joining the two anchors.
    double worst = 0.0;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lines.size(); ++k) {
            if (lines[k].device == lines[i].device || lines[k].anchor == lines[i].anchor) {
                continue;
            }
            const Vec3& ga = lines[i].from;
            const Vec3& gb = lines[k].from;
            best = std::min(best, std::max(distance_to_line(lines[i].to, ga, gb), distance_to_line(lines[k].to, ga, gb)));
        }
        if (best <= a.tolerance_mm) {
            ++matched;
        }
        worst = std::max(worst, best);
    }
    const auto pairs = static_cast<std::int64_t>(matched / 2);
    res.passed = matched == lines.size() && pairs >= a.min_pairs;
    std::ostringstream d;
    d << lines.size() << " cross-device segments, " << pairs << " pairs, worst deviation " << worst << " mm";
    res.detail = d.str();
    return res;
}

}  // namespace

std::vector<AssertionResult> evaluate(const std::vector<Assertion>& assertions, const Report& r)
{
    std::vector<nlohmann::json> log;
    {
        std::istringstream in(r.command_log);
        std::string line;
        while (std::getline(in, line)) {
            log.push_back(nlohmann::json::parse(line));
        }
    }
    std::vector<AssertionResult> out;
    for (const auto& a : assertions) {
        AssertionResult res{a.label, false, ""};
        switch (a.kind) {
        case Assertion::Kind::command_count: {
            std::int64_t n = 0;
            for (const auto& e : log) {
                const auto& c = e["cmd"];
                if (c["type"] != a.command_type) continue;
                if (a.device_id && e["device_id"].get<DeviceId>() != *a.device_id) continue;
                if (a.on && (!c.contains("on") || c["on"].get<bool>() != *a.on)) continue;
                ++n;
            }
            res.passed = (!a.min || n >= *a.min) && (!a.max || n <= *a.max);
            res.detail = std::to_string(n) + " " + a.command_type + " commands";
            break;
        }
        case Assertion::Kind::resource_host: {
            std::vector<DeviceId> shown_on;
            for (const auto& [dev, dump] : r.final_dumps) {
                if (dump.view.notes.contains(a.resource_id)) {
                    shown_on.push_back(dev);
                }
            }
            res.passed = a.host ? shown_on == std::vector<DeviceId>{*a.host} : shown_on.empty();
            res.detail = "resource " + std::to_string(a.resource_id) + " shown on " + std::to_string(shown_on.size()) +
                         " device(s)" + (shown_on.size() == 1 ? " (" + std::to_string(shown_on[0]) + ")" : "");
            break;
        }
        case Assertion::Kind::screen_contains: {
            const auto it = r.final_screens.find(*a.device_id);
            const DeviceView::Note* note = nullptr;
            if (it != r.final_screens.end()) {
                const auto n = it->second.notes.find(a.resource_id);
                note = n == it->second.notes.end() ? nullptr : &n->second;
            }
            res.passed = (note != nullptr) == a.present && (!a.highlighted || (note && note->highlighted == *a.highlighted));
            res.detail = std::string("resource ") + std::to_string(a.resource_id) + (note ? " shown" : " absent") +
                         (note && note->highlighted ? ", highlighted" : "");
            break;
        }
        case Assertion::Kind::segment_collinearity: res = check_collinearity(a, r); break;
        }
        out.push_back(std::move(res));
    }
    return out;
}

bool Report::ok() const
{
    return screens_match &&
           std::all_of(results.begin(), results.end(), [](const AssertionResult& r) { return r.passed; });
}

// Runner ------------------------------------------------------------------------------

Report run_scenario(const Scenario& sc, const RunOptions& opt, const std::vector<Assertion>& assertions)
{
    const auto started = std::chrono::steady_clock::now();
    Report report;

    std::unique_ptr<tracking::TrackingSource> source;
    auto virtual_t = std::make_shared<std::int64_t>(0);
    const auto advance = [&](std::int64_t t) {
        if (!source) {
            return;
        }
        const std::uint64_t n = source->update([&] { *virtual_t = t; });
        // Poll n+1 is answered with the new poses; poll n+2 shows the server queued them.
        if (!source->wait_for_polls(n + 2, opt.barrier_timeout)) {
            throw SimError("the server is not polling the tracking source");
        }
    };
    if (sc.motion) {
        const auto listen = opt.tracking_listen ? opt.tracking_listen : sc.tracking_listen;
        if (!listen) {
            throw SimError("scenario has motion but no tracking listen address");
        }
        const tracking::MotionScript& script = *sc.motion;
        *virtual_t = script.start_ms();
        source = std::make_unique<tracking::TrackingSource>(
            *listen, tracking::Mode::poll, script.rate_hz,
            [&script, virtual_t] { return TrackingFrame{*virtual_t, tracking::interpolate(script, *virtual_t)}; });
        advance(script.start_ms());
    }

    std::map<DeviceId, std::unique_ptr<DeviceClient>> clients;
    for (DeviceId d : opt.devices) {
        const auto s = sc.screens.find(d);
        clients[d] = std::make_unique<DeviceClient>(opt.server, d, s == sc.screens.end() ? kDefaultScreen : s->second,
                                                    sc.throw_threshold_px_s);
    }

    std::ostringstream log;
    const auto collect = [&](std::size_t step) {
        for (auto& [d, c] : clients) {
            for (const auto& line : c->take_lines()) {
                log << "{\"step\":" << step << ",\"device_id\":" << d << ",\"cmd\":" << line << "}\n";
            }
        }
    };
    const auto barrier = [&](std::optional<DeviceId> first) {
        if (first) {
            report.final_dumps[*first] = clients.at(*first)->dump(opt.barrier_timeout);
        }
        for (auto& [d, c] : clients) {
            if (d != first) {
                report.final_dumps[d] = c->dump(opt.barrier_timeout);
            }
        }
    };

    for (auto& [d, c] : clients) {
        c->connect();
        c->dump(opt.barrier_timeout);  // replay done
        if (const auto e = c->last_error()) {
            throw SimError("device " + std::to_string(d) + " refused: " + e->code + ": " + e->message);
        }
    }
    barrier(std::nullopt);
    collect(0);

    for (std::size_t k = 0; k < sc.gestures.size(); ++k) {
        const Gesture& g = sc.gestures[k];
        if (!opt.fast) {
            const std::int64_t base = sc.gestures.front().t_ms;
            std::this_thread::sleep_until(started + std::chrono::milliseconds(g.t_ms - base));
        }
        advance(g.t_ms);
        const auto it = clients.find(g.device_id);
        if (it == clients.end()) {
            throw SimError("gesture " + std::to_string(k) + " uses device " + std::to_string(g.device_id) +
                           ", which this run does not drive");
        }
        DeviceClient& c = *it->second;
        switch (g.action) {
        case Gesture::Action::move: c.move(g.resource_id, g.path); break;
        case Gesture::Action::click: c.click(g.resource_id); break;
        case Gesture::Action::long_click: c.long_click(g.resource_id); break;
        case Gesture::Action::flick: c.flick(g.resource_id, g.velocity, g.release); break;
        }
        barrier(g.device_id);
        collect(k + 1);
    }

    report.command_log = log.str();
    report.screens_match = true;
    for (auto& [d, c] : clients) {
        report.final_screens[d] = c->screen().view();
        report.screens_match = report.screens_match && report.final_screens[d] == report.final_dumps.at(d).view;
    }
    for (auto& [d, c] : clients) {
        c->disconnect();
    }
    if (source) {
        source->stop();
    }
    report.results = evaluate(assertions, report);
    report.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace mosaic::sim
