#include "mosaic/protocol.hpp"

#include <json.hpp>

#include "mosaic/json_codec.hpp"

namespace mosaic {

using ojson = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void malformed(const std::string& why)
{
    throw DecodeError(DecodeErrorCode::MalformedMessage, why);
}

std::string finish(const ojson& j)
{
    std::string out = j.dump();
    out.push_back('\n');
    return out;
}

ojson parse_object(std::string_view line)
{
    if (!line.empty() && line.back() == '\n') {
        line.remove_suffix(1);
    }
    if (!is_valid_utf8(line)) {
        throw DecodeError(DecodeErrorCode::NonUTF8, "line is not valid UTF-8");
    }
    ojson j = ojson::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        malformed("not a JSON document");
    }
    if (!j.is_object()) {
        malformed("top-level value is not an object");
    }
    const auto it = j.find("type");
    if (it == j.end() || !it->is_string()) {
        malformed("missing string field 'type'");
    }
    return j;
}

const ojson& field(const ojson& j, const char* name)
{
    const auto it = j.find(name);
    if (it == j.end()) {
        malformed(std::string("missing field '") + name + "'");
    }
    return *it;
}

std::int64_t get_int(const ojson& j, const char* name)
{
    const ojson& v = field(j, name);
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            malformed(std::string("field '") + name + "' out of range");
        }
        return static_cast<std::int64_t>(u);
    }
    if (!v.is_number_integer()) {
        malformed(std::string("field '") + name + "' is not an integer");
    }
    return v.get<std::int64_t>();
}

std::int64_t get_id(const ojson& j, const char* name)
{
    const std::int64_t v = get_int(j, name);
    if (v < 0) {
        malformed(std::string("field '") + name + "' is negative");
    }
    return v;
}

double get_number(const ojson& j, const char* name)
{
    const ojson& v = field(j, name);
    if (!v.is_number()) {
        malformed(std::string("field '") + name + "' is not a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        malformed(std::string("field '") + name + "' is not finite");
    }
    return d;
}

bool get_bool(const ojson& j, const char* name)
{
    const ojson& v = field(j, name);
    if (!v.is_boolean()) {
        malformed(std::string("field '") + name + "' is not a boolean");
    }
    return v.get<bool>();
}

std::string get_string(const ojson& j, const char* name)
{
    const ojson& v = field(j, name);
    if (!v.is_string()) {
        malformed(std::string("field '") + name + "' is not a string");
    }
    return v.get<std::string>();
}

const ojson& get_array(const ojson& j, const char* name)
{
    const ojson& v = field(j, name);
    if (!v.is_array()) {
        malformed(std::string("field '") + name + "' is not an array");
    }
    return v;
}

const ojson& get_object(const ojson& j, const char* name)
{
    const ojson& v = field(j, name);
    if (!v.is_object()) {
        malformed(std::string("field '") + name + "' is not an object");
    }
    return v;
}

ojson screen_to_json(const ScreenSpec& s)
{
    return ojson{{"width_px", s.width_px}, {"height_px", s.height_px}, {"width_mm", s.width_mm},
                 {"height_mm", s.height_mm}};
}

ScreenSpec screen_from_json(const ojson& j)
{
    if (!j.is_object()) {
        malformed("screen is not an object");
    }
    ScreenSpec s{get_number(j, "width_px"), get_number(j, "height_px"), get_number(j, "width_mm"),
                 get_number(j, "height_mm")};
    if (!s.valid()) {
        malformed("screen dimensions must be positive");
    }
    return s;
}

ojson view_to_json(const DeviceView& v)
{
    ojson notes = ojson::array();
    for (const auto& [id, note] : v.notes) {
        notes.push_back(ojson{{"resource_id", id}, {"x_px", note.x_px}, {"y_px", note.y_px},
                              {"highlighted", note.highlighted}});
    }
    ojson local = ojson::array();
    for (const auto& [a, b] : v.local_lines) {
        local.push_back(ojson{{"from_resource", a}, {"to_resource", b}});
    }
    ojson points = ojson::array();
    for (const auto& [id, x, y] : v.point_lines) {
        points.push_back(ojson{{"resource_id", id}, {"x_px", x}, {"y_px", y}});
    }
    return ojson{{"notes", notes}, {"local_lines", local}, {"point_lines", points}};
}

DeviceView view_from_json(const ojson& j)
{
    DeviceView v;
    for (const ojson& n : get_array(j, "notes")) {
        v.notes[get_id(n, "resource_id")] = {get_number(n, "x_px"), get_number(n, "y_px"),
                                            get_bool(n, "highlighted")};
    }
    for (const ojson& l : get_array(j, "local_lines")) {
        v.local_lines.emplace(get_id(l, "from_resource"), get_id(l, "to_resource"));
    }
    for (const ojson& p : get_array(j, "point_lines")) {
        v.point_lines.emplace(get_id(p, "resource_id"), get_number(p, "x_px"), get_number(p, "y_px"));
    }
    return v;
}

ojson snapshot_to_json(const DeviceSnapshot& d)
{
    ojson j{{"device_id", d.device_id}, {"screen", screen_to_json(d.screen)}};
    j["pose"] = d.pose ? json_codec::pose_to_json(*d.pose) : ojson(nullptr);
    return j;
}

DeviceSnapshot snapshot_from_json(const ojson& j)
{
    DeviceSnapshot d;
    d.device_id = get_id(j, "device_id");
    d.screen = screen_from_json(field(j, "screen"));
    const ojson& pose = field(j, "pose");
    if (!pose.is_null()) {
        try {
            d.pose = json_codec::pose_from_json(pose);
        } catch (const std::exception& e) {
            malformed(std::string("bad pose: ") + e.what());
        }
    }
    return d;
}

ojson body_to_json(const TrackedBody& b)
{
    return ojson{{"id", b.id},           {"x_mm", b.x_mm},           {"y_mm", b.y_mm},
                 {"z_mm", b.z_mm},       {"roll_deg", b.roll_deg},   {"pitch_deg", b.pitch_deg},
                 {"yaw_deg", b.yaw_deg}};
}

TrackedBody body_from_json(const ojson& j)
{
    if (!j.is_object()) {
        malformed("body is not an object");
    }
    return {get_id(j, "id"),           get_number(j, "x_mm"),      get_number(j, "y_mm"),
            get_number(j, "z_mm"),     get_number(j, "roll_deg"),  get_number(j, "pitch_deg"),
            get_number(j, "yaw_deg")};
}

}  // namespace

std::string_view to_string(DecodeErrorCode code)
{
    switch (code) {
    case DecodeErrorCode::UnknownType: return "UnknownType";
    case DecodeErrorCode::MalformedMessage: return "MalformedMessage";
    case DecodeErrorCode::NonUTF8: return "NonUTF8";
    }
    return "?";
}

std::string_view type_name(const DeviceMessage& m)
{
    return std::visit(overloaded{
                          [](const msg::Hello&) { return std::string_view("hello"); },
                          [](const msg::Moved&) { return std::string_view("moved"); },
                          [](const msg::Clicked&) { return std::string_view("clicked"); },
                          [](const msg::LongClicked&) { return std::string_view("long_clicked"); },
                          [](const msg::Thrown&) { return std::string_view("thrown"); },
                          [](const msg::DumpState&) { return std::string_view("dump_state"); },
                      },
                      m);
}

std::string_view type_name(const ServerCommand& c)
{
    return std::visit(overloaded{
                          [](const cmd::ResourceDef&) { return std::string_view("resource_def"); },
                          [](const cmd::Show&) { return std::string_view("show"); },
                          [](const cmd::Hide&) { return std::string_view("hide"); },
                          [](const cmd::Highlight&) { return std::string_view("highlight"); },
                          [](const cmd::LineLocal&) { return std::string_view("line_local"); },
                          [](const cmd::LineToPoint&) { return std::string_view("line_to_point"); },
                          [](const cmd::Error&) { return std::string_view("error"); },
                          [](const cmd::StateDump&) { return std::string_view("state_dump"); },
                      },
                      c);
}

std::string encode(const DeviceMessage& m)
{
    ojson j{{"type", type_name(m)}};
    std::visit(overloaded{
                   [&](const msg::Hello& h) {
                       j["device_id"] = h.device_id;
                       j["screen"] = screen_to_json(h.screen);
                   },
                   [&](const msg::Moved& v) {
                       j["resource_id"] = v.resource_id;
                       j["x_px"] = v.x_px;
                       j["y_px"] = v.y_px;
                   },
                   [&](const msg::Clicked& v) { j["resource_id"] = v.resource_id; },
                   [&](const msg::LongClicked& v) { j["resource_id"] = v.resource_id; },
                   [&](const msg::Thrown& v) {
                       j["resource_id"] = v.resource_id;
                       j["vx_px_s"] = v.vx_px_s;
                       j["vy_px_s"] = v.vy_px_s;
                   },
                   [&](const msg::DumpState&) {},
               },
               m);
    return finish(j);
}

std::string encode(const ServerCommand& c)
{
    ojson j{{"type", type_name(c)}};
    std::visit(overloaded{
                   [&](const cmd::ResourceDef& v) {
                       j["resource_id"] = v.resource_id;
                       j["text"] = v.text;
                       j["has_timestamp"] = v.has_timestamp;
                   },
                   [&](const cmd::Show& v) {
                       j["resource_id"] = v.resource_id;
                       j["x_px"] = v.x_px;
                       j["y_px"] = v.y_px;
                   },
                   [&](const cmd::Hide& v) { j["resource_id"] = v.resource_id; },
                   [&](const cmd::Highlight& v) {
                       j["resource_id"] = v.resource_id;
                       j["on"] = v.on;
                   },
                   [&](const cmd::LineLocal& v) {
                       j["from_resource"] = v.from_resource;
                       j["to_resource"] = v.to_resource;
                       j["on"] = v.on;
                   },
                   [&](const cmd::LineToPoint& v) {
                       j["resource_id"] = v.resource_id;
                       j["x_px"] = v.x_px;
                       j["y_px"] = v.y_px;
                       j["on"] = v.on;
                   },
                   [&](const cmd::Error& v) {
                       j["code"] = v.code;
                       j["message"] = v.message;
                   },
                   [&](const cmd::StateDump& v) {
                       j["device_id"] = v.device_id;
                       j["view"] = view_to_json(v.view);
                       ojson devices = ojson::array();
                       for (const auto& d : v.devices) {
                           devices.push_back(snapshot_to_json(d));
                       }
                       j["devices"] = std::move(devices);
                   },
               },
               c);
    return finish(j);
}

std::string encode(const TrackingMessage& m)
{
    return std::visit(overloaded{
                          [](const track::Poll&) { return finish(ojson{{"type", "poll"}}); },
                          [](const TrackingFrame& f) {
                              ojson bodies = ojson::array();
                              for (const auto& b : f.bodies) {
                                  bodies.push_back(body_to_json(b));
                              }
                              return finish(ojson{{"type", "frame"}, {"t_ms", f.t_ms}, {"bodies", bodies}});
                          },
                      },
                      m);
}

DeviceMessage decode_device_message(std::string_view line)
{
    const ojson j = parse_object(line);
    const auto& type = j["type"].get_ref<const std::string&>();
    if (type == "hello") {
        return msg::Hello{get_id(j, "device_id"), screen_from_json(field(j, "screen"))};
    }
    if (type == "moved") {
        return msg::Moved{get_id(j, "resource_id"), get_number(j, "x_px"), get_number(j, "y_px")};
    }
    if (type == "clicked") {
        return msg::Clicked{get_id(j, "resource_id")};
    }
    if (type == "long_clicked") {
        return msg::LongClicked{get_id(j, "resource_id")};
    }
    if (type == "thrown") {
        return msg::Thrown{get_id(j, "resource_id"), get_number(j, "vx_px_s"), get_number(j, "vy_px_s")};
    }
    if (type == "dump_state") {
        return msg::DumpState{};
    }
    throw DecodeError(DecodeErrorCode::UnknownType, "unknown device message type '" + type + "'");
}

ServerCommand decode_server_command(std::string_view line)
{
    const ojson j = parse_object(line);
    const auto& type = j["type"].get_ref<const std::string&>();
    if (type == "resource_def") {
        return cmd::ResourceDef{get_id(j, "resource_id"), get_string(j, "text"), get_bool(j, "has_timestamp")};
    }
    if (type == "show") {
        return cmd::Show{get_id(j, "resource_id"), get_number(j, "x_px"), get_number(j, "y_px")};
    }
    if (type == "hide") {
        return cmd::Hide{get_id(j, "resource_id")};
    }
    if (type == "highlight") {
        return cmd::Highlight{get_id(j, "resource_id"), get_bool(j, "on")};
    }
    if (type == "line_local") {
        return cmd::LineLocal{get_id(j, "from_resource"), get_id(j, "to_resource"), get_bool(j, "on")};
    }
    if (type == "line_to_point") {
        return cmd::LineToPoint{get_id(j, "resource_id"), get_number(j, "x_px"), get_number(j, "y_px"),
                                get_bool(j, "on")};
    }
    if (type == "error") {
        return cmd::Error{get_string(j, "code"), get_string(j, "message")};
    }
    if (type == "state_dump") {
        cmd::StateDump d;
        d.device_id = get_id(j, "device_id");
        d.view = view_from_json(get_object(j, "view"));
        for (const ojson& dev : get_array(j, "devices")) {
            d.devices.push_back(snapshot_from_json(dev));
        }
        return d;
    }
    throw DecodeError(DecodeErrorCode::UnknownType, "unknown server command type '" + type + "'");
}

TrackingMessage decode_tracking_message(std::string_view line)
{
    const ojson j = parse_object(line);
    const auto& type = j["type"].get_ref<const std::string&>();
    if (type == "poll") {
        return track::Poll{};
    }
    if (type == "frame") {
        TrackingFrame f;
        f.t_ms = get_int(j, "t_ms");
        std::set<std::int64_t> seen;
        for (const ojson& b : get_array(j, "bodies")) {
            f.bodies.push_back(body_from_json(b));
            if (!seen.insert(f.bodies.back().id).second) {
                malformed("duplicate body id in frame");
            }
        }
        return f;
    }
    throw DecodeError(DecodeErrorCode::UnknownType, "unknown tracking message type '" + type + "'");
}

bool is_valid_utf8(std::string_view bytes)
{
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(bytes[i]);
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= n) {
            return false;
        }
        for (std::size_t k = 1; k <= extra; ++k) {
            const auto cc = static_cast<unsigned char>(bytes[i + k]);
            if ((cc & 0xC0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        // Reject overlong encodings, surrogates and values past U+10FFFF.
        static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
        if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += extra + 1;
    }
    return true;
}

void LineBuffer::feed(std::string_view chunk)
{
    if (consumed_ > 0 && consumed_ >= buffer_.size() / 2) {
        buffer_.erase(0, consumed_);
        consumed_ = 0;
    }
    buffer_.append(chunk);
    const auto nl = buffer_.find('\n', consumed_);
    const std::size_t open = (nl == std::string::npos ? buffer_.size() : nl) - consumed_;
    if (open > max_line_) {
        buffer_.clear();
        consumed_ = 0;
        malformed("line exceeds maximum length");
    }
}

std::optional<std::string> LineBuffer::next_line()
{
    const auto nl = buffer_.find('\n', consumed_);
    if (nl == std::string::npos) {
        return std::nullopt;
    }
    std::string line = buffer_.substr(consumed_, nl - consumed_);
    consumed_ = nl + 1;
    return line;
}

}  // namespace mosaic
