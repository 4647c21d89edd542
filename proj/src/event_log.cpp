#include "mosaic/event_log.hpp"

#include "mosaic/json_codec.hpp"

namespace mosaic {

using json_codec::ojson;

namespace {

ojson as_object(const std::string& line)
{
    return ojson::parse(line);
}

}  // namespace

ojson model_config_to_json(const ModelConfig& c)
{
    return ojson{{"throw_threshold_px_s", c.throw_threshold_px_s},
                 {"landing_margin_px", c.landing_margin_px},
                 {"line_damping_px", c.line_damping_px}};
}

ModelConfig model_config_from_json(const ojson& j)
{
    ModelConfig c;
    c.throw_threshold_px_s = j.at("throw_threshold_px_s").get<double>();
    c.landing_margin_px = j.at("landing_margin_px").get<double>();
    c.line_damping_px = j.at("line_damping_px").get<double>();
    return c;
}

EventLog::EventLog(const std::filesystem::path& path)
    : out_(path, std::ios::out | std::ios::trunc), origin_(std::chrono::steady_clock::now())
{
    if (!out_) {
        throw std::runtime_error("cannot open event log " + path.string());
    }
}

ojson EventLog::start(std::string_view type)
{
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin_).count();
    return ojson{{"type", type}, {"ts_ms", ms}};
}

void EventLog::write(ojson& line)
{
    out_ << line.dump() << '\n';
}

void EventLog::header(const ModelConfig& config, const ojson& state)
{
    auto line = start("header");
    line["version"] = 1;
    line["config"] = model_config_to_json(config);
    line["state"] = state;
    write(line);
    out_.flush();
}

void EventLog::inbound(DeviceId device, const DeviceMessage& m)
{
    auto line = start("in");
    line["device_id"] = device;
    line["msg"] = as_object(encode(m));
    write(line);
}

void EventLog::frame(std::span<const DevicePose> poses)
{
    auto line = start("frame");
    ojson list = ojson::array();
    for (const auto& p : poses) {
        list.push_back(json_codec::pose_to_json(p));
    }
    line["poses"] = std::move(list);
    write(line);
}

void EventLog::outbound(DeviceId device, const ServerCommand& c, bool delivered)
{
    auto line = start("out");
    line["device_id"] = device;
    line["delivered"] = delivered;
    line["cmd"] = as_object(encode(c));
    write(line);
}

void EventLog::replayed(DeviceId device, const ServerCommand& c)
{
    auto line = start("replay");
    line["device_id"] = device;
    line["cmd"] = as_object(encode(c));
    write(line);
}

void EventLog::connect(DeviceId device)
{
    auto line = start("connect");
    line["device_id"] = device;
    write(line);
}

void EventLog::disconnect(DeviceId device)
{
    auto line = start("disconnect");
    line["device_id"] = device;
    write(line);
}

void EventLog::refused(DeviceId device, const DeviceMessage& m, const ModelError& e)
{
    auto line = start("error");
    line["device_id"] = device;
    line["code"] = to_string(e.code());
    line["message"] = e.what();
    line["msg"] = as_object(encode(m));
    write(line);
}

void EventLog::flush()
{
    out_.flush();
}

InteractionModel replay_event_log(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("event log is empty");
    }
    std::optional<InteractionModel> model;
    try {
        const ojson header = ojson::parse(line);
        if (header.at("type") != "header") {
            throw std::runtime_error("event log does not start with a header");
        }
        model = InteractionModel::from_json(header.at("state"), model_config_from_json(header.at("config")));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("bad event log header: ") + e.what());
    }
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        try {
            const ojson ev = ojson::parse(line);
            const auto& type = ev.at("type").get_ref<const std::string&>();
            if (type == "frame") {
                std::vector<DevicePose> poses;
                for (const auto& p : ev.at("poses")) {
                    poses.push_back(json_codec::pose_from_json(p));
                }
                model->on_pose_frame(poses);
            } else if (type == "in") {
                const DeviceId d = ev.at("device_id").get<DeviceId>();
                const DeviceMessage m = decode_device_message(ev.at("msg").dump());
                std::visit(
                    [&](const auto& v) {
                        using T = std::decay_t<decltype(v)>;
                        if constexpr (std::is_same_v<T, msg::Moved>) {
                            model->on_moved(d, v.resource_id, {v.x_px, v.y_px});
                        } else if constexpr (std::is_same_v<T, msg::Clicked>) {
                            model->on_clicked(d, v.resource_id);
                        } else if constexpr (std::is_same_v<T, msg::LongClicked>) {
                            model->on_long_clicked(d, v.resource_id);
                        } else if constexpr (std::is_same_v<T, msg::Thrown>) {
                            model->on_thrown(d, v.resource_id, {v.vx_px_s, v.vy_px_s});
                        }
                    },
                    m);
            }
        } catch (const ModelError&) {
            // refused live as well; the log has the matching error line
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("event log line " + std::to_string(number) + ": " + e.what());
        } catch (const DecodeError& e) {
            throw std::runtime_error("event log line " + std::to_string(number) + ": " + e.what());
        }
    }
    return std::move(*model);
}

InteractionModel replay_event_log(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open event log " + path.string());
    }
    return replay_event_log(in);
}

}  // namespace mosaic
