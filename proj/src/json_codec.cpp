#include "mosaic/json_codec.hpp"

namespace mosaic::json_codec {

ojson pose_to_json(const DevicePose& pose)
{
    return ojson{{"device_id", pose.device_id},
                 {"x_mm", pose.center.x},
                 {"y_mm", pose.center.y},
                 {"z_mm", pose.center.z},
                 {"alpha_rad", pose.angles.alpha()},
                 {"beta_rad", pose.angles.beta()},
                 {"gamma_rad", pose.angles.gamma()},
                 {"frame_time_ms", pose.frame_time_ms}};
}

DevicePose pose_from_json(const ojson& j)
{
    DevicePose pose;
    pose.device_id = j.at("device_id").get<DeviceId>();
    pose.center = {j.at("x_mm").get<double>(), j.at("y_mm").get<double>(), j.at("z_mm").get<double>()};
    pose.angles = EulerAngles(j.at("alpha_rad").get<double>(), j.at("beta_rad").get<double>(),
                              j.at("gamma_rad").get<double>());
    pose.frame_time_ms = j.at("frame_time_ms").get<std::int64_t>();
    return pose;
}

ojson screen_to_json(const ScreenSpec& s)
{
    return ojson{{"width_px", s.width_px}, {"height_px", s.height_px}, {"width_mm", s.width_mm},
                 {"height_mm", s.height_mm}};
}

ScreenSpec screen_from_json(const ojson& j)
{
    return {j.at("width_px").get<double>(), j.at("height_px").get<double>(), j.at("width_mm").get<double>(),
            j.at("height_mm").get<double>()};
}

}  // namespace mosaic::json_codec
