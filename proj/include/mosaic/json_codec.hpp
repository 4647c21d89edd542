#pragma once

// JSON helpers shared by the wire codec, the event log and state snapshots.

#include <json.hpp>

#include "mosaic/geometry.hpp"

namespace mosaic::json_codec {

using ojson = nlohmann::ordered_json;

/// Pose with angles in radians, exactly as held in memory.
ojson pose_to_json(const DevicePose& pose);
DevicePose pose_from_json(const ojson& j);

ojson screen_to_json(const ScreenSpec& s);
ScreenSpec screen_from_json(const ojson& j);

}  // namespace mosaic::json_codec
