#pragma once

// Random value generators shared by the property tests and the acceptance suite.

#include <random>
#include <string>

#include "mosaic/protocol.hpp"

namespace testgen {

using Rng = std::mt19937_64;

inline std::int64_t random_id(Rng& rng)
{
    // Mostly small ids, with the occasional large one.
    if (std::uniform_int_distribution<int>(0, 9)(rng) == 0) {
        return std::uniform_int_distribution<std::int64_t>(0, std::numeric_limits<std::int64_t>::max())(rng);
    }
    return std::uniform_int_distribution<std::int64_t>(0, 1000)(rng);
}

inline double random_double(Rng& rng)
{
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: return std::uniform_int_distribution<int>(-5000, 5000)(rng);
    case 1: return std::uniform_real_distribution<double>(-1e4, 1e4)(rng);
    case 2: return std::uniform_real_distribution<double>(-1e-6, 1e-6)(rng);
    default: return std::uniform_real_distribution<double>(-1e300, 1e300)(rng);
    }
}

inline double random_positive(Rng& rng) { return std::uniform_real_distribution<double>(1.0, 4096.0)(rng); }

inline bool random_bool(Rng& rng) { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; }

inline std::string random_text(Rng& rng)
{
    static const char* pieces[] = {"a", "Z", " ", "\"", "\\", "\n", "\t", "\xc3\xa9", "\xe2\x82\xac", "\xf0\x9f\x93\x8c", "{", "}", "0"};
    std::string s;
    const int n = std::uniform_int_distribution<int>(0, 12)(rng);
    for (int i = 0; i < n; ++i) {
        s += pieces[std::uniform_int_distribution<std::size_t>(0, std::size(pieces) - 1)(rng)];
    }
    return s;
}

inline mosaic::ScreenSpec random_screen(Rng& rng)
{
    return {random_positive(rng), random_positive(rng), random_positive(rng), random_positive(rng)};
}

inline mosaic::DevicePose random_pose(Rng& rng)
{
    std::uniform_real_distribution<double> angle(-4.0, 4.0);
    return {random_id(rng),
            {random_double(rng), random_double(rng), random_double(rng)},
            mosaic::EulerAngles(angle(rng), angle(rng), angle(rng)),
            std::uniform_int_distribution<std::int64_t>(0, 1'000'000)(rng)};
}

inline mosaic::DeviceMessage random_device_message(Rng& rng)
{
    using namespace mosaic;
    switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
    case 0: return msg::Hello{random_id(rng), random_screen(rng)};
    case 1: return msg::Moved{random_id(rng), random_double(rng), random_double(rng)};
    case 2: return msg::Clicked{random_id(rng)};
    case 3: return msg::LongClicked{random_id(rng)};
    case 4: return msg::Thrown{random_id(rng), random_double(rng), random_double(rng)};
    default: return msg::DumpState{};
    }
}

inline mosaic::DeviceView random_view(Rng& rng)
{
    mosaic::DeviceView v;
    const int n = std::uniform_int_distribution<int>(0, 4)(rng);
    for (int i = 0; i < n; ++i) {
        v.notes[random_id(rng)] = {random_double(rng), random_double(rng), random_bool(rng)};
        v.local_lines.emplace(random_id(rng), random_id(rng));
        v.point_lines.emplace(random_id(rng), random_double(rng), random_double(rng));
    }
    return v;
}

inline mosaic::ServerCommand random_server_command(Rng& rng)
{
    using namespace mosaic;
    switch (std::uniform_int_distribution<int>(0, 7)(rng)) {
    case 0: return cmd::ResourceDef{random_id(rng), random_text(rng), random_bool(rng)};
    case 1: return cmd::Show{random_id(rng), random_double(rng), random_double(rng)};
    case 2: return cmd::Hide{random_id(rng)};
    case 3: return cmd::Highlight{random_id(rng), random_bool(rng)};
    case 4: return cmd::LineLocal{random_id(rng), random_id(rng), random_bool(rng)};
    case 5: return cmd::LineToPoint{random_id(rng), random_double(rng), random_double(rng), random_bool(rng)};
    case 6: return cmd::Error{random_text(rng), random_text(rng)};
    default: {
        cmd::StateDump d{random_id(rng), random_view(rng), {}};
        const int n = std::uniform_int_distribution<int>(0, 3)(rng);
        for (int i = 0; i < n; ++i) {
            DeviceSnapshot s{random_id(rng), random_screen(rng), std::nullopt};
            if (random_bool(rng)) {
                s.pose = random_pose(rng);
                s.pose->device_id = s.device_id;
            }
            d.devices.push_back(s);
        }
        return d;
    }
    }
}

inline mosaic::TrackingMessage random_tracking_message(Rng& rng)
{
    using namespace mosaic;
    if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
        return track::Poll{};
    }
    TrackingFrame f;
    f.t_ms = std::uniform_int_distribution<std::int64_t>(0, 1'000'000'000)(rng);
    const int n = std::uniform_int_distribution<int>(0, 6)(rng);
    for (int i = 0; i < n; ++i) {
        f.bodies.push_back({i * 3 + 1, random_double(rng), random_double(rng), random_double(rng), random_double(rng),
                            random_double(rng), random_double(rng)});
    }
    return f;
}

/// Random bytes, mutated valid lines and structurally odd JSON.
inline std::string random_fuzz_line(Rng& rng)
{
    std::string line;
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: {
        const int n = std::uniform_int_distribution<int>(0, 96)(rng);
        for (int i = 0; i < n; ++i) {
            line.push_back(static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng)));
        }
        return line;
    }
    case 1: line = mosaic::encode(random_device_message(rng)); break;
    case 2: line = mosaic::encode(random_server_command(rng)); break;
    default: {
        static const char* odd[] = {"{\"type\":null}", "{\"type\":\"moved\",\"resource_id\":1e400}",
                                    "{\"type\":\"hello\",\"device_id\":1,\"screen\":[]}",
                                    "{\"type\":\"frame\",\"t_ms\":1,\"bodies\":[1]}",
                                    "{\"type\":\"thrown\",\"resource_id\":18446744073709551615,\"vx_px_s\":1,\"vy_px_s\":1}",
                                    "{\"type\":\"state_dump\",\"device_id\":0,\"view\":{},\"devices\":[{}]}",
                                    "[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[[",
                                    "{\"type\":\"clicked\",\"resource_id\":1}{}"};
        line = odd[std::uniform_int_distribution<std::size_t>(0, std::size(odd) - 1)(rng)];
        break;
    }
    }
    const int mutations = std::uniform_int_distribution<int>(0, 4)(rng);
    for (int i = 0; i < mutations && !line.empty(); ++i) {
        const std::size_t at = std::uniform_int_distribution<std::size_t>(0, line.size() - 1)(rng);
        switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
        case 0: line[at] = static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng)); break;
        case 1: line.erase(at, std::uniform_int_distribution<std::size_t>(1, 8)(rng)); break;
        default: line.insert(at, 1, "{}[]\",:0e-"[std::uniform_int_distribution<int>(0, 9)(rng)]); break;
        }
    }
    return line;
}

}  // namespace testgen
