#pragma once

// Reference computations written independently of the library code, for
// checking it against.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>

#include "mosaic/geometry.hpp"

namespace oracle {

using namespace mosaic;

/// Literal transcription of the expanded closed-form Rz(a) Ry(b) Rx(g).
inline RotationMatrix expanded_rotation(double a, double b, double g)
{
    using std::cos;
    using std::sin;
    return RotationMatrix({cos(a) * cos(b), cos(a) * sin(b) * sin(g) - sin(a) * cos(g),
                           cos(a) * sin(b) * cos(g) + sin(a) * sin(g), sin(a) * cos(b),
                           sin(a) * sin(b) * sin(g) + cos(a) * cos(g), sin(a) * sin(b) * cos(g) - cos(a) * sin(g),
                           -sin(b), cos(b) * sin(g), cos(b) * cos(g)});
}

/// Heading of a swipe: scale px/s to mm/s per axis (screen y points down),
/// rotate with the expanded matrix, read the bearing in the table plane.
inline double throw_heading(const DevicePose& pose, Vec2 v_px, const ScreenSpec& screen)
{
    const double lx = v_px.x * screen.width_mm / screen.width_px;
    const double ly = -v_px.y * screen.height_mm / screen.height_px;
    const RotationMatrix r = expanded_rotation(pose.angles.alpha(), pose.angles.beta(), pose.angles.gamma());
    const double gx = r(0, 0) * lx + r(0, 1) * ly;
    const double gy = r(1, 0) * lx + r(1, 1) * ly;
    return std::atan2(gy, gx);
}

/// Brute-force target choice: rotate every offset by -theta so the throw
/// points along +x, keep devices strictly in front (x' > 0 means |phi| < pi/2),
/// then take the smallest |phi|, the nearest, the lowest id.
inline std::optional<DeviceId> throw_target(const DevicePose& source, std::span<const DevicePose> all, double theta)
{
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    std::optional<DeviceId> best;
    double best_phi = 0, best_dist = 0;
    for (const DevicePose& d : all) {
        if (d.device_id == source.device_id) {
            continue;
        }
        const double dx = d.center.x - source.center.x;
        const double dy = d.center.y - source.center.y;
        const double xr = dx * c + dy * s;
        const double yr = -dx * s + dy * c;
        if (!(xr > 0.0)) {
            continue;
        }
        const double phi = std::abs(std::atan2(yr, xr));
        const double dist = std::hypot(dx, dy);
        bool better = !best;
        if (best) {
            if (std::abs(phi - best_phi) > 1e-9) {
                better = phi < best_phi;
            } else if (dist != best_dist) {
                better = dist < best_dist;
            } else {
                better = d.device_id < *best;
            }
        }
        if (better) {
            best = d.device_id;
            best_phi = phi;
            best_dist = dist;
        }
    }
    return best;
}

}  // namespace oracle
