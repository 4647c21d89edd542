#include "mosaic/geometry.hpp"

#include <limits>

namespace mosaic {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTieEpsilon = 1e-9;

}  // namespace

double wrap_angle(double radians)
{
    double r = std::remainder(radians, kTwoPi);
    if (r <= -std::numbers::pi) {
        r += kTwoPi;
    }
    return r;
}

EulerAngles::EulerAngles(double alpha, double beta, double gamma)
    : alpha_(wrap_angle(alpha)), beta_(wrap_angle(beta)), gamma_(wrap_angle(gamma))
{
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma)) {
        throw std::invalid_argument("Euler angles must be finite");
    }
}

EulerAngles EulerAngles::from_degrees(double yaw_deg, double pitch_deg, double roll_deg)
{
    return {deg_to_rad(yaw_deg), deg_to_rad(pitch_deg), deg_to_rad(roll_deg)};
}

RotationMatrix RotationMatrix::transposed() const
{
    const auto& m = m_;
    return RotationMatrix({m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]});
}

Vec3 RotationMatrix::apply(const Vec3& v) const
{
    const auto& m = m_;
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Vec3 RotationMatrix::apply_transposed(const Vec3& v) const
{
    const auto& m = m_;
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
            m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
}

double RotationMatrix::determinant() const
{
    const auto& m = m_;
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b)
{
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0;
            for (int k = 0; k < 3; ++k) {
                sum += a(r, k) * b(k, c);
            }
            out[static_cast<std::size_t>(r * 3 + c)] = sum;
        }
    }
    return RotationMatrix(out);
}

Transform Transform::inverse() const
{
    const RotationMatrix rt = rotation.transposed();
    return {rt, -rt.apply(translation)};
}

std::array<double, 16> Transform::homogeneous() const
{
    const auto& r = rotation;
    const auto& t = translation;
    return {r(0, 0), r(0, 1), r(0, 2), t.x,
            r(1, 0), r(1, 1), r(1, 2), t.y,
            r(2, 0), r(2, 1), r(2, 2), t.z,
            0.0,     0.0,     0.0,     1.0};
}

bool ScreenSpec::valid() const
{
    const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    return positive(width_px) && positive(height_px) && positive(width_mm) && positive(height_mm);
}

RotationMatrix rot_x(double gamma)
{
    const double c = std::cos(gamma);
    const double s = std::sin(gamma);
    return RotationMatrix({1, 0, 0, 0, c, -s, 0, s, c});
}

RotationMatrix rot_y(double beta)
{
    const double c = std::cos(beta);
    const double s = std::sin(beta);
    return RotationMatrix({c, 0, s, 0, 1, 0, -s, 0, c});
}

RotationMatrix rot_z(double alpha)
{
    const double c = std::cos(alpha);
    const double s = std::sin(alpha);
    return RotationMatrix({c, -s, 0, s, c, 0, 0, 0, 1});
}

RotationMatrix compose_rotation(const EulerAngles& angles)
{
    const double ca = std::cos(angles.alpha());
    const double sa = std::sin(angles.alpha());
    const double cb = std::cos(angles.beta());
    const double sb = std::sin(angles.beta());
    const double cg = std::cos(angles.gamma());
    const double sg = std::sin(angles.gamma());
    return RotationMatrix({
        ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg,
        sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg,
        -sb,     cb * sg,                cb * cg,
    });
}

Transform pose_to_transform(const DevicePose& pose)
{
    return {compose_rotation(pose.angles), pose.center};
}

Vec3 local_to_global(const Transform& t, const Vec3& p_local)
{
    return t.rotation.apply(p_local) + t.translation;
}

Vec3 global_to_local(const Transform& t, const Vec3& p_global)
{
    return t.rotation.apply_transposed(p_global - t.translation);
}

Vec3 project_to_device(const Transform& t_other, const Vec3& p_global)
{
    return global_to_local(t_other, p_global);
}

Vec3 px_to_local_mm(const ScreenSpec& screen, Vec2 p)
{
    return {(p.x - screen.width_px / 2.0) * screen.mm_per_px_x(),
            (screen.height_px / 2.0 - p.y) * screen.mm_per_px_y(),
            0.0};
}

Vec2 local_mm_to_px(const ScreenSpec& screen, const Vec3& p)
{
    return {p.x / screen.mm_per_px_x() + screen.width_px / 2.0,
            screen.height_px / 2.0 - p.y / screen.mm_per_px_y()};
}

double throw_direction(const DevicePose& pose, Vec2 v_local_px_s, const ScreenSpec& screen)
{
    if (v_local_px_s.x == 0.0 && v_local_px_s.y == 0.0) {
        throw ZeroVelocity();
    }
    // Velocity is a direction, so only the axis scaling applies; screen y grows downward.
    const Vec3 v_local{v_local_px_s.x * screen.mm_per_px_x(), -v_local_px_s.y * screen.mm_per_px_y(), 0.0};
    const Vec3 v_global = compose_rotation(pose.angles).apply(v_local);
    return std::atan2(v_global.y, v_global.x);
}

std::optional<DeviceId> select_throw_target(const DevicePose& source, std::span<const DevicePose> others,
                                            double theta)
{
    std::optional<DeviceId> best;
    double best_phi = std::numeric_limits<double>::infinity();
    double best_dist = std::numeric_limits<double>::infinity();

    for (const DevicePose& other : others) {
        if (other.device_id == source.device_id) {
            continue;
        }
        const double dx = other.center.x - source.center.x;
        const double dy = other.center.y - source.center.y;
        const double phi = std::abs(wrap_angle(std::atan2(dy, dx) - theta));
        if (!(phi < std::numbers::pi / 2.0)) {
            continue;
        }
        const double dist = std::hypot(dx, dy);
        bool better = false;
        if (phi < best_phi - kTieEpsilon) {
            better = true;
        } else if (phi <= best_phi + kTieEpsilon) {
            better = dist < best_dist || (dist == best_dist && other.device_id < *best);
        }
        if (better) {
            best = other.device_id;
            best_phi = phi;
            best_dist = dist;
        }
    }
    return best;
}

}  // namespace mosaic
