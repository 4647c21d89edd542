#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>

namespace mosaic {

using DeviceId = std::int64_t;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
    friend bool operator==(Vec2, Vec2) = default;

    double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
    friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const
    {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

inline double deg_to_rad(double deg) { return deg * (std::numbers::pi / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / std::numbers::pi); }

/// Orientation as yaw (alpha, about global Z), pitch (beta, about Y) and
/// roll (gamma, about X). Values are kept wrapped into (-pi, pi].
class EulerAngles {
public:
    EulerAngles() = default;
    EulerAngles(double alpha, double beta, double gamma);

    static EulerAngles from_degrees(double yaw_deg, double pitch_deg, double roll_deg);

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }

    friend bool operator==(const EulerAngles&, const EulerAngles&) = default;

private:
    double alpha_ = 0.0;
    double beta_ = 0.0;
    double gamma_ = 0.0;
};

/// 3x3 rotation, row-major storage.
class RotationMatrix {
public:
    RotationMatrix() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
    explicit RotationMatrix(const std::array<double, 9>& rows) : m_(rows) {}

    static RotationMatrix identity() { return {}; }

    double operator()(int row, int col) const { return m_[static_cast<std::size_t>(row * 3 + col)]; }
    const std::array<double, 9>& data() const { return m_; }

    RotationMatrix transposed() const;
    Vec3 apply(const Vec3& v) const;
    Vec3 apply_transposed(const Vec3& v) const;
    double determinant() const;

    friend RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b);
    friend bool operator==(const RotationMatrix&, const RotationMatrix&) = default;

private:
    std::array<double, 9> m_;
};

/// Rigid transform: p_global = rotation * p_local + translation.
struct Transform {
    RotationMatrix rotation;
    Vec3 translation;

    Transform inverse() const;

    /// Row-major 4x4 homogeneous matrix with bottom row (0, 0, 0, 1).
    std::array<double, 16> homogeneous() const;
};

struct DevicePose {
    DeviceId device_id = 0;
    Vec3 center;  // mm, global frame
    EulerAngles angles;
    std::int64_t frame_time_ms = 0;

    friend bool operator==(const DevicePose&, const DevicePose&) = default;
};

struct ScreenSpec {
    double width_px = 0.0;
    double height_px = 0.0;
    double width_mm = 0.0;
    double height_mm = 0.0;

    bool valid() const;
    double mm_per_px_x() const { return width_mm / width_px; }
    double mm_per_px_y() const { return height_mm / height_px; }
    bool contains(Vec2 px) const { return px.x >= 0 && px.x <= width_px && px.y >= 0 && px.y <= height_px; }

    friend bool operator==(const ScreenSpec&, const ScreenSpec&) = default;
};

class ZeroVelocity : public std::invalid_argument {
public:
    ZeroVelocity() : std::invalid_argument("throw velocity has zero magnitude") {}
};

RotationMatrix rot_x(double gamma);
RotationMatrix rot_y(double beta);
RotationMatrix rot_z(double alpha);

/// Rz(alpha) * Ry(beta) * Rx(gamma), evaluated from the closed-form expansion.
RotationMatrix compose_rotation(const EulerAngles& angles);

Transform pose_to_transform(const DevicePose& pose);

Vec3 local_to_global(const Transform& t, const Vec3& p_local);
Vec3 global_to_local(const Transform& t, const Vec3& p_global);

/// Expresses a global point in another device's frame. The result may lie
/// far outside that device's screen.
Vec3 project_to_device(const Transform& t_other, const Vec3& p_global);

/// Screen pixel <-> device-local millimetres. Local origin is the screen
/// centre, X to the right, Y to the top of the screen, Z out of the glass.
Vec3 px_to_local_mm(const ScreenSpec& screen, Vec2 p);
Vec2 local_mm_to_px(const ScreenSpec& screen, const Vec3& p);

/// Global table-plane heading (radians) of an on-screen swipe velocity.
double throw_direction(const DevicePose& pose, Vec2 v_local_px_s, const ScreenSpec& screen);

/// Picks the device whose bearing from the source, measured relative to
/// `theta`, has the smallest magnitude strictly below pi/2.
std::optional<DeviceId> select_throw_target(const DevicePose& source, std::span<const DevicePose> others,
                                            double theta);

}  // namespace mosaic
