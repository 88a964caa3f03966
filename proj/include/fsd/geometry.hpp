#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsd/errors.hpp"
#include "fsd/keyval.hpp"
#include "fsd/linalg.hpp"

namespace fsd {

/// 3D point in meters. Camera frame convention: z forward, x right, y down.
using Point3 = Vec3;

/// Proper rigid transform p -> R*p + t. The rotation is checked to be
/// orthonormal with determinant +1 at construction (tolerance 1e-9).
class RigidTransform {
  public:
    static constexpr double kOrthoTol = 1e-9;

    RigidTransform() = default;

    RigidTransform(const Mat3& rotation, const Vec3& translation)
        : rotation_(rotation), translation_(translation) {
        const Mat3 rtr = rotation_.transposed() * rotation_;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(rtr(i, j) - want) > kOrthoTol)
                    throw std::invalid_argument("RigidTransform: rotation is not orthonormal");
            }
        if (std::abs(rotation_.determinant() - 1.0) > kOrthoTol)
            throw std::invalid_argument("RigidTransform: rotation determinant is not +1");
        if (!translation_.finite())
            throw std::invalid_argument("RigidTransform: non-finite translation");
    }

    static RigidTransform identity() { return RigidTransform{}; }

    static RigidTransform translation_only(const Vec3& t) {
        return RigidTransform(Mat3::identity(), t);
    }

    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }

    Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

    /// Composition: (a * b).apply(p) == a.apply(b.apply(p)).
    RigidTransform operator*(const RigidTransform& o) const {
        RigidTransform r;
        r.rotation_ = rotation_ * o.rotation_;
        r.translation_ = rotation_ * o.translation_ + translation_;
        return r;
    }

    RigidTransform inverse() const {
        RigidTransform r;
        r.rotation_ = rotation_.transposed();
        r.translation_ = -(r.rotation_ * translation_);
        return r;
    }

    /// Row-major 4x4 homogeneous matrix [R t; 0 1].
    std::array<double, 16> to_matrix4() const {
        return {rotation_(0, 0), rotation_(0, 1), rotation_(0, 2), translation_.x,
                rotation_(1, 0), rotation_(1, 1), rotation_(1, 2), translation_.y,
                rotation_(2, 0), rotation_(2, 1), rotation_(2, 2), translation_.z,
                0.0,             0.0,             0.0,             1.0};
    }

    static RigidTransform from_matrix4(std::span<const double, 16> m) {
        Mat3 r;
        r.m = {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]};
        if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0)
            throw std::invalid_argument("RigidTransform: bottom row of 4x4 must be 0 0 0 1");
        return RigidTransform(r, {m[3], m[7], m[11]});
    }

  private:
    Mat3 rotation_;
    Vec3 translation_;
};

inline std::vector<Point3> transform_points(const RigidTransform& t,
                                            std::span<const Point3> pts) {
    std::vector<Point3> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(t.apply(p));
    return out;
}

/// Radial fisheye model. The image radius of a ray at incidence angle theta
/// (measured from the optical axis, +z) is
///
///     r(theta) = f * (k1*theta + k2*theta^3 + k3*theta^5 + k4*theta^7)
///
/// which with k1 = 1, k2..k4 = 0 is the equidistant model. theta_max may
/// exceed pi/2, so fields of view beyond 180 degrees are representable.
struct FisheyeIntrinsics {
    double focal_scale = 1.0;  ///< pixels per radian
    double cx = 0.0;           ///< principal point x [px]
    double cy = 0.0;           ///< principal point y [px]
    int width = 0;             ///< image width [px]
    int height = 0;            ///< image height [px]
    std::array<double, 4> k{1.0, 0.0, 0.0, 0.0};  ///< radial polynomial coefficients
    double theta_max = std::numbers::pi / 2;      ///< max field-of-view half-angle [rad]

    /// Image radius in pixels for incidence angle theta.
    double radius_of_theta(double theta) const {
        const double t2 = theta * theta;
        return focal_scale * theta * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3])));
    }

    /// Inverse of radius_of_theta by bisection on [0, theta_max].
    /// Throws std::domain_error for radii outside the invertible range.
    double theta_of_radius(double radius) const {
        if (radius < 0.0 || radius > radius_of_theta(theta_max) + 1e-9)
            throw std::domain_error("FisheyeIntrinsics: pixel radius outside invertible range");
        if (radius == 0.0) return 0.0;
        double lo = 0.0, hi = theta_max;
        while (hi - lo > 1e-12) {
            const double mid = 0.5 * (lo + hi);
            (radius_of_theta(mid) < radius ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    /// True when a real-valued pixel rounds into the pixel grid.
    bool in_bounds(const Vec2& px) const {
        return px.x >= -0.5 && px.x < width - 0.5 && px.y >= -0.5 && px.y < height - 0.5;
    }

    void validate() const {
        if (!(focal_scale > 0.0)) throw ConfigError("fisheye: focal_scale must be > 0");
        if (width <= 0 || height <= 0) throw ConfigError("fisheye: image_size must be positive");
        if (!(theta_max > 0.0) || theta_max > std::numbers::pi + 1e-12)
            throw ConfigError("fisheye: theta_max must lie in (0, pi]");
        // r(theta) must be strictly increasing over the usable range.
        constexpr int kSamples = 2048;
        double prev = 0.0;
        for (int i = 1; i <= kSamples; ++i) {
            const double theta = theta_max * i / kSamples;
            const double r = radius_of_theta(theta);
            if (!(r > prev))
                throw ConfigError("fisheye: r(theta) is not strictly increasing on [0, theta_max]");
            prev = r;
        }
    }
};

/// Fisheye projection result: real-valued pixel plus Euclidean range.
struct PixelRange {
    Vec2 pixel;
    double range = 0.0;
};

/// Projects a camera-frame point. Returns nullopt when the ray falls outside
/// theta_max or the pixel lands outside the image. Depth is Euclidean range,
/// not z, so rays beyond 90 degrees incidence stay meaningful.
inline std::optional<PixelRange> project_fisheye(const Point3& p, const FisheyeIntrinsics& k) {
    const double range = p.norm();
    if (!(range > 0.0)) throw std::invalid_argument("project_fisheye: zero-norm point");
    const double rxy = std::hypot(p.x, p.y);
    const double theta = std::atan2(rxy, p.z);
    if (theta > k.theta_max) return std::nullopt;
    const double r = k.radius_of_theta(theta);
    const double phi = std::atan2(p.y, p.x);
    const Vec2 px{k.cx + r * std::cos(phi), k.cy + r * std::sin(phi)};
    if (!k.in_bounds(px)) return std::nullopt;
    return PixelRange{px, range};
}

/// Inverse of project_fisheye for in-view pixels.
inline Point3 unproject_fisheye(const Vec2& pixel, double range, const FisheyeIntrinsics& k) {
    if (!(range > 0.0)) throw std::invalid_argument("unproject_fisheye: range must be > 0");
    const double dx = pixel.x - k.cx;
    const double dy = pixel.y - k.cy;
    const double r = std::hypot(dx, dy);
    const double theta = k.theta_of_radius(r);
    const double phi = std::atan2(dy, dx);
    const double s = std::sin(theta);
    return Point3{s * std::cos(phi), s * std::sin(phi), std::cos(theta)} * range;
}

/// Nearest integer grid pixel for a real-valued image coordinate.
struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

inline PixelCoord to_grid(const Vec2& px) {
    return {static_cast<int>(std::floor(px.x + 0.5)), static_cast<int>(std::floor(px.y + 0.5))};
}

/// Sensor calibration: fisheye intrinsics plus the camera-from-lidar extrinsic.
struct CameraCalibration {
    FisheyeIntrinsics intrinsics;
    RigidTransform camera_from_lidar;
};

/// Calibration file keys:
///   focal_scale <px_per_rad>
///   principal_point <cx> <cy>
///   image_size <width> <height>
///   poly_coeffs <k1> <k2> <k3> <k4>
///   theta_max <rad>
///   extrinsic <16 numbers, row-major 4x4 camera-from-lidar>
inline CameraCalibration parse_calibration(const KeyValueFile& kv) {
    CameraCalibration cal;
    auto& in = cal.intrinsics;
    in.focal_scale = kv.get_double("focal_scale");
    const auto pp = kv.get_doubles("principal_point", 2);
    in.cx = pp[0];
    in.cy = pp[1];
    const auto sz = kv.get_doubles("image_size", 2);
    in.width = static_cast<int>(sz[0]);
    in.height = static_cast<int>(sz[1]);
    const auto kc = kv.get_doubles("poly_coeffs", 4);
    in.k = {kc[0], kc[1], kc[2], kc[3]};
    in.theta_max = kv.get_double("theta_max");
    in.validate();
    const auto ext = kv.get_doubles("extrinsic", 16);
    try {
        cal.camera_from_lidar = RigidTransform::from_matrix4(std::span<const double, 16>(ext));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(kv.origin() + ": key 'extrinsic': " + e.what());
    }
    return cal;
}

inline CameraCalibration load_calibration(const std::string& path) {
    return parse_calibration(KeyValueFile::load(path));
}

}  // namespace fsd
