#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fsd/errors.hpp"
#include "fsd/geometry.hpp"
#include "fsd/keyval.hpp"

namespace fsd {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Axis-aligned box given by center and full side lengths, in meters.
struct Box {
    Vec3 center;
    Vec3 size;
};

struct Sphere {
    Vec3 center;
    double radius = 0.0;
};

/// Analytic world: an optional horizontal ground plane (z = ground_z) plus
/// boxes and spheres. Every primitive has a closed-form ray intersection, so
/// visibility queries are exact rather than sampled.
struct Scene {
    std::optional<double> ground_z;
    std::vector<Box> boxes;
    std::vector<Sphere> spheres;

    void validate() const {
        for (const auto& b : boxes)
            if (!(b.size.x > 0.0 && b.size.y > 0.0 && b.size.z > 0.0))
                throw ConfigError("scene: box sizes must be positive");
        for (const auto& s : spheres)
            if (!(s.radius > 0.0)) throw ConfigError("scene: sphere radius must be positive");
    }
};

/// Spinning-scanner configuration. Beams are spaced evenly over the vertical
/// field of view, symmetric about the horizon; the scanner frame is z-up with
/// azimuth measured from +x toward +y.
struct LidarConfig {
    int beam_count = 64;
    double vertical_fov_deg = 26.8;
    double spin_rate_hz = 10.0;
    double azimuth_step_deg = 0.2;
    double azimuth_start_deg = 0.0;
    double azimuth_span_deg = 360.0;
    double max_range = 120.0;
    RigidTransform pose;  ///< lidar frame -> world frame

    void validate() const {
        if (beam_count < 1) throw ConfigError("lidar: beam_count must be >= 1");
        if (!(vertical_fov_deg > 0.0 && vertical_fov_deg < 90.0))
            throw ConfigError("lidar: vertical_fov_deg must lie in (0, 90)");
        if (!(spin_rate_hz > 0.0)) throw ConfigError("lidar: spin_rate_hz must be > 0");
        if (!(azimuth_step_deg > 0.0)) throw ConfigError("lidar: azimuth_step_deg must be > 0");
        const double density = 360.0 / azimuth_step_deg;
        if (std::abs(density - std::round(density)) > 1e-9)
            throw ConfigError("lidar: azimuth_step_deg must divide 360 evenly");
        if (!(azimuth_span_deg > 0.0 && azimuth_span_deg <= 360.0))
            throw ConfigError("lidar: azimuth_span_deg must lie in (0, 360]");
        if (!(max_range > 0.0)) throw ConfigError("lidar: max_range must be > 0");
    }

    /// Beam elevations in radians, lowest first. A single beam sits on the horizon.
    std::vector<double> beam_elevations() const {
        std::vector<double> elev(static_cast<size_t>(beam_count));
        const double half = 0.5 * vertical_fov_deg * kDegToRad;
        if (beam_count == 1) {
            elev[0] = 0.0;
            return elev;
        }
        const double step = 2.0 * half / (beam_count - 1);
        for (int b = 0; b < beam_count; ++b) elev[static_cast<size_t>(b)] = -half + b * step;
        return elev;
    }

    int azimuth_count() const {
        return static_cast<int>(std::round(azimuth_span_deg / azimuth_step_deg));
    }

    long candidate_ray_count() const { return static_cast<long>(beam_count) * azimuth_count(); }
};

/// One scanner return: point in the lidar frame, Euclidean range, beam row.
struct LidarReturn {
    Point3 point;
    double range = 0.0;
    int beam = 0;
};

/// One full scanner revolution. The timestamp marks the revolution start.
struct PointCloudFrame {
    double timestamp = 0.0;
    std::vector<LidarReturn> points;
};

/// Ordered timestamp sequence for a sensor channel, optionally carrying a
/// payload reference (file name) per frame.
struct FrameStream {
    std::vector<double> timestamps;
    std::vector<std::string> payloads;  ///< empty, or one entry per timestamp
    double nominal_rate_hz = 0.0;

    void validate() const {
        for (size_t i = 1; i < timestamps.size(); ++i)
            if (!(timestamps[i] > timestamps[i - 1]))
                throw ConfigError("frame stream: timestamps must be strictly increasing");
        if (!payloads.empty() && payloads.size() != timestamps.size())
            throw ConfigError("frame stream: payload count must match timestamp count");
    }

    static FrameStream regular(double t0, double rate_hz, size_t count) {
        FrameStream s;
        s.nominal_rate_hz = rate_hz;
        s.timestamps.reserve(count);
        for (size_t i = 0; i < count; ++i) s.timestamps.push_back(t0 + static_cast<double>(i) / rate_hz);
        return s;
    }
};

namespace detail {

inline constexpr double kRayEps = 1e-12;

inline std::optional<double> ray_plane_z(double plane_z, const Vec3& o, const Vec3& d) {
    if (std::abs(d.z) < kRayEps) return std::nullopt;
    const double t = (plane_z - o.z) / d.z;
    if (t <= kRayEps) return std::nullopt;
    return t;
}

inline std::optional<double> ray_box(const Box& b, const Vec3& o, const Vec3& d) {
    const Vec3 lo = b.center - b.size * 0.5;
    const Vec3 hi = b.center + b.size * 0.5;
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    const double obs[3] = {o.x, o.y, o.z};
    const double dir[3] = {d.x, d.y, d.z};
    const double los[3] = {lo.x, lo.y, lo.z};
    const double his[3] = {hi.x, hi.y, hi.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < kRayEps) {
            if (obs[a] < los[a] || obs[a] > his[a]) return std::nullopt;
            continue;
        }
        double t0 = (los[a] - obs[a]) / dir[a];
        double t1 = (his[a] - obs[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return std::nullopt;
    }
    if (tmax <= kRayEps) return std::nullopt;
    return tmin > kRayEps ? tmin : tmax;  // origin inside: first exit
}

inline std::optional<double> ray_sphere(const Sphere& s, const Vec3& o, const Vec3& d) {
    const Vec3 oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.squared_norm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t0 = -b - sq;
    if (t0 > kRayEps) return t0;
    const double t1 = -b + sq;
    if (t1 > kRayEps) return t1;
    return std::nullopt;
}

}  // namespace detail

/// Nearest intersection distance of a unit-direction ray with the scene.
inline std::optional<double> ray_scene_hit(const Scene& scene, const Vec3& origin,
                                           const Vec3& unit_dir) {
    std::optional<double> best;
    auto consider = [&](std::optional<double> t) {
        if (t && (!best || *t < *best)) best = t;
    };
    if (scene.ground_z) consider(detail::ray_plane_z(*scene.ground_z, origin, unit_dir));
    for (const auto& b : scene.boxes) consider(detail::ray_box(b, origin, unit_dir));
    for (const auto& s : scene.spheres) consider(detail::ray_sphere(s, origin, unit_dir));
    return best;
}

/// Casts one ray per (beam, azimuth) cell and keeps the nearest hit within
/// max_range. Points are reported in the lidar frame. Deterministic.
inline PointCloudFrame simulate_scan(const Scene& scene, const LidarConfig& cfg, double t) {
    cfg.validate();
    scene.validate();
    PointCloudFrame frame;
    frame.timestamp = t;
    const Vec3 origin = cfg.pose.translation();
    const Mat3& rot = cfg.pose.rotation();
    const auto elevations = cfg.beam_elevations();
    const int azimuths = cfg.azimuth_count();
    for (int b = 0; b < cfg.beam_count; ++b) {
        const double elev = elevations[static_cast<size_t>(b)];
        const double ce = std::cos(elev), se = std::sin(elev);
        for (int a = 0; a < azimuths; ++a) {
            const double az = (cfg.azimuth_start_deg + a * cfg.azimuth_step_deg) * kDegToRad;
            const Vec3 dir_lidar{ce * std::cos(az), ce * std::sin(az), se};
            const Vec3 dir_world = rot * dir_lidar;
            const auto hit = ray_scene_hit(scene, origin, dir_world);
            if (hit && *hit <= cfg.max_range)
                frame.points.push_back({dir_lidar * *hit, *hit, b});
        }
    }
    return frame;
}

/// Exact line-of-sight test from the camera center to each world point: a
/// point is visible iff no primitive is hit strictly before it (1e-6 m slack,
/// so points lying on a surface count as visible).
inline std::vector<bool> visibility_oracle(const Scene& scene, const RigidTransform& camera_pose,
                                           std::span<const Point3> world_pts) {
    constexpr double kTol = 1e-6;
    const Vec3 center = camera_pose.translation();
    std::vector<bool> visible(world_pts.size(), true);
    for (size_t i = 0; i < world_pts.size(); ++i) {
        const Vec3 delta = world_pts[i] - center;
        const double dist = delta.norm();
        if (dist <= kTol) continue;
        const auto hit = ray_scene_hit(scene, center, delta / dist);
        if (hit && *hit < dist - kTol) visible[i] = false;
    }
    return visible;
}

/// Pairs every camera timestamp with the lidar frame closest in time.
/// Exact ties resolve to the earlier lidar frame.
inline std::vector<std::pair<size_t, size_t>> associate_frames(const FrameStream& lidar,
                                                               const FrameStream& camera) {
    if (lidar.timestamps.empty() || camera.timestamps.empty())
        throw std::invalid_argument("associate_frames: empty stream");
    lidar.validate();
    camera.validate();
    std::vector<std::pair<size_t, size_t>> pairs;
    pairs.reserve(camera.timestamps.size());
    const auto& lt = lidar.timestamps;
    for (size_t ci = 0; ci < camera.timestamps.size(); ++ci) {
        const double t = camera.timestamps[ci];
        const auto it = std::lower_bound(lt.begin(), lt.end(), t);
        size_t best = (it == lt.end()) ? lt.size() - 1 : static_cast<size_t>(it - lt.begin());
        if (best > 0 && std::abs(lt[best - 1] - t) <= std::abs(lt[best] - t)) best -= 1;
        pairs.emplace_back(ci, best);
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// File formats

/// Scene file lines: `ground <z>`, `box <cx> <cy> <cz> <sx> <sy> <sz>`,
/// `sphere <cx> <cy> <cz> <r>`.
inline Scene parse_scene(const KeyValueFile& kv) {
    Scene scene;
    for (const auto& [key, vals] : kv.entries()) {
        auto num = [&](size_t i) { return kv.to_double(key, vals.at(i)); };
        if (key == "ground") {
            if (vals.size() != 1) throw ConfigError(kv.origin() + ": key 'ground' expects 1 value");
            scene.ground_z = num(0);
        } else if (key == "box") {
            if (vals.size() != 6) throw ConfigError(kv.origin() + ": key 'box' expects 6 values");
            scene.boxes.push_back({{num(0), num(1), num(2)}, {num(3), num(4), num(5)}});
        } else if (key == "sphere") {
            if (vals.size() != 4) throw ConfigError(kv.origin() + ": key 'sphere' expects 4 values");
            scene.spheres.push_back({{num(0), num(1), num(2)}, num(3)});
        } else {
            throw ConfigError(kv.origin() + ": unknown scene key '" + key + "'");
        }
    }
    scene.validate();
    return scene;
}

inline Scene load_scene(const std::string& path) { return parse_scene(KeyValueFile::load(path)); }

/// CSV rows: timestamp,x,y,z,range,beam (points in the lidar frame).
inline void save_frame_csv(const PointCloudFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "timestamp,x,y,z,range,beam\n";
    out.precision(17);
    for (const auto& p : frame.points)
        out << frame.timestamp << ',' << p.point.x << ',' << p.point.y << ',' << p.point.z << ','
            << p.range << ',' << p.beam << '\n';
    if (!out) throw IoError("short write: " + path);
}

inline PointCloudFrame load_frame_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    PointCloudFrame frame;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty point cloud file: " + path);
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        LidarReturn r;
        double t = 0.0;
        if (!(ls >> t >> r.point.x >> r.point.y >> r.point.z >> r.range >> r.beam))
            throw IoError("malformed point cloud row in " + path + ": " + line);
        if (first) {
            frame.timestamp = t;
            first = false;
        }
        frame.points.push_back(r);
    }
    return frame;
}

namespace detail {

inline constexpr char kCloudMagic[4] = {'F', 'S', 'P', 'C'};

template <typename T>
void put_le(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

}  // namespace detail

/// Binary equivalent of the CSV: magic "FSPC", u64 point count, f64 frame
/// timestamp, then per point f64 x,y,z,range and u32 beam. Little-endian.
inline void save_frame_bin(const PointCloudFrame& frame, const std::string& path) {
    std::string buf;
    buf.append(detail::kCloudMagic, 4);
    detail::put_le<uint64_t>(buf, frame.points.size());
    detail::put_le<double>(buf, frame.timestamp);
    for (const auto& p : frame.points) {
        detail::put_le<double>(buf, p.point.x);
        detail::put_le<double>(buf, p.point.y);
        detail::put_le<double>(buf, p.point.z);
        detail::put_le<double>(buf, p.range);
        detail::put_le<uint32_t>(buf, static_cast<uint32_t>(p.beam));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size())))
        throw IoError("cannot write " + path);
}

inline PointCloudFrame load_frame_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 20 || std::memcmp(buf.data(), detail::kCloudMagic, 4) != 0)
        throw IoError("bad point cloud header: " + path);
    const uint64_t count = detail::get_le<uint64_t>(buf.data() + 4);
    PointCloudFrame frame;
    frame.timestamp = detail::get_le<double>(buf.data() + 12);
    constexpr size_t kRecord = 4 * sizeof(double) + sizeof(uint32_t);
    if (buf.size() != 20 + count * kRecord) throw IoError("truncated point cloud: " + path);
    frame.points.reserve(count);
    const char* p = buf.data() + 20;
    for (uint64_t i = 0; i < count; ++i, p += kRecord) {
        LidarReturn r;
        r.point.x = detail::get_le<double>(p);
        r.point.y = detail::get_le<double>(p + 8);
        r.point.z = detail::get_le<double>(p + 16);
        r.range = detail::get_le<double>(p + 24);
        r.beam = static_cast<int>(detail::get_le<uint32_t>(p + 32));
        frame.points.push_back(r);
    }
    return frame;
}

/// Stream manifest: one line per frame, "<timestamp> [payload]", strictly
/// increasing timestamps.
inline void save_manifest(const FrameStream& s, const std::string& path) {
    s.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(17);
    for (size_t i = 0; i < s.timestamps.size(); ++i) {
        out << s.timestamps[i];
        if (!s.payloads.empty()) out << ' ' << s.payloads[i];
        out << '\n';
    }
}

inline FrameStream load_manifest(const std::string& path, double nominal_rate_hz = 0.0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    FrameStream s;
    s.nominal_rate_hz = nominal_rate_hz;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        double t = 0.0;
        if (!(ls >> t)) continue;
        s.timestamps.push_back(t);
        std::string payload;
        if (ls >> payload) s.payloads.push_back(payload);
    }
    if (!s.payloads.empty() && s.payloads.size() != s.timestamps.size())
        throw ConfigError("manifest: payload column must be present on every line or none");
    s.validate();
    return s;
}

}  // namespace fsd
