#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsd/depthmap.hpp"
#include "fsd/errors.hpp"
#include "fsd/geometry.hpp"
#include "fsd/keyval.hpp"
#include "fsd/metrics.hpp"
#include "fsd/nnkit.hpp"
#include "fsd/occlusion.hpp"
#include "fsd/scansim.hpp"
#include "fsd/sivloss.hpp"

namespace fsd {

/// Everything the pipeline driver needs, read from one key-value config file.
/// Paths are resolved relative to the config file's directory.
struct PipelineConfig {
    std::string calibration_path;
    std::string scene_path;
    std::string out_dir = "out";
    uint64_t seed = 0;

    LidarConfig lidar;
    LayerConfig layers = LayerConfig::defaults();

    int roi_width = 1100;
    int roi_height = 330;
    bool roi_auto = true;
    CropRegion roi_fixed;

    int downsample_factor = 2;
    int target_width = 576;
    int target_height = 172;

    double pgm_scale = 1.0 / 256.0;
    CapPolicy cap;
    AdamConfig adam;
    long train_steps = 2000;

    CameraCalibration calibration;  ///< loaded from calibration_path
    Scene scene;                    ///< loaded from scene_path

    /// Camera pose in the world frame, derived from the lidar mounting pose
    /// and the camera-from-lidar extrinsic.
    RigidTransform camera_pose() const {
        return lidar.pose * calibration.camera_from_lidar.inverse();
    }
};

inline PipelineConfig load_pipeline_config(const std::string& path) {
    const auto kv = KeyValueFile::load(path);
    const auto dir = std::filesystem::path(path).parent_path();
    const auto resolve = [&](const std::string& p) {
        return std::filesystem::path(p).is_absolute() ? p : (dir / p).string();
    };
    // Re-anchor section validation errors to this config file.
    const auto check = [&](const auto& section) {
        try {
            section.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(kv.origin() + ": " + e.what());
        }
    };

    PipelineConfig cfg;
    cfg.calibration_path = resolve(kv.get_string("calibration"));
    cfg.scene_path = resolve(kv.get_string("scene"));
    cfg.out_dir = kv.get_string_or("out", cfg.out_dir);
    cfg.seed = static_cast<uint64_t>(kv.get_long_or("seed", 0));

    cfg.lidar.beam_count = static_cast<int>(kv.get_long_or("lidar_beams", 64));
    cfg.lidar.vertical_fov_deg = kv.get_double_or("lidar_vfov_deg", 26.8);
    cfg.lidar.spin_rate_hz = kv.get_double_or("lidar_spin_hz", 10.0);
    cfg.lidar.azimuth_step_deg = kv.get_double_or("lidar_azimuth_step_deg", 0.2);
    cfg.lidar.azimuth_start_deg = kv.get_double_or("lidar_azimuth_start_deg", 0.0);
    cfg.lidar.azimuth_span_deg = kv.get_double_or("lidar_azimuth_span_deg", 360.0);
    cfg.lidar.max_range = kv.get_double_or("lidar_max_range", 120.0);
    if (kv.has("lidar_pose")) {
        const auto m = kv.get_doubles("lidar_pose", 16);
        try {
            cfg.lidar.pose = RigidTransform::from_matrix4(std::span<const double, 16>(m));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(kv.origin() + ": key 'lidar_pose': " + e.what());
        }
    }
    check(cfg.lidar);

    const int layer_count = static_cast<int>(kv.get_long_or("layer_count", 12));
    const double layer_near = kv.get_double_or("layer_near", 1.0);
    const double layer_far = kv.get_double_or("layer_far", 60.0);
    const int dilation = static_cast<int>(kv.get_long_or("dilation_radius", 2));
    const double margin = kv.get_double_or("occlusion_margin", 0.5);
    try {
        cfg.layers = LayerConfig::log_spaced(layer_count, layer_near, layer_far, dilation, margin);
        cfg.layers.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(kv.origin() + ": " + e.what());
    }

    cfg.roi_width = static_cast<int>(kv.get_long_or("roi_width", 1100));
    cfg.roi_height = static_cast<int>(kv.get_long_or("roi_height", 330));
    cfg.roi_auto = kv.get_long_or("roi_auto", 1) != 0;
    if (!cfg.roi_auto) {
        cfg.roi_fixed = {static_cast<int>(kv.get_long("roi_x")),
                         static_cast<int>(kv.get_long("roi_y")), cfg.roi_width, cfg.roi_height};
    }

    cfg.downsample_factor = static_cast<int>(kv.get_long_or("downsample_factor", 2));
    cfg.target_width = static_cast<int>(kv.get_long_or("target_width", 576));
    cfg.target_height = static_cast<int>(kv.get_long_or("target_height", 172));
    if (cfg.downsample_factor < 1)
        throw ConfigError(kv.origin() + ": key 'downsample_factor' must be >= 1");

    cfg.pgm_scale = kv.get_double_or("pgm_scale", 1.0 / 256.0);
    if (!(cfg.pgm_scale > 0.0)) throw ConfigError(kv.origin() + ": key 'pgm_scale' must be > 0");

    cfg.cap.min_cap = kv.get_double_or("cap_min", 0.0);
    cfg.cap.max_cap = kv.get_double_or("cap_max", 50.0);
    cfg.cap.log_eps = kv.get_double_or("cap_log_eps", 1e-3);
    check(cfg.cap);

    cfg.adam.beta1 = kv.get_double_or("adam_beta1", 0.9);
    cfg.adam.beta2 = kv.get_double_or("adam_beta2", 0.999);
    cfg.adam.eps = kv.get_double_or("adam_eps", 1e-8);
    cfg.adam.base_lr = kv.get_double_or("adam_lr", 1e-4);
    cfg.adam.decay_interval = kv.get_long_or("adam_decay_interval", 7500);
    cfg.adam.decay_base = kv.get_double_or("adam_decay_base", 0.95);
    cfg.adam.batch_size = static_cast<int>(kv.get_long_or("adam_batch_size", 20));
    check(cfg.adam);
    cfg.train_steps = kv.get_long_or("train_steps", 2000);

    cfg.calibration = load_calibration(cfg.calibration_path);
    cfg.scene = load_scene(cfg.scene_path);
    return cfg;
}

// ---------------------------------------------------------------------------
// Step functions shared by the CLI and the tests. Each returns its in-memory
// result and optionally writes the corresponding artifact files.

/// Simulated scan in the lidar frame at time t.
inline PointCloudFrame pipeline_simulate(const PipelineConfig& cfg, double t = 0.0) {
    return simulate_scan(cfg.scene, cfg.lidar, t);
}

/// Lidar-frame returns -> camera frame -> fisheye projection -> layer
/// assignment. Out-of-view points are dropped.
inline std::vector<ProjectedPoint> pipeline_project(const PipelineConfig& cfg,
                                                    const PointCloudFrame& frame) {
    std::vector<Point3> camera_pts;
    camera_pts.reserve(frame.points.size());
    for (const auto& r : frame.points)
        camera_pts.push_back(cfg.calibration.camera_from_lidar.apply(r.point));
    return make_projected_points(camera_pts, cfg.calibration.intrinsics, cfg.layers);
}

inline FilterResult pipeline_occlude(const PipelineConfig& cfg,
                                     std::span<const ProjectedPoint> points) {
    const auto stack = build_layer_stack(points, cfg.layers, cfg.calibration.intrinsics.width,
                                         cfg.calibration.intrinsics.height);
    return filter_occluded(points, stack);
}

/// Raster -> crop -> downsample, per the configured dimensions.
struct DepthMapBundle {
    SparseDepthMap full;     ///< raster at sensor resolution
    SparseDepthMap cropped;  ///< after the ROI crop
    SparseDepthMap final;    ///< after downsampling to the target size
    CropRegion roi;
};

inline DepthMapBundle pipeline_depthmap(const PipelineConfig& cfg,
                                        std::span<const ProjectedPoint> points) {
    DepthMapBundle bundle;
    bundle.full = rasterize(points, cfg.calibration.intrinsics.width,
                            cfg.calibration.intrinsics.height);
    bundle.roi = cfg.roi_auto
                     ? auto_roi(std::span<const SparseDepthMap>(&bundle.full, 1), cfg.roi_width,
                                cfg.roi_height)
                     : cfg.roi_fixed;
    bundle.cropped = crop(bundle.full, bundle.roi);
    bundle.final =
        downsample(bundle.cropped, cfg.downsample_factor, cfg.target_width, cfg.target_height);
    return bundle;
}

/// Full simulate -> project -> occlusion-filter -> depth-map chain for one
/// frame. Everything is deterministic in (config, t).
struct FrameArtifacts {
    PointCloudFrame frame;
    std::vector<ProjectedPoint> projected;
    FilterResult filtered;
    DepthMapBundle maps;
};

inline FrameArtifacts pipeline_run_frame(const PipelineConfig& cfg, double t = 0.0) {
    FrameArtifacts art;
    art.frame = pipeline_simulate(cfg, t);
    art.projected = pipeline_project(cfg, art.frame);
    art.filtered = pipeline_occlude(cfg, art.projected);
    art.maps = pipeline_depthmap(cfg, art.filtered.kept);
    return art;
}

// ---------------------------------------------------------------------------
// Projected-point CSV, the interchange format between `project` and `occlude`.

inline void save_projected_csv(std::span<const ProjectedPoint> points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "grid_x,grid_y,range,layer,cam_x,cam_y,cam_z\n";
    out.precision(17);
    for (const auto& p : points)
        out << p.pixel.x << ',' << p.pixel.y << ',' << p.range << ',' << p.layer << ','
            << p.source.x << ',' << p.source.y << ',' << p.source.z << '\n';
}

inline std::vector<ProjectedPoint> load_projected_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty projected-point file: " + path);
    std::vector<ProjectedPoint> points;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        ProjectedPoint p;
        if (!(ls >> p.pixel.x >> p.pixel.y >> p.range >> p.layer >> p.source.x >> p.source.y >>
              p.source.z))
            throw IoError("malformed projected-point row in " + path + ": " + line);
        points.push_back(p);
    }
    return points;
}

/// Per-layer occupancy debug dump as binary 8-bit PGMs (0 empty, 255 set).
inline void save_layer_debug_pgms(const LayerStack& stack, const std::string& dir,
                                  const std::string& prefix) {
    for (size_t li = 0; li < stack.raw.size(); ++li) {
        for (const bool dilated : {false, true}) {
            const auto& grid = dilated ? stack.dilated[li] : stack.raw[li];
            std::ostringstream name;
            name << dir << '/' << prefix << "_layer" << li << (dilated ? "_dilated" : "_raw")
                 << ".pgm";
            std::ofstream out(name.str(), std::ios::binary);
            if (!out) throw IoError("cannot write " + name.str());
            out << "P5\n" << grid.width() << ' ' << grid.height() << "\n255\n";
            for (uint8_t b : grid.raw()) out.put(b ? '\xff' : '\0');
        }
    }
}

}  // namespace fsd
