#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsd/errors.hpp"
#include "fsd/geometry.hpp"

namespace fsd {

/// Distance-layer configuration for the occlusion filter. Each projected
/// point is assigned to the layer whose distance is nearest to its range;
/// a point is dropped when a strictly nearer layer's dilated footprint
/// covers its pixel and the point lies more than `margin` meters behind
/// that layer.
struct LayerConfig {
    std::vector<double> distances;  ///< layer distances [m], strictly increasing
    int dilation_radius = 2;        ///< square structuring element of side 2r+1 [px]
    double margin = 0.5;            ///< occlusion margin [m]

    void validate() const {
        if (distances.empty()) throw ConfigError("layers: need at least one layer distance");
        for (size_t i = 0; i < distances.size(); ++i) {
            if (!(distances[i] > 0.0)) throw ConfigError("layers: distances must be positive");
            if (i > 0 && !(distances[i] > distances[i - 1]))
                throw ConfigError("layers: distances must be strictly increasing");
        }
        if (dilation_radius < 0) throw ConfigError("layers: dilation_radius must be >= 0");
        if (margin < 0.0) throw ConfigError("layers: margin must be >= 0");
    }

    /// Logarithmically spaced layers between near and far (inclusive).
    static LayerConfig log_spaced(int count, double near, double far, int radius = 2,
                                  double margin = 0.5) {
        if (count < 1 || !(near > 0.0) || !(far > near))
            throw ConfigError("layers: log_spaced needs count >= 1 and 0 < near < far");
        LayerConfig cfg;
        cfg.dilation_radius = radius;
        cfg.margin = margin;
        cfg.distances.resize(static_cast<size_t>(count));
        if (count == 1) {
            cfg.distances[0] = near;
            return cfg;
        }
        const double lognear = std::log(near), logfar = std::log(far);
        for (int i = 0; i < count; ++i)
            cfg.distances[static_cast<size_t>(i)] =
                std::exp(lognear + (logfar - lognear) * i / (count - 1));
        return cfg;
    }

    static LayerConfig defaults() { return log_spaced(12, 1.0, 60.0, 2, 0.5); }

    /// Index of the layer nearest in distance to `range`; ties go to the
    /// nearer layer.
    int assign_layer(double range) const {
        const auto it = std::lower_bound(distances.begin(), distances.end(), range);
        if (it == distances.begin()) return 0;
        if (it == distances.end()) return static_cast<int>(distances.size()) - 1;
        const auto idx = static_cast<size_t>(it - distances.begin());
        const double d_hi = *it, d_lo = distances[idx - 1];
        return (range - d_lo <= d_hi - range) ? static_cast<int>(idx - 1) : static_cast<int>(idx);
    }
};

/// A lidar point after fisheye projection: integer grid pixel, Euclidean
/// range, and the distance layer it was assigned to.
struct ProjectedPoint {
    Point3 source;     ///< camera-frame source point
    PixelCoord pixel;  ///< integer grid coordinate
    double range = 0.0;
    int layer = 0;
};

/// Binary per-pixel occupancy at image resolution.
class OccupancyGrid {
  public:
    OccupancyGrid() = default;
    OccupancyGrid(int width, int height)
        : width_(width), height_(height),
          bits_(static_cast<size_t>(width) * static_cast<size_t>(height), 0) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool in_bounds(PixelCoord p) const {
        return p.x >= 0 && p.x < width_ && p.y >= 0 && p.y < height_;
    }
    bool get(PixelCoord p) const { return bits_[index(p)] != 0; }
    void set(PixelCoord p) { bits_[index(p)] = 1; }
    size_t count() const {
        return static_cast<size_t>(std::count(bits_.begin(), bits_.end(), uint8_t{1}));
    }
    const std::vector<uint8_t>& raw() const { return bits_; }

  private:
    size_t index(PixelCoord p) const {
        return static_cast<size_t>(p.y) * static_cast<size_t>(width_) + static_cast<size_t>(p.x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<uint8_t> bits_;

    friend OccupancyGrid dilate_layer(const OccupancyGrid&, int);
};

/// Morphological dilation with a square structuring element: an output pixel
/// is set iff some input pixel is set within Chebyshev distance <= radius.
/// Radius 0 is the identity. Runs as two separable 1D max passes.
inline OccupancyGrid dilate_layer(const OccupancyGrid& grid, int radius) {
    if (radius < 0) throw std::invalid_argument("dilate_layer: radius must be >= 0");
    if (radius == 0 || grid.width() == 0) return grid;
    const int w = grid.width(), h = grid.height();
    OccupancyGrid tmp(w, h);
    for (int y = 0; y < h; ++y) {
        const uint8_t* row = grid.bits_.data() + static_cast<size_t>(y) * w;
        uint8_t* out = tmp.bits_.data() + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            const int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
            uint8_t v = 0;
            for (int i = lo; i <= hi && !v; ++i) v = row[i];
            out[x] = v;
        }
    }
    OccupancyGrid out(w, h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            const int lo = std::max(0, y - radius), hi = std::min(h - 1, y + radius);
            uint8_t v = 0;
            for (int i = lo; i <= hi && !v; ++i) v = tmp.bits_[static_cast<size_t>(i) * w + x];
            out.bits_[static_cast<size_t>(y) * w + x] = v;
        }
    }
    return out;
}

/// Raw and dilated per-layer occupancy over the camera image.
struct LayerStack {
    LayerConfig config;
    int width = 0;
    int height = 0;
    std::vector<OccupancyGrid> raw;
    std::vector<OccupancyGrid> dilated;
};

inline LayerStack build_layer_stack(std::span<const ProjectedPoint> points,
                                    const LayerConfig& cfg, int width, int height) {
    cfg.validate();
    LayerStack stack;
    stack.config = cfg;
    stack.width = width;
    stack.height = height;
    stack.raw.assign(cfg.distances.size(), OccupancyGrid(width, height));
    for (const auto& p : points) {
        if (!stack.raw[0].in_bounds(p.pixel))
            throw std::invalid_argument("build_layer_stack: pixel out of bounds (" +
                                        std::to_string(p.pixel.x) + ", " +
                                        std::to_string(p.pixel.y) + ")");
        const auto layer = static_cast<size_t>(cfg.assign_layer(p.range));
        stack.raw[layer].set(p.pixel);
    }
    stack.dilated.reserve(stack.raw.size());
    for (const auto& g : stack.raw) stack.dilated.push_back(dilate_layer(g, cfg.dilation_radius));
    return stack;
}

/// Occlusion filter output: surviving points in input order, plus a mask
/// aligned with the input marking the removed ones.
struct FilterResult {
    std::vector<ProjectedPoint> kept;
    std::vector<bool> removed;
};

/// Removes point p (assigned layer k) iff some strictly nearer layer i < k
/// has dilated occupancy at p's pixel and p.range exceeds that layer's
/// distance by more than the margin. Points in the first layer always
/// survive, and a layer can never occlude its own points.
inline FilterResult filter_occluded(std::span<const ProjectedPoint> points,
                                    const LayerStack& stack) {
    FilterResult result;
    result.removed.assign(points.size(), false);
    result.kept.reserve(points.size());
    const auto& dist = stack.config.distances;
    for (size_t pi = 0; pi < points.size(); ++pi) {
        const auto& p = points[pi];
        const int k = stack.config.assign_layer(p.range);
        bool occluded = false;
        for (int i = 0; i < k && !occluded; ++i) {
            if (p.range - dist[static_cast<size_t>(i)] <= stack.config.margin) continue;
            if (stack.dilated[static_cast<size_t>(i)].get(p.pixel)) occluded = true;
        }
        result.removed[pi] = occluded;
        if (!occluded) result.kept.push_back(p);
    }
    return result;
}

/// Projects camera-frame points through the fisheye model and buckets the
/// in-view ones into distance layers; out-of-view points are dropped.
inline std::vector<ProjectedPoint> make_projected_points(std::span<const Point3> camera_pts,
                                                         const FisheyeIntrinsics& intr,
                                                         const LayerConfig& cfg) {
    std::vector<ProjectedPoint> out;
    out.reserve(camera_pts.size());
    for (const auto& p : camera_pts) {
        const auto proj = project_fisheye(p, intr);
        if (!proj) continue;
        ProjectedPoint pp;
        pp.source = p;
        pp.pixel = to_grid(proj->pixel);
        pp.range = proj->range;
        pp.layer = cfg.assign_layer(proj->range);
        out.push_back(pp);
    }
    return out;
}

}  // namespace fsd
