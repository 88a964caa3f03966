#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fsd/errors.hpp"
#include "fsd/geometry.hpp"
#include "fsd/occlusion.hpp"

namespace fsd {

/// Depth grid with an explicit valid-pixel mask. Valid pixels hold positive
/// finite Euclidean range [m]; invalid pixels carry no depth semantics.
struct SparseDepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> depth;
    std::vector<uint8_t> valid;

    SparseDepthMap() = default;
    SparseDepthMap(int w, int h)
        : width(w), height(h),
          depth(static_cast<size_t>(w) * static_cast<size_t>(h), 0.0),
          valid(static_cast<size_t>(w) * static_cast<size_t>(h), 0) {}

    size_t index(int x, int y) const {
        return static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x);
    }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
    double at(int x, int y) const { return depth[index(x, y)]; }
    void set(int x, int y, double d) {
        depth[index(x, y)] = d;
        valid[index(x, y)] = 1;
    }
    void clear(int x, int y) {
        depth[index(x, y)] = 0.0;
        valid[index(x, y)] = 0;
    }
    size_t valid_count() const {
        return static_cast<size_t>(std::count(valid.begin(), valid.end(), uint8_t{1}));
    }
};

/// Rectangular region fully contained in a source image.
struct CropRegion {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

/// (pixel, range) sample feeding the rasterizer.
struct DepthSample {
    PixelCoord pixel;
    double range = 0.0;
};

/// Nearest-wins z-buffer: each touched pixel keeps the minimum range of the
/// points landing on it; untouched pixels stay invalid.
inline SparseDepthMap rasterize(std::span<const DepthSample> samples, int width, int height) {
    SparseDepthMap map(width, height);
    for (const auto& s : samples) {
        if (!map.in_bounds(s.pixel.x, s.pixel.y))
            throw std::invalid_argument("rasterize: pixel out of bounds");
        if (!(s.range > 0.0)) throw std::invalid_argument("rasterize: range must be > 0");
        const size_t i = map.index(s.pixel.x, s.pixel.y);
        if (!map.valid[i] || s.range < map.depth[i]) {
            map.depth[i] = s.range;
            map.valid[i] = 1;
        }
    }
    return map;
}

inline SparseDepthMap rasterize(std::span<const ProjectedPoint> points, int width, int height) {
    std::vector<DepthSample> samples;
    samples.reserve(points.size());
    for (const auto& p : points) samples.push_back({p.pixel, p.range});
    return rasterize(std::span<const DepthSample>(samples), width, height);
}

/// Region of the given size with the highest total valid-pixel count summed
/// over all input maps. Ties resolve to the smallest y, then smallest x.
inline CropRegion auto_roi(std::span<const SparseDepthMap> maps, int roi_width, int roi_height) {
    if (maps.empty()) throw std::invalid_argument("auto_roi: no input maps");
    const int w = maps[0].width, h = maps[0].height;
    for (const auto& m : maps)
        if (m.width != w || m.height != h)
            throw std::invalid_argument("auto_roi: maps must share dimensions");
    if (roi_width < 1 || roi_height < 1 || roi_width > w || roi_height > h)
        throw std::invalid_argument("auto_roi: roi size must fit inside the maps");

    // Summed-area table over the stacked valid masks.
    std::vector<long> sat(static_cast<size_t>(w + 1) * static_cast<size_t>(h + 1), 0);
    const auto at = [&](int x, int y) -> long& {
        return sat[static_cast<size_t>(y) * static_cast<size_t>(w + 1) + static_cast<size_t>(x)];
    };
    for (int y = 1; y <= h; ++y)
        for (int x = 1; x <= w; ++x) {
            long v = 0;
            for (const auto& m : maps) v += m.valid[m.index(x - 1, y - 1)];
            at(x, y) = v + at(x - 1, y) + at(x, y - 1) - at(x - 1, y - 1);
        }

    CropRegion best{0, 0, roi_width, roi_height};
    long best_count = -1;
    for (int y = 0; y + roi_height <= h; ++y)
        for (int x = 0; x + roi_width <= w; ++x) {
            const long c = at(x + roi_width, y + roi_height) - at(x, y + roi_height) -
                           at(x + roi_width, y) + at(x, y);
            if (c > best_count) {
                best_count = c;
                best.x = x;
                best.y = y;
            }
        }
    return best;
}

inline SparseDepthMap crop(const SparseDepthMap& map, const CropRegion& roi) {
    if (roi.width < 1 || roi.height < 1 || roi.x < 0 || roi.y < 0 ||
        roi.x + roi.width > map.width || roi.y + roi.height > map.height)
        throw std::invalid_argument("crop: roi out of bounds");
    SparseDepthMap out(roi.width, roi.height);
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x) {
            const size_t src = map.index(roi.x + x, roi.y + y);
            const size_t dst = out.index(x, y);
            out.depth[dst] = map.depth[src];
            out.valid[dst] = map.valid[src];
        }
    return out;
}

/// Block pooling by `factor`: an output pixel is valid iff its factor x factor
/// source block holds at least one valid pixel, and takes the block's minimum
/// valid depth. Without a target size the output is floor(dim/factor); with
/// one, the source is first padded right/bottom with invalid pixels so the
/// output dimensions match the target exactly.
inline SparseDepthMap downsample(const SparseDepthMap& map, int factor,
                                 std::optional<int> target_width = std::nullopt,
                                 std::optional<int> target_height = std::nullopt) {
    if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
    int out_w = map.width / factor;
    int out_h = map.height / factor;
    if (target_width) {
        if (*target_width * factor < map.width)
            throw std::invalid_argument("downsample: target width too small to cover the source");
        out_w = *target_width;
    }
    if (target_height) {
        if (*target_height * factor < map.height)
            throw std::invalid_argument("downsample: target height too small to cover the source");
        out_h = *target_height;
    }
    SparseDepthMap out(out_w, out_h);
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
            double best = std::numeric_limits<double>::infinity();
            bool any = false;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    const int sx = ox * factor + dx, sy = oy * factor + dy;
                    if (!map.in_bounds(sx, sy)) continue;  // padded region
                    if (!map.is_valid(sx, sy)) continue;
                    any = true;
                    best = std::min(best, map.at(sx, sy));
                }
            if (any) out.set(ox, oy, best);
        }
    return out;
}

// ---------------------------------------------------------------------------
// 16-bit PGM storage. Big-endian P5 with maxval 65535; stored value is
// round(depth / scale) with 0 reserved for invalid pixels, so the mask
// survives a round-trip exactly and depth survives within scale/2.

inline std::vector<uint8_t> encode_pgm16(const SparseDepthMap& map, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("encode_pgm16: scale must be > 0");
    char header[96];
    const int n = std::snprintf(header, sizeof header, "P5\n# scale %.17g\n%d %d\n65535\n", scale,
                                map.width, map.height);
    std::vector<uint8_t> bytes(header, header + n);
    bytes.reserve(bytes.size() + map.depth.size() * 2);
    for (size_t i = 0; i < map.depth.size(); ++i) {
        uint16_t stored = 0;
        if (map.valid[i]) {
            const double q = std::round(map.depth[i] / scale);
            if (q > 65535.0)
                throw std::invalid_argument("encode_pgm16: depth exceeds 65535 * scale");
            stored = static_cast<uint16_t>(std::max(1.0, q));
        }
        bytes.push_back(static_cast<uint8_t>(stored >> 8));
        bytes.push_back(static_cast<uint8_t>(stored & 0xFF));
    }
    return bytes;
}

struct DecodedDepthMap {
    SparseDepthMap map;
    double scale = 0.0;
};

inline DecodedDepthMap decode_pgm16(std::span<const uint8_t> bytes) {
    size_t pos = 0;
    const auto peek = [&]() -> int { return pos < bytes.size() ? bytes[pos] : -1; };
    const auto is_space = [](int c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };

    double scale = 0.0;
    bool have_scale = false;
    // Tokenizer over the text header; '#' comments may carry the scale.
    const auto next_token = [&]() -> std::string {
        for (;;) {
            while (is_space(peek())) ++pos;
            if (peek() == '#') {
                std::string comment;
                while (pos < bytes.size() && bytes[pos] != '\n')
                    comment.push_back(static_cast<char>(bytes[pos++]));
                std::istringstream cs(comment.substr(1));
                std::string word;
                if (cs >> word && word == "scale" && (cs >> scale)) have_scale = true;
                continue;
            }
            break;
        }
        std::string tok;
        while (pos < bytes.size() && !is_space(peek()) && peek() != '#')
            tok.push_back(static_cast<char>(bytes[pos++]));
        return tok;
    };

    if (next_token() != "P5") throw IoError("decode_pgm16: not a P5 PGM");
    DecodedDepthMap out;
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw IoError("decode_pgm16: malformed header");
    }
    if (w <= 0 || h <= 0) throw IoError("decode_pgm16: bad dimensions");
    if (maxval != 65535) throw IoError("decode_pgm16: expected 16-bit maxval 65535");
    if (!have_scale) throw IoError("decode_pgm16: missing '# scale <m>' header comment");
    if (!(scale > 0.0)) throw IoError("decode_pgm16: scale must be > 0");
    ++pos;  // single whitespace byte after maxval

    const size_t count = static_cast<size_t>(w) * static_cast<size_t>(h);
    if (bytes.size() - pos != count * 2) throw IoError("decode_pgm16: truncated pixel data");
    out.scale = scale;
    out.map = SparseDepthMap(w, h);
    for (size_t i = 0; i < count; ++i) {
        const uint16_t stored =
            static_cast<uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
        if (stored != 0) {
            out.map.depth[i] = stored * scale;
            out.map.valid[i] = 1;
        }
    }
    return out;
}

inline void write_pgm16(const SparseDepthMap& map, double scale, const std::string& path) {
    const auto bytes = encode_pgm16(map, scale);
    std::ofstream out(path, std::ios::binary);
    if (!out.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size())))
        throw IoError("cannot write " + path);
}

inline DecodedDepthMap read_pgm16(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return decode_pgm16(bytes);
}

/// CSV export of valid pixels: x,y,depth.
inline void save_depth_csv(const SparseDepthMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "x,y,depth\n";
    out.precision(17);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (map.is_valid(x, y)) out << x << ',' << y << ',' << map.at(x, y) << '\n';
}

/// Provenance sidecar describing how a stored depth map was produced.
struct DepthMapProvenance {
    CropRegion roi;
    int downsample_factor = 1;
    int target_width = 0;
    int target_height = 0;
    double pgm_scale = 0.0;
};

inline void save_sidecar(const DepthMapProvenance& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(17);
    out << "roi " << p.roi.x << ' ' << p.roi.y << ' ' << p.roi.width << ' ' << p.roi.height << '\n'
        << "downsample_factor " << p.downsample_factor << '\n'
        << "target_size " << p.target_width << ' ' << p.target_height << '\n'
        << "pgm_scale " << p.pgm_scale << '\n';
}

}  // namespace fsd
