#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "fsd/depthmap.hpp"

using namespace fsd;

namespace {

std::vector<DepthSample> random_samples(std::mt19937_64& rng, int count, int w, int h) {
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
    std::uniform_real_distribution<double> ur(0.2, 90.0);
    std::vector<DepthSample> s;
    for (int i = 0; i < count; ++i) s.push_back({{ux(rng), uy(rng)}, ur(rng)});
    return s;
}

/// Brute-force window-sum oracle for auto_roi.
long window_count(const SparseDepthMap& m, int x0, int y0, int w, int h) {
    long c = 0;
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) c += m.is_valid(x, y) ? 1 : 0;
    return c;
}

}  // namespace

TEST_CASE("nearest range wins on a shared pixel") {
    const std::vector<DepthSample> s{{{4, 2}, 7.0}, {{4, 2}, 3.0}};
    const auto map = rasterize(s, 8, 8);
    CHECK(map.at(4, 2) == 3.0);
    CHECK(map.valid_count() == 1);
}

TEST_CASE("no points gives an all-invalid map") {
    const auto map = rasterize(std::vector<DepthSample>{}, 6, 4);
    CHECK(map.valid_count() == 0);
    CHECK(map.width == 6);
    CHECK(map.height == 4);
}

TEST_CASE("distinct pixels each keep their own range") {
    std::vector<DepthSample> s;
    for (int i = 0; i < 10; ++i) s.push_back({{i, i}, 1.0 + i});
    const auto map = rasterize(s, 10, 10);
    CHECK(map.valid_count() == 10);
    for (int i = 0; i < 10; ++i) CHECK(map.at(i, i) == 1.0 + i);
}

TEST_CASE("rasterize rejects bad input") {
    CHECK_THROWS_AS(rasterize(std::vector<DepthSample>{{{9, 0}, 1.0}}, 8, 8),
                    std::invalid_argument);
    CHECK_THROWS_AS(rasterize(std::vector<DepthSample>{{{0, 0}, 0.0}}, 8, 8),
                    std::invalid_argument);
    CHECK_THROWS_AS(rasterize(std::vector<DepthSample>{{{0, 0}, -1.0}}, 8, 8),
                    std::invalid_argument);
}

TEST_CASE("rasterize is permutation invariant") {
    std::mt19937_64 rng(31);
    auto s = random_samples(rng, 300, 16, 16);
    const auto base = rasterize(s, 16, 16);
    std::shuffle(s.begin(), s.end(), rng);
    const auto shuffled = rasterize(s, 16, 16);
    CHECK(base.depth == shuffled.depth);
    CHECK(base.valid == shuffled.valid);
}

TEST_CASE("auto_roi anchors to the dense corner") {
    SparseDepthMap m(20, 20);
    for (int y = 14; y < 20; ++y)
        for (int x = 15; x < 20; ++x) m.set(x, y, 5.0);
    const auto roi = auto_roi(std::vector<SparseDepthMap>{m}, 5, 6);
    CHECK(roi.x == 15);
    CHECK(roi.y == 14);
    CHECK(window_count(m, roi.x, roi.y, 5, 6) == 30);
}

TEST_CASE("auto_roi ties resolve to the smallest origin") {
    SparseDepthMap m(10, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) m.set(x, y, 1.0);
    const auto roi = auto_roi(std::vector<SparseDepthMap>{m}, 4, 4);
    CHECK(roi.x == 0);
    CHECK(roi.y == 0);
}

TEST_CASE("auto_roi prefers the heavier constructed window") {
    SparseDepthMap m(30, 10);
    // left block: 120 valid pixels; right block: 80
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 12; ++x) m.set(x, y, 2.0);
        for (int x = 20; x < 28; ++x) m.set(x, y, 2.0);
    }
    const auto roi = auto_roi(std::vector<SparseDepthMap>{m}, 12, 10);
    CHECK(window_count(m, roi.x, roi.y, 12, 10) == 120);
    CHECK(roi.x == 0);
}

TEST_CASE("auto_roi against the brute-force oracle on random maps") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const auto samples = random_samples(rng, 120, 24, 18);
        const auto m = rasterize(samples, 24, 18);
        const std::vector<SparseDepthMap> maps{m};
        const auto roi = auto_roi(maps, 7, 5);
        long best = -1;
        int bx = 0, by = 0;
        for (int y = 0; y + 5 <= 18; ++y)
            for (int x = 0; x + 7 <= 24; ++x) {
                const long c = window_count(m, x, y, 7, 5);
                if (c > best) {
                    best = c;
                    bx = x;
                    by = y;
                }
            }
        CHECK(roi.x == bx);
        CHECK(roi.y == by);
        CHECK(window_count(m, roi.x, roi.y, 7, 5) == best);
    }
}

TEST_CASE("auto_roi input validation") {
    CHECK_THROWS_AS(auto_roi(std::vector<SparseDepthMap>{}, 2, 2), std::invalid_argument);
    SparseDepthMap m(4, 4);
    CHECK_THROWS_AS(auto_roi(std::vector<SparseDepthMap>{m}, 5, 2), std::invalid_argument);
}

TEST_CASE("crop copies the exact sub-grid") {
    SparseDepthMap m(1280, 800);
    m.set(100, 200, 12.5);
    m.set(1150, 600, 33.0);
    const auto roi = CropRegion{90, 180, 1100, 330};
    const auto c = crop(m, roi);
    CHECK(c.width == 1100);
    CHECK(c.height == 330);
    CHECK(c.is_valid(10, 20));
    CHECK(c.at(10, 20) == 12.5);
    CHECK(c.valid_count() <= m.valid_count());

    // full-image roi is the identity
    const auto full = crop(m, {0, 0, 1280, 800});
    CHECK(full.depth == m.depth);
    CHECK(full.valid == m.valid);

    CHECK_THROWS_AS(crop(m, {200, 500, 1100, 330}), std::invalid_argument);
}

TEST_CASE("crop of a raster equals rasterizing the pre-filtered points") {
    std::mt19937_64 rng(13);
    const auto samples = random_samples(rng, 500, 40, 30);
    const auto full = rasterize(samples, 40, 30);
    const CropRegion roi{8, 5, 20, 15};
    const auto cropped = crop(full, roi);

    std::vector<DepthSample> inside;
    for (const auto& s : samples)
        if (s.pixel.x >= roi.x && s.pixel.x < roi.x + roi.width && s.pixel.y >= roi.y &&
            s.pixel.y < roi.y + roi.height)
            inside.push_back({{s.pixel.x - roi.x, s.pixel.y - roi.y}, s.range});
    const auto direct = rasterize(inside, roi.width, roi.height);
    CHECK(cropped.depth == direct.depth);
    CHECK(cropped.valid == direct.valid);
}

TEST_CASE("downsample pools the minimum valid depth per block") {
    SparseDepthMap m(2, 2);
    m.set(0, 0, 10.0);
    m.set(1, 1, 12.0);
    const auto d = downsample(m, 2);
    CHECK(d.width == 1);
    CHECK(d.height == 1);
    CHECK(d.at(0, 0) == 10.0);

    SparseDepthMap empty(2, 2);
    const auto e = downsample(empty, 2);
    CHECK(e.valid_count() == 0);
}

TEST_CASE("downsample dims: floor by default, padded to a target on request") {
    SparseDepthMap m(1100, 330);
    m.set(0, 0, 5.0);
    m.set(1099, 329, 9.0);
    const auto floored = downsample(m, 2);
    CHECK(floored.width == 550);
    CHECK(floored.height == 165);

    const auto padded = downsample(m, 2, 576, 172);
    CHECK(padded.width == 576);
    CHECK(padded.height == 172);
    CHECK(padded.at(0, 0) == 5.0);
    CHECK(padded.at(549, 164) == 9.0);
    // the padded band carries no validity
    for (int x = 550; x < 576; ++x)
        for (int y = 0; y < 172; ++y) CHECK_FALSE(padded.is_valid(x, y));
}

TEST_CASE("downsample never invents validity") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = rasterize(random_samples(rng, 200, 33, 21), 33, 21);
        for (int f : {1, 2, 3}) {
            const auto d = downsample(m, f);
            CHECK(d.valid_count() <= m.valid_count());
        }
        // factor 1 without padding is the identity
        const auto same = downsample(m, 1);
        CHECK(same.depth == m.depth);
    }
}

TEST_CASE("pgm16 stores round(depth/scale) with 0 reserved for invalid") {
    SparseDepthMap m(2, 1);
    m.set(0, 0, 25.6);
    const double scale = 1.0 / 256.0;
    const auto bytes = encode_pgm16(m, scale);
    // header: P5, scale comment, dims, maxval
    const std::string header(bytes.begin(), bytes.begin() + 20);
    CHECK(header.substr(0, 3) == "P5\n");
    // stored big-endian at the end: valid pixel then invalid pixel
    const uint16_t v0 = static_cast<uint16_t>((bytes[bytes.size() - 4] << 8) | bytes[bytes.size() - 3]);
    const uint16_t v1 = static_cast<uint16_t>((bytes[bytes.size() - 2] << 8) | bytes[bytes.size() - 1]);
    CHECK(v0 == 6554);  // round(25.6 * 256)
    CHECK(v1 == 0);

    const auto decoded = decode_pgm16(bytes);
    CHECK(decoded.scale == scale);
    CHECK(decoded.map.is_valid(0, 0));
    CHECK_FALSE(decoded.map.is_valid(1, 0));
    CHECK(std::abs(decoded.map.at(0, 0) - 25.6) <= scale / 2);
}

TEST_CASE("pgm16 round-trip reproduces masks exactly and depth within scale/2") {
    std::mt19937_64 rng(3);
    const double scale = 1.0 / 256.0;
    const auto m = rasterize(random_samples(rng, 400, 32, 24), 32, 24);
    const auto decoded = decode_pgm16(encode_pgm16(m, scale));
    CHECK(decoded.map.valid == m.valid);
    double max_err = 0.0;
    for (size_t i = 0; i < m.depth.size(); ++i)
        if (m.valid[i]) max_err = std::max(max_err, std::abs(decoded.map.depth[i] - m.depth[i]));
    CHECK(max_err <= scale / 2 + 1e-12);
}

TEST_CASE("pgm16 rejects overflow and malformed input") {
    SparseDepthMap m(1, 1);
    m.set(0, 0, 300.0);
    CHECK_THROWS_AS(encode_pgm16(m, 1.0 / 256.0), std::invalid_argument);  // 300*256 > 65535

    const std::string bogus = "P6\n1 1\n255\n";
    CHECK_THROWS_AS(decode_pgm16(std::vector<uint8_t>(bogus.begin(), bogus.end())), IoError);

    // valid header but missing scale comment
    const std::string noscale = "P5\n1 1\n65535\n\0\0";
    CHECK_THROWS_AS(decode_pgm16(std::vector<uint8_t>(noscale.begin(), noscale.end())), IoError);
}

TEST_CASE("pgm16 file round-trip") {
    const auto path = (std::filesystem::temp_directory_path() / "fsd_depth.pgm").string();
    std::mt19937_64 rng(8);
    const auto m = rasterize(random_samples(rng, 100, 16, 12), 16, 12);
    write_pgm16(m, 1.0 / 256.0, path);
    const auto back = read_pgm16(path);
    CHECK(back.map.valid == m.valid);
    CHECK(back.scale == 1.0 / 256.0);
    std::filesystem::remove(path);
}

TEST_CASE("valid-pixel csv export") {
    const auto path = (std::filesystem::temp_directory_path() / "fsd_depth.csv").string();
    SparseDepthMap m(3, 2);
    m.set(1, 0, 4.25);
    m.set(2, 1, 8.5);
    save_depth_csv(m, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,y,depth");
    std::getline(in, line);
    CHECK(line.substr(0, 4) == "1,0,");
    std::getline(in, line);
    CHECK(line.substr(0, 4) == "2,1,");
    std::filesystem::remove(path);
}
