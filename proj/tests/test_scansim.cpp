#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "fsd/scansim.hpp"

using namespace fsd;

namespace {

LidarConfig small_lidar(int beams = 8, double step = 5.0) {
    LidarConfig cfg;
    cfg.beam_count = beams;
    cfg.azimuth_step_deg = step;
    return cfg;
}

}  // namespace

TEST_CASE("downward beam hits the ground plane at the closed-form range") {
    Scene scene;
    scene.ground_z = -2.0;
    LidarConfig cfg = small_lidar(2);  // beams at -13.4 and +13.4 degrees
    cfg.azimuth_span_deg = 360.0;
    const auto frame = simulate_scan(scene, cfg, 0.0);
    // only the downward beam returns; one hit per azimuth
    REQUIRE(frame.points.size() == static_cast<size_t>(cfg.azimuth_count()));
    const double expected = 2.0 / std::sin(13.4 * kDegToRad);
    for (const auto& p : frame.points) {
        CHECK(p.beam == 0);
        CHECK(p.range == doctest::Approx(expected).epsilon(1e-12));
        CHECK(p.point.z == doctest::Approx(-2.0).epsilon(1e-12));
    }
}

TEST_CASE("azimuth restriction hides geometry behind the sensor") {
    Scene scene;
    scene.boxes.push_back({{-10, 0, 0}, {2, 2, 2}});  // behind (+x is forward)
    LidarConfig cfg = small_lidar(4, 1.0);
    cfg.azimuth_start_deg = -90.0;
    cfg.azimuth_span_deg = 180.0;
    const auto frame = simulate_scan(scene, cfg, 0.0);
    CHECK(frame.points.empty());

    // the same box ahead of the sensor does return
    Scene ahead;
    ahead.boxes.push_back({{10, 0, 0}, {2, 2, 2}});
    CHECK_FALSE(simulate_scan(ahead, cfg, 0.0).points.empty());
}

TEST_CASE("candidate ray count is beams times azimuth steps") {
    LidarConfig cfg;
    cfg.beam_count = 64;
    cfg.azimuth_step_deg = 0.2;
    CHECK(cfg.candidate_ray_count() == 64L * 1800L);
    CHECK(cfg.azimuth_count() == 1800);
}

TEST_CASE("empty scene yields an empty frame") {
    const auto frame = simulate_scan(Scene{}, small_lidar(), 1.25);
    CHECK(frame.points.empty());
    CHECK(frame.timestamp == 1.25);
}

TEST_CASE("returns respect max range") {
    Scene scene;
    scene.boxes.push_back({{50, 0, 0}, {2, 10, 10}});
    LidarConfig cfg = small_lidar(4, 1.0);
    cfg.max_range = 20.0;
    CHECK(simulate_scan(scene, cfg, 0.0).points.empty());
    cfg.max_range = 60.0;
    CHECK_FALSE(simulate_scan(scene, cfg, 0.0).points.empty());
}

TEST_CASE("scan is deterministic") {
    Scene scene;
    scene.ground_z = 0.0;
    scene.boxes.push_back({{6, 1, 1}, {1, 1, 2}});
    scene.spheres.push_back({{4, -2, 1}, 0.5});
    LidarConfig cfg = small_lidar(16, 2.0);
    cfg.pose = RigidTransform::translation_only({0, 0, 1.5});
    const auto a = simulate_scan(scene, cfg, 0.5);
    const auto b = simulate_scan(scene, cfg, 0.5);
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].range == b.points[i].range);
        CHECK(a.points[i].beam == b.points[i].beam);
    }
}

TEST_CASE("mounting pose moves returns into the lidar frame") {
    Scene scene;
    scene.ground_z = 0.0;
    LidarConfig cfg = small_lidar(2, 90.0);
    cfg.pose = RigidTransform::translation_only({0, 0, 2.0});
    const auto frame = simulate_scan(scene, cfg, 0.0);
    REQUIRE_FALSE(frame.points.empty());
    for (const auto& p : frame.points) {
        // ground sits 2 m below the scanner origin in the lidar frame
        CHECK(p.point.z == doctest::Approx(-2.0).epsilon(1e-9));
        CHECK(p.range == doctest::Approx(p.point.norm()).epsilon(1e-12));
    }
}

TEST_CASE("unobstructed and blocked points resolve correctly") {
    Scene scene;
    scene.boxes.push_back({{5, 0, 0}, {1, 1, 1}});
    const RigidTransform camera = RigidTransform::identity();  // center at origin
    const std::vector<Point3> pts{
        {3, 3, 0},    // clear line of sight
        {10, 0, 0},   // straight behind the box
        {4.5, 0, 0},  // on the box front face
    };
    const auto vis = visibility_oracle(scene, camera, pts);
    CHECK(vis[0]);
    CHECK_FALSE(vis[1]);
    CHECK(vis[2]);  // strict inequality keeps surface points visible
}

TEST_CASE("sphere occludes along the center line only") {
    Scene scene;
    scene.spheres.push_back({{5, 0, 0}, 1.0});
    const auto vis = visibility_oracle(scene, RigidTransform::identity(),
                                       std::vector<Point3>{{10, 0, 0}, {10, 8, 0}});
    CHECK_FALSE(vis[0]);
    CHECK(vis[1]);
}

TEST_CASE("every simulated return is visible from the scanner") {
    Scene scene;
    scene.ground_z = 0.0;
    scene.boxes.push_back({{8, 0, 1}, {2, 3, 2}});
    scene.boxes.push_back({{16, 2, 1.5}, {2, 2, 3}});
    scene.spheres.push_back({{10, -5, 1}, 1.5});
    LidarConfig cfg = small_lidar(16, 1.0);
    cfg.pose = RigidTransform::translation_only({0, 0, 1.9});
    const auto frame = simulate_scan(scene, cfg, 0.0);
    REQUIRE(frame.points.size() > 100);
    std::vector<Point3> world;
    for (const auto& p : frame.points) world.push_back(cfg.pose.apply(p.point));
    const auto vis = visibility_oracle(scene, cfg.pose, world);
    for (size_t i = 0; i < vis.size(); ++i) CHECK(vis[i]);
}

TEST_CASE("association picks the nearest frame and breaks ties early") {
    FrameStream lidar;
    lidar.timestamps = {0.0, 0.1};
    lidar.nominal_rate_hz = 10.0;
    FrameStream camera;
    camera.nominal_rate_hz = 30.0;

    camera.timestamps = {0.0333};
    auto pairs = associate_frames(lidar, camera);
    CHECK(pairs[0] == std::pair<size_t, size_t>{0, 0});

    camera.timestamps = {0.05};  // exact tie
    pairs = associate_frames(lidar, camera);
    CHECK(pairs[0].second == 0);

    camera.timestamps = {0.1};  // identical stamp
    pairs = associate_frames(lidar, camera);
    CHECK(pairs[0].second == 1);
    CHECK(std::abs(lidar.timestamps[pairs[0].second] - camera.timestamps[0]) == 0.0);
}

TEST_CASE("association error stays within half the lidar period") {
    const auto lidar = FrameStream::regular(0.0, 10.0, 100);  // spans 0 .. 9.9 s
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 9.9);
    FrameStream camera;
    camera.nominal_rate_hz = 30.0;
    std::vector<double> stamps;
    for (int i = 0; i < 500; ++i) stamps.push_back(u(rng));
    std::sort(stamps.begin(), stamps.end());
    stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());
    camera.timestamps = stamps;
    for (const auto& [ci, li] : associate_frames(lidar, camera))
        CHECK(std::abs(camera.timestamps[ci] - lidar.timestamps[li]) <= 0.05 + 1e-12);
}

TEST_CASE("empty streams are rejected") {
    FrameStream empty, one;
    one.timestamps = {0.0};
    CHECK_THROWS_AS(associate_frames(empty, one), std::invalid_argument);
    CHECK_THROWS_AS(associate_frames(one, empty), std::invalid_argument);
}

TEST_CASE("config validation rejects bad azimuth steps") {
    LidarConfig cfg;
    cfg.azimuth_step_deg = 0.7;  // does not divide 360
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.azimuth_step_deg = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LidarConfig{};
    cfg.beam_count = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LidarConfig{};
    cfg.vertical_fov_deg = 90.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("scene file parsing") {
    const auto kv = KeyValueFile::parse(
        "ground -2\n"
        "box 1 2 3 4 5 6\n"
        "sphere 0 0 1 0.5\n"
        "box 7 8 9 1 1 1  # trailing comment\n",
        "test");
    const Scene scene = parse_scene(kv);
    REQUIRE(scene.ground_z.has_value());
    CHECK(*scene.ground_z == -2.0);
    REQUIRE(scene.boxes.size() == 2);
    CHECK(scene.boxes[1].center.x == 7.0);
    REQUIRE(scene.spheres.size() == 1);

    CHECK_THROWS_AS(parse_scene(KeyValueFile::parse("box 1 2 3", "t")), ConfigError);
    CHECK_THROWS_AS(parse_scene(KeyValueFile::parse("wall 1 2 3 4 5 6", "t")), ConfigError);
    CHECK_THROWS_AS(parse_scene(KeyValueFile::parse("box 0 0 0 1 -1 1", "t")), ConfigError);
}

TEST_CASE("point cloud csv and binary round-trip") {
    Scene scene;
    scene.ground_z = 0.0;
    scene.boxes.push_back({{5, 1, 1}, {1, 1, 2}});
    LidarConfig cfg = small_lidar(8, 5.0);
    cfg.pose = RigidTransform::translation_only({0, 0, 1.5});
    const auto frame = simulate_scan(scene, cfg, 0.7);
    REQUIRE_FALSE(frame.points.empty());

    const auto dir = std::filesystem::temp_directory_path();
    const auto csv = (dir / "fsd_cloud.csv").string();
    const auto bin = (dir / "fsd_cloud.bin").string();
    save_frame_csv(frame, csv);
    save_frame_bin(frame, bin);
    const auto from_csv = load_frame_csv(csv);
    const auto from_bin = load_frame_bin(bin);

    REQUIRE(from_csv.points.size() == frame.points.size());
    REQUIRE(from_bin.points.size() == frame.points.size());
    CHECK(from_csv.timestamp == frame.timestamp);
    CHECK(from_bin.timestamp == frame.timestamp);
    for (size_t i = 0; i < frame.points.size(); ++i) {
        // csv prints 17 significant digits, binary is bit-exact
        CHECK(from_csv.points[i].point.x == doctest::Approx(frame.points[i].point.x).epsilon(1e-15));
        CHECK(from_bin.points[i].point.x == frame.points[i].point.x);
        CHECK(from_bin.points[i].range == frame.points[i].range);
        CHECK(from_bin.points[i].beam == frame.points[i].beam);
    }
    std::filesystem::remove(csv);
    std::filesystem::remove(bin);
}

TEST_CASE("manifest round-trip enforces monotonicity") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = (dir / "fsd_manifest.txt").string();
    auto stream = FrameStream::regular(0.0, 10.0, 20);
    save_manifest(stream, path);
    const auto loaded = load_manifest(path, 10.0);
    CHECK(loaded.timestamps == stream.timestamps);
    CHECK(loaded.payloads.empty());

    // payload column survives the round-trip
    for (size_t i = 0; i < stream.timestamps.size(); ++i)
        stream.payloads.push_back("cloud_" + std::to_string(i) + ".bin");
    save_manifest(stream, path);
    const auto with_payloads = load_manifest(path);
    CHECK(with_payloads.payloads == stream.payloads);

    std::ofstream bad(path);
    bad << "0.2\n0.1\n";
    bad.close();
    CHECK_THROWS_AS(load_manifest(path), ConfigError);
    std::filesystem::remove(path);
}
