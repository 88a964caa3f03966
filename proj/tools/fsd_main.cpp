// fsd: sparse fisheye depth ground-truth pipeline driver.
//
// Subcommands: simulate, project, occlude, depthmap, eval, train-toy,
// verify-arch. Numeric parameters live in the pipeline config file; flags
// override paths and the seed. Identical config + seed gives identical
// artifacts, bit for bit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsd/pipeline.hpp"

namespace {

int log_level() {
    const char* env = std::getenv("FSD_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[fsd] " << msg << "\n";
}

void debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[fsd:debug] " << msg << "\n";
}

fsd::PointCloudFrame load_cloud(const std::string& path) {
    if (path.ends_with(".bin")) return fsd::load_frame_bin(path);
    return fsd::load_frame_csv(path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw fsd::IoError("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse fisheye depth toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--out/--seed may follow the subcommand

    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "pipeline config file")->envname("FSD_CONFIG");
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--seed", seed, "random seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });

    // simulate
    auto* sim = app.add_subcommand("simulate", "cast one scanner revolution over the scene");
    double sim_time = 0.0;
    int sim_frames = 1;
    sim->add_option("--t", sim_time, "timestamp of the first frame [s]");
    sim->add_option("--frames", sim_frames, "number of consecutive frames");

    // project
    auto* proj = app.add_subcommand("project", "project a point cloud into the fisheye image");
    std::string proj_cloud;
    proj->add_option("--cloud", proj_cloud, "point cloud file (.csv or .bin)")->required();

    // occlude
    auto* occ = app.add_subcommand("occlude", "remove camera-occluded points via distance layers");
    std::string occ_points;
    bool occ_debug = false;
    occ->add_option("--points", occ_points, "projected-point csv")->required();
    occ->add_flag("--debug-layers", occ_debug, "dump per-layer occupancy PGMs");

    // depthmap
    auto* dm = app.add_subcommand("depthmap", "rasterize, crop and downsample a depth map");
    std::string dm_points;
    dm->add_option("--points", dm_points, "projected-point csv (post occlusion)")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "depth metrics between two stored depth maps");
    std::string ev_pred, ev_gt;
    double ev_cap_min = 0.0, ev_cap_max = 50.0, ev_log_eps = 1e-3;
    ev->add_option("--pred", ev_pred, "prediction PGM")->required();
    ev->add_option("--gt", ev_gt, "ground-truth PGM")->required();
    ev->add_option("--cap-min", ev_cap_min, "discard gt at or below this depth [m]");
    ev->add_option("--cap-max", ev_cap_max, "discard gt above this depth [m]");
    ev->add_option("--log-eps", ev_log_eps, "floor inside log metrics [m]");

    // train-toy
    auto* tr = app.add_subcommand("train-toy", "fit the per-pixel toy model to stored depth maps");
    std::vector<std::string> tr_gt;
    long tr_steps = -1;
    tr->add_option("--gt", tr_gt, "ground-truth PGM file(s)")->required();
    tr->add_option("--steps", tr_steps, "training steps (overrides config)");

    // verify-arch
    auto* va = app.add_subcommand("verify-arch", "propagate and check network shape tables");
    std::string va_file;
    int va_w = 576, va_h = 172;
    va->add_option("--arch", va_file, "architecture spec file (defaults to the built-in)");
    va->add_option("--input-width", va_w, "input width [px]");
    va->add_option("--input-height", va_h, "input height [px]");

    CLI11_PARSE(app, argc, argv);

    try {
        if (va->parsed()) {
            const auto spec = va_file.empty()
                                  ? fsd::parse_architecture(fsd::builtin_multiscale_arch(),
                                                            "<builtin>")
                                  : fsd::load_architecture(va_file);
            const auto table = fsd::verify_architecture(spec, va_w, va_h);
            std::cout << fsd::format_shape_table(table);
            return table.all_match ? 0 : 1;
        }

        if (ev->parsed()) {
            const auto pred = fsd::read_pgm16(ev_pred);
            const auto gt = fsd::read_pgm16(ev_gt);
            fsd::CapPolicy policy{ev_cap_min, ev_cap_max, ev_log_eps};
            const auto report = fsd::evaluate(pred.map, gt.map, policy);
            std::cout << fsd::report_to_text(report);
            // scale-invariant loss over the pixels both maps cover
            std::vector<double> lp, lg;
            for (size_t i = 0; i < gt.map.depth.size(); ++i)
                if (gt.map.valid[i] && pred.map.valid[i]) {
                    lp.push_back(pred.map.depth[i]);
                    lg.push_back(gt.map.depth[i]);
                }
            if (!lp.empty()) {
                const auto pair = fsd::DepthPair::from_samples(lp, lg);
                std::cout << "siv_loss: " << fsd::loss_linear(pair) << "\n"
                          << "siv_alpha: " << fsd::alpha(pair) << "\n";
            }
            if (!out_dir.empty()) {
                ensure_dir(out_dir);
                std::ofstream txt(out_dir + "/report.txt");
                txt << fsd::report_to_text(report);
                std::ofstream js(out_dir + "/report.json");
                js << fsd::report_to_json(report);
                info("wrote " + out_dir + "/report.{txt,json}");
            }
            return 0;
        }

        // Everything below needs the pipeline config.
        if (config_path.empty()) throw fsd::ConfigError("missing required option '--config'");
        fsd::PipelineConfig cfg = fsd::load_pipeline_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed_set) cfg.seed = seed;
        ensure_dir(cfg.out_dir);

        if (sim->parsed()) {
            fsd::FrameStream manifest;
            manifest.nominal_rate_hz = cfg.lidar.spin_rate_hz;
            for (int i = 0; i < sim_frames; ++i) {
                const double t = sim_time + i / cfg.lidar.spin_rate_hz;
                const auto frame = fsd::pipeline_simulate(cfg, t);
                const std::string name = "cloud_" + std::to_string(i);
                const std::string stem = cfg.out_dir + "/" + name;
                fsd::save_frame_csv(frame, stem + ".csv");
                fsd::save_frame_bin(frame, stem + ".bin");
                manifest.timestamps.push_back(t);
                manifest.payloads.push_back(name + ".bin");
                info(stem + ".{csv,bin}: " + std::to_string(frame.points.size()) + " returns");
            }
            fsd::save_manifest(manifest, cfg.out_dir + "/lidar_manifest.txt");
            return 0;
        }

        if (proj->parsed()) {
            const auto frame = load_cloud(proj_cloud);
            const auto points = fsd::pipeline_project(cfg, frame);
            fsd::save_projected_csv(points, cfg.out_dir + "/projected.csv");
            info("projected " + std::to_string(points.size()) + " of " +
                 std::to_string(frame.points.size()) + " returns into view");
            return 0;
        }

        if (occ->parsed()) {
            const auto points = fsd::load_projected_csv(occ_points);
            const auto stack =
                fsd::build_layer_stack(points, cfg.layers, cfg.calibration.intrinsics.width,
                                       cfg.calibration.intrinsics.height);
            const auto result = fsd::filter_occluded(points, stack);
            fsd::save_projected_csv(result.kept, cfg.out_dir + "/kept.csv");
            std::vector<fsd::ProjectedPoint> removed;
            for (size_t i = 0; i < points.size(); ++i)
                if (result.removed[i]) removed.push_back(points[i]);
            fsd::save_projected_csv(removed, cfg.out_dir + "/removed.csv");
            if (occ_debug) fsd::save_layer_debug_pgms(stack, cfg.out_dir, "occlusion");
            info("kept " + std::to_string(result.kept.size()) + ", removed " +
                 std::to_string(removed.size()));
            return 0;
        }

        if (dm->parsed()) {
            const auto points = fsd::load_projected_csv(dm_points);
            const auto bundle = fsd::pipeline_depthmap(cfg, points);
            fsd::write_pgm16(bundle.full, cfg.pgm_scale, cfg.out_dir + "/depth_full.pgm");
            fsd::write_pgm16(bundle.final, cfg.pgm_scale, cfg.out_dir + "/depth.pgm");
            fsd::save_depth_csv(bundle.final, cfg.out_dir + "/depth_valid.csv");
            fsd::DepthMapProvenance prov{bundle.roi, cfg.downsample_factor, cfg.target_width,
                                         cfg.target_height, cfg.pgm_scale};
            fsd::save_sidecar(prov, cfg.out_dir + "/depth.meta");
            debug("roi origin (" + std::to_string(bundle.roi.x) + ", " +
                  std::to_string(bundle.roi.y) + ")");
            info("depth.pgm " + std::to_string(bundle.final.width) + "x" +
                 std::to_string(bundle.final.height) + ", " +
                 std::to_string(bundle.final.valid_count()) + " valid px");
            return 0;
        }

        if (tr->parsed()) {
            std::vector<fsd::TrainingPair> pairs;
            for (const auto& path : tr_gt) {
                fsd::TrainingPair p;
                p.gt = fsd::read_pgm16(path).map;
                p.features = fsd::make_pixel_features(p.gt);
                pairs.push_back(std::move(p));
            }
            const long steps = tr_steps > 0 ? tr_steps : cfg.train_steps;
            const auto result =
                fsd::train_toy(pairs, fsd::ToyModelConfig{}, cfg.adam, steps, cfg.seed);
            fsd::save_history_csv(result, cfg.out_dir + "/train_history.csv");
            info("loss " + std::to_string(result.loss_history.front()) + " -> " +
                 std::to_string(result.loss_history.back()) + " over " + std::to_string(steps) +
                 " steps");
            return 0;
        }
    } catch (const fsd::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
