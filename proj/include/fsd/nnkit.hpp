#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsd/depthmap.hpp"
#include "fsd/errors.hpp"
#include "fsd/keyval.hpp"
#include "fsd/sivloss.hpp"

namespace fsd {

// ---------------------------------------------------------------------------
// Activations

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// swish(x) = x * sigmoid(x).
inline double swish(double x) { return x * sigmoid(x); }

inline double swish_deriv(double x) {
    const double s = sigmoid(x);
    return s + x * s * (1.0 - s);
}

/// Stretched swish, f(x) = 2 * x * sigmoid(beta * x). beta = 0 gives the
/// identity; beta -> inf approaches 2 * max(0, x).
struct ActivationParams {
    double beta = 1.0;
};

inline double swish_stretched(double x, double beta) { return 2.0 * x * sigmoid(beta * x); }

inline double swish_stretched_deriv(double x, double beta) {
    const double s = sigmoid(beta * x);
    return 2.0 * s + 2.0 * x * beta * s * (1.0 - s);
}

// Alternatives kept around for experimentation; nothing in the pipeline
// depends on them.
inline double elu(double x, double a = 1.0) { return x >= 0.0 ? x : a * std::expm1(x); }
inline double elu_deriv(double x, double a = 1.0) { return x >= 0.0 ? 1.0 : a * std::exp(x); }

inline double leaky_relu(double x, double slope = 0.01) { return x >= 0.0 ? x : slope * x; }
inline double leaky_relu_deriv(double x, double slope = 0.01) { return x >= 0.0 ? 1.0 : slope; }

inline double selu(double x) {
    constexpr double kAlpha = 1.6732632423543772;
    constexpr double kScale = 1.0507009873554805;
    return kScale * (x >= 0.0 ? x : kAlpha * std::expm1(x));
}
inline double selu_deriv(double x) {
    constexpr double kAlpha = 1.6732632423543772;
    constexpr double kScale = 1.0507009873554805;
    return kScale * (x >= 0.0 ? 1.0 : kAlpha * std::exp(x));
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double base_lr = 1e-4;
    long decay_interval = 7500;  ///< steps between decay events
    double decay_base = 0.95;
    int batch_size = 20;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("adam: beta1/beta2 must lie in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
        if (!(base_lr > 0.0)) throw ConfigError("adam: base_lr must be > 0");
        if (decay_interval < 1) throw ConfigError("adam: decay_interval must be >= 1");
        if (!(decay_base > 0.0)) throw ConfigError("adam: decay_base must be > 0");
        if (batch_size < 1) throw ConfigError("adam: batch_size must be >= 1");
    }
};

/// Staircase exponential decay: base_lr * decay_base^floor(step / interval).
/// The factor is accumulated by repeated multiplication, one per decay event.
inline double lr_schedule(long step, const AdamConfig& cfg) {
    if (step < 0) throw std::invalid_argument("lr_schedule: step must be >= 0");
    const long events = step / cfg.decay_interval;
    double lr = cfg.base_lr;
    for (long i = 0; i < events; ++i) lr *= cfg.decay_base;
    return lr;
}

/// First and second moment estimates plus the update counter.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;  ///< completed updates

    explicit AdamState(size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update in place. The learning rate follows
/// lr_schedule at the pre-update step index, so the very first step uses
/// base_lr and a unit gradient moves a parameter by almost exactly
/// base_lr (denominator |g| + eps).
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
                      const AdamConfig& cfg) {
    if (params.size() != grad.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    const double lr = lr_schedule(state.step, cfg);
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Architecture shape arithmetic

enum class LayerKind { Conv, Pool, Fc, Reshape, Upsample, Slice, Concat };
enum class Padding { Valid, Same };

/// One architecture row. Shape propagation rules:
///   conv  valid: floor((in - kernel) / stride) + 1, channels set explicitly
///   conv  same:  ceil(in / stride)
///   pool:        ceil(in / stride), channels carried through
///   fc:          1x1 x units
///   reshape:     explicit dims, element count must be conserved
///   upsample:    dims * factor
///   slice:       trims to explicit dims (must not grow)
///   concat:      dims must match the referenced scale's output, channels add
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::string name;
    int kernel = 0;
    int stride = 1;
    int channels = 0;       ///< conv output channels or fc units
    Padding padding = Padding::Same;
    int factor = 0;         ///< upsample factor
    int dim_w = 0, dim_h = 0, dim_c = 0;  ///< reshape / slice targets
    int concat_with = 0;    ///< scale id whose output is concatenated
    int expect_w = 0, expect_h = 0, expect_c = 0;  ///< expected table cell
};

struct ScaleSpec {
    int id = 0;
    int input_w = 0, input_h = 0, input_c = 0;
    std::vector<LayerSpec> layers;
};

struct ArchitectureSpec {
    std::vector<ScaleSpec> scales;
};

struct ShapeRow {
    int scale = 0;
    std::string name;
    int width = 0, height = 0, channels = 0;
    int expect_w = 0, expect_h = 0, expect_c = 0;
    bool checked = false;  ///< an expected cell was present
    bool match = false;
};

struct ShapeTable {
    std::vector<ShapeRow> rows;
    bool all_match = true;  ///< every checked row matched
};

namespace detail {

struct Shape {
    int w = 0, h = 0, c = 0;
};

inline int conv_dim(int in, int kernel, int stride, Padding pad) {
    if (pad == Padding::Valid) return (in - kernel) / stride + 1;
    return (in + stride - 1) / stride;  // same: ceil(in / stride)
}

inline int pool_dim(int in, int stride) { return (in + stride - 1) / stride; }

}  // namespace detail

/// Propagates shapes through every scale and compares against the expected
/// cells recorded in the spec. The input size overrides each scale's declared
/// input resolution (channels stay as declared). Throws on inconsistent
/// arithmetic (reshape element count, concat dims, non-positive dims).
inline ShapeTable verify_architecture(const ArchitectureSpec& spec, int input_w, int input_h) {
    ShapeTable table;
    std::vector<std::pair<int, detail::Shape>> scale_outputs;
    for (const auto& scale : spec.scales) {
        detail::Shape s{input_w, input_h, scale.input_c};
        for (const auto& layer : scale.layers) {
            switch (layer.kind) {
                case LayerKind::Conv:
                    s.w = detail::conv_dim(s.w, layer.kernel, layer.stride, layer.padding);
                    s.h = detail::conv_dim(s.h, layer.kernel, layer.stride, layer.padding);
                    s.c = layer.channels;
                    break;
                case LayerKind::Pool:
                    s.w = detail::pool_dim(s.w, layer.stride);
                    s.h = detail::pool_dim(s.h, layer.stride);
                    break;
                case LayerKind::Fc:
                    s = {1, 1, layer.channels};
                    break;
                case LayerKind::Reshape: {
                    const long have = static_cast<long>(s.w) * s.h * s.c;
                    const long want = static_cast<long>(layer.dim_w) * layer.dim_h * layer.dim_c;
                    if (have != want)
                        throw std::invalid_argument(
                            "verify_architecture: reshape does not conserve elements (" +
                            std::to_string(have) + " vs " + std::to_string(want) + ") at scale " +
                            std::to_string(scale.id) + " layer " + layer.name);
                    s = {layer.dim_w, layer.dim_h, layer.dim_c};
                    break;
                }
                case LayerKind::Upsample:
                    s.w *= layer.factor;
                    s.h *= layer.factor;
                    break;
                case LayerKind::Slice:
                    if (layer.dim_w > s.w || layer.dim_h > s.h)
                        throw std::invalid_argument(
                            "verify_architecture: slice cannot grow dims at scale " +
                            std::to_string(scale.id) + " layer " + layer.name);
                    s.w = layer.dim_w;
                    s.h = layer.dim_h;
                    break;
                case LayerKind::Concat: {
                    const detail::Shape* src = nullptr;
                    for (const auto& [id, out] : scale_outputs)
                        if (id == layer.concat_with) src = &out;
                    if (!src)
                        throw std::invalid_argument(
                            "verify_architecture: concat references unknown scale " +
                            std::to_string(layer.concat_with));
                    if (src->w != s.w || src->h != s.h)
                        throw std::invalid_argument(
                            "verify_architecture: concat resolution mismatch at scale " +
                            std::to_string(scale.id) + " layer " + layer.name);
                    s.c += src->c;
                    break;
                }
            }
            if (s.w <= 0 || s.h <= 0 || s.c <= 0)
                throw std::invalid_argument(
                    "verify_architecture: non-positive shape at scale " +
                    std::to_string(scale.id) + " layer " + layer.name);
            ShapeRow row;
            row.scale = scale.id;
            row.name = layer.name;
            row.width = s.w;
            row.height = s.h;
            row.channels = s.c;
            row.expect_w = layer.expect_w;
            row.expect_h = layer.expect_h;
            row.expect_c = layer.expect_c;
            row.checked = layer.expect_w > 0;
            if (row.checked) {
                row.match = s.w == layer.expect_w && s.h == layer.expect_h &&
                            (layer.expect_c == 0 || s.c == layer.expect_c);
                if (!row.match) table.all_match = false;
            }
            table.rows.push_back(row);
        }
        scale_outputs.emplace_back(scale.id, s);
    }
    return table;
}

/// Architecture file grammar, one layer per line inside a scale block:
///   scale <id> input <w> <h> <c>
///   <name> conv <kernel> <stride> <channels> <valid|same> expect <w> <h> <c>
///   <name> pool <kernel> <stride>                         expect <w> <h>
///   <name> fc <units>                                     expect <w> <h> <c>
///   <name> reshape <w> <h> <c>                            expect <w> <h> <c>
///   <name> upsample <factor>                              expect <w> <h> <c>
///   <name> slice <w> <h>                                  expect <w> <h> <c>
///   <name> concat <scale id>                              expect <w> <h> <c>
/// The `expect <w> <h> [<c>]` suffix is optional and records the reference
/// table cell the computed shape must reproduce.
inline ArchitectureSpec parse_architecture(const std::string& text,
                                           const std::string& origin = "<string>") {
    ArchitectureSpec spec;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "scale") {
            ScaleSpec scale;
            std::string kw;
            if (!(ls >> scale.id >> kw >> scale.input_w >> scale.input_h >> scale.input_c) ||
                kw != "input")
                fail("expected: scale <id> input <w> <h> <c>");
            spec.scales.push_back(scale);
            continue;
        }
        if (spec.scales.empty()) fail("layer line before any 'scale' line");
        LayerSpec layer;
        layer.name = first;
        std::string kind;
        if (!(ls >> kind)) fail("missing layer kind");
        if (kind == "conv") {
            std::string pad;
            if (!(ls >> layer.kernel >> layer.stride >> layer.channels >> pad))
                fail("conv needs: <kernel> <stride> <channels> <valid|same>");
            if (pad == "valid")
                layer.padding = Padding::Valid;
            else if (pad == "same")
                layer.padding = Padding::Same;
            else
                fail("conv padding must be 'valid' or 'same'");
            layer.kind = LayerKind::Conv;
        } else if (kind == "pool") {
            if (!(ls >> layer.kernel >> layer.stride)) fail("pool needs: <kernel> <stride>");
            layer.kind = LayerKind::Pool;
        } else if (kind == "fc") {
            if (!(ls >> layer.channels)) fail("fc needs: <units>");
            layer.kind = LayerKind::Fc;
        } else if (kind == "reshape") {
            if (!(ls >> layer.dim_w >> layer.dim_h >> layer.dim_c))
                fail("reshape needs: <w> <h> <c>");
            layer.kind = LayerKind::Reshape;
        } else if (kind == "upsample") {
            if (!(ls >> layer.factor)) fail("upsample needs: <factor>");
            layer.kind = LayerKind::Upsample;
        } else if (kind == "slice") {
            if (!(ls >> layer.dim_w >> layer.dim_h)) fail("slice needs: <w> <h>");
            layer.kind = LayerKind::Slice;
        } else if (kind == "concat") {
            if (!(ls >> layer.concat_with)) fail("concat needs: <scale id>");
            layer.kind = LayerKind::Concat;
        } else {
            fail("unknown layer kind '" + kind + "'");
        }
        std::string kw;
        if (ls >> kw) {
            if (kw != "expect") fail("unexpected trailing token '" + kw + "'");
            if (!(ls >> layer.expect_w >> layer.expect_h)) fail("expect needs: <w> <h> [<c>]");
            ls >> layer.expect_c;  // optional
        }
        spec.scales.back().layers.push_back(layer);
    }
    if (spec.scales.empty()) throw ConfigError(origin + ": no scales defined");
    return spec;
}

inline ArchitectureSpec load_architecture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_architecture(ss.str(), path);
}

/// The three-scale depth network, 576x172 RGB in, 284x80 depth out.
inline const char* builtin_multiscale_arch() {
    return R"(# Multi-scale depth network, 576x172 RGB input.
scale 1 input 576 172 3
conv1    conv 11 4 96 valid   expect 142 41 96
pool1    pool 3 2             expect 71 21 96
conv2    conv 5 1 256 same    expect 71 21 256
pool2    pool 3 2             expect 36 11 256
conv3    conv 3 1 384 same    expect 36 11 384
conv4    conv 3 1 384 same    expect 36 11 384
conv5    conv 3 1 256 same    expect 36 11 256
pool5    pool 3 2             expect 18 6 256
fc6      fc 4096              expect 1 1 4096
fc7      fc 23040             expect 1 1 23040
reshape  reshape 36 10 64     expect 36 10 64
upsample upsample 4           expect 144 40 64
slice    slice 142 40         expect 142 40 64

scale 2 input 576 172 3
conv1    conv 9 2 96 valid    expect 284 82 96
pool1    pool 3 2             expect 142 41 96
slice    slice 142 40         expect 142 40 96
concat   concat 1             expect 142 40 160
conv2    conv 5 1 64 same     expect 142 40 64
conv3    conv 5 1 64 same     expect 142 40 64
conv4    conv 5 1 64 same     expect 142 40 64
conv5    conv 5 1 1 same      expect 142 40 1
upsample upsample 2           expect 284 80 1

scale 3 input 576 172 3
conv1    conv 9 2 63 valid    expect 284 82 63
pool1    pool 3 1             expect 284 82 63
slice    slice 284 80         expect 284 80 63
concat   concat 2             expect 284 80 64
conv2    conv 5 1 64 same     expect 284 80 64
conv3    conv 5 1 64 same     expect 284 80 64
conv4    conv 5 1 1 same      expect 284 80 1
)";
}

inline std::string format_shape_table(const ShapeTable& table) {
    std::ostringstream os;
    os << std::left << std::setw(6) << "scale" << std::setw(10) << "layer" << std::setw(16)
       << "computed" << std::setw(16) << "expected" << "status\n";
    for (const auto& row : table.rows) {
        std::ostringstream comp, expd;
        comp << row.width << 'x' << row.height << 'x' << row.channels;
        if (row.checked) {
            expd << row.expect_w << 'x' << row.expect_h;
            if (row.expect_c > 0) expd << 'x' << row.expect_c;
        } else {
            expd << "-";
        }
        os << std::left << std::setw(6) << row.scale << std::setw(10) << row.name << std::setw(16)
           << comp.str() << std::setw(16) << expd.str()
           << (row.checked ? (row.match ? "ok" : "MISMATCH") : "") << "\n";
    }
    os << (table.all_match ? "all expected cells match\n" : "MISMATCHES PRESENT\n");
    return os.str();
}

// ---------------------------------------------------------------------------
// Toy per-pixel depth regressor

/// Multi-layer perceptron applied independently per pixel, predicting log
/// depth from a small hand-crafted feature vector. Hidden layers use the
/// stretched swish. Parameters are packed [W1, b1, W2, b2, ...] row-major.
struct ToyModelConfig {
    int features = 5;
    std::vector<int> hidden{16, 16};
    double init_scale = 0.5;
    double swish_beta = 1.0;
};

class ToyModel {
  public:
    explicit ToyModel(const ToyModelConfig& cfg = {}) : cfg_(cfg) {
        dims_.push_back(cfg_.features);
        for (int h : cfg_.hidden) dims_.push_back(h);
        dims_.push_back(1);
        size_t count = 0;
        for (size_t l = 0; l + 1 < dims_.size(); ++l)
            count += static_cast<size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
        params_.assign(count, 0.0);
    }

    const ToyModelConfig& config() const { return cfg_; }
    size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    void init(uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        size_t off = 0;
        for (size_t l = 0; l + 1 < dims_.size(); ++l) {
            const double scale = cfg_.init_scale / std::sqrt(static_cast<double>(dims_[l]));
            const size_t w = static_cast<size_t>(dims_[l]) * dims_[l + 1];
            for (size_t i = 0; i < w; ++i) params_[off + i] = scale * dist(rng);
            off += w;
            for (int i = 0; i < dims_[l + 1]; ++i) params_[off + static_cast<size_t>(i)] = 0.0;
            off += static_cast<size_t>(dims_[l + 1]);
        }
    }

    /// Predicted log depth for one feature vector.
    double forward(std::span<const double> features) const {
        std::vector<double> act(features.begin(), features.end());
        size_t off = 0;
        for (size_t l = 0; l + 1 < dims_.size(); ++l) {
            const bool last = (l + 2 == dims_.size());
            std::vector<double> next(static_cast<size_t>(dims_[l + 1]));
            const size_t wsize = static_cast<size_t>(dims_[l]) * dims_[l + 1];
            for (int j = 0; j < dims_[l + 1]; ++j) {
                double z = params_[off + wsize + static_cast<size_t>(j)];
                for (int i = 0; i < dims_[l]; ++i)
                    z += params_[off + static_cast<size_t>(j) * dims_[l] + i] * act[static_cast<size_t>(i)];
                next[static_cast<size_t>(j)] = last ? z : swish_stretched(z, cfg_.swish_beta);
            }
            act = std::move(next);
            off += wsize + static_cast<size_t>(dims_[l + 1]);
        }
        return act[0];
    }

    /// Forward pass plus parameter gradient accumulation: adds
    /// output_grad * d(output)/d(param) into `grad_accum`. Returns the output.
    double forward_backward(std::span<const double> features, double output_grad,
                            std::span<double> grad_accum) const {
        // Forward, keeping per-layer inputs and pre-activations.
        std::vector<std::vector<double>> inputs;
        std::vector<std::vector<double>> preact;
        std::vector<double> act(features.begin(), features.end());
        size_t off = 0;
        for (size_t l = 0; l + 1 < dims_.size(); ++l) {
            inputs.push_back(act);
            const bool last = (l + 2 == dims_.size());
            std::vector<double> z(static_cast<size_t>(dims_[l + 1]));
            const size_t wsize = static_cast<size_t>(dims_[l]) * dims_[l + 1];
            for (int j = 0; j < dims_[l + 1]; ++j) {
                double s = params_[off + wsize + static_cast<size_t>(j)];
                for (int i = 0; i < dims_[l]; ++i)
                    s += params_[off + static_cast<size_t>(j) * dims_[l] + i] * act[static_cast<size_t>(i)];
                z[static_cast<size_t>(j)] = s;
            }
            preact.push_back(z);
            act.resize(z.size());
            for (size_t j = 0; j < z.size(); ++j)
                act[j] = last ? z[j] : swish_stretched(z[j], cfg_.swish_beta);
            off += wsize + static_cast<size_t>(dims_[l + 1]);
        }
        const double output = act[0];

        // Backward.
        std::vector<double> delta{output_grad};
        for (size_t l = dims_.size() - 2; l + 1 > 0; --l) {
            const bool last = (l + 2 == dims_.size());
            const size_t wsize = static_cast<size_t>(dims_[l]) * dims_[l + 1];
            off -= wsize + static_cast<size_t>(dims_[l + 1]);
            std::vector<double> dz(static_cast<size_t>(dims_[l + 1]));
            for (int j = 0; j < dims_[l + 1]; ++j) {
                const double up = delta[static_cast<size_t>(j)];
                dz[static_cast<size_t>(j)] =
                    last ? up : up * swish_stretched_deriv(preact[l][static_cast<size_t>(j)], cfg_.swish_beta);
            }
            std::vector<double> prev(static_cast<size_t>(dims_[l]), 0.0);
            for (int j = 0; j < dims_[l + 1]; ++j) {
                const double d = dz[static_cast<size_t>(j)];
                for (int i = 0; i < dims_[l]; ++i) {
                    grad_accum[off + static_cast<size_t>(j) * dims_[l] + i] +=
                        d * inputs[l][static_cast<size_t>(i)];
                    prev[static_cast<size_t>(i)] +=
                        d * params_[off + static_cast<size_t>(j) * dims_[l] + i];
                }
                grad_accum[off + wsize + static_cast<size_t>(j)] += d;
            }
            delta = std::move(prev);
            if (l == 0) break;
        }
        return output;
    }

  private:
    ToyModelConfig cfg_;
    std::vector<int> dims_;
    std::vector<double> params_;
};

/// Per-pixel features from a sparse depth map: normalized x, y, radius from
/// the image center, valid-neighbor density and mean valid log depth in the
/// surrounding 5x5 window. Row-major, one vector per pixel.
inline std::vector<std::vector<double>> make_pixel_features(const SparseDepthMap& gt) {
    constexpr int kWin = 2;
    std::vector<std::vector<double>> features(gt.depth.size());
    const double cx = 0.5 * (gt.width - 1), cy = 0.5 * (gt.height - 1);
    const double rnorm = std::hypot(cx + 1.0, cy + 1.0);
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            int n = 0;
            double logsum = 0.0;
            for (int dy = -kWin; dy <= kWin; ++dy)
                for (int dx = -kWin; dx <= kWin; ++dx) {
                    const int sx = x + dx, sy = y + dy;
                    if (!gt.in_bounds(sx, sy) || !gt.is_valid(sx, sy)) continue;
                    ++n;
                    logsum += std::log(std::max(gt.at(sx, sy), DepthPair::kMinDepth));
                }
            features[gt.index(x, y)] = {
                gt.width > 1 ? 2.0 * x / (gt.width - 1) - 1.0 : 0.0,
                gt.height > 1 ? 2.0 * y / (gt.height - 1) - 1.0 : 0.0,
                std::hypot(x - cx, y - cy) / rnorm,
                static_cast<double>(n) / ((2 * kWin + 1) * (2 * kWin + 1)),
                n > 0 ? logsum / n : 0.0,
            };
        }
    return features;
}

/// One training example: per-pixel features plus the sparse ground truth.
struct TrainingPair {
    std::vector<std::vector<double>> features;
    SparseDepthMap gt;
};

struct TrainResult {
    std::vector<double> loss_history;  ///< batch loss before each update
    std::vector<double> lr_history;
    ToyModel model;
};

/// Full-batch training of the toy model against the scale-invariant loss.
/// Every step evaluates all pairs, averages the per-image gradients, and
/// applies one Adam update. Deterministic for a fixed seed.
inline TrainResult train_toy(std::span<const TrainingPair> pairs, const ToyModelConfig& model_cfg,
                             const AdamConfig& adam_cfg, long steps, uint64_t seed) {
    adam_cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train_toy: no training pairs");
    for (const auto& p : pairs) {
        if (p.features.size() != p.gt.depth.size())
            throw std::invalid_argument("train_toy: feature grid size mismatch");
        if (p.gt.valid_count() == 0)
            throw std::invalid_argument("train_toy: training pair with no valid pixels");
    }

    TrainResult result{.loss_history = {}, .lr_history = {}, .model = ToyModel(model_cfg)};
    ToyModel& model = result.model;
    model.init(seed);
    AdamState state(model.param_count());
    std::vector<double> grad(model.param_count());
    std::vector<double> image_grad(model.param_count());

    for (long step = 0; step < steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss_sum = 0.0;
        for (const auto& example : pairs) {
            // Predicted log depths over the valid set.
            std::vector<double> pred(example.gt.depth.size(), 1.0);
            std::vector<size_t> valid_idx;
            for (size_t i = 0; i < example.gt.depth.size(); ++i)
                if (example.gt.valid[i]) {
                    pred[i] = std::exp(model.forward(example.features[i]));
                    valid_idx.push_back(i);
                }
            const DepthPair pair = DepthPair::from_grid(pred, example.gt);
            loss_sum += loss_linear(pair);
            // d(loss)/d(log p_i) is the d-space gradient; backprop it.
            const auto dgrad = loss_gradient(pair);
            std::fill(image_grad.begin(), image_grad.end(), 0.0);
            for (size_t vi = 0; vi < valid_idx.size(); ++vi)
                model.forward_backward(example.features[valid_idx[vi]], dgrad[vi], image_grad);
            for (size_t i = 0; i < grad.size(); ++i)
                grad[i] += image_grad[i] / static_cast<double>(pairs.size());
        }
        result.loss_history.push_back(loss_sum / static_cast<double>(pairs.size()));
        result.lr_history.push_back(lr_schedule(state.step, adam_cfg));
        adam_step(state, model.params(), grad, adam_cfg);
    }
    return result;
}

/// Training history CSV: step, lr, loss.
inline void save_history_csv(const TrainResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "step,lr,loss\n";
    out.precision(17);
    for (size_t i = 0; i < r.loss_history.size(); ++i)
        out << i << ',' << r.lr_history[i] << ',' << r.loss_history[i] << '\n';
}

}  // namespace fsd
