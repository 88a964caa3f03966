#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fsd/depthmap.hpp"

namespace fsd {

/// Prediction / ground-truth pair restricted to the valid set V (the pixels
/// where the sparse ground truth carries a depth). Holds the per-pixel
/// log-difference d_i = log(p_i) - log(p*_i); everything downstream (the
/// loss forms and their gradients) runs on d. Depths are clamped to
/// kMinDepth before the log and the clamp count is reported.
struct DepthPair {
    static constexpr double kMinDepth = 1e-6;

    std::vector<size_t> index;     ///< flat pixel index of each valid sample
    std::vector<double> pred;      ///< clamped prediction on V
    std::vector<double> log_diff;  ///< d_i on V
    size_t clamped = 0;            ///< pixels clamped to kMinDepth before log

    size_t n() const { return log_diff.size(); }

    /// Builds the pair from a dense prediction grid and a sparse ground
    /// truth; V is exactly the ground truth's valid mask.
    static DepthPair from_grid(std::span<const double> prediction, const SparseDepthMap& gt) {
        if (prediction.size() != gt.depth.size())
            throw std::invalid_argument("DepthPair: prediction grid size mismatch");
        DepthPair pair;
        for (size_t i = 0; i < gt.depth.size(); ++i) {
            if (!gt.valid[i]) continue;
            pair.push(i, prediction[i], gt.depth[i]);
        }
        return pair;
    }

    static DepthPair from_maps(const SparseDepthMap& prediction, const SparseDepthMap& gt) {
        return from_grid(prediction.depth, gt);
    }

    /// Test-friendly constructor from parallel sample vectors.
    static DepthPair from_samples(std::span<const double> pred, std::span<const double> gt) {
        if (pred.size() != gt.size())
            throw std::invalid_argument("DepthPair: sample size mismatch");
        DepthPair pair;
        for (size_t i = 0; i < pred.size(); ++i) pair.push(i, pred[i], gt[i]);
        return pair;
    }

    /// Directly from log-differences, for arithmetic-level tests.
    static DepthPair from_log_diffs(std::span<const double> d) {
        DepthPair pair;
        pair.log_diff.assign(d.begin(), d.end());
        pair.index.resize(d.size());
        pair.pred.assign(d.size(), 1.0);
        for (size_t i = 0; i < d.size(); ++i) pair.index[i] = i;
        return pair;
    }

  private:
    void push(size_t idx, double p, double g) {
        double pc = p, gc = g;
        if (pc < kMinDepth) {
            pc = kMinDepth;
            ++clamped;
        }
        if (gc < kMinDepth) {
            gc = kMinDepth;
            ++clamped;
        }
        index.push_back(idx);
        pred.push_back(pc);
        log_diff.push_back(std::log(pc) - std::log(gc));
    }
};

namespace detail {
inline void require_nonempty(const DepthPair& pair, const char* what) {
    if (pair.n() == 0) throw std::invalid_argument(std::string(what) + ": empty valid set");
}
}  // namespace detail

/// Mean of log(p*) - log(p) over V; exp(alpha) is the global scale that best
/// aligns the prediction with the ground truth.
inline double alpha(const DepthPair& pair) {
    detail::require_nonempty(pair, "alpha");
    double sum = 0.0;
    for (double d : pair.log_diff) sum += d;
    return -sum / static_cast<double>(pair.n());
}

/// Scale-invariant loss in its linear-time form:
///   (1/n) sum d_i^2 - (1/n^2) (sum d_i)^2,
/// which is the variance of d over V. Adding a constant to every d (a global
/// rescale of the prediction) leaves it unchanged.
inline double loss_linear(const DepthPair& pair) {
    detail::require_nonempty(pair, "loss_linear");
    const double n = static_cast<double>(pair.n());
    double sum = 0.0, sum_sq = 0.0;
    for (double d : pair.log_diff) {
        sum += d;
        sum_sq += d * d;
    }
    // The cancellation can dip a hair below zero for near-constant d; the
    // true value is a variance, so floor it.
    return std::max(0.0, sum_sq / n - (sum * sum) / (n * n));
}

/// Alignment form: (1/n) sum (d_i + alpha)^2. Equals loss_linear; kept as an
/// independent route for cross-checking.
inline double loss_alpha_oracle(const DepthPair& pair) {
    detail::require_nonempty(pair, "loss_alpha_oracle");
    const double a = alpha(pair);
    double sum = 0.0;
    for (double d : pair.log_diff) {
        const double e = d + a;
        sum += e * e;
    }
    return sum / static_cast<double>(pair.n());
}

/// Pairwise form: (1/(2n^2)) sum_{i,j} ((d_i - d_j))^2, the brute-force O(n^2)
/// route comparing every pixel pair. Equals loss_linear. The 1/2 factor makes
/// the double sum (which counts each unordered pair twice) agree with the
/// other two forms.
inline double loss_pairwise_oracle(const DepthPair& pair) {
    detail::require_nonempty(pair, "loss_pairwise_oracle");
    const auto& d = pair.log_diff;
    const double n = static_cast<double>(pair.n());
    double sum = 0.0;
    for (double di : d)
        for (double dj : d) {
            const double e = di - dj;
            sum += e * e;
        }
    return sum / (2.0 * n * n);
}

/// Analytic gradient of loss_linear with respect to d_i:
///   (2/n) d_i - (2/n^2) sum_j d_j.
/// Sums to zero over V: a uniform shift of d (global rescale) is a flat
/// direction of the loss.
inline std::vector<double> loss_gradient(const DepthPair& pair) {
    detail::require_nonempty(pair, "loss_gradient");
    const double n = static_cast<double>(pair.n());
    double sum = 0.0;
    for (double d : pair.log_diff) sum += d;
    std::vector<double> grad(pair.n());
    for (size_t i = 0; i < pair.n(); ++i)
        grad[i] = (2.0 / n) * pair.log_diff[i] - (2.0 / (n * n)) * sum;
    return grad;
}

/// Chain rule through d_i = log p_i - log p*_i: gradient with respect to the
/// prediction itself, d(loss)/dp_i = d(loss)/dd_i * (1/p_i).
inline std::vector<double> loss_gradient_wrt_pred(const DepthPair& pair) {
    auto grad = loss_gradient(pair);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] /= pair.pred[i];
    return grad;
}

/// Batch reduction: mean of the per-image losses.
inline double batch_loss(std::span<const DepthPair> batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    double sum = 0.0;
    for (const auto& pair : batch) sum += loss_linear(pair);
    return sum / static_cast<double>(batch.size());
}

}  // namespace fsd
